import json

import numpy as np
import pytest
from scipy import signal as sps

from rirdeconv.core_io import Signal, make_rng
from rirdeconv.metrics import edc, edc_slope_db_per_s
from rirdeconv.synth import (
    InfeasibleCoverageError,
    SceneConfig,
    apply_degradation_surrogate,
    default_rir_len,
    gen_excitation,
    gen_rir,
    gen_scene,
    load_scene,
    save_scene,
)


def rms(v):
    return np.sqrt(np.mean(np.square(v)))


def test_rir_length_and_norm():
    assert default_rir_len(0.3, 16000) == 5760
    h = gen_rir(make_rng(0), 0.3, 5760, 16000)
    assert h.size == 5760
    assert abs(np.linalg.norm(h) - 1) < 1e-12
    # 0 dB direct-to-reverberant ratio
    assert h[0] ** 2 == pytest.approx(np.sum(h[1:] ** 2), rel=1e-12)


def test_rir_edc_slope_over_seeds():
    slopes = [edc_slope_db_per_s(edc(gen_rir(make_rng(k), 0.5, 9600, 16000), 16000)) for k in range(20)]
    assert np.mean(slopes) == pytest.approx(-120.0, rel=0.10)


@pytest.mark.parametrize("kind", ["harmonic_tones", "colored_noise"])
def test_excitation_peak_and_determinism(kind):
    a = gen_excitation(make_rng(4), kind, 2.0, 16000)
    b = gen_excitation(make_rng(4), kind, 2.0, 16000)
    assert len(a) == 32000
    assert abs(np.max(np.abs(a.samples)) - 0.5) < 1e-12
    np.testing.assert_array_equal(a.samples, b.samples)


def test_colored_noise_slope():
    x = gen_excitation(make_rng(2), "colored_noise", 30.0, 16000).samples
    f, p = sps.welch(x, 16000, nperseg=8192)
    centers = 125.0 * 2.0 ** np.arange(6)  # 125 Hz .. 4 kHz
    levels = np.array([10 * np.log10(p[(f >= c / np.sqrt(2)) & (f < c * np.sqrt(2))].mean()) for c in centers])
    np.testing.assert_allclose(np.diff(levels), -6.0, atol=1.5)


def test_wav_excitation(tmp_path):
    from rirdeconv.core_io import write_wav

    write_wav(Signal(np.sin(np.arange(48000) * 0.05), 48000), tmp_path / "m.wav")
    x = gen_excitation(make_rng(0), "wav_file", 0.5, 16000, path=tmp_path / "m.wav")
    assert x.sample_rate_hz == 16000 and len(x) == 8000
    assert abs(np.max(np.abs(x.samples)) - 0.5) < 1e-12


def test_stationary_only_snr():
    sc = gen_scene(SceneConfig(seed=1, duration_s=3.0, nonstat_coverage=0.0))
    assert sc.event_log == []
    resid = sc.recording.samples - sc.clean
    np.testing.assert_allclose(resid, sc.stationary_noise, atol=1e-12)
    assert 20 * np.log10(rms(sc.clean) / rms(resid)) == pytest.approx(50.0, abs=0.2)


def test_coverage_and_event_log():
    sc = gen_scene(SceneConfig(seed=3, duration_s=10.0, nonstat_coverage=0.35))
    assert 0.33 <= sc.measured_coverage <= 0.37
    spans = sorted((e.start_sample, e.start_sample + e.length) for e in sc.event_log)
    for (_, end), (start, _) in zip(spans[:-1], spans[1:]):
        assert end <= start
    for e in sc.event_log:
        assert 0.02 * 16000 <= e.length <= 0.2 * 16000 and 0 <= e.peak_db <= 10
    leftover = sc.recording.samples - sc.interference - sc.stationary_noise
    np.testing.assert_allclose(leftover, sc.clean, atol=1e-12)


def test_infeasible_coverage():
    with pytest.raises(InfeasibleCoverageError):
        gen_scene(SceneConfig(seed=0, duration_s=0.1, nonstat_coverage=0.5))


def test_scene_bit_identical():
    a = gen_scene(SceneConfig(seed=9, duration_s=2.0))
    b = gen_scene(SceneConfig(seed=9, duration_s=2.0))
    np.testing.assert_array_equal(a.recording.samples, b.recording.samples)
    assert a.event_log == b.event_log


# Regression values recorded from the first build; h[0] = 1/sqrt(2) is forced by the 0 dB DRR.
FROZEN_COVERAGE = 0.27708157554873897
FROZEN_RIR_HEAD = [0.7071067811865475, 0.02472202231830872, -0.017131429890014503]


def test_scene_frozen_values():
    sc = gen_scene(SceneConfig(seed=0, duration_s=1.0))
    assert sc.coverage == pytest.approx(FROZEN_COVERAGE, rel=1e-12)
    np.testing.assert_allclose(sc.rir_true[:3], FROZEN_RIR_HEAD, rtol=1e-9)


def test_degradation_levels(rng):
    s = Signal(rng.standard_normal(16000), 16000)
    out = apply_degradation_surrogate(s, -30.0, make_rng(1))
    assert 20 * np.log10(rms(s.samples) / rms(out.samples - s.samples)) == pytest.approx(30.0, abs=1.0)
    tiny = apply_degradation_surrogate(s, -120.0, make_rng(1))
    assert 20 * np.log10(rms(tiny.samples - s.samples) / rms(s.samples)) <= -100
    with pytest.raises(ValueError):
        apply_degradation_surrogate(s, 3.0, make_rng(1))


def test_save_load(tmp_path):
    sc = gen_scene(SceneConfig(seed=2, duration_s=1.0))
    save_scene(sc, tmp_path / "s")
    x, y, h, meta = load_scene(tmp_path / "s")
    np.testing.assert_array_equal(x.samples, sc.excitation.samples.astype(np.float32))
    assert meta["rir_len"] == h.size == sc.rir_true.size
    assert SceneConfig.from_dict(json.loads((tmp_path / "s" / "scene.json").read_text())["config"]) == sc.config


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(nonstat_coverage=1.5)
    with pytest.raises(ValueError):
        SceneConfig(excitation_kind="speech")
    with pytest.raises(ValueError):
        SceneConfig(degradation_db=5.0)
