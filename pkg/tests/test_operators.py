import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_matrix, make_operator
from rirdeconv.operators import (
    ConvOperator,
    Spectrogram,
    StftConfig,
    WeightedTfOperator,
    fft_convolve,
    fft_convolve_adjoint,
    n_frames,
    stft_adjoint,
    stft_forward,
    weighted_adjoint,
    weighted_forward,
)


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def test_convolve_small_cases():
    np.testing.assert_allclose(fft_convolve([1, 2, 3], [1], 3), [1, 2, 3], atol=1e-14)
    np.testing.assert_allclose(fft_convolve([1, 1], [1, 1], 3), [1, 2, 1], atol=1e-14)
    with pytest.raises(ValueError):
        fft_convolve([1, 1], [1, 1], 4)


def test_convolve_matches_direct(rng):
    x, h = rng.standard_normal(2000), rng.standard_normal(150)
    ref = np.convolve(x, h)
    out = fft_convolve(x, h, ref.size)
    assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 300), st.integers(1, 80), st.integers(0, 2**31))
def test_convolve_matches_direct_property(L, N, seed):
    r = np.random.default_rng(seed)
    x, h = r.standard_normal(L), r.standard_normal(N)
    ref = np.convolve(x, h)
    assert np.linalg.norm(fft_convolve(x, h, ref.size) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_convolve_adjoint_cases():
    y = np.array([4.0, -1.0, 2.0, 7.0, 3.0])
    np.testing.assert_allclose(fft_convolve_adjoint([1, 0, 0], y, 3), y[:3], atol=1e-14)
    np.testing.assert_allclose(fft_convolve_adjoint([1, 1], [1, 2, 1], 2), [3, 3], atol=1e-14)
    with pytest.raises(ValueError):
        fft_convolve_adjoint([1, 1], [1, 2], 2)


def test_convolve_dot(rng):
    x, h, y = rng.standard_normal(500), rng.standard_normal(64), rng.standard_normal(563)
    assert rel(fft_convolve(x, h, 563) @ y, h @ fft_convolve_adjoint(x, y, 64)) < 1e-10


def test_conv_operator_truncated_and_padded(rng):
    x, h = rng.standard_normal(100), rng.standard_normal(10)
    long = ConvOperator(x, 10, out_len=150)
    assert long.M == 150
    out = long.forward(h)
    np.testing.assert_allclose(out[:109], np.convolve(x, h), atol=1e-12)
    np.testing.assert_allclose(out[109:], 0.0, atol=1e-12)
    short = ConvOperator(x, 10, out_len=50)
    assert short.M == 109  # never shorter than the full convolution
    assert short.fft_size >= short.M


def test_stft_impulse():
    spec = stft_forward([1, 0, 0, 0, 0, 0, 0, 0], StftConfig(4))
    assert spec.bins.shape == (2, 8)
    np.testing.assert_allclose(spec.bins[0], np.full(8, 1 / np.sqrt(8)), atol=1e-15)
    np.testing.assert_array_equal(spec.bins[1], 0)
    np.testing.assert_array_equal(stft_forward(np.zeros(10), StftConfig(4)).bins, 0)


def test_stft_dense_dft_oracle(rng):
    cfg = StftConfig(256)
    s = rng.standard_normal(1000)
    frames = n_frames(1000, cfg)
    padded = np.zeros(frames * 256)
    padded[:1000] = s
    k = np.arange(512)
    F = np.exp(-2j * np.pi * np.outer(k, np.arange(256)) / 512) / np.sqrt(512)
    ref = padded.reshape(frames, 256) @ F.T
    np.testing.assert_allclose(stft_forward(s, cfg).bins, ref, atol=1e-10)


def test_stft_isometry_and_reconstruction(rng):
    cfg = StftConfig(64)
    s = rng.standard_normal(1000)
    spec = stft_forward(s, cfg)
    padded = np.concatenate([s, np.zeros(n_frames(1000, cfg) * 64 - 1000)])
    assert abs(np.sum(np.abs(spec.bins) ** 2) - padded @ padded) <= 1e-12 * (padded @ padded)
    np.testing.assert_allclose(stft_adjoint(spec), padded, atol=1e-12)
    assert not np.any(stft_adjoint(Spectrogram(np.zeros((3, 128), complex), cfg, 3 * 64)))


def test_stft_conjugate_symmetry(rng):
    cfg = StftConfig(32)
    b = stft_forward(rng.standard_normal(300), cfg).bins
    k = np.arange(1, cfg.fft_len)
    np.testing.assert_allclose(b[:, k], np.conj(b[:, cfg.fft_len - k]), atol=1e-13)


def test_stft_dot(rng):
    cfg = StftConfig(16)
    x = rng.standard_normal(160)
    Z = rng.standard_normal((10, 32)) + 1j * rng.standard_normal((10, 32))
    lhs = np.real(np.vdot(Z, stft_forward(x, cfg).bins))
    rhs = x @ stft_adjoint(Spectrogram(Z, cfg, 160))
    assert rel(lhs, rhs) < 1e-10


def test_weighted_zero_and_shape(rng):
    op, _ = make_operator(rng)
    assert op.shape == (2 * op.frames * 32, 64)
    assert not np.any(weighted_forward(op, np.zeros(64)))
    assert not np.any(weighted_adjoint(op, np.zeros(op.shape[0])))


def test_weighted_impulse_excitation(rng):
    x = np.zeros(200)
    x[0] = 1.0
    op = WeightedTfOperator(ConvOperator(x, 20), StftConfig(16))
    h = rng.standard_normal(20)
    padded = np.concatenate([h, np.zeros(op.conv.M - 20)])
    np.testing.assert_allclose(op.matvec(h), op.stack(stft_forward(padded, op.stft).bins), atol=1e-13)


def test_weighted_dense_oracle(rng):
    """Forward and adjoint against an explicitly assembled diag(w) S X."""
    op, x = make_operator(rng)
    L, N, M = 512, 64, op.conv.M
    X = np.zeros((M, N))
    for j in range(N):
        X[j:j + L, j] = x
    cfg = op.stft
    Xp = np.zeros((op.frames * cfg.n_dft, N))
    Xp[:M] = X
    k = np.arange(cfg.fft_len)
    F = np.exp(-2j * np.pi * np.outer(k, np.arange(cfg.n_dft)) / cfg.fft_len) * cfg.scale
    S = np.kron(np.eye(op.frames), F)
    A = op.weights.ravel()[:, None] * (S @ Xp)
    dense = np.vstack([A.real, A.imag])
    h = rng.standard_normal(N)
    u = rng.standard_normal(op.shape[0])
    np.testing.assert_allclose(op.matvec(h), dense @ h, atol=1e-9)
    np.testing.assert_allclose(op.rmatvec(u), dense.T @ u, atol=1e-9)


def test_weighted_linearity(rng):
    op, _ = make_operator(rng)
    u, v = rng.standard_normal(64), rng.standard_normal(64)
    a, b = rng.standard_normal(2)
    lhs = op.matvec(a * u + b * v)
    rhs = a * op.matvec(u) + b * op.matvec(v)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)
    p, q = rng.standard_normal((2, op.shape[0]))
    lhs = op.rmatvec(a * p + b * q)
    rhs = a * op.rmatvec(p) + b * op.rmatvec(q)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 400), st.integers(1, 200), st.sampled_from([4, 8, 16, 64]), st.integers(0, 2**31))
def test_weighted_dot_property(L, N, n_dft, seed):
    r = np.random.default_rng(seed)
    op = WeightedTfOperator(ConvOperator(r.standard_normal(L), N), StftConfig(n_dft))
    op.weights = r.uniform(0, 1, op.weights.shape)
    h, u = r.standard_normal(N), r.standard_normal(op.shape[0])
    assert rel(op.matvec(h) @ u, h @ op.rmatvec(u)) < 1e-8


def test_dense_matrix_helper_matches(rng):
    op, _ = make_operator(rng, L=40, N=5, n_dft=4)
    A = dense_matrix(op)
    h = rng.standard_normal(5)
    np.testing.assert_allclose(A @ h, op.matvec(h), atol=1e-12)


def test_weight_validation(rng):
    conv = ConvOperator(rng.standard_normal(10), 3)
    with pytest.raises(ValueError):
        WeightedTfOperator(conv, StftConfig(4), weights=np.ones((1, 1)))
    with pytest.raises(ValueError):
        StftConfig(0)
