"""Command-line interface: ``rirdeconv {estimate,simulate,evaluate,edc}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Failures print a JSON object ``{"error": {...}}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .core_io import Signal, WavError, derive_seed, read_signal, read_wav, write_wav
from .lsmr import NumericalError
from .metrics import edc, h_error_db, write_edc_csv, write_weights_csv
from .pipeline import METHODS, EstimateConfig, match_rate, run_estimate
from .precondition import LevinsonError
from .synth import EXCITATION_KINDS, InfeasibleCoverageError, SceneConfig, gen_scene, load_scene, save_scene

log = logging.getLogger("rirdeconv")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
JOBS_ENV = "RIRDECONV_JOBS"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _write_csv(path: Path, rows) -> None:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\r\n").writerows(rows)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(buf.getvalue(), newline="")
    os.replace(tmp, path)


def _delta_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a positive number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("delta must be positive")
    return value


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def _add_estimator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-precondition", action="store_true",
                   help="skip EQ preconditioning (it is off for --method freq regardless)")
    p.add_argument("--ndft", type=int, default=256, help="STFT frame length (default 256)")
    p.add_argument("--delta", type=_delta_arg, default="auto",
                   help="Huber threshold: a positive value or 'auto' (median residual)")
    p.add_argument("--max-irls", type=int, default=20, help="maximum IRLS iterations")
    p.add_argument("--lsmr-atol", type=float, default=1e-6, help="LSMR atol and btol")
    p.add_argument("--target-rate", type=int, default=32000,
                   help="preconditioning sample rate (only ever downsamples)")
    p.add_argument("--lpc-order", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="seed for the injected preconditioning noise")


def _estimate_config(args, method: str) -> EstimateConfig:
    return EstimateConfig(
        method=method,
        precondition=False if args.no_precondition else None,
        n_dft=args.ndft,
        delta=args.delta,
        max_irls_iters=args.max_irls,
        lsmr_atol=args.lsmr_atol,
        lsmr_btol=args.lsmr_atol,
        target_rate_hz=args.target_rate,
        lpc_order=args.lpc_order,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rirdeconv", description="Robust room impulse response estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate an RIR from an excitation/recording pair")
    p.add_argument("--excitation", required=True, help="clean excitation (WAV or raw float32)")
    p.add_argument("--recording", required=True, help="in-room recording (WAV or raw float32)")
    length = p.add_mutually_exclusive_group(required=True)
    length.add_argument("--rir-len", type=int, help="RIR length in samples at the working rate")
    length.add_argument("--rir-ms", type=float, help="RIR length in milliseconds")
    p.add_argument("--method", choices=METHODS, default="anyrir")
    p.add_argument("--excitation-channel", type=int, default=0)
    p.add_argument("--recording-channel", type=int, default=0)
    p.add_argument("--ground-truth", help="reference RIR WAV; adds h_error_db to the report")
    p.add_argument("--dump-weights", action="store_true", help="write weights.csv (anyrir only)")
    p.add_argument("--out-dir", default=".")
    _add_estimator_flags(p)

    p = sub.add_parser("simulate", help="generate synthetic scenes")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--duration-s", type=float, default=30.0)
    p.add_argument("--t60", type=float, default=0.3)
    p.add_argument("--rir-len", type=int, default=None)
    p.add_argument("--snr-db", type=float, default=50.0)
    p.add_argument("--coverage", type=float, default=None,
                   help="event coverage fraction (default: uniform in [0.2, 0.5] per scene)")
    p.add_argument("--peak-db", type=float, default=None,
                   help="event level re signal RMS (default: uniform in [0, 10] per event)")
    p.add_argument("--excitation", choices=[k for k in EXCITATION_KINDS if k != "wav_file"],
                   default="colored_noise")
    p.add_argument("--excitation-wav", help="use this file as excitation (overrides --excitation)")
    p.add_argument("--degradation-db", type=float, default=None,
                   help="add the codec-mismatch surrogate to the recording at this level (< 0)")

    p = sub.add_parser("evaluate", help="run estimators on scene directories")
    p.add_argument("--scenes", nargs="+", required=True, help="scene directories or glob patterns")
    p.add_argument("--methods", default=",".join(METHODS), help="comma-separated subset of methods")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=None, help=f"parallel workers (default ${JOBS_ENV} or 1)")
    _add_estimator_flags(p)

    p = sub.add_parser("edc", help="energy decay curve of an RIR file")
    p.add_argument("--rir", required=True)
    p.add_argument("--out", default="edc.csv")
    return parser


# ---------------------------------------------------------------------------
# commands


def cmd_estimate(args) -> dict:
    cfg = _estimate_config(args, args.method)
    x = read_signal(args.excitation, channel=args.excitation_channel)
    y = read_signal(args.recording, channel=args.recording_channel)
    if x.sample_rate_hz != y.sample_rate_hz:
        raise DataError(f"sample rate mismatch: excitation {x.sample_rate_hz} Hz, "
                        f"recording {y.sample_rate_hz} Hz")
    rate = cfg.working_rate(x.sample_rate_hz)
    rir_len = args.rir_len if args.rir_len is not None else int(math.ceil(args.rir_ms * 1e-3 * rate))
    if rir_len < 1:
        raise UsageError("RIR length must be at least one sample")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = run_estimate(x, y, rir_len, cfg)
    timings = dict(result.timings_ms)

    rir_path = out / "rir.wav"
    write_wav(Signal(result.h, result.sample_rate_hz), rir_path)
    write_edc_csv(edc(result.h, result.sample_rate_hz), out / "edc.csv")
    if args.dump_weights and result.irls_report is not None:
        write_weights_csv(result.irls_report.final_weights, out / "weights.csv")

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate",
        "method": cfg.method,
        "rir_path": str(rir_path),
        "sample_rate_hz": result.sample_rate_hz,
        "rir_len": rir_len,
        "h_error_db": None,
        "irls_diagnostics": result.irls_report.summary() if result.irls_report else None,
        "config_echo": {
            "excitation": str(args.excitation),
            "recording": str(args.recording),
            "excitation_channel": args.excitation_channel,
            "recording_channel": args.recording_channel,
            "rir_len": rir_len,
            "ground_truth": args.ground_truth,
            "estimator": cfg.to_dict(),
        },
    }
    if args.ground_truth:
        truth = read_wav(args.ground_truth)
        h_true = match_rate(truth.samples, truth.sample_rate_hz, result.sample_rate_hz)
        report["h_error_db"] = h_error_db(result.h, h_true)
    timings["total"] = 1e3 * (time.perf_counter() - t0)
    report["timings_ms"] = timings
    _write_json(out / "report.json", report)
    return report


def cmd_simulate(args) -> dict:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from None
    written = []
    for i in range(args.count):
        cfg = SceneConfig(
            seed=derive_seed(args.seed, i),
            sample_rate_hz=args.sample_rate,
            duration_s=args.duration_s,
            rir_t60_s=args.t60,
            rir_len=args.rir_len,
            stationary_snr_db=args.snr_db,
            nonstat_coverage=args.coverage,
            nonstat_peak_db=args.peak_db,
            excitation_kind="wav_file" if args.excitation_wav else args.excitation,
            excitation_path=args.excitation_wav,
            degradation_db=args.degradation_db,
        )
        scene = gen_scene(cfg)
        written.append(str(save_scene(scene, out / f"scene_{i:03d}")))
    return {"schema_version": SCHEMA_VERSION, "command": "simulate", "scenes": written,
            "config_echo": {k: v for k, v in vars(args).items() if k not in ("func",)}}


def discover_scenes(patterns) -> list[Path]:
    found = set()
    for pat in patterns:
        matches = sorted(glob.glob(pat)) or ([pat] if Path(pat).exists() else [])
        for m in matches:
            p = Path(m)
            if (p / "scene.json").is_file():
                found.add(p)
            elif p.is_dir():
                found.update(c.parent for c in p.glob("*/scene.json"))
            elif p.name == "scene.json":
                found.add(p.parent)
    return sorted(found)


def _evaluate_one(task):
    scene_dir, method, cfg_dict = task
    cfg = EstimateConfig(**cfg_dict)
    x, y, h_true, meta = load_scene(scene_dir)
    result = run_estimate(x, y, int(meta["rir_len"]), cfg)
    truth = match_rate(h_true, meta["sample_rate_hz"], result.sample_rate_hz)
    err = h_error_db(result.h, truth)
    info = {"scene": str(scene_dir), "method": method, "h_error_db": err,
            "coverage": meta.get("coverage")}
    if result.irls_report is not None:
        info["irls_iterations"] = len(result.irls_report.iterations)
    return info, result.timings_ms


def cmd_evaluate(args) -> dict:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"--methods: unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    scenes = discover_scenes(args.scenes)
    if not scenes:
        raise DataError(f"--scenes matched no scene directories: {args.scenes}")
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")

    configs = {m: _estimate_config(args, m) for m in methods}
    tasks = [(s, m, dataclasses_asdict(configs[m])) for s in scenes for m in methods]
    if jobs == 1:
        outcomes = [_evaluate_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_evaluate_one, tasks))

    rows = [o[0] for o in outcomes]
    summary = {}
    for m in methods:
        errs = np.array([r["h_error_db"] for r in rows if r["method"] == m])
        summary[m] = {
            "n_scenes": int(errs.size),
            "mean_db": float(errs.mean()),
            "std_db": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
        }

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_scene = [["scene", "method", "h_error_db"]]
    per_scene += [[r["scene"], r["method"], repr(r["h_error_db"])] for r in rows]
    _write_csv(out / "evaluation.csv", per_scene)
    table = [["method", "n_scenes", "mean_db", "std_db"]]
    table += [[m, s["n_scenes"], repr(s["mean_db"]), repr(s["std_db"])] for m, s in summary.items()]
    _write_csv(out / "summary.csv", table)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "evaluate",
        "scenes": [str(s) for s in scenes],
        "results": rows,
        "summary": summary,
        "config_echo": {"methods": methods, "estimators": {m: c.to_dict() for m, c in configs.items()}},
    }
    _write_json(out / "evaluation.json", report)
    report["timings_ms"] = [o[1] for o in outcomes]
    return report


def dataclasses_asdict(cfg: EstimateConfig) -> dict:
    import dataclasses

    return dataclasses.asdict(cfg)


def cmd_edc(args) -> dict:
    rir = read_signal(args.rir)
    if not np.any(rir.samples):
        raise DataError(f"{args.rir}: RIR is silent")
    curve = edc(rir.samples, rir.sample_rate_hz)
    write_edc_csv(curve, Path(args.out))
    return {"schema_version": SCHEMA_VERSION, "command": "edc", "edc_path": str(args.out),
            "n_samples": int(curve.values_db.size), "sample_rate_hz": rir.sample_rate_hz}


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "evaluate": cmd_evaluate, "edc": cmd_edc}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": {"type": kind, "message": message, "exit_code": code}}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except (NumericalError, LevinsonError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", str(exc), EXIT_NUMERIC)
    except (DataError, WavError, InfeasibleCoverageError, OSError, ValueError, KeyError) as exc:
        return _fail("data", str(exc), EXIT_DATA)
    summary = {k: v for k, v in result.items() if k not in ("results", "irls_diagnostics")}
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
