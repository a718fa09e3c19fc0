"""Command-line front end: ``issir encode|decode|eval|sweep|synth``.

Exit codes: 0 on success, 2 for usage errors, 3 for unreadable or
inconsistent data.
"""

from __future__ import annotations

import argparse
import ast
import csv
import itertools
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixtures
from .codec import BitstreamError, CodecConfig, RateUnreachable, decode, deserialize, encode, measure_rate
from .experiments import (
    METHODS,
    codec_roundtrip,
    issir_binlevel,
    misi_binlevel,
    oracle_wiener,
    run_method,
)
from .io import AudioFormatError, read_wav, write_wav
from .metrics import ReferenceSet, bss_eval
from .reconstruction import ReconParams
from .stft import GridSpec

log = logging.getLogger("issir")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
WORKERS_ENV = "ISSIR_WORKERS"
METRICS = ("sdr", "sir", "sar")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _load(path) -> tuple[np.ndarray, int]:
    try:
        return read_wav(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc
    except AudioFormatError as exc:
        raise DataError(str(exc)) from exc


def _load_many(paths) -> tuple[list[np.ndarray], int]:
    signals, rates = zip(*(_load(p) for p in paths))
    if len(set(rates)) > 1:
        raise DataError(f"sample rates differ: {sorted(set(rates))}")
    if len({s.size for s in signals}) > 1:
        raise DataError("signals differ in length")
    return list(signals), rates[0]


def _wavs_in(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"not a directory: {d}")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".wav")
    if not files:
        raise DataError(f"no .wav files in {d}")
    return files


def _codec_config(args) -> CodecConfig:
    try:
        return CodecConfig(u=args.u, T=args.T, rho=args.rho, bands_large=args.bands,
                           overlap=args.overlap, dual=args.dual, target_rate=args.target_rate,
                           backend=args.backend)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _recon_params(args) -> ReconParams:
    try:
        return ReconParams(D=args.D, rho=args.rho, n_iter=args.iters, mode=args.mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _workers(arg) -> int:
    if arg is not None:
        return max(1, arg)
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 6))
    return "" if v is None else str(v)


def _write_csv(path, header, rows):
    out = sys.stdout if str(path) == "-" else open(path, "w", newline="")
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])
    finally:
        if out is not sys.stdout:
            out.close()


# ---------------------------------------------------------------- encode / decode

def cmd_encode(args) -> int:
    mix, sr = _load(args.mix)
    stems, sr_s = _load_many(args.stems)
    if sr_s != sr or stems[0].size != mix.size:
        raise DataError("stems and mixture differ in rate or length")
    cfg = _codec_config(args)
    try:
        stream = encode(mix, stems, cfg, sr)
    except RateUnreachable as exc:
        raise DataError(str(exc)) from exc
    Path(args.out).write_bytes(stream)
    bundle = deserialize(stream)
    report = {
        "out": str(args.out),
        "bytes": len(stream),
        "rate_kbps_per_source": round(measure_rate(stream, mix.size / sr, len(stems)), 6),
        "target_rate": cfg.target_rate,
        "T_db": bundle.T_cdb / 100,
        "u_db": bundle.u_cdb / 100,
        "bands_large": bundle.bands_large,
        "bands_small": bundle.bands_small,
        "dual": bundle.dual,
        "transients": len(bundle.transients),
        "sources": len(stems),
    }
    line = json.dumps(report, sort_keys=True)
    print(line)
    if args.report:
        with open(args.report, "a") as fh:
            fh.write(line + "\n")
    return EXIT_OK


def cmd_decode(args) -> int:
    mix, sr = _load(args.mix)
    try:
        stream = Path(args.input).read_bytes()
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {args.input}") from exc
    try:
        bundle = deserialize(stream)
    except BitstreamError as exc:
        raise DataError(f"{args.input}: {exc}") from exc
    if bundle.sample_rate != sr or bundle.length != mix.size:
        raise DataError("mixture does not match the side information (rate or length)")
    if abs(bundle.rho_ppm / 1e6 - args.rho) > 1e-6:
        log.warning("activity domain was fixed at encode time with rho=%g; --rho %g has no effect",
                    bundle.rho_ppm / 1e6, args.rho)
    params = _recon_params(args)
    estimates = decode(mix, stream, params)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for j, est in enumerate(estimates):
        write_wav(outdir / f"source_{j:02d}.wav", est, sr, float_output=args.float)
    print(json.dumps({"outdir": str(outdir), "sources": len(estimates), "iters": params.n_iter,
                      "D": params.D, "mode": params.mode}, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _score_rows(method, scores, baseline, extra=None):
    rows = []
    for j in range(len(scores)):
        row = {"method": method, "source": j}
        row.update(extra or {})
        for m in METRICS:
            value = float(getattr(scores, m)[j])
            row[m] = value
            row[f"delta_{m}"] = value - float(getattr(baseline, m)[j])
        rows.append(row)
    return rows


def cmd_eval(args) -> int:
    ref_files = _wavs_in(args.ref_dir)
    refs, sr = _load_many(ref_files)
    if args.mix:
        mix, sr_m = _load(args.mix)
        if sr_m != sr or mix.size != refs[0].size:
            raise DataError("mixture does not match the references")
    else:
        mix = np.sum(refs, axis=0)
    rs = ReferenceSet(refs, args.filter_length)
    cfg = _codec_config(args)
    params = _recon_params(args)
    grid = GridSpec.for_signal(mix.size, cfg.window_large, cfg.overlap, sr)
    baseline = bss_eval(oracle_wiener(mix, refs, grid), None, reference_set=rs)

    rows = []
    methods = args.methods if args.methods is not None else ([] if args.est_dir else list(METHODS))
    for name in methods:
        if name == "wiener_oracle":
            result_scores, rate = baseline, float("nan")
        else:
            try:
                res = run_method(name, mix, refs, sr, cfg, params)
            except RateUnreachable as exc:
                raise DataError(str(exc)) from exc
            result_scores, rate = bss_eval(res.estimates, None, reference_set=rs), res.rate
        rows += _score_rows(name, result_scores, baseline, {"rate": rate})
    if args.est_dir:
        est, sr_e = _load_many(_wavs_in(args.est_dir))
        if sr_e != sr or len(est) != len(refs) or est[0].size != refs[0].size:
            raise DataError("estimates do not match the references (count, rate or length)")
        rows += _score_rows(args.label, bss_eval(est, None, reference_set=rs), baseline,
                            {"rate": float("nan")})
    header = ["method", "source", "rate"] + list(METRICS) + [f"delta_{m}" for m in METRICS]
    _write_csv(args.csv, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------- sweep

SWEEP_DEFAULTS = {
    "fixture": "band",
    "duration": 5.0,
    "seed": 0,
    "iters": 50,
    "filter_length": 512,
    "method": ["issir_single"],
    "u": [1.0],
    "D": [40.0],
    "rho": [0.01],
    "overlap": [0.5],
    "bands": [250],
    "target_rate": [None],
    "mode": ["M1"],
    "T": -120.0,
    "backend": "zlib",
}
SWEEP_LIST_KEYS = ("method", "u", "D", "rho", "overlap", "bands", "target_rate", "mode")
SWEEP_METHODS = ("wiener_oracle", "misi", "issir_single", "issir_dual")
FIXTURES = {
    "band": fixtures.band_fixture,
    "two_source": fixtures.two_source_fixture,
    "transient": fixtures.transient_fixture,
}


def parse_sweep_config(text: str) -> dict:
    """``key = value`` lines with Python literal values; ``#`` starts a comment."""
    cfg = dict(SWEEP_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SWEEP_DEFAULTS and key not in ("mix", "stems"):
            raise UsageError(f"line {lineno}: unknown key {key!r}")
        try:
            cfg[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError) as exc:
            raise UsageError(f"line {lineno}: bad value for {key!r}: {value}") from exc
    for key in SWEEP_LIST_KEYS:
        if not isinstance(cfg[key], (list, tuple)):
            cfg[key] = [cfg[key]]
        if not cfg[key]:
            raise UsageError(f"sweep list {key!r} is empty")
    for m in cfg["method"]:
        if m not in SWEEP_METHODS:
            raise UsageError(f"unknown method {m!r}; expected one of {SWEEP_METHODS}")
    if cfg["fixture"] not in FIXTURES and "stems" not in cfg:
        raise UsageError(f"unknown fixture {cfg['fixture']!r}; expected one of {sorted(FIXTURES)}")
    return cfg


@dataclass(frozen=True)
class Combination:
    method: str
    u: float
    D: float
    rho: float
    overlap: float
    bands: int
    target_rate: float | None
    mode: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def sweep_combinations(cfg: dict) -> list[Combination]:
    return [Combination(*values) for values in itertools.product(*(cfg[k] for k in SWEEP_LIST_KEYS))]


def _sweep_material(cfg):
    if "stems" in cfg:
        stems, sr = _load_many(cfg["stems"])
        mix = _load(cfg["mix"])[0] if "mix" in cfg else np.sum(stems, axis=0)
        return mix, stems, sr
    mt = FIXTURES[cfg["fixture"]](cfg["duration"], seed=cfg["seed"])
    return mt.mix, mt.stems, mt.sample_rate


def run_combination(combo: Combination, cfg: dict, mix, stems, sr):
    """Source estimates and measured rate (``nan`` for the bin-level path)."""
    params = ReconParams(D=combo.D, rho=combo.rho, n_iter=cfg["iters"], mode=combo.mode)
    grid = GridSpec.for_signal(len(mix), 2048, combo.overlap, sr)
    if combo.method == "wiener_oracle":
        return oracle_wiener(mix, stems, grid), float("nan")
    if combo.u == 0:
        # Exact magnitudes cannot go through the codec: use the bin-level path.
        if combo.method == "misi":
            return misi_binlevel(mix, stems, grid, 0.0, max(params.n_iter, 1)), float("nan")
        if combo.method == "issir_single":
            return issir_binlevel(mix, stems, grid, 0.0, params), float("nan")
        raise UsageError("u = 0 is only available for misi and issir_single")
    codec = CodecConfig(u=combo.u, T=cfg["T"], rho=combo.rho, bands_large=combo.bands,
                        overlap=combo.overlap, target_rate=combo.target_rate, backend=cfg["backend"])
    if combo.method in ("issir_single", "issir_dual"):
        res = codec_roundtrip(mix, stems, codec.evolve(dual=combo.method == "issir_dual"), params, sr)
        return res.estimates, res.rate
    res = run_method(combo.method, mix, stems, sr, codec, params)
    return res.estimates, res.rate


def _sweep_task(index, combo, cfg, material=None):
    mix, stems, sr = material if material is not None else _sweep_material(cfg)
    try:
        est, rate = run_combination(combo, cfg, mix, stems, sr)
    except RateUnreachable as exc:
        log.warning("combination %d skipped: %s", index, exc)
        return index, None, exc.best_rate
    result = bss_eval(est, stems, cfg["filter_length"])
    return index, result, rate


def cmd_sweep(args) -> int:
    try:
        text = Path(args.config).read_text()
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {args.config}") from exc
    cfg = parse_sweep_config(text)
    combos = sweep_combinations(cfg)
    workers = _workers(args.workers)
    if workers > 1 and len(combos) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_task, i, c, cfg) for i, c in enumerate(combos)]
            results = [f.result() for f in futures]
    else:
        material = _sweep_material(cfg)
        results = [_sweep_task(i, c, cfg, material) for i, c in enumerate(combos)]

    rows = []
    fixed = {"fixture": cfg["fixture"] if "stems" not in cfg else "files", "duration": cfg["duration"],
             "seed": cfg["seed"], "iters": cfg["iters"], "T": cfg["T"], "backend": cfg["backend"]}
    for (index, result, rate), combo in zip(sorted(results, key=lambda r: r[0]), combos):
        if result is None:
            continue
        for j in range(len(result)):
            for metric in METRICS:
                row = {"combination": index, **fixed, **combo.as_dict(), "rate": rate,
                       "source": j, "metric": metric, "value": float(getattr(result, metric)[j])}
                rows.append(row)
    header = ["combination", "method", "u", "D", "rho", "overlap", "bands", "target_rate", "mode",
              "fixture", "duration", "seed", "iters", "T", "backend", "rate", "source", "metric", "value"]
    _write_csv(args.csv, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    mt = FIXTURES[args.fixture](args.duration, seed=args.seed)
    outdir = Path(args.outdir)
    (outdir / "stems").mkdir(parents=True, exist_ok=True)
    # Keep headroom so that the 16-bit files do not clip.
    scale = 0.9 / max(np.max(np.abs(mt.mix)), max(np.max(np.abs(s)) for s in mt.stems))
    scale = min(scale, 1.0)
    for j, (name, s) in enumerate(zip(mt.names, mt.stems)):
        write_wav(outdir / "stems" / f"{j:02d}_{name}.wav", s * scale, mt.sample_rate)
    write_wav(outdir / "mix.wav", mt.mix * scale, mt.sample_rate)
    print(json.dumps({"outdir": str(outdir), "sources": len(mt.stems), "names": mt.names}))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_codec_flags(p, with_target=True):
    p.add_argument("--u", type=float, default=1.0, help="quantization step in dB")
    p.add_argument("--T", type=float, default=-120.0, help="energy threshold in dB (<= -20)")
    p.add_argument("--bands", type=int, default=250, help="band count for the large window")
    p.add_argument("--overlap", type=float, default=0.5, choices=(0.5, 0.75))
    p.add_argument("--backend", default="zlib", choices=("none", "zlib", "bz2", "lzma"))
    p.add_argument("--dual", action="store_true", help="dual-resolution grid at transients")
    if with_target:
        p.add_argument("--target-rate", type=float, default=None, help="kb/source/s")


def _add_recon_flags(p):
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--D", type=float, default=40.0)
    p.add_argument("--rho", type=float, default=0.01)
    p.add_argument("--mode", default="M1", choices=("M1", "M2", "M3"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="issir", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="write side information for a mixture and its stems")
    p.add_argument("--mix", required=True)
    p.add_argument("--stems", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="append the JSON report line to this file")
    p.add_argument("--rho", type=float, default=0.01, help="activity threshold")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct stems from a mixture and side information")
    p.add_argument("--mix", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--float", action="store_true", help="write 32-bit float WAVs")
    _add_recon_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score estimates and/or built-in methods against references")
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--est-dir")
    p.add_argument("--label", default="estimate", help="method name for --est-dir rows")
    p.add_argument("--mix", help="mixture WAV (default: sum of the references)")
    p.add_argument("--methods", nargs="*", choices=METHODS)
    p.add_argument("--csv", required=True, help="output path, or - for stdout")
    p.add_argument("--filter-length", type=int, default=512)
    _add_codec_flags(p)
    _add_recon_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a parameter grid from a key = value file")
    p.add_argument("--config", required=True)
    p.add_argument("--csv", required=True, help="output path, or - for stdout")
    p.add_argument("--workers", type=int, default=None, help=f"default: ${WORKERS_ENV} or 1")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a seeded synthetic multitrack")
    p.add_argument("--fixture", default="band", choices=sorted(FIXTURES))
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        print(f"issir: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"issir: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BitstreamError, AudioFormatError) as exc:
        print(f"issir: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
