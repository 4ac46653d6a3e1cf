"""Command-line entry point ``mpr``.

    mpr run    --config run.cfg
    mpr tune   --config run.cfg
    mpr sweep  --config run.cfg --param threshold_t
    mpr synth  --seed 0 --len 200 --out data/
    mpr vocab  --train data/database --out vocab.bin --k 10 --L 5 --seed 0

Exit status is 0 on success. Any failure prints a single ``mpr: error: ...``
line on stderr and exits with status 1 (2 for usage errors).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import Mode, parse_config
from .dataset import Modality, Perturbation, Role, generate_synthetic_pair, load_sequence, write_ground_truth, write_sequence
from .descriptors import training_features
from .descriptors.vocabulary import build_vocabulary
from .errors import MprError
from .tuning import SWEEP_PARAMETERS

log = logging.getLogger("mpr")


def _cmd_run(args) -> int:
    from .pipeline import run_sweep, run_testing, run_tuning

    cfg = parse_config(args.config)
    runner = {Mode.TESTING: run_testing, Mode.TUNING: run_tuning, Mode.SWEEP: run_sweep}[cfg.mode]
    report = runner(cfg)
    _summarise(report)
    return 0


def _cmd_tune(args) -> int:
    from .pipeline import run_tuning

    cfg = parse_config(args.config)
    report = run_tuning(cfg)
    agg = report.extra["tuning"].aggregated
    print("aggregated coefficients: " + " ".join(f"{x:.3f}" for x in agg))
    _summarise(report)
    return 0


def _cmd_sweep(args) -> int:
    from .pipeline import run_sweep

    cfg = parse_config(args.config)
    report = run_sweep(cfg, args.param)
    _summarise(report)
    return 0


def _cmd_synth(args) -> int:
    pert = Perturbation(args.viewpoint_px, args.brightness_gain, args.occlusion_rate, args.gnss_noise_m)
    query, db, gt = generate_synthetic_pair(args.seed, args.len, pert)
    out = Path(args.out)
    write_sequence(db, out / "database")
    write_sequence(query, out / "query")
    write_ground_truth(gt, out / "query" / "gt.csv")
    print(f"wrote {args.len} query/database frames to {out}")
    return 0


def _cmd_vocab(args) -> int:
    root = Path(args.train)
    mods = [m for m in (Modality.COLOR, Modality.INFRARED) if (root / m.dirname).is_dir()]
    if not mods:
        raise MprError(f"{root} has neither color/ nor infrared/ images")
    seq = load_sequence(root, Role.DATABASE, mods)
    feats = training_features(seq, mods, args.max_keypoints)
    vocab = build_vocabulary(feats, args.k, args.L, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    print(f"vocabulary with {vocab.word_count} words from {len(feats)} features written to {out}")
    return 0


def _summarise(report) -> None:
    if report.metrics is not None:
        m = report.metrics
        print(f"precision {m.precision:.4f}  recall {m.recall:.4f}  F1 {m.f1:.4f}  mean error {m.mean_error:.2f}")
    if report.extraction_ms:
        print(f"mean per-frame time {report.mean_frame_ms:.1f} ms")
    print(f"{len(report.files)} files written to {report.output_dir}")


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpr", description="Multimodal sequence place recognition")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the mode named in the configuration")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("tune", help="search fusion coefficients")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("sweep", help="sweep one matching parameter")
    p.add_argument("--config", required=True)
    p.add_argument("--param", action="append", choices=SWEEP_PARAMETERS,
                   help="parameter to sweep (repeatable); default: those in the configuration")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic query/database pair")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--len", type=_positive_int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--viewpoint-px", type=float, default=0.0)
    p.add_argument("--brightness-gain", type=float, default=0.0)
    p.add_argument("--occlusion-rate", type=float, default=0.0)
    p.add_argument("--gnss-noise-m", type=float, default=0.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("vocab", help="train a binary visual vocabulary")
    p.add_argument("--train", required=True, help="sequence directory with color/ and/or infrared/")
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--L", type=_positive_int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-keypoints", type=_positive_int, default=500)
    p.set_defaults(func=_cmd_vocab)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MprError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"mpr: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
