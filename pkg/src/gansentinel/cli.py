"""``gansentinel`` command line.

Exit codes are a stable contract for trainer-side shell hooks:

==  =====================================================
0   finished without stopping, or stopped at max epochs
2   bad input or configuration
10  stopped for MetricStagnation
11  stopped for LossPathologyPersistence
==  =====================================================
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .calibration import THRESHOLD_MODES, Thresholds, calibrate_thresholds
from .config import read_config
from .loss_patterns import DetectorConfig, timeline
from .metrics import (
    EXTRACTOR_KINDS, FeatureExtractor, MetricsSnapshot, SamplingConfig, SsimParams, backend, compute_snapshot,
    external_extractor, fid, mean_ms_ssim, read_feature_csv, resolve_scales, sample_indices, sampled_fid,
)
from .report import (
    HashingReader, RunReport, render_plot_csv, render_text, sha256_file, sha256_tree, write_epoch_csv,
)
from .sentinel import Sentinel, SentinelConfig, StopReason
from .simulator import PRESET_SCRIPTS, Scenario, ScenarioKind, Script, emit_run, load_metrics_log, simulate_run
from .telemetry import (
    find_snapshot_dirs, iter_loss_records, list_images, load_image_dir, load_image_set, parse_loss_log,
)

log = logging.getLogger("gansentinel")

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_METRIC_STAGNATION = 10
EXIT_LOSS_PATHOLOGY = 11

EXIT_CODES = {
    StopReason.NOT_STOPPED: EXIT_OK,
    StopReason.MAX_EPOCHS: EXIT_OK,
    StopReason.METRIC_STAGNATION: EXIT_METRIC_STAGNATION,
    StopReason.LOSS_PATHOLOGY: EXIT_LOSS_PATHOLOGY,
}

SCENARIO_NAMES = {
    "mode-collapse": ScenarioKind.MODE_COLLAPSE,
    "non-convergence": ScenarioKind.NON_CONVERGENCE,
    "instability": ScenarioKind.INSTABILITY,
    "healthy": ScenarioKind.HEALTHY,
    "scripted": ScenarioKind.SCRIPTED,
}


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Shared argument groups

def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="sampling seed (default 0)")
    g.add_argument("--config", metavar="FILE", help="key = value file; keys mirror the long flags")
    g.add_argument("--output", metavar="DIR", help="directory for output files")
    g.add_argument("--format", choices=("json", "csv"), help="output format")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _add_sampling_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sampling")
    g.add_argument("--pairs", type=int, default=50, help="random image pairs for mean MS-SSIM")
    g.add_argument("--samples", type=int, default=100, help="images per set for FID")
    g.add_argument("--fid-resamples", type=int, default=1, help="FID draws to average")
    g.add_argument("--extractor", choices=EXTRACTOR_KINDS[:2], default="random-projection")
    g.add_argument("--dim", type=int, default=64, help="feature dimension")
    g.add_argument("--projection-seed", type=int, default=0, help="seed of the random projection")
    g.add_argument("--num-scales", default="auto", help="MS-SSIM scales: 'auto' or 1-5")


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("loss detector")
    defaults = DetectorConfig()
    for f in fields(DetectorConfig):
        kind = int if f.name == "window" else float
        g.add_argument("--" + f.name.replace("_", "-"), type=kind, default=None,
                       help=f"(default {getattr(defaults, f.name)})")


def _add_loss_log_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--loss-log", metavar="PATH", help="JSONL or CSV loss log; '-' reads standard input")
    p.add_argument("--loss-format", choices=("jsonl", "csv"), help="default: by file suffix, jsonl for stdin")


def _num_scales(text) -> object:
    if text in (None, "auto"):
        return "auto"
    try:
        return int(text)
    except ValueError:
        raise CliError(f"--num-scales must be 'auto' or an integer, got {text!r}") from None


def sampling_from_args(args) -> SamplingConfig:
    fx = FeatureExtractor(args.extractor, args.dim, args.projection_seed)
    return SamplingConfig(args.pairs, args.samples, args.fid_resamples, fx,
                          SsimParams(num_scales=_num_scales(args.num_scales)))


def detector_from_args(args) -> DetectorConfig:
    values = {f.name: getattr(args, f.name) for f in fields(DetectorConfig) if getattr(args, f.name) is not None}
    return DetectorConfig(**{**asdict(DetectorConfig()), **values})


def _need(args, *names: str) -> None:
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise CliError(f"--{name.replace('_', '-')} is required")


def _loss_format(args) -> str:
    if args.loss_format:
        return args.loss_format
    return "csv" if args.loss_log != "-" and args.loss_log.lower().endswith(".csv") else "jsonl"


def _output_dir(args, fallback: Optional[str] = None) -> Optional[Path]:
    target = args.output or fallback
    if target is None:
        return None
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, payload: dict, csv_rows: Optional[list] = None, filename: Optional[str] = None) -> None:
    """Print ``payload`` as JSON (or ``csv_rows`` as CSV) and, with
    ``--output``, also write it to ``filename`` there."""
    if args.format == "csv" and csv_rows is not None:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(csv_rows)
        text = buf.getvalue()
        suffix = ".csv"
    else:
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        suffix = ".json"
    if filename and args.output:
        path = _output_dir(args) / (filename + suffix)
        path.write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    sys.stdout.flush()


def _dir_digest(directory) -> str:
    return sha256_tree(list_images(directory))


# ---------------------------------------------------------------------------
# Commands

def cmd_calibrate(args) -> int:
    _need(args, "train_dir", "test_dir")
    cfg = sampling_from_args(args)
    train, test = load_image_dir(args.train_dir), load_image_dir(args.test_dir)
    train_fx = external_extractor(args.train_features) if args.train_features else None
    test_fx = external_extractor(args.test_features) if args.test_features else None
    th = calibrate_thresholds(train, test, args.seed, cfg, train_fx, test_fx)
    out = _output_dir(args, ".")
    (out / "thresholds.json").write_text(th.dumps(), encoding="utf-8")
    keys = ("msssim_th1", "msssim_th2", "fid_th1", "fid_th2", "seed")
    rows = [keys, [repr(getattr(th, k)) if k != "seed" else th.seed for k in keys]]
    args.output = None  # already written; _emit only prints
    _emit(args, th.to_dict(), rows)
    return EXIT_OK


def _snapshot_source(args, sampling: SamplingConfig, inputs: dict) -> Callable[[int], Optional[MetricsSnapshot]]:
    if args.metrics_log and args.snapshots_dir:
        raise CliError("give either --metrics-log or --snapshots-dir, not both")
    if args.metrics_log:
        snaps = load_metrics_log(args.metrics_log)
        inputs["metrics_log"] = sha256_file(args.metrics_log)
        return snaps.get
    if args.snapshots_dir:
        _need(args, "train_dir")
        dirs = find_snapshot_dirs(args.snapshots_dir)
        if not dirs:
            raise CliError(f"no epoch_<N> directories under {args.snapshots_dir}")
        train = load_image_dir(args.train_dir)
        inputs["train_dir"] = _dir_digest(args.train_dir)
        used: list = []

        def compute(epoch: int) -> Optional[MetricsSnapshot]:
            if epoch not in dirs:
                return None
            paths = list_images(dirs[epoch])
            used.extend(paths)
            inputs["snapshots"] = sha256_tree(used)
            snap = compute_snapshot(train, load_image_set(paths), epoch, args.seed, sampling)
            log.info("epoch %d: MS-SSIM %.4f, FID %.4f", epoch, snap.msssim_synth, snap.fid_train_synth)
            return snap

        return compute
    return lambda epoch: None


def cmd_monitor(args) -> int:
    _need(args, "loss_log")
    det = detector_from_args(args)
    sampling = sampling_from_args(args)
    inputs: dict = {}
    th = None
    if args.thresholds:
        th = Thresholds.load(args.thresholds)
        inputs["thresholds"] = sha256_file(args.thresholds)
    cfg = SentinelConfig(
        max_epochs=args.max_epochs, patience=args.patience, eval_interval=args.eval_interval,
        gate_on_constancy=args.gate_on_constancy, metrics_enabled=not args.no_metrics,
        threshold_mode=args.threshold_mode, loss_patience=args.loss_patience,
        metric_patience=args.metric_patience, detector=det,
    )
    snapshot_for = _snapshot_source(args, sampling, inputs)
    resample = None
    if args.resample_thresholds:
        _need(args, "train_dir", "test_dir")
        train, test = load_image_dir(args.train_dir), load_image_dir(args.test_dir)
        inputs["test_dir"] = _dir_digest(args.test_dir)

        def resample(epoch: int) -> Thresholds:
            return calibrate_thresholds(train, test, args.seed + epoch, sampling)

    fmt = _loss_format(args)
    if args.loss_log == "-":
        stream = HashingReader(sys.stdin.buffer)
        records = iter_loss_records(stream, fmt)
    else:
        stream = None
        records = iter(parse_loss_log(args.loss_log, fmt))
        inputs["loss_log"] = sha256_file(args.loss_log)

    s = Sentinel(cfg, th)
    snapshots = []
    for rec in records:
        s.observe_epoch(rec)
        if s.stopped and s.decision().reason is not StopReason.MAX_EPOCHS:
            break
        if cfg.metrics_enabled and rec.epoch % cfg.eval_interval == 0:
            snap = snapshot_for(rec.epoch)
            if snap is not None:
                s.observe_evaluation(snap, resample(rec.epoch) if resample else None)
                snapshots.append(snap)
        if s.stopped:
            break
    if stream is not None:
        # digest of the records actually consumed
        inputs["loss_log"] = stream.hexdigest()

    decision = s.decision()
    report = RunReport(
        decision=decision, thresholds=th, snapshots=snapshots, events=list(s.timeline),
        evaluations=list(s.evaluations), version=__version__, inputs=inputs,
        config={"sentinel": cfg.to_dict(), "sampling": sampling.to_dict(), "seed": args.seed,
                "loss_format": fmt, "resample_thresholds": bool(args.resample_thresholds)},
    )
    out = _output_dir(args, ".")
    (out / args.report_name).write_text(report.dumps(), encoding="utf-8")
    with open(out / args.epochs_csv, "w", encoding="utf-8", newline="") as fh:
        write_epoch_csv(s.rows, fh)

    d = decision.to_dict()
    args.output = None
    _emit(args, d, [list(d), list(d.values())])
    return EXIT_CODES[decision.reason]


def cmd_analyze_loss(args) -> int:
    _need(args, "loss_log")
    cfg = detector_from_args(args)
    fmt = _loss_format(args)
    source = sys.stdin.buffer if args.loss_log == "-" else args.loss_log
    series = parse_loss_log(source, fmt)
    if len(series) < cfg.window and not args.include_head:
        raise CliError(f"loss log has {len(series)} epochs, fewer than the {cfg.window}-epoch window")
    segs = timeline(series.g, series.d, cfg, series.epochs, args.include_head, args.min_segment)
    payload = {
        "epochs": len(series),
        "detector": asdict(cfg),
        "segments": [seg.to_dict() for seg in segs],
    }
    rows = [("kind", "epoch_start", "epoch_end")] + [(g.kind.value, g.epoch_start, g.epoch_end) for g in segs]
    _emit(args, payload, rows, "timeline")
    return EXIT_OK


def cmd_ms_ssim(args) -> int:
    _need(args, "dir")
    cfg = sampling_from_args(args)
    images = load_image_dir(args.dir)
    score = mean_ms_ssim(images, cfg.n_pairs, args.seed, cfg.ssim)
    payload = {
        "metric": "ms-ssim",
        "score": score,
        "seed": args.seed,
        "n_pairs": cfg.n_pairs,
        "n_images": len(images),
        "image_size": [images.height, images.width],
        "num_scales": resolve_scales(images.height, images.width, cfg.ssim),
        "ssim": cfg.to_dict()["ssim"],
        "backend": backend(),
        "input_sha256": _dir_digest(args.dir),
    }
    rows = [("metric", "score", "seed", "n_pairs", "n_images"),
            ("ms-ssim", repr(score), args.seed, cfg.n_pairs, len(images))]
    _emit(args, payload, rows, "ms_ssim")
    return EXIT_OK


def _feature_only_fid(fa: np.ndarray, fb: np.ndarray, seed: int, cfg: SamplingConfig) -> float:
    # same subsampling streams as sampled_fid, applied to feature rows
    rng_a, rng_b = np.random.default_rng([seed, 1]), np.random.default_rng([seed, 1])
    scores = []
    for _ in range(cfg.fid_resamples):
        ia = sample_indices(len(fa), cfg.n_samples, rng_a)
        ib = sample_indices(len(fb), cfg.n_samples, rng_b)
        scores.append(fid(fa[ia], fb[ib]))
    return float(np.mean(scores))


def cmd_fid(args) -> int:
    cfg = sampling_from_args(args)
    inputs = {}
    if args.a and args.b:
        a, b = load_image_dir(args.a), load_image_dir(args.b)
        fx_a = external_extractor(args.a_features) if args.a_features else None
        fx_b = external_extractor(args.b_features) if args.b_features else None
        score = sampled_fid(a, b, args.seed, cfg, fx_a, fx_b)
        inputs = {"a": _dir_digest(args.a), "b": _dir_digest(args.b)}
        counts = (len(a), len(b))
        extractor = [(fx or cfg.extractor).kind for fx in (fx_a, fx_b)]
    elif args.a_features and args.b_features:
        fa, fb = read_feature_csv(args.a_features), read_feature_csv(args.b_features)
        score = _feature_only_fid(fa, fb, args.seed, cfg)
        counts = (len(fa), len(fb))
        extractor = ["external-file", "external-file"]
    else:
        raise CliError("fid needs --a and --b directories, or --a-features and --b-features files")
    for key in ("a_features", "b_features"):
        if getattr(args, key):
            inputs[key] = sha256_file(getattr(args, key))
    payload = {
        "metric": "fid",
        "score": score,
        "seed": args.seed,
        "n_samples": cfg.n_samples,
        "fid_resamples": cfg.fid_resamples,
        "n_images": list(counts),
        "extractor": extractor,
        "dim": cfg.extractor.dim,
        "projection_seed": cfg.extractor.seed,
        "input_sha256": inputs,
    }
    rows = [("metric", "score", "seed", "n_samples"), ("fid", repr(score), args.seed, cfg.n_samples)]
    _emit(args, payload, rows, "fid")
    return EXIT_OK


def scenario_from_args(args) -> Scenario:
    name = args.scenario
    script = None
    if args.script:
        script = Script.load(args.script)
        name = "scripted"
    elif name in PRESET_SCRIPTS:
        script = PRESET_SCRIPTS[name]() if name != "improving" else PRESET_SCRIPTS[name](args.epochs)
        name = "scripted"
    if name not in SCENARIO_NAMES:
        raise CliError(f"unknown scenario {args.scenario!r}")
    kind = SCENARIO_NAMES[name]
    if kind is ScenarioKind.SCRIPTED and script is None:
        raise CliError("the scripted scenario needs --script")
    shape = {}
    for f in fields(Scenario):
        value = getattr(args, f.name, None)
        if value is not None and f.name not in ("kind", "epochs", "seed", "script"):
            shape[f.name] = value
    for band in ("osc", "g", "d"):
        lo, hi = getattr(args, f"{band}_low"), getattr(args, f"{band}_high")
        if lo is not None or hi is not None:
            key = "osc_band" if band == "osc" else f"{band}_band"
            default = getattr(Scenario(), key)
            shape[key] = (default[0] if lo is None else lo, default[1] if hi is None else hi)
    return Scenario(kind, args.epochs, args.seed, script=script, **shape)


def cmd_simulate(args) -> int:
    out = _output_dir(args, args.out)
    if out is None:
        raise CliError("simulate needs --out (or --output)")
    sc = scenario_from_args(args)
    images = args.images and sc.kind is not ScenarioKind.SCRIPTED
    bundle = simulate_run(sc, images=images, n_images=args.n_images, image_size=args.image_size,
                          n_train=args.n_train, n_test=args.n_test, eval_interval=args.eval_interval)
    if images:
        bundle.thresholds = calibrate_thresholds(bundle.train, bundle.test, args.seed, sampling_from_args(args))
    paths = emit_run(bundle, out, args.loss_format or "jsonl")
    args.output = None
    payload = {k: str(v) for k, v in sorted(paths.items())}
    _emit(args, payload, [("file", "path")] + sorted(payload.items()))
    return EXIT_OK


def cmd_report(args) -> int:
    _need(args, "report")
    rep = RunReport.load(args.report)
    if args.format == "csv":
        text = render_plot_csv(rep)
    elif args.format == "json":
        text = rep.dumps()
    else:
        text = render_text(rep)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="gansentinel",
        description="Early stopping for GAN training from loss patterns, MS-SSIM and FID.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("calibrate", parents=[common], help="baseline thresholds from real train/test images")
    p.add_argument("--train-dir")
    p.add_argument("--test-dir")
    p.add_argument("--train-features", metavar="CSV", help="precomputed features of the training images")
    p.add_argument("--test-features", metavar="CSV", help="precomputed features of the test images")
    _add_sampling_args(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("monitor", parents=[common], help="run the early-stopping sentinel over a training run")
    _add_loss_log_args(p)
    p.add_argument("--thresholds", metavar="JSON", help="thresholds file from 'calibrate'")
    p.add_argument("--snapshots-dir", metavar="DIR", help="directory holding epoch_<N>/ image folders")
    p.add_argument("--train-dir", help="real training images (needed with --snapshots-dir)")
    p.add_argument("--test-dir", help="real test images (needed with --resample-thresholds)")
    p.add_argument("--metrics-log", metavar="JSONL", help="precomputed snapshots, one JSON object per line")
    p.add_argument("--patience", type=int, default=200, help="epochs (default 200)")
    p.add_argument("--loss-patience", type=int, help="override --patience for loss pathologies")
    p.add_argument("--metric-patience", type=int, help="override --patience for metric stagnation")
    p.add_argument("--eval-interval", type=int, default=50)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--gate-on-constancy", action="store_true",
                   help="apply an evaluation only when the loss window is flat")
    p.add_argument("--threshold-mode", choices=THRESHOLD_MODES, default="min")
    p.add_argument("--resample-thresholds", action="store_true",
                   help="recalibrate thresholds at every evaluation (needs --train-dir and --test-dir)")
    p.add_argument("--no-metrics", action="store_true", help="stop on loss pathologies only")
    p.add_argument("--report-name", default="report.json")
    p.add_argument("--epochs-csv", default="epochs.csv")
    _add_sampling_args(p)
    _add_detector_args(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("analyze-loss", parents=[common], help="label a loss log with training pathologies")
    _add_loss_log_args(p)
    p.add_argument("--include-head", action="store_true",
                   help="also classify the partial windows before the first full one")
    p.add_argument("--min-segment", type=int, default=1,
                   help="absorb segments shorter than this many epochs into the previous one")
    _add_detector_args(p)
    p.set_defaults(func=cmd_analyze_loss)

    p = sub.add_parser("ms-ssim", parents=[common], help="mean MS-SSIM over random pairs of a directory")
    p.add_argument("--dir")
    _add_sampling_args(p)
    p.set_defaults(func=cmd_ms_ssim)

    p = sub.add_parser("fid", parents=[common], help="Fréchet distance between two image sets")
    p.add_argument("--a", help="first image directory")
    p.add_argument("--b", help="second image directory")
    p.add_argument("--a-features", metavar="CSV")
    p.add_argument("--b-features", metavar="CSV")
    _add_sampling_args(p)
    p.set_defaults(func=cmd_fid)

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic training run")
    p.add_argument("--scenario", default="healthy",
                   help="mode-collapse, non-convergence, instability, healthy, scripted, or a preset script "
                        "(dcgan, msggan, improving)")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--script", metavar="JSON", help="per-evaluation metric values for a scripted run")
    p.add_argument("--images", action="store_true", help="also write snapshot, train and test images")
    p.add_argument("--n-images", type=int, default=100, help="images per snapshot")
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-test", type=int, default=100)
    p.add_argument("--eval-interval", type=int, default=50)
    p.add_argument("--loss-format", choices=("jsonl", "csv"))
    shape = p.add_argument_group("scenario shape")
    shape.add_argument("--noise-sigma", type=float)
    for f in fields(Scenario):
        if f.type in ("float", float) and f.name != "noise_sigma":
            shape.add_argument("--" + f.name.replace("_", "-"), type=float)
    for band in ("osc", "g", "d"):
        shape.add_argument(f"--{band}-low", type=float)
        shape.add_argument(f"--{band}-high", type=float)
    _add_sampling_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="render a monitor report as text or plot CSV")
    p.add_argument("report", nargs="?", help="report.json written by 'monitor'")
    p.set_defaults(func=cmd_report)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv, args) -> argparse.Namespace:
    """Re-parse with values from ``--config`` as defaults, so flags still win."""
    values = read_config(args.config)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[args.command]
    dests = {a.dest for a in sub._actions}
    unknown = sorted(set(values) - dests)
    if unknown:
        log.warning("ignoring config keys not used by %s: %s", args.command, ", ".join(unknown))
    sub.set_defaults(**{k: v for k, v in values.items() if k in dests and k != "config"})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.config:
            args = _apply_config(parser, argv, args)
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        # every domain error type derives from ValueError
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
