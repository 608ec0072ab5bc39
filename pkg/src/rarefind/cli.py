"""Command-line entry points.

``rarefind`` is the umbrella command; ``dataset`` and ``bench`` are also
installed as standalone commands with the same subcommands.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import bench as bench_mod
from . import synthetic
from .data import DatasetError, class_stats, load_dataset


def _add_dataset_commands(sub: argparse._SubParsersAction) -> None:
    validate = sub.add_parser("validate", help="check a manifest and its files")
    validate.add_argument("manifest", type=Path)
    validate.add_argument("--no-normalize", action="store_true",
                          help="skip row normalization during the check")
    validate.set_defaults(func=_cmd_validate)

    stats = sub.add_parser("stats", help="print class-frequency statistics as CSV")
    stats.add_argument("manifest", type=Path)
    stats.add_argument("--no-normalize", action="store_true")
    stats.set_defaults(func=_cmd_stats)


def _cmd_validate(args) -> int:
    try:
        dataset = load_dataset(args.manifest, normalize=not args.no_normalize)
    except DatasetError as exc:
        print(f"INVALID: {exc}", file=sys.stderr)
        return 1
    print(f"OK: {dataset.manifest.name}: {dataset.num_samples} samples, "
          f"dim {dataset.dim}, {dataset.num_classes} classes, "
          f"pool {dataset.pool_indices.size}, test {dataset.test_indices.size}")
    return 0


def _cmd_stats(args) -> int:
    dataset = load_dataset(args.manifest, normalize=not args.no_normalize)
    stats = class_stats(dataset)
    writer = csv.writer(sys.stdout)
    writer.writerow(["dataset", "min", "max", "mean", "median"])
    writer.writerow([dataset.manifest.name, stats.min_frequency,
                     stats.max_frequency, stats.mean_frequency,
                     stats.median_frequency])
    return 0


def _add_bench_commands(sub: argparse._SubParsersAction) -> None:
    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", type=Path, required=True)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--progress", action="store_true")
    run.set_defaults(func=_cmd_bench_run)

    synth = sub.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--spec", type=Path, required=True)
    synth.add_argument("--out", type=Path, required=True)
    synth.set_defaults(func=_cmd_bench_synth)

    export = sub.add_parser("export", help="convert a results table between formats")
    export.add_argument("--table", type=Path, required=True)
    export.add_argument("--format", choices=("csv", "jsonl"), required=True)
    export.add_argument("--out", type=Path, required=True)
    export.set_defaults(func=_cmd_bench_export)


def _cmd_bench_run(args) -> int:
    config = bench_mod.ExperimentConfig.from_json(args.config)
    table = bench_mod.run_experiment(config, workers=args.workers,
                                     progress=args.progress)
    out_dir = Path(config.output_dir)
    csv_path = bench_mod.export(table, "csv", out_dir / "results.csv")
    jsonl_path = bench_mod.export(table, "jsonl", out_dir / "results.jsonl")
    print(f"wrote {csv_path} and {jsonl_path} ({len(table)} rows)")
    return 0


def _cmd_bench_synth(args) -> int:
    spec = synthetic.SyntheticSpec.from_json(args.spec)
    dataset, manifest_path = synthetic.generate_synthetic(spec, args.out)
    print(f"wrote {manifest_path} ({dataset.num_samples} samples, "
          f"dim {dataset.dim}, {dataset.num_classes} classes)")
    return 0


def _cmd_bench_export(args) -> int:
    table = bench_mod.read_table(args.table)
    bench_mod.export(table, args.format, args.out)
    print(f"wrote {args.out} ({len(table)} rows)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, restore_sessions

    datasets = {}
    for manifest in args.manifest:
        dataset = load_dataset(manifest, normalize=not args.no_normalize)
        datasets[dataset.manifest.name] = dataset
    app = create_app(datasets, demo=args.demo,
                     event_log_path=args.event_log)
    if args.event_log and Path(args.event_log).is_file() and args.restore:
        restored = restore_sessions(app, args.event_log)
        print(f"restored {restored} events", file=sys.stderr)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _build_parser(prog: str, sections: tuple[str, ...]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=prog)
    sub = parser.add_subparsers(dest="command", required=True)
    if "dataset" in sections and prog != "dataset":
        dataset = sub.add_parser("dataset", help="dataset inspection")
        _add_dataset_commands(dataset.add_subparsers(dest="subcommand",
                                                     required=True))
    elif "dataset" in sections:
        _add_dataset_commands(sub)
    if "bench" in sections and prog != "bench":
        bench = sub.add_parser("bench", help="benchmark harness")
        _add_bench_commands(bench.add_subparsers(dest="subcommand",
                                                 required=True))
    elif "bench" in sections:
        _add_bench_commands(sub)
    if "serve" in sections:
        serve = sub.add_parser("serve", help="run the annotation service")
        serve.add_argument("--manifest", type=Path, action="append",
                           required=True, help="dataset manifest (repeatable)")
        serve.add_argument("--host", default="127.0.0.1")
        serve.add_argument("--port", type=int, default=8000)
        serve.add_argument("--demo", action="store_true",
                           help="oracle-backed auto-labeling for demos")
        serve.add_argument("--no-normalize", action="store_true")
        serve.add_argument("--event-log", type=Path, default=None)
        serve.add_argument("--restore", action="store_true",
                           help="replay an existing event log on startup")
        serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser("rarefind", ("dataset", "bench", "serve"))
    args = parser.parse_args(argv)
    return args.func(args)


def dataset_main(argv: list[str] | None = None) -> int:
    parser = _build_parser("dataset", ("dataset",))
    args = parser.parse_args(argv)
    return args.func(args)


def bench_main(argv: list[str] | None = None) -> int:
    parser = _build_parser("bench", ("bench",))
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
