"""Command-line entry point.

Subcommands cover the whole pipeline: `synth` writes a synthetic dataset,
`make-manifest` indexes an existing image/mask tree, `split` materializes a
patient-wise split, `run` executes a strategy grid into a records file,
`report` turns records into tables and plot data, `sample` renders prompt
overlays, and `protocol-check` validates an external adapter against the
shipped conformance transcripts.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on structured
failures (bad files, backend trouble), printed as `error: ...` on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bridge, dataset, report, runner, synth
from .errors import SegPromptError
from .rng import SeededRng
from .strategies import build_prompt, parse_strategy


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic blob dataset with a manifest")
    p.add_argument("--family", choices=synth.FAMILIES, required=True,
                   help="coarse: few large blobs; fine: many small fragments")
    p.add_argument("--count", type=int, required=True, help="number of patches")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--patches-per-patient", type=int, default=5)
    p.add_argument("--noise", type=int, default=0, help="additive intensity noise amplitude")
    p.set_defaults(func=_cmd_synth)


def _cmd_synth(args) -> int:
    cfg = synth.SynthConfig(
        family=args.family, count=args.count, seed=args.seed,
        width=args.width, height=args.height,
        patches_per_patient=args.patches_per_patient, noise=args.noise,
    )
    manifest = synth.generate_dataset(cfg, args.out)
    print(manifest)
    return 0


def _add_make_manifest(sub):
    p = sub.add_parser("make-manifest", help="index an image/mask directory tree")
    p.add_argument("--root", type=Path, required=True)
    p.add_argument("--style", choices=("flat", "nested"), required=True,
                   help="flat: root/images + root/masks with patient ids in file names; "
                        "nested: one directory per patient")
    p.add_argument("--labels", required=True,
                   help="label table, e.g. background=0,tumor=1,stroma=2")
    p.add_argument("--target", required=True,
                   help="comma-separated label names mapped to foreground")
    p.add_argument("--image-dir", default="images")
    p.add_argument("--mask-dir", default="masks")
    p.add_argument("--patient-pattern", default=r"^([^_]+)",
                   help="regex whose first group is the patient id (flat style)")
    p.add_argument("--out", type=Path, required=True, help="manifest path to write")
    p.set_defaults(func=_cmd_make_manifest)


def _cmd_make_manifest(args) -> int:
    label_set = dataset._parse_labels_line(args.labels, 0)
    targets = tuple(n.strip() for n in args.target.split(",") if n.strip())
    if args.style == "flat":
        rows = dataset.scan_flat_tree(args.root, args.image_dir, args.mask_dir,
                                      args.patient_pattern)
    else:
        rows = dataset.scan_nested_tree(args.root, args.image_dir, args.mask_dir)
    dataset.write_manifest_file(args.out, rows, label_set, targets)
    dataset.load_manifest(args.out)
    print(f"{args.out}: {len(rows)} patches")
    return 0


def _add_split(sub):
    p = sub.add_parser("split", help="write a patient-wise train/test split")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_split)


def _cmd_split(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    split = dataset.split_by_patient(manifest, args.train_fraction, args.seed)
    dataset.write_split(split, args.out)
    print(f"{args.out}: {len(split.train)} train, {len(split.test)} test")
    return 0


def _add_sample(sub):
    p = sub.add_parser("sample", help="render prompt overlay images for a strategy")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--strategy", required=True, help="canonical strategy string")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--patch", action="append", default=None,
                   help="patch id to render (repeatable; default: first --limit patches)")
    p.add_argument("--limit", type=int, default=8)
    p.add_argument("--draw", type=int, default=0, help="draw index for the random stream")
    p.set_defaults(func=_cmd_sample)


def _cmd_sample(args) -> int:
    manifest = dataset.load_manifest(args.manifest)
    spec = parse_strategy(args.strategy)
    strategy = spec.canonical()
    ids = args.patch if args.patch else manifest.patch_ids()[:args.limit]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for pid in ids:
        image, gt = dataset.load_patch(manifest, pid)
        rng = SeededRng(args.seed, "prompt", pid, strategy, str(args.draw))
        try:
            prompt = build_prompt(spec, gt, rng)
        except SegPromptError as exc:
            print(f"skipping {pid}: {exc}", file=sys.stderr)
            continue
        safe = pid.replace("/", "_")
        out = args.out_dir / f"{safe}_{strategy.replace(':', '_').replace(',', '_')}.png"
        report.render_overlay(image, prompt, gt, out)
        written += 1
    print(f"{written} overlay(s) in {args.out_dir}")
    return 0


def _add_run(sub):
    p = sub.add_parser("run", help="evaluate a strategy grid into a records file")
    p.add_argument("--config", type=Path, required=True, help="TOML experiment config")
    p.add_argument("--backend", default=None, help="override the configured backend spec")
    p.add_argument("--workers", type=int, default=None, help="override the worker count")
    p.add_argument("--out", type=Path, default=Path("records.csv"))
    p.add_argument("--side", choices=("test", "train", "all"), default="test",
                   help="which side of the patient split to evaluate")
    p.add_argument("--log", type=Path, default=None, help="also write the run log here")
    p.set_defaults(func=_cmd_run)


def _cmd_run(args) -> int:
    import dataclasses

    config = runner.load_config(args.config)
    overrides = {}
    if args.backend is not None:
        overrides["backend"] = args.backend
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides)
    records, log = runner.run_experiment(config, side=args.side)
    runner.write_records(records, args.out)
    if args.log is not None:
        args.log.write_text("\n".join(log.lines + [log.summary()]) + "\n")
    print(f"{args.out}: {log.summary()}")
    return 0


def _add_report(sub):
    p = sub.add_parser("report", help="summarize a records file")
    p.add_argument("--records", type=Path, required=True)
    p.add_argument("--format", choices=("md", "csv"), default=None,
                   help="print one table to stdout instead of writing files")
    p.add_argument("--out-dir", type=Path, default=None,
                   help="write summary.md, summary.csv, scatter.csv/svg, boxplot.svg here")
    p.add_argument("--effort", type=Path, default=None,
                   help="TOML file overriding the default effort scores")
    p.set_defaults(func=_cmd_report)


def _cmd_report(args) -> int:
    records = runner.read_records(args.records)
    rows = report.summarize(records)
    if args.format is not None:
        text = report.format_markdown(rows) if args.format == "md" else report.format_csv(rows)
        sys.stdout.write(text)
        if args.out_dir is None:
            return 0
    if args.out_dir is None and args.format is None:
        sys.stdout.write(report.format_markdown(rows))
        return 0
    effort = report.load_effort_map(args.effort) if args.effort else None
    points = report.scatter_data(rows, effort)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.md").write_text(report.format_markdown(rows))
    (out / "summary.csv").write_text(report.format_csv(rows))
    (out / "scatter.csv").write_text(report.format_scatter_csv(points))
    (out / "scatter.svg").write_text(report.render_scatter_svg(points))
    (out / "boxplot.svg").write_text(report.render_boxplot_svg(rows))
    print(f"report written to {out}")
    return 0


def _add_protocol_check(sub):
    p = sub.add_parser("protocol-check",
                       help="replay conformance transcripts against an adapter command")
    p.add_argument("--cmd", required=True, help="adapter command line")
    p.add_argument("--transcripts", type=Path, default=None,
                   help="directory of transcript files (default: shipped set)")
    p.add_argument("--timeout", type=float, default=10.0)
    p.set_defaults(func=_cmd_protocol_check)


def _cmd_protocol_check(args) -> int:
    if args.transcripts is not None:
        paths = sorted(args.transcripts.glob("*.txt"))
        if not paths:
            print(f"error: no transcripts under {args.transcripts}", file=sys.stderr)
            return 1
    else:
        paths = None
    results = bridge.protocol_check(args.cmd, paths, timeout_s=args.timeout)
    failed = 0
    for r in results:
        mark = "PASS" if r.ok else "FAIL"
        print(f"{mark} {r.name}" + ("" if r.ok else f": {r.detail}"))
        failed += 0 if r.ok else 1
    if failed:
        print(f"{failed} of {len(results)} transcript(s) failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} transcript(s) passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segprompt",
        description="Prompt synthesis and evaluation harness for promptable segmenters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_make_manifest(sub)
    _add_split(sub)
    _add_sample(sub)
    _add_run(sub)
    _add_report(sub)
    _add_protocol_check(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SegPromptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
