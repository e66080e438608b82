"""Command-line entry point.

Subcommands: extract-actions, edit, augment, validate, render-preview.
Exit codes: 0 success, 1 processing/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .camera import save_rgb
from .config import PipelineConfig, load_config
from .dataset import validate_dataset, write_dataset
from .pipeline import DemoInvalid, augment_extrinsics, load_demo, process_demo
from .robot import load_chain


def _add_processing_args(sub: argparse.ArgumentParser, with_variants: bool = False):
    sub.add_argument("--config", required=True, help="pipeline config TOML")
    sub.add_argument(
        "--demo", required=True, action="append",
        help="input demo directory (repeatable)",
    )
    sub.add_argument("--out", help="override the configured output path")
    sub.add_argument("--edit-mode", choices=["inpaint", "mask", "none"],
                     help="override the configured edit mode")
    sub.add_argument("--seed", type=int, help="override the augmentation rng seed")
    if with_variants:
        sub.add_argument("--n-variants", type=int, help="override augmentation variant count")
        sub.add_argument("--max-shift-x", type=float, help="override max base shift (m)")


def _load_config_with_overrides(args) -> PipelineConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "out", None):
        updates["output_path"] = args.out
    if getattr(args, "edit_mode", None):
        from .compositor import EditMode

        updates["edit_mode"] = EditMode(args.edit_mode)
    aug_updates = {}
    if getattr(args, "seed", None) is not None:
        aug_updates["rng_seed"] = args.seed
    if getattr(args, "n_variants", None) is not None:
        aug_updates["n_variants"] = args.n_variants
    if getattr(args, "max_shift_x", None) is not None:
        aug_updates["max_shift_x"] = args.max_shift_x
    if aug_updates:
        updates["augmentation"] = dataclasses.replace(cfg.augmentation, **aug_updates)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _run_processing(args, mode: str) -> int:
    cfg = _load_config_with_overrides(args)
    if not cfg.chain_path:
        print("error: config has no robot.chain path", file=sys.stderr)
        return 2
    chain = load_chain(cfg.chain_path)
    results = {}
    camera = None
    for demo_dir in args.demo:
        demo = load_demo(demo_dir)
        camera = demo.intrinsics
        if mode == "augment":
            results[demo.demo_id] = augment_extrinsics(demo, cfg, chain=chain)
        elif mode == "edit":
            results[demo.demo_id] = [process_demo(demo, cfg, chain=chain)]
        else:  # extract-actions: no rendering, actions only
            results[demo.demo_id] = [
                process_demo(demo, cfg, chain=chain, render_images=False)
            ]
    out = write_dataset(
        results, cfg, chain, camera, cfg.output_path,
        with_images=(mode != "extract-actions"),
    )
    total = sum(
        sum(1 for s in var.samples if s.valid) for vs in results.values() for var in vs
    )
    print(f"wrote {out}: {len(results)} demo(s), {total} valid sample(s)")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hand2robot",
        description="Convert RGBD pinch-grasp hand demos into robot-overlay datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_processing_args(sub.add_parser(
        "extract-actions", help="extract actions only, no rendering"))
    _add_processing_args(sub.add_parser(
        "edit", help="full image+action pipeline, single variant"))
    _add_processing_args(sub.add_parser(
        "augment", help="process under randomized robot-base shifts"), with_variants=True)

    val = sub.add_parser("validate", help="check an emitted dataset")
    val.add_argument("dataset", help="dataset directory")
    val.add_argument("--json", action="store_true", help="print the report as JSON")

    prev = sub.add_parser("render-preview", help="render one frame's overlay to a PNG")
    prev.add_argument("--config", required=True)
    prev.add_argument("--demo", required=True)
    prev.add_argument("--frame", type=int, default=0)
    prev.add_argument("--out", required=True, help="output PNG path")

    args = parser.parse_args(argv)
    try:
        if args.command in ("extract-actions", "edit", "augment"):
            return _run_processing(args, args.command)
        if args.command == "validate":
            report = validate_dataset(args.dataset)
            if args.json:
                print(json.dumps(report.to_dict(), indent=1, sort_keys=True))
            else:
                for v in report.violations:
                    print(f"violation: {v}")
                for key, stats in sorted(report.demo_stats.items()):
                    print(
                        f"{key}: {stats['valid']}/{stats['frames']} valid, "
                        f"closed fraction {stats['closed_fraction']:.3f}"
                    )
                print("OK" if report.ok else f"FAILED: {len(report.violations)} violation(s)")
            return 0 if report.ok else 1
        if args.command == "render-preview":
            cfg = load_config(args.config)
            chain = load_chain(cfg.chain_path)
            demo = load_demo(args.demo)
            result = process_demo(demo, cfg, chain=chain)
            sample = next(
                (s for s in result.samples if s.provenance.frame_index == args.frame), None
            )
            if sample is None or not sample.valid or sample.image is None:
                print(f"error: frame {args.frame} produced no image", file=sys.stderr)
                return 1
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            save_rgb(sample.image, args.out)
            print(f"wrote {args.out}")
            return 0
    except (DemoInvalid, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
