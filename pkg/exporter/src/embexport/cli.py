"""CLI: export-real | export-anchors."""

from __future__ import annotations

import argparse
import sys

from .jobs import DEFAULT_PROMPT, ExportJob, export_anchors, export_real


def _job_from_args(args) -> ExportJob:
    classes = tuple(c for c in args.classes.split(",") if c) if args.classes else ()
    return ExportJob(
        image_root=args.images,
        out_dir=args.out,
        classes=classes,
        backbone=args.backbone,
        weights_path=args.weights,
        prompt_template=args.prompt_template,
        anchors_per_class=args.anchors,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="embexport",
        description="Embed labeled image folders (one subfolder per class) into EMB1/CSV files.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(g):
        g.add_argument("--images", required=True, help="root folder with one subfolder per class")
        g.add_argument("--out", required=True)
        g.add_argument("--classes", default=None, help="comma list; default: sorted subfolders")
        g.add_argument("--backbone", default="resnet18")
        g.add_argument("--weights", default=None, help="local state-dict file for the backbone")
        g.add_argument("--prompt-template", default=DEFAULT_PROMPT)
        g.add_argument("--anchors", type=int, default=100)
        g.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("export-real", help="embed the (possibly noisy-labeled) dataset")
    common(g)
    g.set_defaults(func=lambda a: export_real(_job_from_args(a)))

    g = sub.add_parser("export-anchors", help="embed pre-generated per-class anchor images")
    common(g)
    g.add_argument("--from-folder", default=None, help="folder of pre-generated images per class")
    g.set_defaults(func=lambda a: export_anchors(_job_from_args(a), a.from_folder))

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        info = args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {info['count']} embeddings (dim {info['dim']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
