"""Command-line surface for the feature-map exporter."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export_batch, export_feature_map, untrained_backbone


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vggexport",
        description="Export VGG convolutional feature maps as FMAP files.",
    )
    parser.add_argument("--manifest", help="dataset manifest (JSON array of entries)")
    parser.add_argument("--out", help="output directory for batch export")
    parser.add_argument("--patched-manifest", default=None,
                        help="where to write the manifest with featmap paths filled in")
    parser.add_argument("--image", help="single input image (instead of --manifest)")
    parser.add_argument("--out-file", help="single output FMAP path")
    parser.add_argument("--backbone", default="vgg16", choices=["vgg16", "vgg19"])
    parser.add_argument("--layer", default="conv5_3")
    parser.add_argument("--weights", default="auto",
                        help='"auto" (torchvision cache) or a state-dict path')
    parser.add_argument("--untrained-seed", type=int, default=None,
                        help="use a deterministically seeded UNTRAINED backbone "
                             "(format plumbing tests only; no semantics)")
    args = parser.parse_args(argv)

    model = None
    if args.untrained_seed is not None:
        model = untrained_backbone(args.backbone, seed=args.untrained_seed)

    try:
        if args.image:
            if not args.out_file:
                parser.error("--image requires --out-file")
            job = ExportJob(
                image_path=args.image,
                output_path=args.out_file,
                backbone=args.backbone,
                layer=args.layer,
                weights=args.weights,
            )
            export_feature_map(job, model=model)
            print(args.out_file)
            return 0

        if not (args.manifest and args.out):
            parser.error("either --image/--out-file or --manifest/--out is required")
        patched_path = args.patched_manifest or f"{args.manifest}.patched.json"
        patched, failures = export_batch(
            args.manifest,
            args.out,
            backbone=args.backbone,
            layer=args.layer,
            weights=args.weights,
            model=model,
            patched_manifest_path=patched_path,
        )
        print(f"exported {len(patched)} entries; patched manifest at {patched_path}")
        for failure in failures:
            print(f"error: {failure}", file=sys.stderr)
        return 1 if failures else 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
