import argparse
import logging
import sys

from .estimators import SUPPORTED_VARIANTS
from .export import DepthExportConfig, export_depth


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="depthexport",
        description="Convert a directory of PNG images into normalized "
                    "PFM depth maps using a monocular depth estimator")
    parser.add_argument("--input", required=True, help="directory of PNG images")
    parser.add_argument("--output", required=True, help="directory for PFM files")
    parser.add_argument("--variant", default="dark-channel",
                        choices=SUPPORTED_VARIANTS)
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--invert", dest="invert", action="store_true",
                       default=None,
                       help="force 1 - normalized output (inverse-depth estimators)")
    group.add_argument("--no-invert", dest="invert", action="store_false",
                       help="force direct normalized output")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    manifest = export_depth(DepthExportConfig(
        input_dir=args.input, output_dir=args.output,
        model_variant=args.variant, invert=args.invert, device=args.device))
    print(f"wrote {len(manifest['entries'])} depth maps to {args.output} "
          f"({len(manifest['failures'])} skipped)")
    return 0 if manifest["entries"] else 1


if __name__ == "__main__":
    sys.exit(main())
