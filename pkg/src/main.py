"""CLI entry point for the conformal OOD detector."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ValidationError

from .errors import DetectorError, FingerprintMismatch, MissingSeed, SchemaViolation
from .models import DataSource, RunConfig, load_config
from .pipeline import (
    run_calibrate,
    run_detect,
    run_evaluate,
    run_fdr_sweep,
    run_pvalue_hist,
    run_synth,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_IO = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conformal-ood",
        description="Conformal out-of-distribution detection with equivariance scores",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Path to a JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="Root seed (required unless set in the config)")
    common.add_argument("--out", default=None, help="Output directory (default: ./output)")
    common.add_argument("--n", type=int, default=None, help="Transforms per point")
    common.add_argument(
        "--epsilon", type=float, action="append", default=None,
        help="Detection threshold; repeat for several (default: 0.05 .. 0.5)",
    )
    common.add_argument(
        "--smoothed", action="store_true", default=None,
        help="Use tie-randomised p-values",
    )
    common.add_argument(
        "--scores", default=None,
        help="Score file with precomputed score vectors (replaces synthetic data)",
    )
    common.add_argument("--workers", type=int, default=None, help="Scoring threads")
    common.add_argument("--quiet", action="store_true", help="Suppress progress output")

    report = argparse.ArgumentParser(add_help=False)
    report.add_argument("--html", action="store_true", help="Also write an HTML report")
    report.add_argument(
        "--template", default=None,
        help="Path to custom HTML template (default: built-in template)",
    )

    synth = sub.add_parser("synth", parents=[common], help="Write synthetic points")
    synth.add_argument(
        "--with-scores", action="store_true",
        help="Also write the score vector of every point as a score file",
    )

    calibrate = sub.add_parser("calibrate", parents=[common], help="Build a calibration artifact")
    calibrate.add_argument("--artifact", default=None, help="Artifact output path")

    detect = sub.add_parser("detect", parents=[common], help="Flag test inputs as OOD")
    detect.add_argument("--artifact", default=None, help="Calibration artifact to read")
    detect.add_argument("--inputs", default=None, help="Feature file of points to test")
    detect.add_argument(
        "--allow-fingerprint-mismatch", action="store_true",
        help="Warn instead of failing when the artifact config differs",
    )

    sub.add_parser("evaluate", parents=[common, report], help="AUROC and TNR per n")
    sub.add_parser("fdr-sweep", parents=[common, report], help="False detection rate per epsilon")
    sub.add_parser("pvalue-hist", parents=[common, report], help="p-value uniformity check")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Load the config file and apply command-line overrides."""
    config = load_config(args.config)
    overrides: Dict[str, Any] = {
        "seed": args.seed,
        "out": args.out,
        "n": args.n,
        "epsilons": args.epsilon,
        "smoothed": args.smoothed,
        "workers": args.workers,
        "artifact": getattr(args, "artifact", None),
    }
    if args.scores is not None:
        data = config.data.model_dump()
        data.update(source=DataSource.SCORE_FILE, score_file=args.scores)
        overrides["data"] = data
    return config.with_overrides(overrides)


def _print_paths(paths) -> None:
    for path in paths:
        print(f"Wrote {path}")


def run_command(args: argparse.Namespace) -> int:
    config = config_from_args(args)

    def cli_progress(current: int, total: int, label: str) -> None:
        if not args.quiet:
            print(f"\r{label} ({current}/{total})", end="\n" if current == total else "", file=sys.stderr)

    def cli_warning(message: str) -> None:
        print(f"Warning: {message}", file=sys.stderr)

    if args.command == "synth":
        result = run_synth(config, with_scores=args.with_scores, on_progress=cli_progress)
        _print_paths(result.paths)

    elif args.command == "calibrate":
        result = run_calibrate(config, on_progress=cli_progress)
        print(f"Calibrated k = {result.artifact.k} scores at n = {result.artifact.n}")
        print(f"Fingerprint {result.artifact.config_fingerprint}")
        _print_paths([result.artifact_path])

    elif args.command == "detect":
        run = run_detect(
            config,
            artifact_path=Path(args.artifact) if args.artifact else None,
            inputs=Path(args.inputs) if args.inputs else None,
            allow_mismatch=args.allow_fingerprint_mismatch,
            on_progress=cli_progress,
            on_warning=cli_warning,
        )
        for e, eps in enumerate(run.epsilons):
            flagged = sum(1 for row in run.rows if row.flags[e])
            print(f"epsilon {eps}: {flagged}/{len(run.rows)} flagged as OOD")
        _print_paths([run.table_path])

    else:
        runner = {
            "evaluate": run_evaluate,
            "fdr-sweep": run_fdr_sweep,
            "pvalue-hist": run_pvalue_hist,
        }[args.command]
        result = runner(
            config, html=args.html, template_path=args.template, on_progress=cli_progress
        )
        for key, value in result.summary.items():
            print(f"{key}: {value}")
        _print_paths(result.paths)

    return EXIT_OK


def main(argv: Optional[list] = None) -> int:
    """Main CLI entry point."""
    args = build_parser().parse_args(argv)

    try:
        return run_command(args)

    except ValidationError as e:
        print("Error: Invalid configuration", file=sys.stderr)
        for error in e.errors():
            loc = ".".join(str(loc) for loc in error["loc"])
            print(f"  {loc}: {error['msg']}", file=sys.stderr)
        return EXIT_INPUT

    except MissingSeed as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT

    except FingerprintMismatch as e:
        print(f"Error: Calibration artifact does not match the configuration: {e}", file=sys.stderr)
        return EXIT_INPUT

    except SchemaViolation as e:
        print("Error: Input validation failed", file=sys.stderr)
        print(str(e), file=sys.stderr)
        return EXIT_INPUT

    except (FileNotFoundError, PermissionError, IsADirectoryError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO

    except (DetectorError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT

    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
