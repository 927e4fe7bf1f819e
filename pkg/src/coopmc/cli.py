"""Command line entry point: ``coopmc run|tune|optimize|validate <spec.yaml>``."""
from __future__ import annotations

import argparse
import logging
import sys

from .experiments import SpecError, load_spec, run_experiment

log = logging.getLogger("coopmc")

EXIT_OK, EXIT_ERROR, EXIT_SPEC = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopmc", description="Cooperative MC detection experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "evaluate detectors over a sweep"),
                       ("tune", "search constant and RX thresholds"),
                       ("optimize", "optimize the RX molecule allocation"),
                       ("validate", "check a spec file without running it")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("spec", help="YAML experiment spec (or a manifest.json to re-run)")
        if name != "validate":
            sp.add_argument("--seed", type=int, default=None, help="override the base seed")
            sp.add_argument("--workers", type=int, default=1)
            sp.add_argument("--out-dir", default=None)
            sp.add_argument("--realizations", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        spec = load_spec(args.spec)
        if args.command == "validate":
            print(f"ok: {spec.name} ({len(spec.sweep_points())} points, {len(spec.variants)} variants)")
            return EXIT_OK
        if args.seed is not None:
            spec.seed = args.seed
            spec.raw["seed"] = args.seed
        if args.realizations is not None:
            if args.realizations < 1:
                raise SpecError("--realizations", "must be >= 1")
            spec.realizations = args.realizations
            spec.raw["realizations"] = args.realizations
        if args.workers < 1:
            raise SpecError("--workers", "must be >= 1")
        manifest = run_experiment(spec, args.out_dir, args.workers, mode=args.command)
        for name in manifest["files"]:
            print(name)
        return EXIT_OK
    except SpecError as e:
        print(f"spec error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SPEC
    except Exception as e:  # noqa: BLE001
        log.exception("run failed")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
