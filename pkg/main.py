# DFT Toolkit Entry Point

import argparse
import logging
import sys

from dotenv import load_dotenv


def check_requirements():
    """Check if basic requirements are met"""
    try:
        import matplotlib  # noqa: F401
        import numpy  # noqa: F401
        import psutil  # noqa: F401
        import scipy  # noqa: F401
        import tqdm  # noqa: F401
    except ImportError as e:
        print(f"Missing required package: {e}")
        print("Install with: pip install -r requirements.txt")
        return False
    return True


def configure_logging(level):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_parser():
    parser = argparse.ArgumentParser(description="DFT Toolkit - neural implicit samplers, baselines and KSD")
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_run_options(p):
        p.add_argument("config", nargs="?", help="flat key=value experiment file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        p.add_argument("--preset", choices=["desk", "paper"], help="named parameter preset")
        p.add_argument("--out", help="output directory")

    run_parser = sub.add_parser("run", help="run one experiment")
    add_run_options(run_parser)
    run_parser.add_argument("--seed", type=int, help="root seed")

    sweep_parser = sub.add_parser("sweep", help="run one experiment per seed")
    add_run_options(sweep_parser)
    sweep_parser.add_argument("--seeds", type=int, nargs="+", required=True, help="seeds to run")
    sweep_parser.add_argument("--workers", type=int, help="parallel runs (default: physical cores)")

    sub.add_parser("schema", help="print every config key with its default")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    load_dotenv()
    configure_logging(args.log_level)
    if not check_requirements():
        sys.exit(1)

    if args.subcommand == "schema":
        from core.config.experiment import describe_schema
        print(describe_schema())
        return 0

    from terminal.cli.cli import run, run_sweep, summarize

    try:
        if args.subcommand == "run":
            print(f"🚀 Running {args.config or 'default config'}...")
            code, manifest = run(args.config, args.overrides, args.preset, args.seed, args.out)
            if manifest is None:
                print("❌ Invalid configuration (see error.json)")
            elif code == 0:
                print(f"✅ {summarize(manifest)}")
            else:
                print(f"❌ {summarize(manifest)}")
            return code

        print(f"🚀 Sweeping {len(args.seeds)} seeds...")
        results = run_sweep(args.config, args.seeds, args.overrides, args.preset, args.out, args.workers)
        for seed, (code, manifest) in zip(args.seeds, results):
            mark = "✅" if code == 0 else "❌"
            print(f"{mark} seed {seed}: {summarize(manifest) if manifest else 'invalid configuration'}")
        return max(code for code, _ in results)
    except KeyboardInterrupt:
        print("\n👋 Interrupted")
        return 130


if __name__ == "__main__":
    sys.exit(main())
