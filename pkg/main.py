#!/usr/bin/env python3
"""
wgfm - Waveguide Factorization Imaging
Command-line entry point: synthesize data, image it, verify the numerics and
export the point-spread profile.
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

try:
    from colorama import init, Fore, Style
    init(autoreset=True)
except ImportError:
    # Fallback if colorama not installed
    class Fore:
        GREEN = YELLOW = RED = CYAN = BLUE = MAGENTA = WHITE = ""

    class Style:
        BRIGHT = RESET_ALL = ""

from config import settings
from config.schema import ConfigError, RunConfig, load_config
from wgfm import __version__
from wgfm.imaging import ImagingError
from wgfm.media import MediaError
from wgfm.mfop import OperatorError
from wgfm.stages import VerificationReport, run_command
from wgfm.synth import SynthesisError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUN = 3

BANNER = f"""{Fore.CYAN}{Style.BRIGHT}wgfm {__version__}{Style.RESET_ALL}{Fore.BLUE} - multi-frequency factorization imaging in waveguides{Style.RESET_ALL}"""

LEVEL_COLORS = {
    logging.DEBUG: Fore.BLUE,
    logging.INFO: Fore.GREEN,
    logging.WARNING: Fore.YELLOW,
    logging.ERROR: Fore.RED,
    logging.CRITICAL: Fore.RED,
}


class ColorFormatter(logging.Formatter):
    """'[logger] message' lines with the level colourised."""

    def format(self, record: logging.LogRecord) -> str:
        text = super().format(record)
        color = LEVEL_COLORS.get(record.levelno, "")
        return f"{color}{text}{Style.RESET_ALL}" if color else text


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(ColorFormatter("[%(name)s] %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


def resolve_out_dir(cfg: RunConfig, out: Optional[str]) -> Path:
    if out:
        return Path(out)
    if cfg.outputs.directory:
        return Path(cfg.outputs.directory)
    return Path(settings.output_dir) / cfg.name


def with_seed(cfg: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return cfg
    return cfg.model_copy(update={"noise": cfg.noise.model_copy(update={"seed": seed})})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="wgfm - single-mode multi-frequency factorization imaging in waveguides",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synthesize --config presets/case1.json
  python main.py image --config presets/case1.json
  python main.py verify --config presets/case1.json
  python main.py psf --config presets/psf_dirichlet.json --out runs/psf
        """
    )
    parser.add_argument("--log-level", default=settings.log_level, help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("synthesize", "Write the lattice data set(s) of a run"),
        ("image", "Assemble the operator and write FM/FBSM images and metrics"),
        ("verify", "Run the numerical checks and write a verification report"),
        ("psf", "Write the normalized point-spread profile"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="Run configuration (JSON)")
        cmd.add_argument("--out", default=None, help="Output directory (default: from config)")
        cmd.add_argument("--seed", type=int, default=None, help="Override the noise seed")
        if name == "image":
            cmd.add_argument(
                "--data", nargs="+", default=None,
                help="Data set file(s): left [right], or the block file",
            )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    print(BANNER)

    try:
        cfg = with_seed(load_config(args.config), args.seed)
    except ConfigError as e:
        print(f"{Fore.RED}Config error: {e}{Style.RESET_ALL}")
        return EXIT_CONFIG

    out_dir = resolve_out_dir(cfg, args.out)
    data = [Path(p) for p in args.data] if getattr(args, "data", None) else None

    try:
        result = asyncio.run(run_command(args.command, cfg, out_dir, data))
    except (SynthesisError, OperatorError, ImagingError, MediaError, ValueError) as e:
        print(f"{Fore.RED}Error: {e}{Style.RESET_ALL}")
        return EXIT_RUN
    except KeyboardInterrupt:
        print(f"\n{Fore.CYAN}Interrupted{Style.RESET_ALL}")
        return EXIT_RUN

    if isinstance(result, VerificationReport):
        if not result.passed:
            failed = ", ".join(c.name for c in result.checks if not c.passed)
            print(f"{Fore.RED}Verification failed: {failed}{Style.RESET_ALL}")
            return EXIT_CHECK_FAILED
        print(f"{Fore.GREEN}All {len(result.checks)} checks passed{Style.RESET_ALL}")
    else:
        print(f"{Fore.GREEN}{args.command} finished; outputs in {out_dir}{Style.RESET_ALL}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
