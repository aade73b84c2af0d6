# --- START OF FILE main.py ---

import argparse
import os
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

# --- app.py and config.py live at the repository root ---
_repo_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if _repo_root not in sys.path:
    sys.path.insert(0, _repo_root)

from app import create_app

from .commands import COMMANDS, EXIT_CONFIG, EXIT_RUNTIME
from .errors import ConfigError, TLLSizerError
from .formatter.formatter import get_formatter
from .run_config import load_run_config


def _point(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',')]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with run parameters; flags override its values.")
    p.add_argument("--output-dir", dest="output_dir", help="Directory for every artifact (default: TLL_OUTPUT_DIR or 'out').")
    p.add_argument("--format", choices=("markdown", "json"), help="Console report format.")
    p.add_argument("-o", "--output", help="Also write the rendered report to this file.")
    p.add_argument("--debug", action="store_true", help="Enable debug logging.")
    p.add_argument("--seed", type=int, help="Seed for every quasi-random sampler.")
    p.add_argument("--system", choices=("pendulum", "bounds"), help="Built-in pendulum or bound-only mode.")
    p.add_argument("--bounds-mode", dest="bounds_mode", choices=("interval", "sampled"),
                   help="How the pendulum bounds K_x, K_u, K_vf are obtained.")
    p.add_argument("--kcont", dest="k_cont", type=float, help="Lipschitz constant K_cont of the controller.")
    p.add_argument("--delta", type=float, help="Target simulation precision delta.")
    p.add_argument("--mu", type=float, help="Override mu instead of solving for it.")
    p.add_argument("--rounding", choices=("ceil", "floor", "round"), help="Rounding of the region bound N.")


def build_parser() -> argparse.ArgumentParser:
    arg_parser = argparse.ArgumentParser(
        prog="tll-sizer",
        description="Size, build and verify TLL/ReLU controllers that simulate a Lipschitz expert controller."
    )
    sub = arg_parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("size", help="Run the sizing chain mu -> (tau, eta) -> N -> architecture.")
    _add_common(p)

    p = sub.add_parser("reference-table", help="Recompute the published pendulum sizing table.")
    _add_common(p)
    p.add_argument("--table-rounding", dest="table_rounding", choices=("ceil", "floor", "round"),
                   help="Rounding of N for the table (default: floor).")
    p.add_argument("--bound-grid", dest="bound_grid", type=int, help="Grid points per axis for sampled bounds.")

    p = sub.add_parser("build", help="Sample the oracle on the grid and emit CPWA, TLL and ReLU artifacts.")
    _add_common(p)
    p.add_argument("--eta", type=float, help="Grid pitch; defaults to the sizing-chain eta.")
    p.add_argument("--eta-scale", dest="eta_scale", type=float, help="Multiply eta (negative control: 8).")
    p.add_argument("--rho", type=float, help="Plateau fraction in (0, 1).")
    p.add_argument("--oracle", choices=("expert", "grid_distance"), help="Controller sampled on the grid.")
    p.add_argument("--no-clamp", dest="clamp", action="store_false", default=None,
                   help="Reject points outside the domain instead of clamping them.")
    p.add_argument("--sup-samples", dest="sup_samples", type=int)
    p.add_argument("--equivalence-samples", dest="equivalence_samples", type=int)
    p.add_argument("--lattice-verify-samples", dest="lattice_verify_samples", type=int)

    p = sub.add_parser("simulate", help="Closed-loop RK4 trajectories under a controller artifact.")
    _add_common(p)
    p.add_argument("--artifact", help="grid_cpwa/tll/relu JSON, or 'expert' (default: <output-dir>/tll.json).")
    p.add_argument("--x0", action="append", type=_point, help="Initial state 'a,b'; repeatable.")
    p.add_argument("--horizon", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--hold", type=float, help="Zero-order hold period in seconds.")

    p = sub.add_parser("verify", help="Check the built grid CPWA against the sizing guarantees.")
    _add_common(p)
    p.add_argument("--artifact", help="grid_cpwa JSON (default: <output-dir>/grid_cpwa.json).")
    p.add_argument("--oracle", choices=("expert", "grid_distance"))
    p.add_argument("--sup-samples", dest="sup_samples", type=int)
    p.add_argument("--deviation-samples", dest="deviation_samples", type=int)
    p.add_argument("--invariance-samples", dest="invariance_samples", type=int)
    p.add_argument("--check-sim", dest="check_sim", action="store_true", default=None,
                   help="Also run the quantized simulation-relation check.")
    p.add_argument("--quantize-pitch", dest="quantize_pitch", type=float)
    p.add_argument("--strict-labels", dest="strict_labels", action="store_true", default=None)

    p = sub.add_parser("check-sim", help="Decide the simulation relation between two transition systems.")
    _add_common(p)
    p.add_argument("--s-file", dest="s_file", help="Transition system S (JSON).")
    p.add_argument("--t-file", dest="t_file", help="Transition system T (JSON).")
    p.add_argument("--strict-labels", dest="strict_labels", action="store_true", default=None)
    return arg_parser


_NOT_RUN_PARAMETERS = ('command', 'config', 'debug', 'output')


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if k not in _NOT_RUN_PARAMETERS and v is not None}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point. Returns the process exit code:
    0 ok, 1 a checked property failed, 2 configuration error, 3 runtime error.
    """
    args = build_parser().parse_args(argv)
    ctx = create_app(output_dir=args.output_dir, debug=args.debug)
    logger = ctx.logger

    # --- Configuration Phase ---
    settings = ctx.settings
    defaults = {'seed': settings.DEFAULT_SEED, 'sup_samples': settings.SUP_SAMPLES,
                'equivalence_samples': settings.EQUIVALENCE_SAMPLES, 'output_dir': ctx.output_dir}
    try:
        cfg = load_run_config(args.config, _overrides(args), defaults)
        cfg.validate()
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    if cfg.output_dir != ctx.output_dir:
        ctx = create_app(output_dir=cfg.output_dir, debug=args.debug)
        logger = ctx.logger

    # --- Command Phase ---
    start_time = time.time()
    try:
        code, report = COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as e:
        logger.debug("Configuration failure details", exc_info=True)
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (TLLSizerError, OSError) as e:
        logger.debug("Runtime failure details", exc_info=True)
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    logger.debug(f"{args.command} finished in {time.time() - start_time:.2f} seconds")

    # --- Output Result ---
    rendered = get_formatter(cfg.format, report).format_report()
    if args.output:
        try:
            with open(args.output, 'w', encoding='utf-8') as f:
                f.write(rendered)
            logger.info(f"Report written to {args.output}")
        except OSError as e:
            logger.error(f"Error writing report file: {e}")
            return EXIT_RUNTIME
    print(rendered, end='')
    return code


if __name__ == "__main__":
    sys.exit(main())
# --- END OF FILE main.py ---
