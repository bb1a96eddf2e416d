# Command-line front end: register two PGM images, generate synthetic pairs, run the SO(3) demo,
# or run the invariant self-check. Everything a run produces is written to --out-dir.

import argparse
import os
import sys
import time
from datetime import datetime

import numpy as np
import pytz

from deformation import DiffeoPair, identity_pair
from errors import ConfigError, GridMismatch, ImageFormatError, InvalidField, RegistrationError
from field_io import load_image, read_displacement, read_pgm, render_deformation_grid, write_gfr, write_pgm
from flow_driver import descent_velocity, write_trace_csv
from flow_driver import run as run_flow
from logger import print_error, print_info, print_misc
from self_check import FAULTS, SIZES, injected_fault, report, run_battery
from settings import load_settings, write_manifest
from so3_toy import So3Inertia, so3_flow, write_so3_trace_csv
from synth import SYNTH_KINDS, make_pair
from torus_fields import TorusGrid

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FLOW_FAILED = 2


class CliParser(argparse.ArgumentParser):
    """Parse errors count as invalid input: logged and mapped to exit code 1."""

    def error(self, message):
        print_error(f"{self.prog}: {message}")
        self.exit(EXIT_INVALID)


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def vector3(text: str) -> np.ndarray:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text}")
    return np.array(parts)


def build_parser() -> CliParser:
    parser = CliParser(prog="main.py", description="Diffeomorphic image registration by gradient flow on the torus")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    register = commands.add_parser("register", help="Register a template PGM onto a target PGM")
    register.add_argument("template", nargs="?", help="Template PGM (or set 'template' in the config file)")
    register.add_argument("target", nargs="?", help="Target PGM (or set 'target' in the config file)")
    register.add_argument("--config", help="key=value file; a previous manifest works too")
    register.add_argument("--grid", type=int)
    register.add_argument("--side-length", dest="side_length", type=positive_float)
    register.add_argument("--alpha", type=positive_float)
    register.add_argument("--order-k", dest="order_k", type=int)
    register.add_argument("--sigma", type=float)
    register.add_argument("--dt", type=positive_float)
    register.add_argument("--dt-min", dest="dt_min", type=positive_float)
    register.add_argument("--max-steps", dest="max_steps", type=int)
    register.add_argument("--grad-tol", dest="grad_tol", type=positive_float)
    register.add_argument("--jac-floor", dest="jac_floor", type=positive_float)
    register.add_argument("--defect-bound", dest="defect_bound", type=positive_float)
    register.add_argument("--interp-order", dest="interp_order", type=int, choices=(1, 3))
    register.add_argument("--seed", type=int)
    register.add_argument("--out-dir", dest="out_dir")
    register.add_argument("--dump-fields", dest="dump_fields", action="store_true", default=None)
    register.add_argument("--init-phi", dest="init_phi", help="GFR1 phi displacement to start from")
    register.add_argument("--init-psi", dest="init_psi", help="GFR1 psi displacement to start from")

    synth = commands.add_parser("synth", help="Write a synthetic template/target PGM pair")
    synth.add_argument("kind", choices=SYNTH_KINDS)
    synth.add_argument("--grid", type=int, default=64)
    synth.add_argument("--side-length", dest="side_length", type=positive_float, default=1.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out-dir", dest="out_dir", default=os.getenv("DIFFEOFLOW_OUT_DIR", "out"))

    demo = commands.add_parser("so3-demo", help="Gradient flow on SO(3) moving x0 onto x1")
    demo.add_argument("--x0", type=vector3, default=np.array([1.0, 0.0, 0.0]))
    demo.add_argument("--x1", type=vector3, default=np.array([0.0, 1.0, 0.0]))
    demo.add_argument("--inertia", type=vector3, default=np.array([1.0, 1.0, 1.0]), help="Diagonal of A")
    demo.add_argument("--dt", type=positive_float, default=0.05)
    demo.add_argument("--steps", type=int, default=10_000)
    demo.add_argument("--tol", type=positive_float, default=1e-10)
    demo.add_argument("--out-dir", dest="out_dir", default=os.getenv("DIFFEOFLOW_OUT_DIR", "out"))

    check = commands.add_parser("self-check", help="Run the invariant battery and report PASS/FAIL")
    check.add_argument("--inject", choices=FAULTS, help="Break one kernel on purpose")
    check.add_argument("--sizes", type=int, nargs="+", default=list(SIZES))
    check.add_argument("--seed", type=int, default=0)
    return parser


def _initial_pair(settings, grid: TorusGrid) -> DiffeoPair:
    if not settings.init_phi and not settings.init_psi:
        return identity_pair(grid)
    if not (settings.init_phi and settings.init_psi):
        raise ConfigError("--init-phi and --init-psi must be given together")
    return DiffeoPair(grid, read_displacement(settings.init_phi, grid), read_displacement(settings.init_psi, grid))


def cmd_register(args) -> int:
    overrides = {key: getattr(args, key) for key in (
        "template", "target", "grid", "side_length", "alpha", "order_k", "sigma", "dt", "dt_min", "max_steps",
        "grad_tol", "jac_floor", "defect_bound", "interp_order", "seed", "out_dir", "dump_fields", "init_phi",
        "init_psi")}
    settings = load_settings(args.config, overrides)
    if not settings.template or not settings.target:
        raise ConfigError("register needs a template and a target image")

    template_shape = read_pgm(settings.template).shape
    target_shape = read_pgm(settings.target).shape
    if template_shape != target_shape:
        raise GridMismatch(f"Template is {template_shape[1]}x{template_shape[0]} but target is "
                           f"{target_shape[1]}x{target_shape[0]}")

    grid = settings.torus_grid()
    cfg = settings.flow_config()
    I0 = load_image(settings.template, grid)
    I1 = load_image(settings.target, grid)
    pair = _initial_pair(settings, grid)
    print_info(f"Registering {settings.template} onto {settings.target} on a {grid.n_points}^2 grid")

    started_at = datetime.now(pytz.utc)
    wall_start = time.perf_counter()
    result = run_flow(cfg, I0, I1, pair)
    wall_time = time.perf_counter() - wall_start

    os.makedirs(settings.out_dir, exist_ok=True)

    def out(name):
        return os.path.join(settings.out_dir, name)

    state = result.state
    write_pgm(out("warped.pgm"), state.image.values)
    write_pgm(out("grid.pgm"), render_deformation_grid(state.pair.phi_displacement, order=cfg.interp_order))
    write_trace_csv(result.trace, out("trace.csv"))
    write_gfr(out("phi.gfr"), state.pair.phi_displacement)
    write_gfr(out("psi.gfr"), state.pair.psi_displacement)
    if settings.dump_fields:
        _, breakdown = descent_velocity(cfg, state.image, I1, state.pair)
        write_gfr(out("force_j1.gfr"), breakdown.j1_term)
        write_gfr(out("force_j2.gfr"), breakdown.j2_term)
        write_gfr(out("force_total.gfr"), breakdown.total)
        write_gfr(out("image.gfr"), state.image)
        write_gfr(out("metric.gfr"), state.metric)

    write_manifest(out("manifest.txt"), settings, {
        "reason": result.reason,
        "message": result.message.replace("\n", " "),
        "steps": state.step,
        "grad_tol": result.grad_tol,
        "initial_energy": result.initial_energy,
        "energy": state.energy,
        "energy_match": state.energy_match,
        "energy_reg": state.energy_reg,
        "path_length_A": state.path_length_A,
        "started_at": started_at.isoformat(),
        "wall_time_s": round(wall_time, 3),
    })
    print_info(f"Wrote results to {settings.out_dir}")

    if result.failed:
        print_error(f"Registration failed ({result.reason}): {result.message}")
        return EXIT_FLOW_FAILED
    return EXIT_OK


def cmd_synth(args) -> int:
    grid = TorusGrid(2, args.grid, args.side_length)
    template, target = make_pair(args.kind, grid, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    write_pgm(os.path.join(args.out_dir, "template.pgm"), template.values)
    write_pgm(os.path.join(args.out_dir, "target.pgm"), target.values)
    print_info(f"Wrote {args.kind} pair (N={args.grid}, seed={args.seed}) to {args.out_dir}")
    return EXIT_OK


def cmd_so3_demo(args) -> int:
    result = so3_flow(args.x0, args.x1, So3Inertia.diagonal(args.inertia), dt=args.dt, steps=args.steps,
                      tol=args.tol)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "so3_trace.csv")
    write_so3_trace_csv(result.trace, path)
    print_misc(f"R* =\n{result.rotation.matrix}")
    print_info(f"SO(3) flow {result.reason} after {len(result.trace) - 1} steps, residual {result.residual:.3e}; "
               f"trace in {path}")
    return EXIT_OK


def cmd_self_check(args) -> int:
    if args.inject:
        print_misc(f"Injecting fault '{args.inject}'")
        with injected_fault(args.inject):
            passed = report(run_battery(args.sizes, args.seed))
    else:
        passed = report(run_battery(args.sizes, args.seed))
    return EXIT_OK if passed else EXIT_INVALID


COMMANDS = {
    "register": cmd_register,
    "synth": cmd_synth,
    "so3-demo": cmd_so3_demo,
    "self-check": cmd_self_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ImageFormatError, GridMismatch, InvalidField) as e:
        print_error(str(e))
        return EXIT_INVALID
    except RegistrationError as e:
        print_error(f"Flow failed: {e}")
        return EXIT_FLOW_FAILED


if __name__ == "__main__":
    sys.exit(main())
