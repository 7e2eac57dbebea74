"""Command line front end: ``tmsnet <subcommand> [flags]``.

Numeric flags take a single value, a comma list (``0.1,0.2,0.4``) or a
linear range ``start:stop:num``.  More than one value turns the parameter
into a grid axis.  A YAML/JSON ``--config`` file supplies defaults that the
flags override.

Exit codes: 0 success, 2 invalid input, 3 solver failure (including any
failed grid point), 4 resource guard.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings

import numpy as np

from .experiments.backends import ResourceGuardError
from .experiments.runners import run
from .experiments.spec import ExperimentSpec, SpecError
from .quantum_core import SolverError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_GUARD = 0, 2, 3, 4

SUBCOMMANDS = {
    "sweep": "fidelity_sweep",
    "contour": "contour",
    "delay": "delay_study",
    "rate": "pulsed_rate",
    "truncation": "truncation_study",
    "optimize": None,  # fidelity or rate, see --objective
    "spectra": "spectra_dump",
}
HELP = {
    "sweep": "fidelity, concurrence and EoF over a parameter grid",
    "contour": "fidelity over the (r_eff, mu_eff) plane with beta paths overlaid",
    "delay": "delayed steady state by regression tomography",
    "rate": "pulsed protocol: F, E_F and rate versus pulse length",
    "truncation": "convergence of the exact solution in the photon cutoff",
    "optimize": "optimal driving strength for fidelity or rate",
    "spectra": "amplifier output spectra",
}
# flag -> spec parameter name
PARAM_FLAGS = {"epsilon": "epsilon", "beta": "beta", "eta": "eta", "gamma_phi": "Gamma_phi",
               "delta1": "delta1", "delta2": "delta2", "tau": "tau"}


def parse_values(text: str, integer: bool = False) -> list:
    """``"0.3"``, ``"0.1,0.2"`` or ``"0.1:0.7:7"`` to a list of numbers."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise ValueError
            vals = np.linspace(start, stop, num).tolist()
        else:
            vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected a number, a comma list or start:stop:num, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty value list")
    if integer:
        if any(v != int(v) for v in vals):
            raise argparse.ArgumentTypeError("expected integers")
        return [int(v) for v in vals]
    return vals


def _ints(text):
    return parse_values(text, integer=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmsnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, help=HELP[name])
        sp.add_argument("--config", help="YAML or JSON experiment spec")
        for flag in PARAM_FLAGS:
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag, type=parse_values)
        sp.add_argument("--ntrunc", type=_ints, help="photon cutoff (a list for truncation)")
        sp.add_argument("--backend", action="append", choices=("exact", "fma", "markov"),
                        help="repeat for several backends")
        sp.add_argument("--out", help="output path stem; stdout when omitted")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--threads", type=int)
        sp.add_argument("--tol", type=float, help="optimizer / root tolerance (default 1e-3)")
        sp.add_argument("--max-rows", type=int, dest="max_rows",
                        help="resource guard: largest sector dimension allowed")
        sp.add_argument("--no-resume", action="store_true", help="ignore a partial log")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "contour":
            sp.add_argument("--r-eff", dest="r_eff", type=parse_values)
            sp.add_argument("--mu-eff", dest="mu_eff", type=parse_values)
            sp.add_argument("--beta-paths", dest="beta_paths", type=parse_values)
        if name == "rate":
            sp.add_argument("--T", dest="T", type=parse_values, help="pulse lengths gamma T")
        if name == "spectra":
            sp.add_argument("--omega", type=parse_values)
        if name == "delay":
            sp.add_argument("--entanglement-time", action="store_true",
                            help="also locate the delay where the concurrence vanishes")
        if name == "optimize":
            sp.add_argument("--objective", choices=("fidelity", "rate"), default=None)
            sp.add_argument("--eps-range", dest="eps_range", type=parse_values,
                            help="coarse epsilon grid for the scan")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    data = ExperimentSpec.load(args.config) if args.config else {}
    kind = SUBCOMMANDS[args.command]
    if args.command == "optimize":
        objective = getattr(args, "objective", None)
        if objective is None:
            objective = {"optimize_rate": "rate"}.get(data.get("kind"), "fidelity")
        kind = "optimize_" + objective
    if data.get("kind") not in (None, kind):
        raise SpecError(f"config kind {data['kind']!r} does not match subcommand {args.command!r}")
    data["kind"] = kind
    params = dict(data.get("params") or {})
    grid = dict(data.get("grid") or {})

    def put(name, vals, force_axis=False):
        if vals is None:
            return
        if len(vals) == 1 and not force_axis:
            params[name] = vals[0]
            grid.pop(name, None)
        else:
            grid[name] = {"values": vals}
            params.pop(name, None)

    inner_axis = {"delay_study": "tau", "pulsed_rate": "T", "spectra_dump": "omega"}.get(kind)
    for flag, name in PARAM_FLAGS.items():
        put(name, getattr(args, flag), force_axis=(name == inner_axis))
    for extra in ("r_eff", "mu_eff", "T", "omega"):
        put(extra, getattr(args, extra, None), force_axis=True)
    trunc = dict(data.get("trunc") or {})
    if args.ntrunc is not None:
        if kind == "truncation_study":
            grid["n_trunc"] = {"values": args.ntrunc}
        elif len(args.ntrunc) == 1:
            trunc["n_trunc"] = args.ntrunc[0]
        else:
            raise SpecError("--ntrunc takes a list only for the truncation subcommand")
    options = dict(data.get("options") or {})
    if args.tol is not None:
        if not args.tol > 0:
            raise SpecError("--tol must be positive")
        options["tol"] = args.tol
    if getattr(args, "beta_paths", None) is not None:
        options["beta_paths"] = args.beta_paths
    if getattr(args, "entanglement_time", False):
        options["entanglement_time"] = True
    if getattr(args, "eps_range", None) is not None:
        e = args.eps_range
        if len(e) < 3:
            raise SpecError("--eps-range needs at least three points")
        options.update(eps_min=e[0], eps_max=e[-1], eps_points=len(e))
    output = dict(data.get("output") or {})
    if args.out is not None:
        output["path"] = args.out
    if args.format is not None:
        output["format"] = args.format
    limits = dict(data.get("limits") or {})
    if args.max_rows is not None:
        limits["max_sector_rows"] = args.max_rows
    data.update(params=params, grid=grid, trunc=trunc, options=options, output=output,
                limits=limits)
    if args.backend:
        data["backends"] = list(dict.fromkeys(args.backend))
    if args.threads is not None:
        data["threads"] = args.threads
    return ExperimentSpec.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for bad input already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        spec = spec_from_args(args)
    except (SpecError, ValueError, OSError) as exc:
        print(f"tmsnet: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = spec.output.get("path")
    fmt = spec.output.get("format", "csv")
    try:
        ds = run(spec, out=out, resume=not args.no_resume)
    except ResourceGuardError as exc:
        print(f"tmsnet: resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"tmsnet: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"tmsnet: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if out is None:
        ds.dump(sys.stdout, fmt)
    failed = ds.summary.get("failed_rows", 0)
    if failed:
        print(f"tmsnet: {failed} grid point(s) failed, see the status column", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
