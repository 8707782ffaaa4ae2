"""Command-line entry point.

Every subcommand writes ``report.json`` to the output directory, also on
failure. Exit codes: 0 success, 1 verification failure or infeasible
construction, 2 configuration or dimension error, 3 numeric divergence.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, load_config
from .exceptions import (ConfigError, DimensionError, DissimError,
                         DivergenceError, DomainError, InfeasibleError,
                         RankError)
from . import workflows as wf

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

_EXAMPLE_NOTE = (
    "The bundled examples drive the abstract network with a fixed input "
    "signal read from the project file; synthesis of an abstract "
    "controller for a temporal-logic specification is not part of this "
    "package.")

_COMMANDS = {
    "simulate": "simulate one sample path of a system or closed network",
    "verify-cert": "check certificates: structural assumption, matching "
                   "equations, sampled dissipation",
    "verify-net": "check the interconnection inequality and the coupling "
                  "matching condition",
    "abstract": "build abstractions and completed certificates from P",
    "compose": "write the composed concrete and abstract networks",
    "bound": "write the moment error bound curve",
    "mc-validate": "Monte Carlo estimate of the output error against the "
                   "bound",
    "example1": "full pipeline on the bundled consensus network. "
                + _EXAMPLE_NOTE,
    "example2": "full pipeline on the bundled oscillator ring. "
                + _EXAMPLE_NOTE,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dissim",
        description="Compositional abstraction of jump-diffusion networks "
                    "with dissipativity certificates.",
        epilog=_EXAMPLE_NOTE)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")
    for name, text in _COMMANDS.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", type=Path,
                       required=not name.startswith("example"),
                       help="project JSON file"
                            + (" (default: the bundled one)"
                               if name.startswith("example") else ""))
        p.add_argument("--target", action="append",
                       help="certificate, network or system name; repeat "
                            "for several (default: all, or the first "
                            "network)")
        p.add_argument("--seed", type=int, help="base seed (unsigned)")
        p.add_argument("--trials", type=int, help="Monte Carlo trials")
        p.add_argument("--dt", type=float, help="time step")
        p.add_argument("--horizon", type=float, help="final time")
        p.add_argument("--tol", type=float,
                       help="tolerance of the matching equations")
        p.add_argument("--out", type=Path, default=Path("dissim_out"),
                       help="output directory (default: %(default)s)")
        p.add_argument("--shared-noise", action="store_true",
                       help="diagnostic: drive both networks with the "
                            "same noise")
    return parser


def _write_csv(path, header, columns):
    table = np.column_stack(columns)
    np.savetxt(path, table, fmt="%.17g", delimiter=",",
               header=",".join(header), comments="")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return str(obj)


def _network_targets(cfg, args):
    names = args.target or list(cfg.networks)[:1]
    if not names:
        raise ConfigError("project has no networks", "/networks")
    for n in names:
        if n not in cfg.networks:
            raise ConfigError(f"unknown network {n!r}", "/networks")
    return names


def _check_flags(args):
    for key in ("trials", "dt", "horizon", "tol"):
        val = getattr(args, key)
        if val is not None and not val > 0:
            raise ConfigError(f"--{key} must be positive")
    if args.seed is not None and args.seed < 0:
        raise ConfigError("--seed must be non-negative")


def _print_certs(report):
    for name, entry in report.items():
        a = entry["assumption"]
        print(f"{name}: dissipation LMI margin {a['lmi']['margin']:.6g}, "
              f"D2^T X D2 margin {a['d2xd2']['margin']:.6g}, "
              f"D = Z W residual {a['dzw']['residual']:.3g}")
        if "structural" in entry:
            for eq, res in entry["structural"]["equations"].items():
                print(f"{name}:   {eq} residual {res['residual']:.3g}")
            print(f"{name}:   sampled dissipation worst slack "
                  f"{entry['dissipation']['worst_slack']:.6g}")
        print(f"{name}: {'PASS' if entry['passed'] else 'FAIL'}")


def _print_nets(report):
    for name, entry in report.items():
        lmi = entry["interconnection_lmi"]
        print(f"{name}: interconnection matrix largest eigenvalue "
              f"{lmi['margin']:.6g}")
        print(f"{name}: ||W M H - What Mhat||_F "
              f"{entry['matching']['residual']:.3g}")
        print(f"{name}: {'PASS' if entry['passed'] else 'FAIL'}")


# --------------------------------------------------------------------------
# subcommands; each returns (report, ok)

def cmd_verify_cert(cfg, args):
    report, ok = wf.verify_certificates(
        cfg, args.target, args.tol,
        seed=cfg.run["seed"] if args.seed is None else args.seed)
    _print_certs(report)
    return {"certificates": report}, ok


def cmd_verify_net(cfg, args):
    report, ok = wf.verify_networks(cfg, args.target, args.tol)
    _print_nets(report)
    return {"networks": report}, ok


def cmd_abstract(cfg, args):
    report, ok, doc = wf.abstract_all(cfg, args.target, args.tol)
    path = args.out / "abstraction.json"
    dump_config(doc, path)
    for name, entry in report.items():
        print(f"{name}: {'feasible' if entry['feasible'] else 'infeasible'}")
    return {"abstractions": report, "artifacts": [str(path)]}, ok


def cmd_compose(cfg, args):
    report, ok, doc = wf.compose_networks(cfg, args.target, args.tol)
    path = args.out / "composed.json"
    dump_config(doc, path)
    return {"composed": report, "artifacts": [str(path)]}, ok


def cmd_bound(cfg, args):
    out, arts = {}, []
    for name in _network_targets(cfg, args):
        times, bound, rep = wf.bound_curve(
            cfg, name, args.dt, args.horizon, args.trials, args.seed,
            args.tol)
        path = args.out / f"bound_{name}.csv"
        _write_csv(path, ["t", "bound"], [times, bound])
        print(f"{name}: bound {bound[0]:.6g} at t=0, {bound[-1]:.6g} at "
              f"t={times[-1]:g}, asymptote {rep['bound']['asymptote']:.6g}")
        out[name] = rep
        arts.append(str(path))
    return {"bounds": out, "artifacts": arts}, True


def cmd_mc_validate(cfg, args):
    out, arts, ok = {}, [], True
    for name in _network_targets(cfg, args):
        res, rep = wf.mc_validate(cfg, name, args.trials, args.seed, args.dt,
                                  args.horizon, args.shared_noise, args.tol)
        path = args.out / f"mc_{name}.csv"
        res.to_csv(path)
        print(f"{name}: {res.trials} trials, {int(res.violations.sum())} "
              f"grid points with mean - 3 se above the bound: "
              f"{'PASS' if res.passed else 'FAIL'}")
        out[name] = rep
        arts.append(str(path))
        ok = ok and res.passed
    return {"monte_carlo": out, "artifacts": arts}, ok


def cmd_simulate(cfg, args):
    names = args.target or (list(cfg.networks)[:1] or list(cfg.systems)[:1])
    if not names:
        raise ConfigError("project has nothing to simulate")
    out, arts = {}, []
    for name in names:
        traj = wf.simulate_target(cfg, name, args.dt, args.horizon, args.seed)
        n = traj.states.shape[1]
        path = args.out / f"simulate_{name}.csv"
        _write_csv(path, ["t"] + [f"x{i}" for i in range(n)],
                   [traj.times, traj.states])
        out[name] = {"steps": int(traj.times.size - 1),
                     "final_state": traj.states[-1].tolist(),
                     "jumps": traj.jump_counts[-1].tolist()}
        arts.append(str(path))
    return {"simulations": out, "artifacts": arts}, True


def cmd_example(cfg, args):
    report, ok = {}, True
    for key, func in (("verify-cert", cmd_verify_cert),
                      ("verify-net", cmd_verify_net),
                      ("bound", cmd_bound),
                      ("mc-validate", cmd_mc_validate)):
        sub = argparse.Namespace(**vars(args))
        if key in ("verify-cert", "verify-net"):
            sub.target = None
        print(f"== {key}")
        rep, passed = func(cfg, sub)
        report[key] = {**rep, "passed": bool(passed)}
        ok = ok and passed
    return report, ok


_HANDLERS = {"simulate": cmd_simulate, "verify-cert": cmd_verify_cert,
             "verify-net": cmd_verify_net, "abstract": cmd_abstract,
             "compose": cmd_compose, "bound": cmd_bound,
             "mc-validate": cmd_mc_validate, "example1": cmd_example,
             "example2": cmd_example}


def run_subcommand(name, args):
    """Run one subcommand and write its report; returns the exit code."""
    report = {"command": name, "version": __version__}
    code = EXIT_OK
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {args.out}: {exc.strerror}",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        _check_flags(args)
        if args.config is None:
            cfg = wf.load_example(name)
            report["config"] = f"bundled:{name}"
        else:
            cfg = load_config(args.config)
            report["config"] = str(args.config)
        result, ok = _HANDLERS[name](cfg, args)
        report.update(result)
        code = EXIT_OK if ok else EXIT_FAIL
    except (ConfigError, DimensionError) as exc:
        code = EXIT_CONFIG
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except DivergenceError as exc:
        code = EXIT_DIVERGED
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    except (InfeasibleError, RankError, DomainError, DissimError) as exc:
        code = EXIT_FAIL
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
    if "error" in report:
        print(f"error: {report['error']['message']}", file=sys.stderr)
    report["exit_code"] = code
    report["passed"] = code == EXIT_OK
    with open(args.out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, default=_json_default)
        fh.write("\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run_subcommand(args.command, args)


if __name__ == "__main__":
    sys.exit(main())
