"""Orchestration of the verification, abstraction and validation steps on a
:class:`~dissim.config.ProjectConfig`. Each function returns a
JSON-serializable report and an overall pass flag.
"""

from importlib import resources

import numpy as np

from .abstraction import build_abstraction
from .config import certificate_to_dict, load_config, system_to_dict
from .exceptions import ConfigError
from .hybrid_model import simulate
from .network import (Interconnection, check_interconnection_lmi,
                      check_matching_condition, compose, error_bound,
                      ErrorBound, initial_states, monte_carlo_error,
                      network_gains, solve_abstract_coupling)
from .storage import (check_assumption1, check_structural_equations,
                      dissipation_check, gain_summary)
from .validation import block_diag

__all__ = ["example_path", "load_example", "resolve_certificate",
           "resolve_network", "verify_certificates", "verify_networks",
           "abstract_all", "compose_networks", "bound_curve",
           "mc_validate", "simulate_target"]


def example_path(name):
    """Path of a bundled project file (``"example1"`` or ``"example2"``)."""
    return resources.files("dissim") / "data" / f"{name}.json"


def load_example(name):
    with resources.as_file(example_path(name)) as path:
        return load_config(path)


def _select(table, names, kind):
    if names is None:
        return list(table)
    missing = [n for n in names if n not in table]
    if missing:
        raise ConfigError(f"unknown {kind} {missing[0]!r}")
    return list(names)


def resolve_certificate(cfg, name, tol, system=None):
    """``(sys, abs_sys, cert, build)`` for a certificate entry. The
    abstraction is built from ``P`` when the entry does not name one."""
    meta = cfg.cert_meta[name]
    if system is None and meta["system"] is None:
        raise ConfigError("certificate does not name its system",
                          f"/certificates/{name}/system")
    sys = cfg.systems[meta["system"]] if system is None else system
    cert = cfg.certificates[name]
    if meta["abstraction"] is not None:
        return sys, cfg.systems[meta["abstraction"]], cert, None
    if cert.P is None:
        return sys, None, cert, None
    res = build_abstraction(sys, cert, cert.P, Bhat=meta["Bhat"], tol=tol)
    return sys, res.abs_sys, res.cert, res


# --------------------------------------------------------------------------
# certificates

def verify_certificates(cfg, names=None, tol=None, seed=0):
    """Structural assumption, matching equations, gains and the sampled
    dissipation test for each certificate."""
    tol = cfg.run["tolerance"] if tol is None else tol
    report, ok = {}, True
    for name in _select(cfg.certificates, names, "certificate"):
        sys, abs_sys, cert, build = resolve_certificate(cfg, name, tol)
        entry = {"assumption": check_assumption1(sys, cert).to_dict()}
        passed = entry["assumption"]["passed"]
        if abs_sys is not None:
            st = check_structural_equations(sys, abs_sys, cert, tol)
            gains = gain_summary(sys, abs_sys, cert, cfg.run["pi"],
                                 cfg.run["pi_prime"])
            diss = dissipation_check(sys, abs_sys, cert, gains,
                                     samples=cfg.run["samples"],
                                     ranges=cfg.run["sample_range"],
                                     seed=seed)
            entry.update(structural=st.to_dict(), gains=gains.to_dict(),
                         dissipation=diss.to_dict(),
                         abstraction_built=build is not None)
            passed = passed and st.passed and diss.passed
        entry["passed"] = bool(passed)
        report[name] = entry
        ok = ok and passed
    return report, bool(ok)


def abstract_all(cfg, names=None, tol=None):
    """Build abstractions for certificates carrying ``P``; returns the
    report and a project document with the new systems and completed
    certificates."""
    tol = cfg.run["tolerance"] if tol is None else tol
    report, systems, certs = {}, {}, {}
    for name in _select(cfg.certificates, names, "certificate"):
        meta = cfg.cert_meta[name]
        cert = cfg.certificates[name]
        if cert.P is None or meta["system"] is None:
            continue
        sys = cfg.systems[meta["system"]]
        res = build_abstraction(sys, cert, cert.P, Bhat=meta["Bhat"], tol=tol)
        abs_name = f"{name}_abstraction"
        systems[abs_name] = system_to_dict(res.abs_sys)
        certs[name] = certificate_to_dict(res.cert, meta["system"], abs_name)
        report[name] = res.to_dict()
    doc = {"systems": {**{k: system_to_dict(v)
                          for k, v in cfg.systems.items()}, **systems},
           "certificates": certs}
    ok = all(r["feasible"] for r in report.values())
    return report, ok, doc


# --------------------------------------------------------------------------
# networks

def resolve_network(cfg, name, tol=None):
    """Assemble an :class:`Interconnection` from a network entry, building
    abstractions and solving ``Mhat`` when they are not given."""
    tol = cfg.run["tolerance"] if tol is None else tol
    spec = cfg.networks[name]
    subs = [cfg.systems[s] for s in spec.subsystems]
    certs, abss = [], []
    for i, cname in enumerate(spec.certificates):
        meta = cfg.cert_meta[cname]
        if meta["system"] is not None and meta["system"] != spec.subsystems[i]:
            raise ConfigError(
                f"certificate {cname!r} belongs to {meta['system']!r}",
                f"/networks/{name}/certificates/{i}")
        _, abs_sys, cert, _ = resolve_certificate(
            cfg, cname, tol, system=subs[i])
        if spec.abstractions is not None:
            abs_sys = cfg.systems[spec.abstractions[i]]
        if abs_sys is None:
            raise ConfigError("certificate has neither an abstraction nor P",
                              f"/certificates/{cname}")
        certs.append(cert)
        abss.append(abs_sys)
    Mhat = spec.Mhat
    coupling = None
    if Mhat is None:
        coupling = solve_abstract_coupling(
            block_diag(*(c.W for c in certs)), spec.M,
            block_diag(*(c.H for c in certs)),
            block_diag(*(c.What for c in certs)), tol)
        Mhat = coupling.factor
    Qt = spec.Qtilde
    if Qt is None and spec.qtilde_scale is not None:
        lt = sum(c.aux.l for c in certs)
        Qt = spec.qtilde_scale * np.eye(lt)
    net = Interconnection(subs, abss, certs, spec.M, Mhat, spec.mu, Qt,
                          names=list(spec.subsystems))
    return net, coupling


def _initial_conditions(cfg, name, net, trials, seed):
    spec = cfg.networks[name]
    nh = sum(a.n for a in net.abstractions)
    xhat0 = np.zeros(nh) if spec.xhat0 is None else spec.xhat0
    if xhat0.size != nh:
        raise ConfigError(f"xhat0 has {xhat0.size} entries, expected {nh}",
                          f"/networks/{name}/xhat0")
    P = block_diag(*(c.P for c in net.certs))
    x0 = P @ xhat0 if spec.x0 is None else spec.x0
    if x0.size != P.shape[0]:
        raise ConfigError(f"x0 has {x0.size} entries, expected {P.shape[0]}",
                          f"/networks/{name}/x0")
    return initial_states(x0, spec.x0_spread, trials, seed), xhat0


def verify_networks(cfg, names=None, tol=None):
    """Interconnection inequality and the coupling matching condition."""
    tol = cfg.run["tolerance"] if tol is None else tol
    report, ok = {}, True
    for name in _select(cfg.networks, names, "network"):
        net, coupling = resolve_network(cfg, name, tol)
        lmi = check_interconnection_lmi(net)
        match = check_matching_condition(net, tol=max(tol, 1e-10))
        entry = {"interconnection_lmi": lmi.to_dict(),
                 "matching": match.to_dict(),
                 "Mhat": net.Mhat.tolist(),
                 "passed": bool(lmi and match)}
        if coupling is not None:
            entry["Mhat_solve_residual"] = coupling.residual
        report[name] = entry
        ok = ok and entry["passed"]
    return report, bool(ok)


def compose_networks(cfg, names=None, tol=None):
    doc, report = {"systems": {}}, {}
    for name in _select(cfg.networks, names, "network"):
        net, _ = resolve_network(cfg, name, tol)
        concrete = compose(net.subsystems, net.M)
        abstract = compose(net.abstractions, net.Mhat)
        doc["systems"][f"{name}_concrete"] = system_to_dict(concrete)
        doc["systems"][f"{name}_abstract"] = system_to_dict(abstract)
        report[name] = {"concrete": repr(concrete), "abstract": repr(abstract)}
    return report, True, doc


def bound_curve(cfg, name, dt=None, horizon=None, trials=None, seed=None,
                tol=None):
    """Composite gains and the error-bound curve on the simulation grid."""
    from .hybrid_model import time_grid
    run = cfg.run
    dt = run["dt"] if dt is None else dt
    horizon = run["horizon"] if horizon is None else horizon
    trials = run["trials"] if trials is None else trials
    seed = run["seed"] if seed is None else seed
    net, _ = resolve_network(cfg, name, tol)
    spec = cfg.networks[name]
    per, gains = network_gains(net, run["pi"], run["pi_prime"])
    X0, xhat0 = _initial_conditions(cfg, name, net, trials, seed)
    P = block_diag(*(c.P for c in net.certs))
    E = X0 - xhat0 @ P.T
    Mstack = block_diag(*(mu * c.Mhat for mu, c in zip(net.mu, net.certs)))
    V0 = float(np.mean(np.einsum("bi,ij,bj->b", E, Mstack, E)))
    times = time_grid(horizon, dt)
    usq = spec.uhat.sup_sq_norm(times) if spec.uhat is not None else 0.0
    eb = ErrorBound.from_gains(gains, V0, usq)
    report = {"subsystem_gains": [g.to_dict() for g in per],
              "network_gains": gains.to_dict(), "bound": eb.to_dict()}
    return times, error_bound(eb, times), report


def mc_validate(cfg, name, trials=None, seed=None, dt=None, horizon=None,
                shared_noise=False, tol=None):
    run = cfg.run
    trials = run["trials"] if trials is None else trials
    seed = run["seed"] if seed is None else seed
    dt = run["dt"] if dt is None else dt
    horizon = run["horizon"] if horizon is None else horizon
    net, _ = resolve_network(cfg, name, tol)
    spec = cfg.networks[name]
    if spec.uhat is None:
        raise ConfigError("mc-validate needs an abstract input signal",
                          f"/networks/{name}/uhat")
    X0, xhat0 = _initial_conditions(cfg, name, net, trials, seed)
    res = monte_carlo_error(net, spec.uhat, X0, xhat0, horizon=horizon,
                            dt=dt, trials=trials, seed=seed,
                            shared_noise=shared_noise, pi=run["pi"],
                            pi_prime=run["pi_prime"])
    report = res.to_dict()
    report["shared_noise"] = bool(shared_noise)
    return res, report


def simulate_target(cfg, name, dt=None, horizon=None, seed=None):
    """One sample path of a system, or of a closed network with zero
    external input."""
    run = cfg.run
    dt = run["dt"] if dt is None else dt
    horizon = run["horizon"] if horizon is None else horizon
    seed = run["seed"] if seed is None else seed
    if name in cfg.systems:
        sys = cfg.systems[name]
        x0 = np.zeros(sys.n)
    elif name in cfg.networks:
        net, _ = resolve_network(cfg, name)
        sys = compose(net.subsystems, net.M)
        X0, _ = _initial_conditions(cfg, name, net, 1, seed)
        x0 = X0[0]
    else:
        raise ConfigError(f"unknown system or network {name!r}")
    u = run.get("u")
    if u is not None and u(0.0).shape != (sys.m,):
        u = None
    return simulate(sys, x0, u, None, horizon, dt, seed)
