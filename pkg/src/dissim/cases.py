"""The two worked networks, built programmatically.

``consensus_network`` is a complete-graph consensus network of scalar
integrators with a shared Brownian motion, a shared Poisson jump and a
sine nonlinearity on each group sum, abstracted to one scalar state per
group.

``oscillator_ring`` is a ring of damped second-order oscillator groups
coupled through positions, abstracted to one oscillator per group, with
a dynamic supply rate.
"""

from dataclasses import dataclass, field

import numpy as np

from .abstraction import build_abstraction, discrepancies
from .hybrid_model import (AuxiliarySystem, InputSignal, JumpDiffusionSystem,
                           Nonlinearity)
from .network import Interconnection, solve_abstract_coupling
from .storage import StorageCertificate, gain_summary
from .validation import block_diag

__all__ = ["Case", "consensus_network", "oscillator_ring", "laplacian",
           "case_document"]


@dataclass
class Case:
    """A fully assembled network with its inputs and reference data."""

    net: Interconnection
    uhat: InputSignal
    xhat0: np.ndarray
    x0: np.ndarray
    x0_spread: float
    projections: list
    builds: list
    reference: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def discrepancy_report(self):
        """Differences between the built abstractions and the reference
        tuples, plus any recorded parameter differences."""
        out = {"abstraction": [discrepancies(b.abs_sys,
                                             self.reference["abstraction"])
                               for b in self.builds]}
        out.update(self.reference.get("parameters", {}))
        return out


def laplacian(n):
    """Laplacian ``n I - 1 1^T`` of the complete graph on ``n`` nodes."""
    return n * np.eye(n) - np.ones((n, n))


def _ones(k):
    return np.ones((k, 1))


def consensus_network(sizes=(3, 3, 3), tau=0.2, varpi=0.4, lam=1.0,
                      chi=10.0, eps=0.1, uhat=None, xhat0=None,
                      x0_spread=0.1):
    """Consensus network with ``sum(sizes)`` nodes in ``len(sizes)`` groups.

    ``eps`` scales the incremental multiplier ``eps * diag(1, -1)`` of the
    sine nonlinearity; the certificate needs ``eps * max(sizes)`` below
    ``2 chi - kappa_hat``.
    """
    sizes = tuple(int(s) for s in sizes)
    n = sum(sizes)
    kappa_hat = 2 * chi - 2 * lam * tau - varpi ** 2 - lam * tau ** 2
    phi = Nonlinearity.sine(1, eps * np.diag([1.0, -1.0]))
    offsets = np.cumsum((0,) + sizes)
    # each group measures one node: the first, the middle, the last
    picks = [0, n // 2, n - 1]
    subs, certs, builds, Ps = [], [], [], []
    for i, ni in enumerate(sizes):
        I = np.eye(ni)
        one = np.ones(ni)
        C1 = np.zeros(ni)
        pick = picks[i] if i < len(picks) else offsets[i]
        C1[min(max(pick - offsets[i], 0), ni - 1)] = 1.0
        sys = JumpDiffusionSystem(
            A=np.zeros((ni, ni)), B=I, C1=C1, C2=I, D=I, E=_ones(ni),
            F=one, G=varpi * one, R=[tau * one], lam=[lam], phi=phi)
        cert = StorageCertificate(
            Mhat=I, K=-chi * I, X=np.block([[0 * I, I], [I, 0 * I]]),
            L1=-_ones(ni), Z=I, W=I, aux=AuxiliarySystem.static(ni, ni),
            kappa_hat=kappa_hat, kappa_bar=0.0)
        P = _ones(ni)
        res = build_abstraction(sys, cert, P)
        subs.append(sys)
        certs.append(res.cert)
        builds.append(res)
        Ps.append(P)
    M = -laplacian(n)
    W = block_diag(*(c.W for c in certs))
    H = block_diag(*(c.H for c in certs))
    What = block_diag(*(c.What for c in certs))
    Mhat = solve_abstract_coupling(W, M, H, What).factor
    net = Interconnection(subs, [b.abs_sys for b in builds], certs, M, Mhat)
    N = len(sizes)
    if uhat is None:
        uhat = InputSignal.table(
            [0.0, 1.0, 2.0, 3.0, 4.0],
            [[0.5, -0.5, 0.2], [-0.3, 0.4, 0.0], [0.0, 0.0, 0.6],
             [0.2, -0.2, -0.4], [0.0, 0.0, 0.0]] if N == 3 else
            np.zeros((5, N)))
    xhat0 = np.linspace(-1.0, 1.0, N) if xhat0 is None else \
        np.asarray(xhat0, dtype=float)
    x0 = block_diag(*Ps) @ xhat0
    reference = {
        "abstraction": {"A": [[0.0]], "B": [[1.0]], "C2": [[1.0]],
                        "D": [[1.0]], "E": [[1.0]], "F": [[1.0]]},
        "parameters": {
            "L2": {"built": [c.L2.ravel().tolist() for c in certs],
                   "reference": [[1.0] * ni for ni in sizes]},
            "c": {"built_c_tilde": [gain_summary(s, b.abs_sys, b.cert).c_tilde
                                    for s, b in zip(subs, builds)],
                  "reference": tau ** 2 + varpi ** 2},
        },
    }
    params = {"tau": tau, "varpi": varpi, "lam": lam, "chi": chi,
              "eps": eps, "kappa_hat": kappa_hat, "sizes": list(sizes)}
    return Case(net, uhat, xhat0, x0, x0_spread, Ps, builds, reference,
                params)


def _ring_coupling(N):
    """``N x N`` circulant with ``-2`` on the diagonal and ``1`` on both
    cyclic neighbours."""
    C = -2.0 * np.eye(N)
    for i in range(N):
        C[i, (i + 1) % N] += 1.0
        C[i, (i - 1) % N] += 1.0
    return C


def oscillator_ring(N=3, ni=10, kappa_hat=0.1, kappa_bar=1.0, uhat=None,
                    xhat0=None, x0_spread=0.5, qtilde_scale=0.15):
    """Ring of ``N`` groups of ``ni`` damped oscillators.

    Group ``i`` has positions and velocities ``(p, v)`` in ``R^ni`` each,
    is forced on the velocities, and sends its positions to the
    neighbouring groups (coupling ``circulant(N) kron I_ni``).

    ``qtilde_scale`` sets ``Qtilde = qtilde_scale * I`` on the stacked
    auxiliary state; the interconnection inequality holds roughly for
    scales in ``[0.02, 0.3]`` and fails at 1.
    """
    I, O = np.eye(ni), np.zeros((ni, ni))
    e1 = np.zeros(ni)
    e1[0] = 1.0
    A = np.block([[O, I], [-I, -0.5 * I]])
    B = np.vstack([O, I])
    C1 = np.concatenate([np.zeros(ni), e1])
    C2 = np.hstack([I, O])
    aux = AuxiliarySystem(
        -5.0 * np.eye(2 * ni), np.block([[O, -4.14 * I], [O, 11.51 * I]]),
        0.1 * np.eye(2 * ni), np.block([[O, I], [O, I]]), ni)
    X = np.block([[9.47785 * I, -7.4055 * I], [-7.4055 * I, 1.6526 * I]])
    P = np.zeros((2 * ni, 2))
    P[:ni, 0] = 1.0
    P[ni:, 1] = 1.0
    subs, certs, builds = [], [], []
    for _ in range(N):
        sys = JumpDiffusionSystem(A, B, C1, C2, B)
        cert = StorageCertificate(
            Mhat=np.block([[2 * I, I], [I, I]]), K=np.hstack([-0.5 * I, O]),
            X=X, L1=np.zeros((ni, 0)), Z=B, W=I, aux=aux,
            kappa_hat=kappa_hat, kappa_bar=kappa_bar,
            Lambda=np.eye(2 * ni))
        res = build_abstraction(sys, cert, P, Bhat=[[0.0], [1.0]])
        subs.append(sys)
        certs.append(res.cert)
        builds.append(res)
    circ = _ring_coupling(N)
    M = np.kron(circ, I)
    W = block_diag(*(c.W for c in certs))
    H = block_diag(*(c.H for c in certs))
    What = block_diag(*(c.What for c in certs))
    Mhat = solve_abstract_coupling(W, M, H, What).factor
    net = Interconnection(subs, [b.abs_sys for b in builds], certs, M, Mhat,
                          Qtilde=qtilde_scale * np.eye(2 * ni * N))
    if uhat is None:
        uhat = InputSignal.closed_form(
            ["sin", {"name": "exp", "scale": 0.1},
             {"name": "ramp", "scale": -1.0}][:N] if N == 3 else
            [{"name": "sin"}] * N)
    xhat0 = np.tile([1.0, 0.0], N) if xhat0 is None else \
        np.asarray(xhat0, dtype=float)
    x0 = block_diag(*([P] * N)) @ xhat0
    reference = {
        "abstraction": {"A": [[0.0, 1.0], [-1.0, -0.5]], "B": [[0.0], [1.0]],
                        "C1": [[0.0, 1.0]], "C2": np.eye(2).tolist(),
                        "D": [[0.0], [1.0]]},
        "parameters": {
            "interface_sign": {"built": "u = +K e + Rtilde uhat",
                               "reference": "u = -K e + Rtilde uhat"},
        },
    }
    params = {"N": N, "ni": ni, "kappa_hat": kappa_hat,
              "kappa_bar": kappa_bar}
    return Case(net, uhat, xhat0, x0, x0_spread, [P] * N, builds, reference,
                params)


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


_BUILT_FIELDS = ("L2", "What", "Q", "H", "Rtilde")


def case_document(case, name, run=None, shared=False, bhat=None,
                  description=None):
    """Project document for a case: subsystems, seed certificates with
    ``P`` (the abstractions are rebuilt on load) and one network entry.

    With ``shared`` the subsystems are assumed identical and stored once.
    """
    from .config import certificate_to_dict, system_to_dict

    net = case.net
    systems, certs, sub_names, cert_names = {}, {}, [], []
    for i, (s, c) in enumerate(zip(net.subsystems, net.certs)):
        sname = "sub" if shared else f"sub{i + 1}"
        cname = "cert" if shared else f"cert{i + 1}"
        sub_names.append(sname)
        cert_names.append(cname)
        if sname in systems:
            continue
        systems[sname] = system_to_dict(s)
        seed = c.replace(**{f: None for f in _BUILT_FIELDS})
        d = certificate_to_dict(seed, system=sname)
        if bhat is not None:
            d["Bhat"] = np.asarray(bhat, dtype=float).tolist()
        certs[cname] = d
    entry = {"subsystems": sub_names, "certificates": cert_names,
             "M": net.M.tolist(), "uhat": _plain(case.uhat.to_dict()),
             "xhat0": case.xhat0.tolist(), "x0_spread": case.x0_spread}
    lt = sum(c.aux.l for c in net.certs)
    if lt:
        scale = float(net.Qtilde[0, 0])
        if np.allclose(net.Qtilde, scale * np.eye(lt)):
            entry["qtilde_scale"] = scale
        else:
            entry["Qtilde"] = net.Qtilde.tolist()
    if not np.allclose(net.mu, 1.0):
        entry["mu"] = net.mu.tolist()
    entry["reference"] = _plain(case.reference)
    doc = {}
    if description:
        doc["description"] = description
    doc.update(systems=systems, certificates=certs, networks={name: entry})
    if run:
        doc["run"] = dict(run)
    return doc
