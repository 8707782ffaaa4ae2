"""Quadratic stochastic storage functions

    V(x, xhat, theta) = (x - P xhat)^T Mhat (x - P xhat) + theta^T Lambda theta

between a concrete system and an abstraction: certificate checks,
the generator of ``V``, the interface map refining abstract inputs, and
the linear gains that feed the moment error bound.
"""

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionError, DomainError, RankError
from .hybrid_model import AuxiliarySystem, drift
from .matrix_analysis import (DEFAULT_TOL, FactorResult, SymVerdict,
                              check_nsd, check_pd, image_factor,
                              numerical_rank)
from .validation import as_matrix

__all__ = ["StorageCertificate", "GainSummary", "Assumption1Report",
           "StructuralReport", "DissipationReport", "JumpMatch",
           "check_assumption1", "assemble_dissipation_lmi",
           "check_structural_equations", "storage_value", "interface_input",
           "compute_rtilde", "generator_value", "supply_rate",
           "dissipation_check", "gain_summary", "choose_pi", "jump_matching"]

_MATRIX_FIELDS = ("Mhat", "K", "X", "L1", "L2", "Z", "W", "What", "Lambda",
                  "P", "Q", "H", "Rtilde")


@dataclass(frozen=True, eq=False)
class StorageCertificate:
    """Matrices and constants of a quadratic storage certificate.

    The fields ``L2``, ``What``, ``P``, ``Q``, ``H`` and ``Rtilde`` may be
    left as ``None`` in a seed certificate; the abstraction builder fills
    them in.
    """

    Mhat: np.ndarray
    K: np.ndarray
    X: np.ndarray
    L1: np.ndarray
    Z: np.ndarray
    aux: AuxiliarySystem
    kappa_hat: float
    kappa_bar: float
    Lambda: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    L2: Optional[np.ndarray] = None
    What: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    Rtilde: Optional[np.ndarray] = None
    notes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name in _MATRIX_FIELDS:
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float)
            if arr.ndim < 2:
                arr = as_matrix(arr, name)
            object.__setattr__(self, name, arr)
        if self.Lambda is None:
            object.__setattr__(self, "Lambda", np.zeros((0, 0)))
        if self.Lambda.shape != (self.aux.l, self.aux.l):
            raise DimensionError(
                f"Lambda has shape {self.Lambda.shape}, auxiliary state has "
                f"dimension {self.aux.l}", block="Lambda")
        if not check_pd(self.Mhat):
            raise DomainError("Mhat must be symmetric positive definite")
        if not check_pd(self.Lambda):
            raise DomainError("Lambda must be symmetric positive definite")
        if self.kappa_hat <= 0:
            raise DomainError("kappa_hat must be positive")
        if self.kappa_bar < 0 or (self.aux.l and self.kappa_bar == 0):
            raise DomainError("kappa_bar must be positive when the auxiliary "
                              "system has a state")
        if self.P is not None and numerical_rank(self.P) < self.P.shape[1]:
            raise RankError("P must have full column rank")

    def replace(self, **changes):
        return replace(self, **changes)

    @property
    def is_complete(self):
        return all(getattr(self, f) is not None
                   for f in ("L2", "What", "P", "Q", "H", "W"))

    @property
    def sqrt_Mhat(self):
        vals, vecs = sla.eigh(self.Mhat)
        return (vecs * np.sqrt(vals)) @ vecs.T

    def field_names(self):
        return [f.name for f in fields(self)]


@dataclass(frozen=True)
class GainSummary:
    """Linear gains of a storage or simulation function.

    ``alpha_slope`` bounds the output error by ``V``; ``kappa_tilde`` is the
    decay rate; ``psi_slope`` multiplies ``||uhat||^2``; the constant
    offset is ``c = c_tilde + c_prime``.
    """

    alpha_slope: float
    kappa_tilde: float
    psi_slope: float
    c_tilde: float
    c_prime: float
    pi: Optional[float] = None
    pi_prime: Optional[float] = None

    @property
    def c(self):
        return self.c_tilde + self.c_prime

    def to_dict(self):
        return {"alpha_slope": self.alpha_slope,
                "kappa_tilde": self.kappa_tilde, "psi_slope": self.psi_slope,
                "c_tilde": self.c_tilde, "c_prime": self.c_prime,
                "c": self.c, "pi": self.pi, "pi_prime": self.pi_prime}


# --------------------------------------------------------------------------
# dimension bookkeeping

def _require(arr, shape, name):
    if arr is None:
        raise DimensionError(f"{name} is required", block=name)
    if arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected "
                             f"{tuple(shape)}", block=name)


def _check_seed_dims(sys, cert):
    n, m, lk, q2 = sys.n, sys.m, sys.lk, sys.q2
    aux = cert.aux
    _require(cert.Mhat, (n, n), "Mhat")
    _require(cert.K, (m, n), "K")
    _require(cert.L1, (m, lk), "L1")
    if cert.Z.shape[0] != n:
        raise DimensionError(f"Z has {cert.Z.shape[0]} rows, expected {n}",
                             block="Z")
    pz = cert.Z.shape[1]
    if cert.W is not None:
        _require(cert.W, (pz, sys.p), "W")
    _require(cert.X, (aux.q, aux.q), "X")
    if aux.split != pz:
        raise DimensionError(f"auxiliary split {aux.split} must equal the "
                             f"column count of Z ({pz})", block="aux.split")
    if aux.Dtheta.shape[1] - aux.split != q2:
        raise DimensionError(
            f"B2/D2 have {aux.Dtheta.shape[1] - aux.split} columns, C2 has "
            f"{q2} rows", block="aux.D2")


def _check_abs_dims(sys, abs_sys, cert):
    n, nh = sys.n, abs_sys.n
    _require(cert.P, (n, nh), "P")
    _require(cert.Q, (sys.m, nh), "Q")
    if cert.L2 is not None:
        _require(cert.L2, (sys.m, abs_sys.lk), "L2")
    if cert.H is not None:
        _require(cert.H, (sys.q2, abs_sys.q2), "H")
    if cert.What is not None:
        _require(cert.What, (cert.Z.shape[1], abs_sys.p), "What")
    if abs_sys.q1 != sys.q1:
        raise DimensionError("abstraction must have the same external output "
                             "dimension", block="C1hat")


# --------------------------------------------------------------------------
# Assumption checks

@dataclass(frozen=True)
class Assumption1Report:
    """Outcome of the block LMI, ``D = Z W`` and ``D2^T X D2 <= 0``."""

    lmi: SymVerdict
    dzw: FactorResult
    d2xd2: SymVerdict
    block_margins: dict

    @property
    def passed(self):
        return bool(self.lmi and self.dzw and self.d2xd2)

    def to_dict(self):
        return {"passed": self.passed, "lmi": self.lmi.to_dict(),
                "dzw": self.dzw.to_dict(), "d2xd2": self.d2xd2.to_dict(),
                "block_margins": self.block_margins}


def assemble_dissipation_lmi(sys, cert):
    """Return ``(lhs, rhs, sizes)`` of the 4x4 block inequality over the
    stacked vector ``[x - P xhat; W w - What what; dphi; theta]``."""
    _check_seed_dims(sys, cert)
    aux = cert.aux
    Mh, Lam, X = cert.Mhat, cert.Lambda, cert.X
    B1, B2, D1, D2 = aux.B1, aux.B2, aux.D1, aux.D2
    Ct, At = aux.Ctheta, aux.Atheta
    C2, F = sys.C2, sys.F
    phi = sys.phi
    Acl = sys.A + sys.B @ cert.K
    Delta = Acl.T @ Mh + Mh @ Acl
    BLE = sys.B @ cert.L1 + sys.E
    n, pz, lk, lt = sys.n, cert.Z.shape[1], sys.lk, aux.l
    z = np.zeros

    lhs = np.block([
        [Delta, Mh @ cert.Z, Mh @ BLE, C2.T @ B2.T @ Lam],
        [cert.Z.T @ Mh, z((pz, pz)), z((pz, lk)), B1.T @ Lam],
        [BLE.T @ Mh, z((lk, pz)), z((lk, lk)), z((lk, lt))],
        [Lam @ B2 @ C2, Lam @ B1, z((lt, lk)), At.T @ Lam + Lam @ At],
    ])
    D2XD2 = D2.T @ X @ D2
    rhs = np.block([
        [-cert.kappa_hat * Mh + C2.T @ D2XD2 @ C2 - F.T @ phi.M11 @ F,
         C2.T @ D2.T @ X @ D1, -F.T @ phi.M12, C2.T @ D2.T @ X @ Ct],
        [D1.T @ X @ D2 @ C2, D1.T @ X @ D1, z((pz, lk)), D1.T @ X @ Ct],
        [-phi.M12.T @ F, z((lk, pz)), -phi.M22, z((lk, lt))],
        [Ct.T @ X @ D2 @ C2, Ct.T @ X @ D1, z((lt, lk)),
         Ct.T @ X @ Ct - cert.kappa_bar * Lam],
    ])
    return lhs, rhs, (n, pz, lk, lt)


def check_assumption1(sys, cert, tol=None):
    """Check the structural assumption on a (seed) certificate.

    Evaluates the block matrix inequality ``lhs <= rhs`` built from
    ``Delta = (A + B K)^T Mhat + Mhat (A + B K)``, the factorization
    ``D = Z W`` and ``D2^T X D2 <= 0``. Each verdict carries its margin;
    ``block_margins`` lists the largest eigenvalue of every diagonal block
    of ``lhs - rhs`` to localize failures.
    """
    lhs, rhs, sizes = assemble_dissipation_lmi(sys, cert)
    diff = lhs - rhs
    lmi = check_nsd(diff, tol)
    names = ("error", "internal_input", "nonlinearity", "theta")
    offsets = np.cumsum((0,) + sizes)
    block_margins = {}
    for name, a, b in zip(names, offsets[:-1], offsets[1:]):
        if b > a:
            block_margins[name] = check_nsd(diff[a:b, a:b], 0.0).margin
    if cert.W is None:
        dzw = image_factor(sys.D, cert.Z, DEFAULT_TOL if tol is None else tol)
    else:
        res = float(sla.norm(sys.D - cert.Z @ cert.W))
        t = DEFAULT_TOL if tol is None else tol
        dzw = FactorResult(cert.W, res,
                           bool(res <= t * (1 + sla.norm(sys.D))), t)
    D2 = cert.aux.D2
    d2xd2 = check_nsd(D2.T @ cert.X @ D2, tol)
    return Assumption1Report(lmi, dzw, d2xd2, block_margins)


@dataclass(frozen=True)
class StructuralReport:
    """Residuals of the six linear matching equations."""

    residuals: dict
    passed_each: dict
    tolerance: float

    @property
    def passed(self):
        return all(self.passed_each.values())

    def to_dict(self):
        return {"passed": self.passed, "tolerance": self.tolerance,
                "equations": {k: {"residual": self.residuals[k],
                                  "passed": self.passed_each[k]}
                              for k in self.residuals}}


STRUCTURAL_EQUATIONS = ("AP=PAhat-BQ", "C1P=C1hat", "C2P=HC2hat", "FP=Fhat",
                        "E=PEhat+B(L2-L1)", "PDhat=ZWhat")


def check_structural_equations(sys, abs_sys, cert, tol=DEFAULT_TOL):
    """Residuals (Frobenius) of the matching equations between ``sys`` and
    ``abs_sys``. An equation passes when its residual is at most
    ``tol * (1 + s)`` with ``s`` the largest norm among its terms."""
    _check_abs_dims(sys, abs_sys, cert)
    for name in ("L2", "H", "What"):
        if getattr(cert, name) is None:
            raise DimensionError(f"{name} is required", block=name)
    P = cert.P
    pairs = {
        "AP=PAhat-BQ": (sys.A @ P, P @ abs_sys.A - sys.B @ cert.Q),
        "C1P=C1hat": (sys.C1 @ P, abs_sys.C1),
        "C2P=HC2hat": (sys.C2 @ P, cert.H @ abs_sys.C2),
        "FP=Fhat": (sys.F @ P, abs_sys.F),
        "E=PEhat+B(L2-L1)": (sys.E, P @ abs_sys.E
                             + sys.B @ (cert.L2 - cert.L1)),
        "PDhat=ZWhat": (P @ abs_sys.D, cert.Z @ cert.What),
    }
    residuals, ok = {}, {}
    for name, (lhs, rhs) in pairs.items():
        if lhs.shape != rhs.shape:
            raise DimensionError(f"{name}: {lhs.shape} vs {rhs.shape}",
                                 block=name)
        res = float(sla.norm(lhs - rhs))
        scale = max(float(sla.norm(lhs)), float(sla.norm(rhs)))
        residuals[name] = res
        ok[name] = bool(res <= tol * (1.0 + scale))
    return StructuralReport(residuals, ok, tol)


# --------------------------------------------------------------------------
# storage function, interface and generator

def _rows(v, size, name):
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (size,):
        raise DimensionError(f"{name} has shape {v.shape}, expected trailing "
                             f"size {size}", block=name)
    return v


def storage_value(x, xhat, theta, cert):
    """``(x - P xhat)^T Mhat (x - P xhat) + theta^T Lambda theta``.

    Accepts single vectors or batches along a leading axis.
    """
    n, nh = cert.P.shape
    e = _rows(x, n, "x") - _rows(xhat, nh, "xhat") @ cert.P.T
    theta = _rows(theta, cert.aux.l, "theta")
    return (np.einsum("...i,ij,...j->...", e, cert.Mhat, e)
            + np.einsum("...i,ij,...j->...", theta, cert.Lambda, theta))


def interface_input(t, x, xhat, uhat, cert, sys, abs_sys):
    """Refine an abstract input into a concrete one::

        u = K (x - P xhat) + Q xhat + Rtilde uhat
            + L1 phi(t, F x) - L2 phi(t, Fhat xhat)

    The internal inputs ``w``, ``what`` are deliberately not arguments.
    """
    x = _rows(x, sys.n, "x")
    xhat = _rows(xhat, abs_sys.n, "xhat")
    uhat = _rows(uhat, abs_sys.m, "uhat")
    Rt = cert.Rtilde if cert.Rtilde is not None else \
        compute_rtilde(sys, abs_sys, cert)
    u = ((x - xhat @ cert.P.T) @ cert.K.T + xhat @ cert.Q.T + uhat @ Rt.T)
    if sys.lk:
        u = u + sys.phi(t, x @ sys.F.T) @ cert.L1.T
    if abs_sys.lk:
        u = u - abs_sys.phi(t, xhat @ abs_sys.F.T) @ cert.L2.T
    return u


def compute_rtilde(sys, abs_sys, cert):
    """``(B^T Mhat B)^{-1} B^T Mhat P Bhat``, the input gain minimizing the
    external-input gain of ``V``."""
    BtM = sys.B.T @ cert.Mhat
    gram = BtM @ sys.B
    if numerical_rank(gram) < gram.shape[0]:
        raise RankError("B^T Mhat B is singular; B must have full column rank")
    return sla.solve(gram, BtM @ cert.P @ abs_sys.B, assume_a="pos")


def _theta_input(x, xhat, w, what, cert, sys, abs_sys):
    W = cert.W if cert.W is not None else np.eye(sys.p)
    H = cert.H if cert.H is not None else np.eye(sys.q2)
    What = cert.What if cert.What is not None else np.eye(abs_sys.p)
    return np.concatenate(
        [w @ W.T - what @ What.T, x @ sys.C2.T - xhat @ abs_sys.C2.T
         @ H.T], axis=-1)


def supply_rate(x, xhat, theta, w, what, cert, sys, abs_sys):
    """``z^T X z`` with ``z = Ctheta theta + Dtheta u_theta``."""
    u_th = _theta_input(x, xhat, w, what, cert, sys, abs_sys)
    z = theta @ cert.aux.Ctheta.T + u_th @ cert.aux.Dtheta.T
    return np.einsum("...i,ij,...j->...", z, cert.X, z)


def generator_value(t, x, xhat, theta, u, uhat, w, what, sys, abs_sys, cert):
    """Infinitesimal generator of ``V`` along the joint process.

    Sum of the drift pairing ``2 e^T Mhat (f - P fhat)``, the diffusion
    traces, the exact jump differences of the quadratic ``V`` for both
    systems, and ``2 theta^T Lambda (At theta + Bt u_theta)``.
    """
    x = _rows(x, sys.n, "x")
    xhat = _rows(xhat, abs_sys.n, "xhat")
    theta = _rows(theta, cert.aux.l, "theta")
    w = _rows(w, sys.p, "w")
    what = _rows(what, abs_sys.p, "what")
    P, Mh = cert.P, cert.Mhat
    e = x - xhat @ P.T
    f = drift(sys, t, x, u, w)
    fh = drift(abs_sys, t, xhat, uhat, what)
    Me = e @ Mh
    out = 2.0 * np.einsum("...i,...i->...", Me, f - fh @ P.T)
    PG = P @ abs_sys.G
    out = out + sys.G @ Mh @ sys.G + PG @ Mh @ PG
    for lam, R in zip(sys.lam, sys.R):
        out = out + lam * (2.0 * Me @ R + R @ Mh @ R)
    for lam, R in zip(abs_sys.lam, abs_sys.R):
        PR = P @ R
        out = out + lam * (-2.0 * Me @ PR + PR @ Mh @ PR)
    if cert.aux.l:
        u_th = _theta_input(x, xhat, w, what, cert, sys, abs_sys)
        th_dot = theta @ cert.aux.Atheta.T + u_th @ cert.aux.Btheta.T
        out = out + 2.0 * np.einsum("...i,ij,...j->...", theta, cert.Lambda,
                                    th_dot)
    return out


# --------------------------------------------------------------------------
# gains

def _sq_norm2(A):
    return float(sla.norm(A, 2) ** 2) if A.size else 0.0


def gain_summary(sys, abs_sys, cert, pi=None, pi_prime=None):
    """Linear gains of the certificate for Young-inequality weights
    ``pi`` and ``pi_prime`` (default ``kappa_hat / 4`` each).

    Raises
    ------
    DomainError
        If ``pi`` or ``pi_prime`` is nonpositive or ``pi + pi_prime``
        reaches ``kappa_hat``.
    """
    kh = cert.kappa_hat
    pi = kh / 4 if pi is None else float(pi)
    pi_prime = kh / 4 if pi_prime is None else float(pi_prime)
    if pi <= 0 or pi_prime <= 0:
        raise DomainError("pi and pi_prime must be positive")
    if pi + pi_prime >= kh:
        raise DomainError(f"pi + pi_prime = {pi + pi_prime:g} must be below "
                          f"kappa_hat = {kh:g}")
    Mh, P = cert.Mhat, cert.P
    sqM = cert.sqrt_Mhat
    c1 = sla.eigvalsh(sys.C1.T @ sys.C1)[-1] if sys.q1 else 0.0
    alpha = sla.eigvalsh(Mh)[0] / c1 if c1 > 0 else np.inf
    Rt = cert.Rtilde if cert.Rtilde is not None else \
        compute_rtilde(sys, abs_sys, cert)
    psi = _sq_norm2(sqM @ (sys.B @ Rt - P @ abs_sys.B)) / pi
    PG = P @ abs_sys.G
    c_tilde = float(sys.G @ Mh @ sys.G + PG @ Mh @ PG)
    c_tilde += sum(lam * R @ Mh @ R for lam, R in zip(sys.lam, sys.R))
    c_tilde += sum(lam * (P @ R) @ Mh @ (P @ R)
                   for lam, R in zip(abs_sys.lam, abs_sys.R))
    net_jump = sys.lam @ sys.R - abs_sys.lam @ abs_sys.R @ P.T
    c_prime = float(np.sum((sqM @ net_jump) ** 2)) / pi_prime
    kt = kh - pi - pi_prime
    if cert.aux.l:
        kt = min(kt, cert.kappa_bar)
    return GainSummary(float(alpha), float(kt), float(psi), float(c_tilde),
                       c_prime, pi, pi_prime)


def choose_pi(sys, abs_sys, cert, uhat_sup_sq=0.0, points=20):
    """Pick ``(pi, pi_prime)`` on a log grid minimizing the asymptotic
    bound ``(psi * |uhat|^2 + c) / kappa_tilde``."""
    kh = cert.kappa_hat
    grid = kh * np.logspace(-3, np.log10(0.98), points)
    best = None
    for pi in grid:
        for pp in grid:
            if pi + pp >= kh:
                continue
            g = gain_summary(sys, abs_sys, cert, pi, pp)
            val = (g.psi_slope * uhat_sup_sq + g.c) / g.kappa_tilde
            if best is None or val < best[0] - 1e-15:
                best = (val, pi, pp)
    return best[1], best[2]


# --------------------------------------------------------------------------
# sampled dissipation inequality

@dataclass(frozen=True)
class DissipationReport:
    worst_slack: float
    passed: bool
    samples: int
    witness: Optional[dict]

    def to_dict(self):
        return {"passed": self.passed, "worst_slack": self.worst_slack,
                "samples": self.samples, "witness": self.witness}


def dissipation_check(sys, abs_sys, cert, gains, samples=10_000, ranges=5.0,
                      seed=0, t=0.0, slack_tol=1e-6):
    """Falsification test of the dissipation inequality

        LV <= -kappa_tilde V + psi |uhat|^2 + z^T X z + c

    on random tuples ``(x, xhat, theta, uhat, w, what)`` drawn uniformly
    from ``[-r, r]`` per coordinate, where ``ranges`` is a float or a
    dict keyed by variable name. The concrete input comes from
    :func:`interface_input`. A sample fails when its slack
    ``rhs - LV`` drops below ``-slack_tol``.
    """
    rng = np.random.default_rng(seed)
    dims = {"x": sys.n, "xhat": abs_sys.n, "theta": cert.aux.l,
            "uhat": abs_sys.m, "w": sys.p, "what": abs_sys.p}
    draw = {}
    for name, d in dims.items():
        b = ranges.get(name, 5.0) if isinstance(ranges, dict) else ranges
        draw[name] = rng.uniform(-b, b, size=(samples, d))
    u = interface_input(t, draw["x"], draw["xhat"], draw["uhat"], cert, sys,
                        abs_sys)
    lv = generator_value(t, draw["x"], draw["xhat"], draw["theta"], u,
                         draw["uhat"], draw["w"], draw["what"], sys, abs_sys,
                         cert)
    V = storage_value(draw["x"], draw["xhat"], draw["theta"], cert)
    supply = supply_rate(draw["x"], draw["xhat"], draw["theta"], draw["w"],
                         draw["what"], cert, sys, abs_sys)
    uh2 = np.sum(draw["uhat"] ** 2, axis=1)
    rhs = (-gains.kappa_tilde * V + gains.psi_slope * uh2 + supply + gains.c)
    slack = rhs - lv
    worst = int(np.argmin(slack))
    ok = bool(slack[worst] >= -slack_tol)
    witness = None if ok else {k: v[worst].tolist() for k, v in draw.items()}
    return DissipationReport(float(slack[worst]), ok, samples, witness)


# --------------------------------------------------------------------------
# abstract jump design

@dataclass(frozen=True)
class JumpMatch:
    R_hat: np.ndarray
    lambda_hat: float
    objective: float


def jump_matching(sys, Mhat, P, pi_prime, lambda_hat_grid, candidate_count=1):
    """Choose one abstract jump channel ``(R_hat, lambda_hat)``.

    For fixed ``lambda_hat`` the objective

        lh R^T G R + (lh R)^T G (lh R) / pi' - 2 b^T (lh R) / pi',

    with ``G = P^T Mhat P`` and ``b = P^T Mhat sum_i lam_i R_i``, is a
    convex quadratic in ``s = lh R`` minimized at
    ``s = lh / (pi' + lh) G^{-1} b``. The grid point with the lowest
    optimum wins; ties go to the smallest rate. Only a single abstract
    channel is supported (``candidate_count=1``).
    """
    if candidate_count != 1:
        raise ValueError("only one abstract jump channel is supported")
    if pi_prime <= 0:
        raise DomainError("pi_prime must be positive")
    grid = np.sort(np.asarray(lambda_hat_grid, dtype=float).ravel())
    if grid.size == 0:
        raise ValueError("lambda_hat_grid is empty")
    if np.any(grid <= 0):
        raise DomainError("abstract jump rates must be positive")
    Mhat = np.asarray(Mhat, dtype=float)
    P = np.asarray(P, dtype=float)
    G = P.T @ Mhat @ P
    b = P.T @ Mhat @ (sys.lam @ sys.R) if sys.r else np.zeros(P.shape[1])
    if not np.any(b):
        return JumpMatch(np.zeros(P.shape[1]), float(grid[0]), 0.0)
    Ginv_b = sla.solve(G, b, assume_a="pos")
    energy = float(b @ Ginv_b)
    best = None
    for lh in grid:
        obj = -lh / (pi_prime * (pi_prime + lh)) * energy
        if best is None or obj < best[2] - 1e-15:
            s = lh / (pi_prime + lh) * Ginv_b
            best = (s / lh, float(lh), float(obj))
    return JumpMatch(*best)
