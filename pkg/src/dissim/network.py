"""Interconnected systems: composition, the compositionality conditions,
composite gains, the moment error bound and its Monte Carlo validation.

Subsystem ``i`` exchanges internal signals through a static coupling
``w = M h`` with ``h = [C2_1 x_1; ...; C2_N x_N]``. The abstract network
uses ``what = Mhat hhat`` in the same way.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionError, DivergenceError, DomainError
from .hybrid_model import (InputSignal, JumpDiffusionSystem, Nonlinearity,
                           _check_rates, draw_increments, drift, time_grid)
from .matrix_analysis import DEFAULT_TOL, check_nsd, check_pd, image_factor
from .storage import GainSummary, gain_summary, interface_input
from .validation import as_matrix, as_vector, block_diag

__all__ = ["Interconnection", "ErrorBound", "MatchingReport",
           "MonteCarloResult", "compose", "build_permutation_S",
           "check_interconnection_lmi", "interconnection_matrix",
           "check_matching_condition", "solve_abstract_coupling",
           "composite_gains", "network_gains", "error_bound",
           "monte_carlo_error", "thread_count", "initial_states"]


@dataclass(eq=False)
class Interconnection:
    """Concrete subsystems, their abstractions and certificates, and the
    coupling matrices.

    ``Qtilde`` defaults to zero when every auxiliary output matrix
    ``Ctheta`` vanishes and to the identity otherwise.
    """

    subsystems: list
    abstractions: list
    certs: list
    M: np.ndarray
    Mhat: np.ndarray
    mu: Optional[np.ndarray] = None
    Qtilde: Optional[np.ndarray] = None
    names: list = field(default_factory=list)

    def __post_init__(self):
        N = len(self.subsystems)
        if not (len(self.abstractions) == len(self.certs) == N) or N == 0:
            raise DimensionError("need one abstraction and one certificate "
                                 "per subsystem", block="subsystems")
        self.mu = np.ones(N) if self.mu is None else \
            as_vector(self.mu, "mu", size=N)
        if np.any(self.mu <= 0):
            raise DomainError("weights mu must be positive")
        p = sum(s.p for s in self.subsystems)
        q = sum(s.q2 for s in self.subsystems)
        self.M = as_matrix(self.M, "M", rows=p, cols=q) if p * q else \
            np.zeros((p, q))
        ph = sum(a.p for a in self.abstractions)
        qh = sum(a.q2 for a in self.abstractions)
        self.Mhat = as_matrix(self.Mhat, "Mhat", rows=ph, cols=qh) \
            if ph * qh else np.zeros((ph, qh))
        lt = sum(c.aux.l for c in self.certs)
        if self.Qtilde is None:
            static = all(not np.any(c.aux.Ctheta) for c in self.certs)
            self.Qtilde = np.zeros((lt, lt)) if static else np.eye(lt)
        self.Qtilde = as_matrix(self.Qtilde, "Qtilde", rows=lt, cols=lt) \
            if lt else np.zeros((0, 0))
        if not check_pd(self.Qtilde + 1e-12 * np.eye(lt)):
            raise DomainError("Qtilde must be positive semidefinite")

    N = property(lambda self: len(self.subsystems))

    # stacked blocks ----------------------------------------------------
    def stacked(self, name):
        """Block-diagonal stack of a certificate field (``"W"``,
        ``"What"``, ``"H"``) or an auxiliary matrix (``"Atheta"``,
        ``"Btheta"``, ``"Ctheta"``, ``"Dtheta"``)."""
        if name in ("Atheta", "Btheta", "Ctheta", "Dtheta"):
            return block_diag(*(getattr(c.aux, name) for c in self.certs))
        return block_diag(*(getattr(c, name) for c in self.certs))


def build_permutation_S(rW, rH):
    """Permutation taking ``[w_1; ...; w_N; h_1; ...; h_N]`` to
    ``[w_1; h_1; ...; w_N; h_N]`` for blocks of sizes ``rW`` and ``rH``.

    >>> build_permutation_S([1, 1], [1, 1]).astype(int).tolist()
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]
    """
    rW = [int(r) for r in rW]
    rH = [int(r) for r in rH]
    if len(rW) != len(rH) or min(rW + rH, default=0) < 0:
        raise DimensionError("rW and rH must be equal-length lists of "
                             "nonnegative sizes", block="S")
    total = sum(rW) + sum(rH)
    w_off = np.cumsum([0] + rW)
    h_off = sum(rW) + np.cumsum([0] + rH)
    src = []
    for i in range(len(rW)):
        src.extend(range(w_off[i], w_off[i + 1]))
        src.extend(range(h_off[i], h_off[i + 1]))
    S = np.zeros((total, total))
    S[np.arange(total), src] = 1.0
    return S


def _stack_jumps(subsystems):
    """Shared Poisson channels when all subsystems carry identical rate
    lists; otherwise independent channels padded with zeros."""
    lams = [s.lam for s in subsystems]
    if all(l.shape == lams[0].shape and np.array_equal(l, lams[0])
           for l in lams):
        R = np.hstack([s.R for s in subsystems]) if lams[0].size else None
        return R, (lams[0] if lams[0].size else None)
    R = block_diag(*(s.R for s in subsystems))
    lam = np.concatenate(lams)
    return (R, lam) if lam.size else (None, None)


def compose(subsystems, M):
    """Close an interconnection: ``w = M [C2_1 x_1; ...; C2_N x_N]``.

    The result has drift matrix ``blockdiag(A_i) + blockdiag(D_i) M
    blockdiag(C2_i)``, block-diagonal ``B``, ``C1``, ``C2``, ``E``, ``F``,
    a stacked diffusion column (one shared Wiener process) and no
    internal inputs.
    """
    subsystems = list(subsystems)
    D = block_diag(*(s.D for s in subsystems))
    C2 = block_diag(*(s.C2 for s in subsystems))
    M = np.asarray(M, dtype=float).reshape(D.shape[1], C2.shape[0]) \
        if np.size(M) == D.shape[1] * C2.shape[0] else np.asarray(M)
    if M.shape != (D.shape[1], C2.shape[0]):
        raise DimensionError(
            f"M has shape {M.shape}, expected {(D.shape[1], C2.shape[0])} "
            "(stacked p by stacked q2)", block="M")
    A = block_diag(*(s.A for s in subsystems)) + D @ M @ C2
    R, lam = _stack_jumps(subsystems)
    phi = Nonlinearity.stack([s.phi for s in subsystems])
    return JumpDiffusionSystem(
        A, block_diag(*(s.B for s in subsystems)),
        block_diag(*(s.C1 for s in subsystems)), C2, None,
        block_diag(*(s.E for s in subsystems)),
        block_diag(*(s.F for s in subsystems)),
        np.concatenate([s.G for s in subsystems]),
        R, lam, phi)


# --------------------------------------------------------------------------
# compositionality conditions

def interconnection_matrix(net):
    """The symmetric matrix whose negative semidefiniteness certifies the
    composite simulation function, over ``[theta; h - H hhat]``."""
    W = net.stacked("W")
    rW = [c.W.shape[0] for c in net.certs]
    rH = [s.q2 for s in net.subsystems]
    if W.shape[1] != net.M.shape[0]:
        raise DimensionError(f"W has {W.shape[1]} columns, M has "
                             f"{net.M.shape[0]} rows", block="W")
    q = net.M.shape[1]
    S = build_permutation_S(rW, rH)
    stackin = S @ np.vstack([W @ net.M, np.eye(q)])
    AD, BD = net.stacked("Atheta"), net.stacked("Btheta")
    CD, DD = net.stacked("Ctheta"), net.stacked("Dtheta")
    if BD.shape[1] != stackin.shape[0]:
        raise DimensionError(f"stacked Btheta has {BD.shape[1]} columns, "
                             f"expected {stackin.shape[0]}", block="Btheta")
    Qt = net.Qtilde
    top = np.block([[AD.T @ Qt + Qt @ AD, Qt @ BD @ stackin],
                    [(Qt @ BD @ stackin).T, np.zeros((q, q))]])
    X = block_diag(*(mu * c.X for mu, c in zip(net.mu, net.certs)))
    out = np.hstack([CD, DD @ stackin])
    if out.shape[0] != X.shape[0]:
        raise DimensionError("stacked auxiliary outputs do not match X",
                             block="X")
    return top + out.T @ X @ out


def check_interconnection_lmi(net, tol=None):
    """Negative semidefiniteness of :func:`interconnection_matrix`."""
    return check_nsd(interconnection_matrix(net), tol)


@dataclass(frozen=True)
class MatchingReport:
    residual: float
    passed: bool
    tolerance: float

    def __bool__(self):
        return self.passed

    def to_dict(self):
        return {"residual": self.residual, "passed": self.passed,
                "tolerance": self.tolerance}


def check_matching_condition(net, tol=1e-10):
    """``||W M H - What Mhat||_F`` against ``tol``."""
    W, H, What = net.stacked("W"), net.stacked("H"), net.stacked("What")
    try:
        lhs = W @ net.M @ H
        rhs = What @ net.Mhat
    except ValueError as exc:
        raise DimensionError(str(exc), block="Mhat") from None
    if lhs.shape != rhs.shape:
        raise DimensionError(f"W M H is {lhs.shape}, What Mhat is "
                             f"{rhs.shape}", block="Mhat")
    res = float(sla.norm(lhs - rhs))
    return MatchingReport(res, bool(res <= tol), tol)


def solve_abstract_coupling(W, M, H, What, tol=DEFAULT_TOL):
    """Least-squares ``Mhat`` with ``What Mhat ~ W M H``.

    Returns
    -------
    FactorResult
        ``factor`` is ``Mhat``; ``feasible`` when the residual is within
        ``tol * (1 + ||W M H||_F)``.
    """
    target = np.asarray(W, float) @ np.asarray(M, float) @ np.asarray(H, float)
    return image_factor(target, What, tol)


# --------------------------------------------------------------------------
# gains and the error bound

def composite_gains(gains, mu=None):
    """Linear gains of ``sum_i mu_i V_i``.

    ``kappa_tilde`` is the smallest decay rate, ``psi_slope`` the
    Euclidean norm of ``mu_i psi_i``, ``alpha_slope`` the smallest
    ``mu_i alpha_i`` and ``c`` the weighted sum of offsets.
    """
    gains = list(gains)
    mu = np.ones(len(gains)) if mu is None else as_vector(mu, "mu",
                                                         size=len(gains))
    if np.any(mu <= 0):
        raise DomainError("weights mu must be positive")
    kap = np.array([g.kappa_tilde for g in gains])
    alpha = np.array([g.alpha_slope for g in gains])
    psi = np.array([g.psi_slope for g in gains])
    if np.any(kap <= 0) or np.any(alpha <= 0) or np.any(psi < 0):
        raise DomainError("decay rates and alpha slopes must be positive")
    # alpha normalization N^(max(k/2, 1) - 1) is 1 for k = 2
    return GainSummary(
        alpha_slope=float(np.min(mu * alpha)),
        kappa_tilde=float(np.min(kap)),
        psi_slope=float(np.linalg.norm(mu * psi)),
        c_tilde=float(sum(m * g.c_tilde for m, g in zip(mu, gains))),
        c_prime=float(sum(m * g.c_prime for m, g in zip(mu, gains))))


def network_gains(net, pi=None, pi_prime=None):
    """Per-subsystem gains and their composite."""
    per = [gain_summary(s, a, c, pi, pi_prime)
           for s, a, c in zip(net.subsystems, net.abstractions, net.certs)]
    return per, composite_gains(per, net.mu)


@dataclass(frozen=True)
class ErrorBound:
    """Linear-gain moment bound on ``E ||zeta(t) - zetahat(t)||^2``."""

    kappa_tilde_net: float
    alpha_slope_net: float
    psi_slope_net: float
    c_net: float
    V0_mean: float
    uhat_sup_sq: float
    k: int = 2

    @classmethod
    def from_gains(cls, gains, V0_mean, uhat_sup_sq):
        return cls(gains.kappa_tilde, gains.alpha_slope, gains.psi_slope,
                   gains.c, float(V0_mean), float(uhat_sup_sq))

    @property
    def asymptote(self):
        return ((self.psi_slope_net * self.uhat_sup_sq + self.c_net)
                / (self.kappa_tilde_net * self.alpha_slope_net))

    def to_dict(self):
        return {"kappa_tilde_net": self.kappa_tilde_net,
                "alpha_slope_net": self.alpha_slope_net,
                "psi_slope_net": self.psi_slope_net, "c_net": self.c_net,
                "V0_mean": self.V0_mean, "uhat_sup_sq": self.uhat_sup_sq,
                "k": self.k, "asymptote": self.asymptote}


def error_bound(eb, t):
    """Comparison-ODE bound

        [exp(-k t) V0 + (1 - exp(-k t)) (psi u^2 + c) / k] / alpha

    with ``k = kappa_tilde_net``. ``t`` may be an array.

    >>> eb = ErrorBound(1.0, 1.0, 0.0, 0.0, 1.0, 0.0)
    >>> round(float(error_bound(eb, 1.0)), 12) == round(math.exp(-1), 12)
    True
    """
    if not eb.kappa_tilde_net > 0:
        raise DomainError("kappa_tilde_net must be positive")
    if not eb.alpha_slope_net > 0:
        raise DomainError("alpha_slope_net must be positive")
    t = np.asarray(t, dtype=float)
    decay = np.exp(-eb.kappa_tilde_net * t)
    drive = (eb.psi_slope_net * eb.uhat_sup_sq + eb.c_net) / eb.kappa_tilde_net
    out = (decay * eb.V0_mean + (1.0 - decay) * drive) / eb.alpha_slope_net
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Monte Carlo validation

def thread_count():
    """Worker cap from ``DISSIM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DISSIM_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class MonteCarloResult:
    times: np.ndarray
    mean_sq_error: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    trials: int
    discarded: int
    error_bound: ErrorBound
    # absolute slack for floating-point roundoff in the squared error
    atol: float = 1e-12

    @property
    def violations(self):
        return self.mean_sq_error - 3.0 * self.stderr > self.bound + self.atol

    @property
    def passed(self):
        return not bool(np.any(self.violations))

    def to_csv(self, path):
        table = np.column_stack([self.times, self.mean_sq_error,
                                 self.stderr, self.bound])
        np.savetxt(path, table, fmt="%.17g", delimiter=",",
                   header="t,mean_sq_error,stderr,bound", comments="")

    def to_dict(self):
        worst = self.mean_sq_error - 3.0 * self.stderr - self.bound
        return {"passed": self.passed, "trials": self.trials,
                "discarded": self.discarded,
                "violations": int(np.sum(self.violations)),
                "worst_gap": float(np.max(worst)),
                "final_mean_sq_error": float(self.mean_sq_error[-1]),
                "bound": self.error_bound.to_dict()}


def _offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


class _CoSimulator:
    """Euler-Maruyama co-simulation of the concrete network, refined
    through the interface maps, and the abstract network driven by
    ``uhat``."""

    def __init__(self, net, uhat):
        self.net = net
        self.sys = compose(net.subsystems, net.M)
        self.abs = compose(net.abstractions, net.Mhat)
        self.uhat = uhat
        self.xo = _offsets([s.n for s in net.subsystems])
        self.xho = _offsets([a.n for a in net.abstractions])
        self.uho = _offsets([a.m for a in net.abstractions])
        self.to = _offsets([c.aux.l for c in net.certs])
        self.h_stack = block_diag(*(s.C2 for s in net.subsystems))
        self.hh_stack = block_diag(*(a.C2 for a in net.abstractions))
        self.wo = _offsets([s.p for s in net.subsystems])
        self.who = _offsets([a.p for a in net.abstractions])

    def slices(self, off, i):
        return slice(off[i], off[i + 1])

    def interface(self, t, X, Xh, Uh):
        net = self.net
        parts = []
        for i, (s, a, c) in enumerate(zip(net.subsystems, net.abstractions,
                                          net.certs)):
            parts.append(interface_input(
                t, X[:, self.slices(self.xo, i)],
                Xh[:, self.slices(self.xho, i)],
                Uh[:, self.slices(self.uho, i)], c, s, a))
        return np.concatenate(parts, axis=1)

    def theta_rate(self, X, Xh, Th):
        net = self.net
        w = X @ self.h_stack.T @ net.M.T
        wh = Xh @ self.hh_stack.T @ net.Mhat.T
        out = np.empty_like(Th)
        for i, (s, a, c) in enumerate(zip(net.subsystems, net.abstractions,
                                          net.certs)):
            if not c.aux.l:
                continue
            xi = X[:, self.slices(self.xo, i)]
            xhi = Xh[:, self.slices(self.xho, i)]
            v = np.concatenate(
                [w[:, self.slices(self.wo, i)] @ c.W.T
                 - wh[:, self.slices(self.who, i)] @ c.What.T,
                 xi @ s.C2.T - xhi @ a.C2.T @ c.H.T], axis=1)
            ts = self.slices(self.to, i)
            out[:, ts] = Th[:, ts] @ c.aux.Atheta.T + v @ c.aux.Btheta.T
        return out

    def storage(self, X, Xh, Th):
        net = self.net
        total = np.einsum("bi,ij,bj->b", Th, net.Qtilde, Th)
        for i, (mu, c) in enumerate(zip(net.mu, net.certs)):
            e = X[:, self.slices(self.xo, i)] - \
                Xh[:, self.slices(self.xho, i)] @ c.P.T
            th = Th[:, self.slices(self.to, i)]
            total = total + mu * (np.einsum("bi,ij,bj->b", e, c.Mhat, e)
                                  + np.einsum("bi,ij,bj->b", th, c.Lambda,
                                              th))
        return total

    def run(self, X0, Xh0, Th0, times, dt, seed, indices, shared_noise):
        sys, ab = self.sys, self.abs
        steps = times.size - 1
        B = indices.size
        X, Xh, Th = X0.copy(), Xh0.copy(), Th0.copy()
        dW = np.empty((B, steps))
        dN = np.empty((B, steps, sys.r))
        dWh = np.empty((B, steps))
        dNh = np.empty((B, steps, ab.r))
        for j, idx in enumerate(indices):
            dW[j], dN[j] = draw_increments(sys, dt, steps, seed, idx, 0)
            if shared_noise:
                dWh[j] = dW[j]
                dNh[j] = dN[j] if ab.r == sys.r else \
                    draw_increments(ab, dt, steps, seed, idx, 1)[1]
            else:
                dWh[j], dNh[j] = draw_increments(ab, dt, steps, seed, idx, 1)
        err = np.empty((B, steps + 1))
        C1, C1h = sys.C1, ab.C1
        bad = np.zeros(B, dtype=bool)

        def record(k):
            err[:, k] = np.sum((X @ C1.T - Xh @ C1h.T) ** 2, axis=1)

        stor0 = self.storage(X, Xh, Th)
        record(0)
        for k in range(steps):
            t = times[k]
            Uh = np.broadcast_to(self.uhat(t), (B, ab.m))
            U = self.interface(t, X, Xh, Uh)
            th_dot = self.theta_rate(X, Xh, Th) if Th.shape[1] else Th
            X = (X + drift(sys, t, X, U) * dt + np.outer(dW[:, k], sys.G)
                 + dN[:, k] @ sys.R)
            Xh = (Xh + drift(ab, t, Xh, Uh) * dt + np.outer(dWh[:, k], ab.G)
                  + dNh[:, k] @ ab.R)
            Th = Th + th_dot * dt
            now_bad = ~(np.all(np.isfinite(X), axis=1)
                        & np.all(np.isfinite(Xh), axis=1))
            if np.any(now_bad):
                bad |= now_bad
                X[now_bad] = 0.0
                Xh[now_bad] = 0.0
                Th[now_bad] = 0.0
            record(k + 1)
        return err, stor0, bad


def initial_states(x0, spread, trials, seed):
    """Per-trial initial states ``x0 + spread * N(0, I)`` drawn from the
    stream keyed ``(seed, trial, 2)``."""
    x0 = np.asarray(x0, dtype=float)
    out = np.tile(x0, (trials, 1))
    if spread:
        for j in range(trials):
            rng = np.random.Generator(np.random.Philox(
                np.random.SeedSequence([int(seed), j, 2])))
            out[j] += spread * rng.standard_normal(x0.size)
    return out


def _initial(value, B, n, name):
    if value is None:
        return np.zeros((B, n))
    arr = np.asarray(value, dtype=float)
    if arr.ndim <= 1:
        return np.broadcast_to(as_vector(arr, name, size=n), (B, n)).copy()
    return as_matrix(arr, name, rows=B, cols=n).copy()


def monte_carlo_error(net, uhat, x0, xhat0, theta0=None, horizon=5.0,
                      dt=1e-3, trials=100, seed=0, shared_noise=False,
                      pi=None, pi_prime=None, threads=None, chunk=256,
                      max_discard=0.01):
    """Paired Monte Carlo estimate of ``E ||zeta(t) - zetahat(t)||^2``.

    The concrete network runs on noise stream 0 and the abstract network
    on stream 1 of each trial's key ``(seed, trial)``, so the two are
    independent unless ``shared_noise`` is set (diagnostic only). The
    concrete input is produced at every step by the interface maps.

    Parameters
    ----------
    net : Interconnection
    uhat : InputSignal
        Stacked abstract input.
    x0, xhat0, theta0 : array_like
        Initial states, either one vector or one row per trial.
    trials : int
    threads : int, optional
        Worker count; defaults to ``DISSIM_THREADS``.
    max_discard : float
        Largest tolerated fraction of divergent trials.

    Returns
    -------
    MonteCarloResult

    Raises
    ------
    DivergenceError
        When more than ``max_discard`` of the trials diverge.
    """
    sim = _CoSimulator(net, uhat)
    times = time_grid(horizon, dt)
    _check_rates(sim.sys, dt)
    _check_rates(sim.abs, dt)
    if not isinstance(uhat, InputSignal):
        uhat = InputSignal.from_function(uhat, sim.abs.m)
        sim.uhat = uhat
    if uhat(0.0).shape != (sim.abs.m,):
        raise DimensionError(f"uhat has dimension {uhat(0.0).shape[0]}, "
                             f"abstract network has {sim.abs.m} inputs",
                             block="uhat")
    X0 = _initial(x0, trials, sim.sys.n, "x0")
    Xh0 = _initial(xhat0, trials, sim.abs.n, "xhat0")
    Th0 = _initial(theta0, trials, int(sim.to[-1]), "theta0")

    bounds = [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]
    threads = thread_count() if threads is None else max(1, int(threads))

    def work(b):
        lo, hi = b
        return sim.run(X0[lo:hi], Xh0[lo:hi], Th0[lo:hi], times, dt, seed,
                       np.arange(lo, hi), shared_noise)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(work, bounds))
    else:
        outs = [work(b) for b in bounds]
    err = np.concatenate([o[0] for o in outs])
    v0 = np.concatenate([o[1] for o in outs])
    bad = np.concatenate([o[2] for o in outs])
    discarded = int(bad.sum())
    if discarded > max_discard * trials:
        raise DivergenceError(f"{discarded} of {trials} trials diverged")
    keep = ~bad
    kept = int(keep.sum())
    err, v0 = err[keep], v0[keep]
    mean = err.mean(axis=0)
    se = err.std(axis=0, ddof=1) / math.sqrt(kept) if kept > 1 else \
        np.zeros_like(mean)

    _, gains = network_gains(net, pi, pi_prime)
    eb = ErrorBound.from_gains(gains, float(v0.mean()),
                               uhat.sup_sq_norm(times))
    return MonteCarloResult(times, mean, se, error_bound(eb, times), trials,
                            discarded, eb)
