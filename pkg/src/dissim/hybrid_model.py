"""Linear jump-diffusions with a sector-type nonlinearity, and their
sample-path simulation.

The system class is::

    dx = (A x + B u + E phi(t, F x) + D w) dt + G dW + sum_i R_i dN_i
    y1 = C1 x,   y2 = C2 x

with a scalar Wiener process ``W`` and independent Poisson counters
``N_i`` of rate ``lam[i]``.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError, DivergenceError
from .validation import as_matrix, as_vector, check_square

__all__ = ["Nonlinearity", "InputSignal", "JumpDiffusionSystem",
           "AuxiliarySystem", "Trajectory", "BatchTrajectory", "IQCReport",
           "drift", "simulate", "simulate_batch", "iqc_check", "time_grid",
           "noise_generator", "draw_increments"]


# --------------------------------------------------------------------------
# nonlinearities

@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Time-varying map ``phi(t, k)`` on ``R^dim`` with an incremental
    multiplier matrix ``multiplier = [[M11, M12], [M12^T, M22]]``.

    ``kind`` is one of ``"zero"``, ``"sine_sum"`` (elementwise sine),
    ``"table"`` (elementwise piecewise-linear interpolation) or
    ``"custom"``. Custom callables must accept a batch ``k`` of shape
    ``(..., dim)``.
    """

    kind: str
    dim: int
    multiplier: np.ndarray
    func: Optional[Callable] = field(default=None, repr=False)
    table: Optional[tuple] = field(default=None, repr=False)
    parts: tuple = field(default=(), repr=False)

    def __post_init__(self):
        mult = as_matrix(self.multiplier, "multiplier") if self.dim else \
            np.zeros((0, 0))
        if mult.shape != (2 * self.dim, 2 * self.dim):
            raise DimensionError(
                f"multiplier must be {2 * self.dim}x{2 * self.dim}, "
                f"got {mult.shape}", block="multiplier")
        object.__setattr__(self, "multiplier", 0.5 * (mult + mult.T))

    # constructors -----------------------------------------------------
    @classmethod
    def zero(cls, dim=0, multiplier=None):
        if multiplier is None:
            multiplier = np.zeros((2 * dim, 2 * dim))
        return cls("zero", dim, multiplier)

    @classmethod
    def sine(cls, dim=1, multiplier=None):
        """Elementwise ``sin``; the default multiplier ``diag(I, -I)``
        encodes the unit Lipschitz bound."""
        if multiplier is None:
            multiplier = np.block([[np.eye(dim), np.zeros((dim, dim))],
                                   [np.zeros((dim, dim)), -np.eye(dim)]])
        return cls("sine_sum", dim, multiplier)

    @classmethod
    def from_table(cls, knots, values, dim=1, multiplier=None):
        knots = as_vector(knots, "knots")
        values = as_vector(values, "values", size=knots.size)
        if np.any(np.diff(knots) <= 0):
            raise ValueError("table knots must be strictly increasing")
        if multiplier is None:
            slope = np.abs(np.diff(values) / np.diff(knots)).max(initial=0.0)
            multiplier = np.block(
                [[slope ** 2 * np.eye(dim), np.zeros((dim, dim))],
                 [np.zeros((dim, dim)), -np.eye(dim)]])
        return cls("table", dim, multiplier, table=(knots, values))

    @classmethod
    def custom(cls, func, dim, multiplier):
        return cls("custom", dim, multiplier, func=func)

    @classmethod
    def stack(cls, parts):
        """Concatenate nonlinearities acting on disjoint coordinates; the
        multiplier is assembled blockwise."""
        parts = tuple(parts)
        if len(parts) == 1:
            return parts[0]
        dims = [p.dim for p in parts]
        total = sum(dims)
        mult = np.zeros((2 * total, 2 * total))
        off = 0
        for p, d in zip(parts, dims):
            for bi, bj in ((0, 0), (0, 1), (1, 0), (1, 1)):
                mult[bi * total + off:bi * total + off + d,
                     bj * total + off:bj * total + off + d] = \
                    p.multiplier[bi * d:(bi + 1) * d, bj * d:(bj + 1) * d]
            off += d
        if all(p.kind == "zero" for p in parts):
            return cls.zero(total, mult)
        return cls("stacked", total, mult, parts=parts)

    # evaluation -------------------------------------------------------
    @property
    def M11(self):
        return self.multiplier[:self.dim, :self.dim]

    @property
    def M12(self):
        return self.multiplier[:self.dim, self.dim:]

    @property
    def M22(self):
        return self.multiplier[self.dim:, self.dim:]

    def __call__(self, t, k):
        k = np.asarray(k, dtype=float)
        if k.shape[-1] != self.dim:
            raise DimensionError(
                f"phi expects trailing size {self.dim}, got {k.shape}",
                block="phi")
        if self.kind == "zero":
            return np.zeros_like(k)
        if self.kind == "sine_sum":
            return np.sin(k)
        if self.kind == "table":
            knots, values = self.table
            return np.interp(k, knots, values)
        if self.kind == "custom":
            return np.asarray(self.func(t, k), dtype=float).reshape(k.shape)
        out = np.empty_like(k)
        off = 0
        for p in self.parts:
            out[..., off:off + p.dim] = p(t, k[..., off:off + p.dim])
            off += p.dim
        return out


# --------------------------------------------------------------------------
# input signals

_CLOSED_FORMS = {
    "zero": lambda t, a: 0.0 * t,
    "sin": lambda t, a: a * np.sin(t),
    "cos": lambda t, a: a * np.cos(t),
    "exp": lambda t, a: a * np.exp(-t),
    "ramp": lambda t, a: a * t,
    "const": lambda t, a: a + 0.0 * t,
}


def _parse_component(comp):
    if isinstance(comp, str):
        return {"name": comp, "scale": 1.0}
    comp = dict(comp)
    if comp.get("name") not in _CLOSED_FORMS:
        raise ValueError(f"unknown closed-form signal {comp.get('name')!r}; "
                         f"choose from {sorted(_CLOSED_FORMS)}")
    comp.setdefault("scale", 1.0)
    return comp


class InputSignal:
    """Deterministic vector signal ``t -> R^dim``.

    Build with :meth:`constant`, :meth:`zero`, :meth:`table` (zero-order
    hold), :meth:`closed_form` or :meth:`from_function`.

    >>> s = InputSignal.closed_form(["sin", {"name": "exp", "scale": 0.1},
    ...                              {"name": "ramp", "scale": -1.0}])
    >>> s(0.0).tolist()
    [0.0, 0.1, -0.0]
    """

    def __init__(self, kind, dim, spec=None, func=None):
        self.kind = kind
        self.dim = int(dim)
        self.spec = spec
        self._func = func

    @classmethod
    def zero(cls, dim):
        return cls("constant", dim, {"value": [0.0] * dim})

    @classmethod
    def constant(cls, value):
        value = as_vector(value, "value")
        return cls("constant", value.size, {"value": value.tolist()})

    @classmethod
    def table(cls, times, values):
        times = as_vector(times, "times")
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.shape[0] != times.size:
            raise DimensionError("table needs one value row per time",
                                 block="values")
        if np.any(np.diff(times) <= 0):
            raise ValueError("table times must be strictly increasing")
        return cls("table", values.shape[1],
                   {"times": times.tolist(), "values": values.tolist()})

    @classmethod
    def closed_form(cls, components):
        comps = [_parse_component(c) for c in components]
        return cls("closed_form", len(comps), {"components": comps})

    @classmethod
    def from_function(cls, func, dim):
        return cls("function", dim, None, func=func)

    def __call__(self, t):
        if self.kind == "constant":
            return np.asarray(self.spec["value"], dtype=float)
        if self.kind == "table":
            times = self.spec["times"]
            idx = max(0, int(np.searchsorted(times, t, side="right")) - 1)
            return np.asarray(self.spec["values"][idx], dtype=float)
        if self.kind == "closed_form":
            return np.array([_CLOSED_FORMS[c["name"]](t, c["scale"])
                             for c in self.spec["components"]], dtype=float)
        out = as_vector(self._func(t), "signal", size=self.dim)
        return out

    def sup_sq_norm(self, times):
        """``max_t ||s(t)||^2`` over a grid."""
        return float(max(np.dot(v, v) for v in map(self, times)))

    def to_dict(self):
        if self.kind == "function":
            raise ValueError("function-backed signals are not serializable")
        return {"kind": self.kind, **self.spec}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "constant":
            return cls.constant(d["value"])
        if kind == "zero":
            return cls.zero(int(d["dim"]))
        if kind == "table":
            return cls.table(d["times"], d["values"])
        if kind == "closed_form":
            return cls.closed_form(d["components"])
        raise ValueError(f"unknown signal kind {kind!r}")

    def __repr__(self):
        return f"InputSignal(kind={self.kind!r}, dim={self.dim})"


# --------------------------------------------------------------------------
# systems

def _opt_matrix(value, name, rows, cols, vector_as="column"):
    if value is None or np.size(value) == 0:
        return np.zeros((rows or 0, cols or 0))
    return as_matrix(value, name, rows=rows, cols=cols, vector_as=vector_as)


class JumpDiffusionSystem:
    """The tuple ``(A, B, C1, C2, D, E, F, G, R, phi, lam)``.

    Parameters
    ----------
    A : (n, n)
    B : (n, m)
    C1 : (q1, n)
    C2 : (q2, n), optional
    D : (n, p), optional; internal-input matrix
    E : (n, lk), optional
    F : (lk, n), optional
    G : (n,) or (n, 1), optional; diffusion column
    R : sequence of r vectors of length n, optional
    lam : sequence of r positive rates, optional
    phi : Nonlinearity, optional (zero map of size ``lk`` by default)
    """

    def __init__(self, A, B, C1, C2=None, D=None, E=None, F=None, G=None,
                 R=None, lam=None, phi=None):
        A = check_square(as_matrix(A, "A"), "A")
        n = A.shape[0]
        self.A = A
        self.B = _opt_matrix(B, "B", n, None)
        self.C1 = _opt_matrix(C1, "C1", None, n, "row")
        self.C2 = _opt_matrix(C2, "C2", None, n, "row")
        self.D = _opt_matrix(D, "D", n, None)
        lk = phi.dim if phi is not None else None
        self.E = _opt_matrix(E, "E", n, lk)
        lk = self.E.shape[1]
        self.F = _opt_matrix(F, "F", lk, n, "row")
        self.G = np.zeros(n) if G is None else as_vector(G, "G", size=n)
        self.R = _opt_matrix(R, "R", None, n, "row")
        self.lam = np.zeros(0) if lam is None or np.size(lam) == 0 else \
            as_vector(lam, "lam")
        if self.lam.size != self.R.shape[0]:
            raise DimensionError(
                f"{self.R.shape[0]} jump vectors but {self.lam.size} rates",
                block="lam")
        if np.any(self.lam <= 0):
            raise ValueError("jump rates must be positive")
        if phi is None:
            phi = Nonlinearity.zero(lk)
        if phi.dim != lk:
            raise DimensionError(f"phi has dimension {phi.dim}, E has {lk} "
                                 "columns", block="phi")
        self.phi = phi

    # dimensions
    n = property(lambda self: self.A.shape[0])
    m = property(lambda self: self.B.shape[1])
    p = property(lambda self: self.D.shape[1])
    q1 = property(lambda self: self.C1.shape[0])
    q2 = property(lambda self: self.C2.shape[0])
    lk = property(lambda self: self.E.shape[1])
    r = property(lambda self: self.lam.size)

    def replace(self, **changes):
        kw = dict(A=self.A, B=self.B, C1=self.C1, C2=self.C2, D=self.D,
                  E=self.E, F=self.F, G=self.G, R=self.R, lam=self.lam,
                  phi=self.phi)
        kw.update(changes)
        return JumpDiffusionSystem(**kw)

    @property
    def is_deterministic(self):
        return not np.any(self.G) and self.r == 0

    def __repr__(self):
        return (f"JumpDiffusionSystem(n={self.n}, m={self.m}, p={self.p}, "
                f"q1={self.q1}, q2={self.q2}, lk={self.lk}, r={self.r})")


@dataclass(frozen=True, eq=False)
class AuxiliarySystem:
    """Deterministic linear system ``theta' = At theta + Bt v``,
    ``z = Ct theta + Dt v`` with ``Bt = [B1 B2]``, ``Dt = [D1 D2]`` split
    at column ``split``.

    A zero-dimensional state (``Atheta`` of shape 0x0) expresses a static
    supply map.
    """

    Atheta: np.ndarray
    Btheta: np.ndarray
    Ctheta: np.ndarray
    Dtheta: np.ndarray
    split: int

    def __post_init__(self):
        At = np.asarray(self.Atheta, dtype=float).reshape(
            np.shape(self.Atheta) if np.ndim(self.Atheta) == 2 else (0, 0))
        check_square(At, "Atheta")
        lt = At.shape[0]
        Dt = as_matrix(self.Dtheta, "Dtheta")
        qt, mt = Dt.shape
        Bt = np.asarray(self.Btheta, dtype=float)
        Bt = np.zeros((lt, mt)) if Bt.size == 0 else \
            as_matrix(Bt, "Btheta", rows=lt, cols=mt)
        Ct = np.asarray(self.Ctheta, dtype=float)
        Ct = np.zeros((qt, lt)) if Ct.size == 0 else \
            as_matrix(Ct, "Ctheta", rows=qt, cols=lt)
        if not 0 <= self.split <= mt:
            raise DimensionError(f"split {self.split} outside [0, {mt}]",
                                 block="split")
        object.__setattr__(self, "Atheta", At)
        object.__setattr__(self, "Btheta", Bt)
        object.__setattr__(self, "Ctheta", Ct)
        object.__setattr__(self, "Dtheta", Dt)

    @classmethod
    def static(cls, q_w, q_h):
        """``z = [w-part; h-part]`` with no state."""
        m = q_w + q_h
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((m, 0)),
                   np.eye(m), q_w)

    l = property(lambda self: self.Atheta.shape[0])  # noqa: E741
    q = property(lambda self: self.Dtheta.shape[0])
    B1 = property(lambda self: self.Btheta[:, :self.split])
    B2 = property(lambda self: self.Btheta[:, self.split:])
    D1 = property(lambda self: self.Dtheta[:, :self.split])
    D2 = property(lambda self: self.Dtheta[:, self.split:])


# --------------------------------------------------------------------------
# dynamics and simulation

def drift(sys, t, x, u, w=None):
    """Drift ``A x + B u + E phi(t, F x) + D w``.

    ``x``, ``u``, ``w`` may carry a leading batch axis.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.zeros(x.shape[:-1] + (sys.p,)) if w is None else \
        np.asarray(w, dtype=float)
    for name, arr, size in (("x", x, sys.n), ("u", u, sys.m), ("w", w, sys.p)):
        if arr.shape[-1:] != (size,):
            raise DimensionError(f"{name} has shape {arr.shape}, expected "
                                 f"trailing size {size}", block=name)
    out = x @ sys.A.T + u @ sys.B.T + w @ sys.D.T
    if sys.lk:
        out = out + sys.phi(t, x @ sys.F.T) @ sys.E.T
    return out


def time_grid(horizon, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if horizon < dt:
        raise ValueError("horizon must be at least dt")
    steps = int(math.ceil(horizon / dt - 1e-9))
    return np.arange(steps + 1) * dt


def noise_generator(seed, index=0, stream=0):
    """Per-trajectory Philox stream keyed by ``(seed, index, stream)``."""
    ss = np.random.SeedSequence([int(seed), int(index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def draw_increments(sys, dt, steps, seed, index=0, stream=0):
    """Wiener increments ``(steps,)`` and Poisson counts ``(steps, r)``
    for one trajectory."""
    rng = noise_generator(seed, index, stream)
    dW = rng.standard_normal(steps) * math.sqrt(dt)
    dN = rng.poisson(sys.lam * dt, size=(steps, sys.r)).astype(float)
    return dW, dN


def _check_rates(sys, dt):
    if sys.r and np.max(sys.lam) * dt >= 0.1:
        warnings.warn(f"lambda*dt = {np.max(sys.lam) * dt:.3g} >= 0.1; jump "
                      "discretization is coarse", RuntimeWarning, stacklevel=3)


def _signal_eval(sig, t, X, dim, name):
    if sig is None:
        return np.zeros((X.shape[0], dim))
    if isinstance(sig, InputSignal):
        v = sig(t)
        if v.shape != (dim,):
            raise DimensionError(f"{name} has dimension {v.shape[0]}, "
                                 f"expected {dim}", block=name)
        return np.broadcast_to(v, (X.shape[0], dim))
    v = np.asarray(sig(t, X), dtype=float)
    return np.broadcast_to(v, (X.shape[0], dim))


@dataclass
class Trajectory:
    """One sample path on a uniform grid."""

    times: np.ndarray
    states: np.ndarray
    outputs1: np.ndarray
    outputs2: np.ndarray
    jump_counts: np.ndarray
    seed: int


@dataclass
class BatchTrajectory:
    """Sample paths stacked along axis 0."""

    times: np.ndarray
    states: np.ndarray
    jump_counts: np.ndarray
    seed: int
    indices: np.ndarray
    diverged: np.ndarray

    def path(self, i, sys):
        s = self.states[i]
        return Trajectory(self.times, s, s @ sys.C1.T, s @ sys.C2.T,
                          self.jump_counts[i], self.seed)


def simulate_batch(sys, x0, u=None, w=None, horizon=1.0, dt=1e-3, seed=0,
                   n_paths=1, indices=None, on_divergence="raise"):
    """Euler-Maruyama with exact Poisson increments, many paths at once.

    Path ``j`` uses the noise stream keyed by ``(seed, indices[j])`` so a
    path is reproducible regardless of which batch it is simulated in.

    ``u`` and ``w`` are :class:`InputSignal` objects, ``None`` (zero) or
    feedback callables ``f(t, X) -> (n_paths, dim)``.
    """
    times = time_grid(horizon, dt)
    steps = times.size - 1
    _check_rates(sys, dt)
    indices = np.arange(n_paths) if indices is None else \
        np.asarray(indices, dtype=int)
    P = indices.size
    X = np.empty((P, sys.n))
    X[:] = as_vector(x0, "x0", size=sys.n) if np.ndim(x0) <= 1 else \
        as_matrix(x0, "x0", rows=P, cols=sys.n)
    dW = np.empty((P, steps))
    dN = np.empty((P, steps, sys.r))
    for j, idx in enumerate(indices):
        dW[j], dN[j] = draw_increments(sys, dt, steps, seed, idx)
    states = np.empty((P, steps + 1, sys.n))
    states[:, 0] = X
    counts = np.zeros((P, steps + 1, sys.r))
    counts[:, 1:] = np.cumsum(dN, axis=1)
    diverged = np.zeros(P, dtype=bool)
    for k in range(steps):
        t = times[k]
        U = _signal_eval(u, t, X, sys.m, "u")
        Wi = _signal_eval(w, t, X, sys.p, "w")
        X = (X + drift(sys, t, X, U, Wi) * dt + np.outer(dW[:, k], sys.G)
             + dN[:, k] @ sys.R)
        bad = ~np.all(np.isfinite(X), axis=1)
        if np.any(bad & ~diverged):
            if on_divergence == "raise":
                raise DivergenceError(
                    f"non-finite state at step {k + 1} (t={times[k + 1]:g})",
                    step=k + 1)
            diverged |= bad
            X[bad] = 0.0
        states[:, k + 1] = X
    return BatchTrajectory(times, states, counts, seed, indices, diverged)


def simulate(sys, x0, u=None, w=None, horizon=1.0, dt=1e-3, seed=0, index=0):
    """Simulate one sample path; see :func:`simulate_batch`.

    Returns
    -------
    Trajectory
        ``ceil(horizon/dt) + 1`` samples; outputs are ``C1 x`` and ``C2 x``
        evaluated on the stored states.
    """
    batch = simulate_batch(sys, x0, u, w, horizon, dt, seed,
                           indices=[index])
    return batch.path(0, sys)


# --------------------------------------------------------------------------
# incremental quadratic constraint

@dataclass(frozen=True)
class IQCReport:
    min_value: float
    passed: bool
    threshold: float
    samples: int


def iqc_check(phi, samples=10_000, radius=10.0, seed=0, t=0.0,
              threshold=-1e-9):
    """Sample the incremental quadratic form on random pairs
    ``k1, k2 ~ U[-radius, radius]^dim`` and report its minimum."""
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if phi.dim == 0:
        return IQCReport(0.0, True, threshold, samples)
    rng = np.random.default_rng(seed)
    k1 = rng.uniform(-radius, radius, size=(samples, phi.dim))
    k2 = rng.uniform(-radius, radius, size=(samples, phi.dim))
    v = np.hstack([k2 - k1, phi(t, k2) - phi(t, k1)])
    form = np.einsum("si,ij,sj->s", v, phi.multiplier, v)
    low = float(form.min())
    return IQCReport(low, low >= threshold, threshold, samples)

