"""Construction of an abstraction together with the remaining certificate
matrices and the interface parameters.

Given a concrete system, a seed certificate (``Mhat``, ``K``, ``L1``,
``X``, auxiliary system, ``Lambda``, ``Z``, rates) and an injective ``P``,
the builder solves the linear matching equations one block at a time:

1. ``A P = P Ahat - B Q``  (requires ``im AP in im P + im B``)
2. ``E = P Ehat + B (L2 - L1)``  (requires ``im E in im P + im B``)
3. ``Fhat = F P``, ``C1hat = C1 P``
4. ``Ghat = 0`` and, optionally, one matched abstract jump channel
5. ``C2 P = H C2hat``
6. ``P Dhat = Z What``  with ``What`` of maximal rank
7. ``Bhat`` (identity unless given) and ``Rtilde``

Every infeasible inclusion stops the build with the failing step named.
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg as sla
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InfeasibleError, RankError
from .hybrid_model import JumpDiffusionSystem
from .matrix_analysis import (DEFAULT_TOL, column_basis, image_factor,
                              null_space, numerical_rank, pivoted_columns,
                              solve_pair_embedding)
from .storage import (check_assumption1, check_structural_equations,
                      compute_rtilde, interface_input, jump_matching)
from .validation import as_matrix

__all__ = ["AbstractionResult", "build_abstraction", "AbstractionBuilder",
           "indicator_matrix", "candidate_projections", "discrepancies"]


@dataclass
class AbstractionResult:
    """Abstract system, completed certificate and per-step diagnostics."""

    abs_sys: JumpDiffusionSystem
    cert: object
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return all(d["feasible"] for d in self.diagnostics.values())

    def to_dict(self):
        return {"feasible": self.feasible, "steps": self.diagnostics}


def _record(diag, step, residual, feasible, requirement):
    diag[step] = {"residual": float(residual), "feasible": bool(feasible),
                  "requirement": requirement}
    if not feasible:
        raise InfeasibleError(f"{step}: {requirement} fails "
                              f"(residual {residual:.3e})", step=step,
                              residual=float(residual))


def _projector_complement(P):
    U = column_basis(P)
    return np.eye(P.shape[0]) - U @ U.T


def _normalize_columns(V):
    """Scale each column to unit max-abs entry with a positive leading
    nonzero, so that e.g. a ones vector comes out as exactly ones."""
    V = V.copy()
    for j in range(V.shape[1]):
        col = V[:, j]
        big = np.max(np.abs(col))
        if big == 0:
            continue
        lead = col[np.flatnonzero(np.abs(col) > 1e-12 * big)[0]]
        V[:, j] = col / (np.sign(lead) * big)
    V[np.abs(V) < 1e-14] = 0.0
    return V


def _solve_nonlinear_split(sys, P, L1, tol):
    """``E = P Ehat + B (L2 - L1)``: ``P`` explains as much of ``E`` as it
    can, ``B`` absorbs the rest."""
    n, lk = sys.E.shape
    if lk == 0:
        return np.zeros((P.shape[1], 0)), np.zeros((sys.m, 0)), 0.0
    proj = _projector_complement(P)
    if sys.m:
        dL = image_factor(proj @ sys.E, proj @ sys.B, tol).factor
    else:
        dL = np.zeros((0, lk))
    Ehat = sla.lstsq(P, sys.E - sys.B @ dL, lapack_driver="gelsd")[0]
    res = float(sla.norm(sys.E - P @ Ehat - sys.B @ dL))
    return Ehat, L1 + dL, res


def _solve_output_factor(C2P, tol):
    """``C2 P = H C2hat``; ``H = I`` when ``C2 P`` has full row rank,
    otherwise ``H`` keeps a maximal set of independent columns."""
    q2 = C2P.shape[0]
    if q2 == 0:
        return np.zeros((0, 0)), np.zeros((0, C2P.shape[1]))
    if numerical_rank(C2P) == q2:
        return np.eye(q2), C2P.copy()
    cols = pivoted_columns(C2P)
    H = C2P[:, cols]
    C2hat = image_factor(C2P, H, tol).factor
    return H, C2hat


def _solve_internal_factor(Z, W, P, tol):
    """``What`` spanning ``{v : Z v in im P}`` and ``Dhat`` with
    ``P Dhat = Z What``."""
    proj = _projector_complement(P)
    outside = proj @ Z
    if float(sla.norm(outside)) <= tol * (1.0 + float(sla.norm(Z))):
        What = W.copy()
    else:
        What = _normalize_columns(null_space(outside))
    Dhat = sla.lstsq(P, Z @ What, lapack_driver="gelsd")[0] if What.size \
        else np.zeros((P.shape[1], What.shape[1]))
    res = float(sla.norm(P @ Dhat - Z @ What))
    return What, Dhat, res


def build_abstraction(sys, seed_cert, P, Bhat=None, abstract_jumps=False,
                      pi_prime=None, lambda_hat_grid=None, tol=DEFAULT_TOL,
                      check_seed=True):
    """Construct an abstraction of ``sys`` through ``P``.

    Parameters
    ----------
    sys : JumpDiffusionSystem
    seed_cert : StorageCertificate
        Needs ``Mhat``, ``K``, ``L1``, ``X``, ``aux``, ``Lambda``, ``Z``,
        ``kappa_hat`` and ``kappa_bar``; ``W`` is solved from ``D = Z W``
        when absent.
    P : array_like, shape (n, nhat)
        Injective map from abstract to concrete states.
    Bhat : array_like, optional
        Abstract input matrix. Defaults to the identity (fully actuated).
    abstract_jumps : bool
        Fit one abstract jump channel by :func:`jump_matching`. Otherwise
        the abstraction is jump free.
    check_seed : bool
        Record the seed-certificate verdict in the diagnostics. A failing
        seed is reported but does not stop the build.

    Returns
    -------
    AbstractionResult

    Raises
    ------
    InfeasibleError
        When one of the image inclusions does not hold.
    """
    P = as_matrix(P, "P", rows=sys.n)
    if numerical_rank(P) < P.shape[1]:
        raise RankError("P must have full column rank")
    nh = P.shape[1]
    diag = {}
    cert = seed_cert

    if check_seed:
        rep = check_assumption1(sys, cert)
        diag["seed_certificate"] = {
            "residual": max(rep.lmi.margin, rep.d2xd2.margin,
                            rep.dzw.residual),
            "feasible": rep.passed,
            "requirement": "block LMI, D = Z W, D2^T X D2 <= 0"}

    W = cert.W
    if W is None:
        fac = image_factor(sys.D, cert.Z, tol)
        _record(diag, "internal_factor", fac.residual, fac.feasible,
                "D = Z W")
        W = fac.factor

    emb = solve_pair_embedding(sys.A, sys.B, P, tol)
    _record(diag, "pair_embedding", emb.residual, emb.feasible,
            "im AP in im P + im B")

    Ehat, L2, res = _solve_nonlinear_split(sys, P, cert.L1, tol)
    _record(diag, "nonlinearity_split", res,
            res <= tol * (1.0 + float(sla.norm(sys.E))),
            "im E in im P + im B")

    Fhat = sys.F @ P
    C1hat = sys.C1 @ P

    if abstract_jumps and sys.r:
        pp = cert.kappa_hat / 4 if pi_prime is None else pi_prime
        grid = np.logspace(-2, 2, 41) if lambda_hat_grid is None else \
            lambda_hat_grid
        jm = jump_matching(sys, cert.Mhat, P, pp, grid)
        if np.any(jm.R_hat):
            Rhat, lamhat = jm.R_hat[None, :], np.array([jm.lambda_hat])
        else:
            Rhat, lamhat = None, None
        diag["jump_matching"] = {"residual": 0.0, "feasible": True,
                                 "requirement": "single abstract channel",
                                 "objective": jm.objective,
                                 "lambda_hat": jm.lambda_hat}
    else:
        Rhat, lamhat = None, None

    H, C2hat = _solve_output_factor(sys.C2 @ P, tol)
    res = float(sla.norm(sys.C2 @ P - H @ C2hat))
    _record(diag, "output_factor", res,
            res <= tol * (1.0 + float(sla.norm(sys.C2 @ P))),
            "im C2P in im H")

    What, Dhat, res = _solve_internal_factor(cert.Z, W, P, tol)
    _record(diag, "internal_input_factor", res,
            res <= tol * (1.0 + float(sla.norm(cert.Z))), "im Z What in im P")
    diag["internal_input_factor"]["rank"] = numerical_rank(What)

    Bhat = np.eye(nh) if Bhat is None else as_matrix(Bhat, "Bhat", rows=nh)

    abs_sys = JumpDiffusionSystem(
        emb.Ahat, Bhat, C1hat, C2hat, Dhat, Ehat, Fhat, None, Rhat, lamhat,
        sys.phi)
    cert = cert.replace(P=P, Q=emb.Q, L2=L2, H=H, What=What, W=W)
    cert = cert.replace(Rtilde=compute_rtilde(sys, abs_sys, cert))

    rep = check_structural_equations(sys, abs_sys, cert, tol=10 * tol)
    diag["structural_equations"] = {
        "residual": max(rep.residuals.values()), "feasible": rep.passed,
        "requirement": "all six matching equations"}
    return AbstractionResult(abs_sys, cert, diag)


def discrepancies(abs_sys, reference):
    """Compare a built abstraction with a reference tuple.

    ``reference`` maps block names (``"A"``, ``"B"``, ``"C1"``, ``"C2"``,
    ``"D"``, ``"E"``, ``"F"``) to matrices. Returns the entries that
    differ, with both values.
    """
    out = {}
    for name, ref in reference.items():
        mine = getattr(abs_sys, name)
        ref = np.asarray(ref, dtype=float).reshape(mine.shape) \
            if np.size(ref) == mine.size else np.asarray(ref, dtype=float)
        if ref.shape != mine.shape or not np.allclose(mine, ref, atol=1e-10):
            out[name] = {"built": mine.tolist(), "reference": ref.tolist()}
    return out


# --------------------------------------------------------------------------
# candidate P from block patterns

def indicator_matrix(labels):
    """0/1 matrix ``P`` with ``P[i, labels[i]] = 1``.

    >>> indicator_matrix([0, 0, 1]).tolist()
    [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    """
    labels = np.asarray(labels, dtype=int)
    P = np.zeros((labels.size, labels.max() + 1))
    P[np.arange(labels.size), labels] = 1.0
    return P


def candidate_projections(sys, seed_cert, patterns, tol=DEFAULT_TOL):
    """Try each label pattern as a grouping ``P`` and return the feasible
    ones as ``(P, AbstractionResult)`` pairs, smallest abstract state
    first.

    ``patterns`` holds label vectors of length ``n``; an entry may also be
    a list of per-block label vectors that are concatenated with offsets,
    and all their combinations are tried.
    """
    found = []
    for pat in patterns:
        if len(pat) and np.ndim(pat[0]) == 1:
            combos = product(*pat)
        else:
            combos = [pat]
        for combo in combos:
            labels = np.asarray(combo, dtype=int).ravel()
            if labels.size != sys.n:
                continue
            P = indicator_matrix(np.unique(labels, return_inverse=True)[1])
            try:
                res = build_abstraction(sys, seed_cert, P, tol=tol,
                                        check_seed=False)
            except InfeasibleError:
                continue
            found.append((P, res))
    found.sort(key=lambda pr: pr[0].shape[1])
    return found


# --------------------------------------------------------------------------
# estimator wrapper

class AbstractionBuilder(BaseEstimator, TransformerMixin):
    """Estimator-style front end of :func:`build_abstraction`.

    ``fit(system, seed_cert)`` builds the abstraction; ``transform`` then
    evaluates the interface map on rows ``[x, xhat, uhat]``.

    Parameters
    ----------
    P : array_like
    Bhat : array_like, optional
    abstract_jumps : bool
    tol : float
    """

    def __init__(self, P=None, Bhat=None, abstract_jumps=False,
                 tol=DEFAULT_TOL):
        self.P = P
        self.Bhat = Bhat
        self.abstract_jumps = abstract_jumps
        self.tol = tol

    def fit(self, X, y=None):
        """``X`` is the concrete system, ``y`` the seed certificate."""
        if self.P is None:
            raise ValueError("P must be set before fitting")
        res = build_abstraction(X, y, self.P, Bhat=self.Bhat,
                                abstract_jumps=self.abstract_jumps,
                                tol=self.tol)
        self.system_ = X
        self.abstraction_ = res.abs_sys
        self.certificate_ = res.cert
        self.diagnostics_ = res.diagnostics
        return self

    def transform(self, X, t=0.0):
        check_is_fitted(self, "abstraction_")
        X = np.asarray(X, dtype=float)
        n, nh = self.system_.n, self.abstraction_.n
        x, xhat, uhat = X[..., :n], X[..., n:n + nh], X[..., n + nh:]
        return interface_input(t, x, xhat, uhat, self.certificate_,
                               self.system_, self.abstraction_)
