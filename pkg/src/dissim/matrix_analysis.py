"""Semidefiniteness tests, image-inclusion factorizations and the
``AP = P Ahat - B Q`` embedding solve.

All least-squares problems go through ``scipy.linalg.lstsq`` (SVD based,
rank revealing); normal equations are never formed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exceptions import DimensionError, NumericError
from .validation import as_matrix, check_square

__all__ = ["DEFAULT_TOL", "SymVerdict", "FactorResult", "PairEmbedding",
           "symmetrize", "check_nsd", "check_pd", "image_factor",
           "solve_pair_embedding", "column_basis", "null_space",
           "numerical_rank", "pivoted_columns", "assert_finite"]

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class SymVerdict:
    """Outcome of a ``S <= 0`` test.

    ``margin`` is the largest eigenvalue of the symmetric part of ``S``;
    the test passes when it does not exceed ``tolerance``.
    """

    is_satisfied: bool
    margin: float
    tolerance: float

    def __bool__(self):
        return self.is_satisfied

    def to_dict(self):
        return {"satisfied": self.is_satisfied, "margin": self.margin,
                "tolerance": self.tolerance}


@dataclass(frozen=True)
class FactorResult:
    """Least-squares factor ``X`` of ``basis @ X ~ target``."""

    factor: np.ndarray
    residual: float
    feasible: bool
    tolerance: float

    def __bool__(self):
        return self.feasible

    def to_dict(self):
        return {"feasible": self.feasible, "residual": self.residual,
                "tolerance": self.tolerance}


@dataclass(frozen=True)
class PairEmbedding:
    """Solution of ``A P = P Ahat - B Q``; ``feasible`` is False when the
    image inclusion ``im AP in im P + im B`` fails."""

    Ahat: np.ndarray
    Q: np.ndarray
    residual: float
    feasible: bool
    tolerance: float

    def __bool__(self):
        return self.feasible


def symmetrize(S):
    return 0.5 * (S + S.T)


def _extreme_eig(S, which):
    if S.size == 0:
        return 0.0
    vals = sla.eigvalsh(symmetrize(S))
    return float(vals[-1] if which == "max" else vals[0])


def _default_tol(S, tol):
    if tol is not None:
        if tol < 0:
            raise ValueError("tol must be nonnegative")
        return float(tol)
    if S.size == 0:
        return 0.0
    return DEFAULT_TOL * float(sla.norm(S, 2))


def check_nsd(S, tol=None):
    """Test ``(S + S^T)/2 <= tol * I`` through its largest eigenvalue.

    Parameters
    ----------
    S : array_like, shape (n, n)
    tol : float, optional
        Absolute tolerance on the largest eigenvalue. Defaults to 1e-8
        times the spectral norm of ``S``.

    Returns
    -------
    SymVerdict
    """
    S = as_matrix(S, "S")
    check_square(S, "S")
    tol = _default_tol(S, tol)
    margin = _extreme_eig(S, "max")
    return SymVerdict(bool(margin <= tol), margin, tol)


def check_pd(S, tol=0.0):
    """Positive definiteness: smallest eigenvalue of the symmetric part
    strictly above ``tol``. Empty matrices pass."""
    S = as_matrix(S, "S")
    check_square(S, "S")
    if S.size == 0:
        return SymVerdict(True, 0.0, tol)
    low = _extreme_eig(S, "min")
    # margin keeps the "<= tolerance means pass" reading of SymVerdict
    return SymVerdict(bool(low > tol), -low, float(tol))


def numerical_rank(A, rtol=1e-10):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    s = sla.svdvals(A)
    return int(np.sum(s > rtol * max(s[0], 1.0)))


def image_factor(target, basis, tol=DEFAULT_TOL):
    """Least-squares factor of ``target`` through ``basis``.

    Finds ``X`` minimizing ``||basis @ X - target||_F`` (minimum-norm when
    ``basis`` is rank deficient). The inclusion ``im target in im basis``
    is declared to hold when the residual is at most
    ``tol * (1 + ||target||_F)``.

    Examples
    --------
    >>> r = image_factor([[1.0], [1.0]], [[1.0], [0.0]])
    >>> r.feasible, round(r.residual, 12)
    (False, 1.0)
    """
    target = as_matrix(target, "target")
    basis = as_matrix(basis, "basis")
    if target.shape[0] != basis.shape[0]:
        raise DimensionError(
            f"row mismatch: target {target.shape} vs basis {basis.shape}",
            block="basis")
    if basis.shape[1] == 0 or target.shape[1] == 0:
        factor = np.zeros((basis.shape[1], target.shape[1]))
    else:
        factor = sla.lstsq(basis, target, lapack_driver="gelsd")[0]
    residual = float(sla.norm(basis @ factor - target))
    bound = tol * (1.0 + float(sla.norm(target)))
    return FactorResult(factor, residual, bool(residual <= bound), tol)


def _orth_complement_projector(P):
    n = P.shape[0]
    if P.shape[1] == 0:
        return np.eye(n)
    U = column_basis(P)
    return np.eye(n) - U @ U.T


def solve_pair_embedding(A, B, P, tol=DEFAULT_TOL):
    """Solve ``A P = P Ahat - B Q`` for ``(Ahat, Q)``.

    The component of ``AP`` outside ``im P`` is explained by ``B`` first,
    with a minimum-norm ``Q``; ``Ahat`` then follows from ``P`` alone.
    This keeps ``Q = 0`` whenever ``im AP`` already lies in ``im P``.

    Feasibility holds when ``||AP - P Ahat + B Q||_F <= tol * ||AP||_F``.
    """
    A = check_square(as_matrix(A, "A"), "A")
    n = A.shape[0]
    B = as_matrix(B, "B", rows=n) if np.size(B) else np.zeros((n, 0))
    P = as_matrix(P, "P", rows=n)
    AP = A @ P
    proj = _orth_complement_projector(P)
    if B.shape[1] == 0:
        Q = np.zeros((0, P.shape[1]))
    else:
        Q = -image_factor(proj @ AP, proj @ B, tol).factor
    rhs = AP + B @ Q
    if P.shape[1] == 0:
        Ahat = np.zeros((0, 0))
    else:
        Ahat = sla.lstsq(P, rhs, lapack_driver="gelsd")[0]
    residual = float(sla.norm(AP - P @ Ahat + B @ Q))
    feasible = bool(residual <= tol * float(sla.norm(AP)) or residual == 0.0)
    return PairEmbedding(Ahat, Q, residual, feasible, tol)


def column_basis(A, rtol=1e-10):
    """Orthonormal basis of ``im A`` from the SVD."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    U, s, _ = sla.svd(A, full_matrices=False)
    r = int(np.sum(s > rtol * max(s[0], 1.0)))
    return U[:, :r]


def null_space(A, rtol=1e-10):
    """Orthonormal basis of ``ker A``."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0 or not np.any(A):
        return np.eye(A.shape[1])
    return sla.null_space(A, rcond=rtol)


def pivoted_columns(A, rtol=1e-10):
    """Indices of a maximal set of independent columns of ``A``, chosen by
    column-pivoted QR and returned in their original order."""
    A = np.asarray(A, dtype=float)
    r = numerical_rank(A, rtol)
    if r == 0:
        return np.array([], dtype=int)
    _, _, piv = sla.qr(A, mode="economic", pivoting=True)
    return np.sort(piv[:r])


def assert_finite(arr, name):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr
