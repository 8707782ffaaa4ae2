"""Input validation helpers.

These mirror the ``check_array`` family from scikit-learn but keep
shape errors tied to a named block (``"A"``, ``"C2"`` ...), which is what
certificate reports need.
"""

import numpy as np

from .exceptions import DimensionError, NumericError

__all__ = ["as_matrix", "as_vector", "as_batch", "check_square",
           "check_symmetric", "block_diag"]


def as_matrix(value, name, rows=None, cols=None, vector_as="column"):
    """Return ``value`` as a finite 2-D float array.

    Scalars become 1x1 matrices; 1-D inputs become column vectors, or row
    vectors with ``vector_as="row"``. ``rows``/``cols`` are checked when
    given.
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if vector_as == "row" else arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={arr.ndim}",
                             block=name)
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(
            f"{name} has shape {arr.shape}, expected {rows} rows", block=name)
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(
            f"{name} has shape {arr.shape}, expected {cols} columns",
            block=name)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def as_vector(value, name, size=None):
    """Return ``value`` as a finite 1-D float array of length ``size``."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {arr.shape}",
                             block=name)
    if size is not None and arr.shape[0] != size:
        raise DimensionError(
            f"{name} has length {arr.shape[0]}, expected {size}", block=name)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite entries")
    return arr


def as_batch(value, name, size):
    """Return ``value`` as ``(batch, size)`` plus a flag telling whether the
    input was a single vector."""
    arr = np.asarray(value, dtype=float)
    single = arr.ndim <= 1
    arr = arr.reshape(1, -1) if single else arr
    if arr.ndim != 2 or arr.shape[1] != size:
        raise DimensionError(
            f"{name} has shape {np.shape(value)}, expected trailing size {size}",
            block=name)
    return arr, single


def check_square(arr, name):
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}",
                             block=name)
    return arr


def check_symmetric(arr, name, tol=1e-9):
    check_square(arr, name)
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if np.abs(arr - arr.T).max(initial=0.0) > tol * scale:
        raise DimensionError(f"{name} must be symmetric", block=name)
    return arr


def block_diag(*blocks):
    """Block-diagonal stack that keeps zero-sized blocks.

    ``scipy.linalg.block_diag`` promotes empty arrays to shape ``(1, 0)``,
    which breaks 0-row blocks such as an absent auxiliary state.
    """
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out
