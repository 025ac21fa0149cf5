"""Linear algebra for Minkowski space-time with signature (-, +, +, +).

Vectors are plain ``numpy`` arrays whose last axis has length 4; the first
component is the timelike coordinate.  Every function broadcasts over the
leading axes so whole curves or grids can be processed at once.
"""

from __future__ import annotations

import enum

import numpy as np

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])


class CausalClass(enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"
    NULL = "null"
    ZERO = "zero"


def vec4(x1, x2, x3, x4) -> np.ndarray:
    """Build a 4-vector, rejecting NaN and infinite components."""
    v = np.array([x1, x2, x3, x4], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite component in {v!r}")
    return v


def dot(a, b):
    """Minkowski inner product along the last axis."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return (
        -a[..., 0] * b[..., 0]
        + a[..., 1] * b[..., 1]
        + a[..., 2] * b[..., 2]
        + a[..., 3] * b[..., 3]
    )


def norm(v):
    """sqrt(|<v, v>|); zero for null and zero vectors."""
    return np.sqrt(np.abs(dot(v, v)))


def classify(v, tol: float = 1e-12) -> CausalClass:
    """Causal character of a single vector.

    A vector counts as null when ``|<v,v>| <= tol * max(1, sum(v_i**2))``,
    so large null vectors are not misread as spacelike or timelike.
    The exact zero vector gets its own class.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.asarray(v, dtype=float)
    if v.shape != (4,):
        raise ValueError(f"expected a single 4-vector, got shape {v.shape}")
    if not np.any(v):
        return CausalClass.ZERO
    q = float(dot(v, v))
    if abs(q) <= tol * max(1.0, float(np.dot(v, v))):
        return CausalClass.NULL
    return CausalClass.SPACELIKE if q > 0 else CausalClass.TIMELIKE


def lower(v):
    """Apply the metric, turning a vector into its covector."""
    return np.asarray(v, dtype=float) @ ETA


def lorentz_generator(params) -> np.ndarray:
    """Element of so(1,3) from six numbers.

    ``params = (b2, b3, b4, r23, r24, r34)``: boosts mixing x1 with x2, x3, x4
    and rotations in the (x2,x3), (x2,x4), (x3,x4) planes.  The returned
    matrix ``W`` satisfies ``dot(W @ a, b) == -dot(a, W @ b)``.
    """
    b2, b3, b4, r23, r24, r34 = (float(p) for p in params)
    w = np.zeros((4, 4))
    for k, b in ((1, b2), (2, b3), (3, b4)):
        w[0, k] = w[k, 0] = b
    for (i, j), r in (((1, 2), r23), ((1, 3), r24), ((2, 3), r34)):
        w[i, j] = -r
        w[j, i] = r
    return w
