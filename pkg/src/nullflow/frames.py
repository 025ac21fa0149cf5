"""Frenet frames of partially null and pseudo null curves.

Frames are stored as ``(..., 4, 4)`` arrays whose rows are ``T, N, B1, B2``.
The derivative of the frame along arclength is ``F' = C(k) @ F`` where ``C``
is the curvature matrix of the curve kind:

partially null (B1 null, k3 = 0)::

    T'  =  k1 N
    N'  = -k1 T + k2 B1
    B1' =  k3 B1
    B2' = -k2 N - k3 B2

pseudo null (N null, k1 in {0, 1})::

    T'  =  k1 N
    N'  =  k2 B1
    B1' =  k3 N - k2 B2
    B2' = -k1 T - k3 B1
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import cumulative_simpson

from . import _fd
from . import flowfield as ff
from .mink4 import ETA, dot, norm


class FrameKind(enum.Enum):
    PARTIALLY_NULL = "partially_null"
    PSEUDO_NULL = "pseudo_null"

    @classmethod
    def parse(cls, text: str) -> "FrameKind":
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "partiallynull": cls.PARTIALLY_NULL,
            "partially_null": cls.PARTIALLY_NULL,
            "pn": cls.PARTIALLY_NULL,
            "pseudonull": cls.PSEUDO_NULL,
            "pseudo_null": cls.PSEUDO_NULL,
            "psn": cls.PSEUDO_NULL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown frame kind {text!r}") from None


class GaugePolicy(enum.Enum):
    """How the free scale of the partially null binormal B1 is fixed."""

    REFERENCE_FRAME = "reference"
    FIRST_COMPONENT_UNIT = "first_component"

    @classmethod
    def parse(cls, text: str) -> "GaugePolicy":
        key = text.strip().lower()
        for g in cls:
            if key in (g.value, g.name.lower()):
                return g
        raise ValueError(f"unknown gauge policy {text!r}")


class FrameError(ValueError):
    """Invalid frame, curvature constraint violation, or degenerate curve."""


FRAME_TOL = 1e-12
DEGENERACY_K1 = 1e-9

# Required Gram matrices <F_i, F_j> of each kind (rows T, N, B1, B2).
_GRAM = {
    FrameKind.PARTIALLY_NULL: np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float
    ),
    FrameKind.PSEUDO_NULL: np.array(
        [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=float
    ),
}

# (i, j) pairs in the order residuals are reported.
RESIDUAL_PAIRS = {
    FrameKind.PARTIALLY_NULL: [
        (0, 0), (1, 1), (2, 2), (3, 3), (2, 3),
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3),
    ],
    FrameKind.PSEUDO_NULL: [
        (0, 0), (2, 2), (1, 1), (3, 3), (1, 3),
        (0, 1), (0, 2), (0, 3), (1, 2), (2, 3),
    ],
}

RESIDUAL_LABELS = {
    kind: [f"<{'T N B1 B2'.split()[i]},{'T N B1 B2'.split()[j]}>" for i, j in pairs]
    for kind, pairs in RESIDUAL_PAIRS.items()
}


@dataclass(frozen=True)
class Frame4:
    T: np.ndarray
    N: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    kind: FrameKind

    def as_array(self) -> np.ndarray:
        return np.array([self.T, self.N, self.B1, self.B2], dtype=float)

    @classmethod
    def from_array(cls, arr, kind: FrameKind) -> "Frame4":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (4, 4):
            raise FrameError(f"frame array must be 4x4, got {arr.shape}")
        return cls(arr[0].copy(), arr[1].copy(), arr[2].copy(), arr[3].copy(), kind)

    def residuals(self) -> np.ndarray:
        return frame_residuals(self)


def canonical_frame(kind: FrameKind) -> Frame4:
    if kind is FrameKind.PARTIALLY_NULL:
        rows = [(0, 1, 0, 0), (0, 0, 1, 0), (1, 0, 0, 1), (-0.5, 0, 0, 0.5)]
    else:
        rows = [(0, 1, 0, 0), (1, 0, 0, 1), (0, 0, 1, 0), (-0.5, 0, 0, 0.5)]
    return Frame4.from_array(rows, kind)


def _as_frame_array(frame) -> np.ndarray:
    if isinstance(frame, Frame4):
        return frame.as_array()
    return np.asarray(frame, dtype=float)


def frame_residuals(frame, kind: Optional[FrameKind] = None) -> np.ndarray:
    """Measured minus required inner products, ten per frame.

    Accepts a ``Frame4`` or an array of frames ``(..., 4, 4)`` together with
    its kind.  The entry order follows ``RESIDUAL_LABELS[kind]``.
    """
    if isinstance(frame, Frame4):
        kind = frame.kind
    if kind is None:
        raise TypeError("kind is required for raw frame arrays")
    f = _as_frame_array(frame)
    gram = np.einsum("...ia,ab,...jb->...ij", f, ETA, f) - _GRAM[kind]
    ii, jj = zip(*RESIDUAL_PAIRS[kind])
    return gram[..., list(ii), list(jj)]


def check_curvature_constraints(kind: FrameKind, k, tol: float = FRAME_TOL) -> None:
    k = np.asarray(k, dtype=float)
    if kind is FrameKind.PARTIALLY_NULL:
        if np.any(np.abs(k[..., 2]) > tol):
            raise FrameError("partially null curves need k3 = 0")
    else:
        k1 = k[..., 0]
        if np.any((np.abs(k1) > tol) & (np.abs(k1 - 1.0) > tol)):
            raise FrameError("pseudo null curves need k1 = 0 or k1 = 1")


def frenet_matrix(kind: FrameKind, k) -> np.ndarray:
    """Coefficient matrix ``C`` with ``F' = C @ F`` for curvatures ``k=(k1,k2,k3)``."""
    k = np.asarray(k, dtype=float)
    k1, k2, k3 = k[..., 0], k[..., 1], k[..., 2]
    c = np.zeros(k.shape[:-1] + (4, 4))
    if kind is FrameKind.PARTIALLY_NULL:
        c[..., 0, 1] = k1
        c[..., 1, 0] = -k1
        c[..., 1, 2] = k2
        c[..., 2, 2] = k3
        c[..., 3, 1] = -k2
        c[..., 3, 3] = -k3
    else:
        c[..., 0, 1] = k1
        c[..., 1, 2] = k2
        c[..., 2, 1] = k3
        c[..., 2, 3] = -k2
        c[..., 3, 0] = -k1
        c[..., 3, 2] = -k3
    return c


def frenet_rhs(frame: Frame4, k) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Arclength derivatives ``(T', N', B1', B2')`` of a single frame."""
    k = np.asarray(k, dtype=float)
    check_curvature_constraints(frame.kind, k)
    d = frenet_matrix(frame.kind, k) @ frame.as_array()
    return d[0], d[1], d[2], d[3]


# -- curvature functions -----------------------------------------------------

@dataclass(frozen=True)
class Curvatures:
    """Curvature functions k1, k2, k3 of arclength ``s`` (and optionally ``t``)."""

    k1: ff.Expr
    k2: ff.Expr
    k3: ff.Expr

    @classmethod
    def from_strings(cls, k1="0", k2="0", k3="0") -> "Curvatures":
        return cls(ff.parse(str(k1)), ff.parse(str(k2)), ff.parse(str(k3)))

    def values(self, s, t=0.0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(s.shape, t.shape)
        env = {"s": s, "t": t, "u": s}
        try:
            parts = [ff.evaluate_on(e, shape, **env) for e in (self.k1, self.k2, self.k3)]
        except ff.EvalError as exc:
            raise FrameError(f"curvature evaluation failed: {exc}") from exc
        return np.stack(parts, axis=-1)


CurvatureSource = Union[Curvatures, Callable[[float], np.ndarray]]


def _curvature_fn(curvatures: CurvatureSource, t) -> Callable[[float], np.ndarray]:
    if isinstance(curvatures, Curvatures):
        return lambda s: curvatures.values(s, t)

    def fn(s):
        k = np.asarray(curvatures(s), dtype=float)
        if not np.all(np.isfinite(k)):
            raise FrameError("non-finite curvature value")
        return k

    return fn


# -- null-frame completion ---------------------------------------------------

def _complement(a, b) -> np.ndarray:
    """Basis ``(..., 2, 4)`` of the Minkowski-orthogonal complement of span(a, b)."""
    m = np.stack([a @ ETA, b @ ETA], axis=-2)
    _, _, vh = np.linalg.svd(m)
    return vh[..., 2:, :]


def _gram2(p, q) -> np.ndarray:
    g = np.empty(p.shape[:-1] + (2, 2))
    g[..., 0, 0] = dot(p, p)
    g[..., 0, 1] = g[..., 1, 0] = dot(p, q)
    g[..., 1, 1] = dot(q, q)
    return g


def _null_pair(basis) -> tuple[np.ndarray, np.ndarray]:
    """The two null directions of a Lorentzian plane given by a basis pair."""
    p, q = basis[..., 0, :], basis[..., 1, :]
    w, vecs = np.linalg.eigh(_gram2(p, q))
    e0 = vecs[..., 0, 0, None] * p + vecs[..., 1, 0, None] * q
    e1 = vecs[..., 0, 1, None] * p + vecs[..., 1, 1, None] * q
    if np.any(w[..., 0] >= 0) or np.any(w[..., 1] <= 0):
        raise FrameError("complement plane is not Lorentzian")
    e0 = e0 / np.sqrt(-w[..., 0])[..., None]
    e1 = e1 / np.sqrt(w[..., 1])[..., None]
    return e0 + e1, e0 - e1


def _alignment(n, hint) -> np.ndarray:
    """|<n, hint>| scaled by Euclidean lengths; zero when n is parallel to null hint."""
    return np.abs(dot(n, hint)) / (
        np.linalg.norm(n, axis=-1) * np.linalg.norm(hint, axis=-1) + 1e-300
    )


def _complete_partially_null(T, N, hint):
    """Null pair (B1, B2) orthogonal to T and N, B1 along the hinted direction.

    B1 keeps whatever scale the null direction came with; callers fix it.
    """
    n1, n2 = _null_pair(_complement(T, N))
    pick_first = _alignment(n1, hint) <= _alignment(n2, hint)
    b1 = np.where(pick_first[..., None], n1, n2)
    other = np.where(pick_first[..., None], n2, n1)
    # orient B1 like the hint (Euclidean sense) so B1 never flips sign
    flip = np.einsum("...a,...a->...", b1, hint) < 0
    b1 = np.where(flip[..., None], -b1, b1)
    b2 = other / dot(b1, other)[..., None]
    return b1, b2


def _complete_pseudo_null(T, N, hint):
    """Spacelike unit B1 and null B2 completing (T, N) with N null."""
    basis = _complement(T, N)
    p, q = basis[..., 0, :], basis[..., 1, :]
    w, vecs = np.linalg.eigh(_gram2(p, q))
    spacelike = vecs[..., 0, 1, None] * p + vecs[..., 1, 1, None] * q
    if np.any(w[..., 1] <= 0):
        raise FrameError("no spacelike direction orthogonal to T and N")
    spacelike = spacelike / np.sqrt(w[..., 1])[..., None]
    # strip the component along N (degenerate direction) before fixing the sign
    sign = np.where(dot(spacelike, hint) < 0, -1.0, 1.0)
    base = sign[..., None] * spacelike
    nn = np.einsum("...a,...a->...", N, N)
    c = np.einsum("...a,...a->...", hint - base, N) / nn
    b1 = base + c[..., None] * N
    n1, n2 = _null_pair(_complement(T, b1))
    use_first = np.abs(dot(n1, N)) >= np.abs(dot(n2, N))
    m = np.where(use_first[..., None], n1, n2)
    b2 = m / dot(N, m)[..., None]
    return b1, b2


def _first_component_unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    scale = np.max(np.abs(v), axis=-1, keepdims=True)
    lead_idx = np.argmax(np.abs(v) > 1e-12 * scale, axis=-1)
    lead = np.take_along_axis(v, lead_idx[..., None], axis=-1)
    return v / lead


def project_frame(frames, kind: FrameKind) -> np.ndarray:
    """Nearest frame (in the sense used here) satisfying all metric relations.

    T is normalised, the remaining vectors are rebuilt from the complement of
    span(T, N) using the current B1 as direction and scale reference.
    """
    f = np.array(frames, dtype=float)
    T = f[..., 0, :]
    T = T / norm(T)[..., None]
    if kind is FrameKind.PARTIALLY_NULL:
        N = f[..., 1, :] - dot(f[..., 1, :], T)[..., None] * T
        N = N / norm(N)[..., None]
        b1, _ = _complete_partially_null(T, N, f[..., 2, :])
        b1 = b1 / dot(b1, f[..., 3, :])[..., None]
        _, b2 = _complete_partially_null(T, N, b1)
        b2 = b2 * (1.0 / dot(b1, b2))[..., None]
    else:
        N = f[..., 1, :] - dot(f[..., 1, :], T)[..., None] * T
        b2 = f[..., 3, :] - dot(f[..., 3, :], T)[..., None] * T
        for _ in range(3):
            # Newton-like pull onto the light cone along the current B2
            eps = dot(N, N) / (2.0 * dot(N, b2))
            N = N - eps[..., None] * b2
        b1, b2 = _complete_pseudo_null(T, N, f[..., 2, :])
    return np.stack([T, N, b1, b2], axis=-2)


# -- framed curves -----------------------------------------------------------

@dataclass
class FramedCurve:
    kind: FrameKind
    s: np.ndarray
    positions: np.ndarray
    frames: np.ndarray
    curvatures: np.ndarray
    speed: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.s)

    def frame(self, i: int) -> Frame4:
        return Frame4.from_array(self.frames[i], self.kind)

    def residuals(self) -> np.ndarray:
        return frame_residuals(self.frames, self.kind)

    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals())))

    def to_csv(self, path) -> None:
        header = ["s"]
        for name in ("gamma", "T", "N", "B1", "B2"):
            header += [f"{name}.x{i}" for i in range(1, 5)]
        header += ["k1", "k2", "k3"]
        rows = np.column_stack(
            [self.s, self.positions, self.frames.reshape(len(self.s), 16), self.curvatures]
        )
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format(x, ".17g") for x in row])

    @classmethod
    def from_csv(cls, path, kind: FrameKind) -> "FramedCurve":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(
            kind=kind,
            s=data[:, 0],
            positions=data[:, 1:5],
            frames=data[:, 5:21].reshape(-1, 4, 4),
            curvatures=data[:, 21:24],
        )


def synthesize(kind: FrameKind, kfun, frame0, p0, s0: float, n: int, h: float,
               project: bool = False):
    """RK4 integration of position and frame over ``n`` arclength steps.

    ``frame0`` is ``(..., 4, 4)`` and ``p0`` is ``(..., 4)``; ``kfun(s)``
    returns curvatures broadcastable to ``(..., 3)``.  Returns positions
    ``(..., n+1, 4)`` and frames ``(..., n+1, 4, 4)``.
    """
    f = np.array(frame0, dtype=float)
    p = np.array(p0, dtype=float)
    batch = f.shape[:-2]
    positions = np.empty(batch + (n + 1, 4))
    frames = np.empty(batch + (n + 1, 4, 4))
    positions[..., 0, :] = p
    frames[..., 0, :, :] = f

    def rhs(s, f_):
        k = kfun(s)
        check_curvature_constraints(kind, k)
        return frenet_matrix(kind, k) @ f_

    for i in range(n):
        s = s0 + i * h
        a1 = rhs(s, f)
        a2 = rhs(s + 0.5 * h, f + 0.5 * h * a1)
        a3 = rhs(s + 0.5 * h, f + 0.5 * h * a2)
        a4 = rhs(s + h, f + h * a3)
        # dp/ds = T, so the position stages reuse the frame stages' T rows
        p = p + (h / 6.0) * (
            f[..., 0, :]
            + 2.0 * (f[..., 0, :] + 0.5 * h * a1[..., 0, :])
            + 2.0 * (f[..., 0, :] + 0.5 * h * a2[..., 0, :])
            + (f[..., 0, :] + h * a3[..., 0, :])
        )
        f = f + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if project:
            f = project_frame(f, kind)
        positions[..., i + 1, :] = p
        frames[..., i + 1, :, :] = f
    return positions, frames


def integrate_curve(
    kind: FrameKind,
    curvatures: CurvatureSource,
    frame0,
    p0,
    s_range=(0.0, 1.0),
    ds: float = 1e-3,
    project: bool = False,
    t: float = 0.0,
) -> FramedCurve:
    """Build a curve from its curvatures by RK4 on the Frenet system.

    The number of steps is ``round((s1 - s0) / ds)``; the step actually used
    is the range divided by that count.  ``project=True`` pulls the frame
    back onto the metric relations after every step.
    """
    if ds <= 0:
        raise FrameError("ds must be positive")
    f0 = _as_frame_array(frame0)
    if isinstance(frame0, Frame4) and frame0.kind is not kind:
        raise FrameError("initial frame kind does not match")
    res = np.max(np.abs(frame_residuals(f0, kind)))
    if res > FRAME_TOL:
        raise FrameError(f"initial frame violates metric relations (max residual {res:.3g})")
    p0 = np.asarray(p0, dtype=float)
    s0, s1 = float(s_range[0]), float(s_range[1])
    if s1 < s0:
        raise FrameError("empty arclength range")
    n = int(round((s1 - s0) / ds))
    h = (s1 - s0) / n if n > 0 else 0.0
    kfun = _curvature_fn(curvatures, t)
    positions, frames = synthesize(kind, kfun, f0, p0, s0, n, h, project)
    s = s0 + h * np.arange(n + 1)
    k = np.asarray(kfun(s), dtype=float)
    k = np.broadcast_to(k, (n + 1, 3)).copy()
    return FramedCurve(kind, s, positions, frames, k, np.ones(n + 1))


# -- frames from positions ---------------------------------------------------

def extract_frames(
    positions,
    kind: FrameKind,
    du: float,
    gauge: GaugePolicy = GaugePolicy.REFERENCE_FRAME,
    reference=None,
    u0: float = 0.0,
) -> FramedCurve:
    """Recover Frenet frames and curvatures from sampled positions.

    Derivatives along the curve use five-point stencils divided by the local
    speed.  ``reference`` is a frame array, either one ``(4, 4)`` frame or one
    per sample; it orients the null vectors and, under
    ``GaugePolicy.REFERENCE_FRAME``, fixes the scale of B1 for partially null
    curves through ``<B1, B2_ref> = 1`` at the first sample.  Pseudo null
    frames are fully determined by the curve once signs are chosen.
    """
    P = np.asarray(positions, dtype=float)
    if P.ndim != 2 or P.shape[1] != 4:
        raise FrameError("positions must have shape (n, 4)")
    n = P.shape[0]
    if n < 5:
        raise FrameError("need at least 5 samples for 5-point stencils")
    ref = None if reference is None else _as_frame_array(reference)
    if ref is not None and ref.ndim == 2:
        ref = np.broadcast_to(ref, (n, 4, 4))

    dP = _fd.diff(P, du)
    v = norm(dP)
    if np.any(v < DEGENERACY_K1):
        raise FrameError("null or zero tangent")
    T = dP / v[:, None]
    Ts = _fd.diff(T, du) / v[:, None]

    if kind is FrameKind.PARTIALLY_NULL:
        k1 = norm(Ts)
        if np.any(k1 < DEGENERACY_K1):
            raise FrameError("k1 below degeneracy threshold (straight segment)")
        N = Ts / k1[:, None]
        Ns = _fd.diff(N, du) / v[:, None]
        W = Ns + k1[:, None] * T
        if ref is not None:
            hint = ref[:, 2, :]
        else:
            wn = np.linalg.norm(W, axis=-1)
            if wn.max() < 1e-9:
                hint = np.broadcast_to(canonical_frame(kind).B1, (n, 4))
            else:
                hint = np.broadcast_to(W[int(np.argmax(wn))], (n, 4))
        B1, B2 = _complete_partially_null(T, N, hint)
        if gauge is GaugePolicy.FIRST_COMPONENT_UNIT:
            B1 = _first_component_unit(B1)
        else:
            if ref is not None:
                anchor = B1[0] / dot(B1[0], ref[0, 3])
            else:
                anchor = _first_component_unit(B1[0])
            _, b2_anchor = _complete_partially_null(T[:1], N[:1], anchor[None])
            b2_anchor = b2_anchor[0] / dot(anchor, b2_anchor[0])
            B1 = B1 / dot(B1, b2_anchor)[:, None]
        B2 = B2 / dot(B1, B2)[:, None]
        k2 = dot(Ns, B2)
        k3 = dot(_fd.diff(B1, du) / v[:, None], B2)
    else:
        N = Ts
        if np.max(np.linalg.norm(N, axis=-1)) < DEGENERACY_K1:
            raise FrameError("straight line: pseudo null frame undefined (k1 = 0)")
        k1 = np.ones(n)
        Ns = _fd.diff(N, du) / v[:, None]
        ns_len = np.linalg.norm(Ns, axis=-1)
        fallback = ref[:, 2, :] if ref is not None else np.broadcast_to(
            canonical_frame(kind).B1, (n, 4)
        )
        # third derivatives of positions carry round-off of order eps |P| / du^3
        noise = 1e3 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(P)))) / du ** 3
        strong = ns_len > max(1e-6 * float(ns_len.max()), noise)
        ns_unit = Ns / np.maximum(norm(Ns), 1e-300)[:, None]
        hint = np.where(strong[:, None], ns_unit, fallback)
        if ref is not None:
            flip = strong & (dot(Ns, ref[:, 2, :]) < 0)
            hint = np.where(flip[:, None], -hint, hint)
        B1, B2 = _complete_pseudo_null(T, N, hint)
        k2 = dot(Ns, B1)
        k3 = dot(_fd.diff(B1, du) / v[:, None], B2)

    frames = np.stack([T, N, B1, B2], axis=1)
    u = u0 + du * np.arange(n)
    s = cumulative_simpson(v, x=u, initial=0.0)
    return FramedCurve(kind, s, P.copy(), frames, np.column_stack([k1, k2, k3]), v)
