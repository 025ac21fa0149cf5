"""Curve families gamma(u, t) moving under frame-decomposed velocity fields.

The velocity of a family is written in its own Frenet frame,

    d gamma / dt = c1 T + c2 N + c3 B1 + c4 B2,

with coefficients ``c_i`` called beta for partially null curves and alpha
for pseudo null curves.  Two ways of producing a family are provided:

``position``
    explicit Euler steps of the positions with the velocity built from
    coefficient expressions, frames re-extracted from the positions after
    every step;
``transport``
    every time slice is synthesised from its curvature functions with RK4
    in arclength, starting from a base frame carried by a one-parameter
    Lorentz group.  The family is unit speed by construction and its flow
    coefficients are measured from the positions.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import cumulative_simpson, simpson
from scipy.linalg import expm

from . import _fd
from . import flowfield as ff
from .frames import (
    Curvatures,
    FrameError,
    FrameKind,
    FramedCurve,
    GaugePolicy,
    extract_frames,
    frame_residuals,
    integrate_curve,
    synthesize,
)
from .mink4 import dot, lorentz_generator, norm

SPEED_FLOOR = 1e-9
RESIDUAL_ABORT = 1e-3


class NumericalAbort(RuntimeError):
    """Evolution stopped because the frames stopped satisfying the metric relations."""


# -- flow coefficients -------------------------------------------------------

@dataclass(frozen=True)
class FlowCoefficients:
    """Four coefficient expressions over ``(u, t)``.

    With ``tangent="inextensible"`` the first coefficient is replaced by
    ``c1(u, t) + integral_0^u c2 k1 v du'`` (partially null) or
    ``c1(u, t) + integral_0^u c4 k1 v du'`` (pseudo null), which makes the
    flow inextensible whenever ``c1`` does not depend on ``u``.
    """

    kind: FrameKind
    c1: ff.Expr
    c2: ff.Expr
    c3: ff.Expr
    c4: ff.Expr
    tangent: str = "given"

    def __post_init__(self):
        if self.tangent not in ("given", "inextensible"):
            raise ValueError(f"unknown tangent mode {self.tangent!r}")

    @classmethod
    def from_strings(cls, kind: FrameKind, c1="0", c2="0", c3="0", c4="0",
                     tangent: str = "given") -> "FlowCoefficients":
        return cls(kind, *(ff.parse(str(c)) for c in (c1, c2, c3, c4)), tangent=tangent)

    @classmethod
    def zero(cls, kind: FrameKind) -> "FlowCoefficients":
        return cls.from_strings(kind)

    @property
    def exprs(self) -> tuple:
        return (self.c1, self.c2, self.c3, self.c4)

    def is_zero(self) -> bool:
        return self.tangent == "given" and all(e == ff.ZERO for e in self.exprs)

    def raw_values(self, u, t) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(u.shape, np.shape(t))
        return np.stack([ff.evaluate_on(e, shape, u=u, t=t) for e in self.exprs], axis=-1)

    def resolve(self, u, t, k1, v):
        """Coefficient values on a u-grid plus the exact ``d c1 / du``.

        ``u``, ``k1`` and ``v`` are 1-d arrays over the same samples.
        """
        u = np.asarray(u, dtype=float)
        c = self.raw_values(u, t)
        dc1 = ff.evaluate_on(ff.differentiate(self.c1, "u"), u.shape, u=u, t=t)
        if self.tangent == "inextensible":
            drive = c[:, 1] if self.kind is FrameKind.PARTIALLY_NULL else c[:, 3]
            integrand = drive * k1 * v
            c[:, 0] = c[:, 0] + cumulative_simpson(integrand, x=u, initial=0.0)
            dc1 = dc1 + integrand
        return c, dc1


CoefficientSource = Union[FlowCoefficients, Callable[[int, float, FramedCurve], np.ndarray]]


def flow_velocity(coeffs, frames) -> np.ndarray:
    """``c1 T + c2 N + c3 B1 + c4 B2`` for matching coefficient and frame arrays."""
    return np.einsum("...i,...ia->...a", np.asarray(coeffs, dtype=float), np.asarray(frames))


def frame_components(vectors, frames, kind: FrameKind = None) -> np.ndarray:
    """Coefficients of ``vectors`` in the frame basis (inverse of ``flow_velocity``).

    Solved as a 4x4 linear system, so ``flow_velocity(frame_components(x, F), F)``
    reproduces ``x`` even when ``F`` is slightly off the metric relations.
    """
    F = np.asarray(frames, dtype=float)
    x = np.asarray(vectors, dtype=float)
    return np.linalg.solve(np.swapaxes(F, -1, -2), x[..., None])[..., 0]


def dv_dt_formula(kind: FrameKind, dc1_du, c2, c4, k1, v):
    """Closed-form time derivative of the speed.

    Partially null: ``dc1/du - c2 k1 v``.  Pseudo null: ``dc1/du - c4 k1 v``
    (the usual statement has k1 = 1; k1 = 0 is kept general).
    """
    drive = c2 if kind is FrameKind.PARTIALLY_NULL else c4
    return np.asarray(dc1_du) - np.asarray(drive) * np.asarray(k1) * np.asarray(v)


def inextensibility_defect(kind: FrameKind, dc1_du, c2, c4, k1, v):
    """Zero exactly where the flow preserves the speed."""
    return dv_dt_formula(kind, dc1_du, c2, c4, k1, v)


# -- speed and arclength -----------------------------------------------------

def speeds(positions, du: float) -> np.ndarray:
    """``||d gamma/du||`` along the second-to-last axis of ``positions``."""
    P = np.asarray(positions, dtype=float)
    v = norm(_fd.diff(P, du, axis=P.ndim - 2))
    if np.any(v < SPEED_FLOOR):
        raise FrameError("null or zero tangent: speed below threshold")
    return v


def arclength(v, du: float):
    """Cumulative arclength ``s(u)`` by composite Simpson and the total length."""
    v = np.asarray(v, dtype=float)
    u = du * np.arange(v.shape[-1])
    s = cumulative_simpson(v, x=u, initial=0.0, axis=-1)
    return s, simpson(v, x=u, axis=-1)


def d_ds(field_values, v, du: float) -> np.ndarray:
    """Arclength derivative ``(1/v) d/du`` along the last sample axis.

    ``field_values`` has samples on axis ``v.ndim - 1``; trailing axes
    (vector components) are carried along.
    """
    f = np.asarray(field_values, dtype=float)
    v = np.asarray(v, dtype=float)
    axis = v.ndim - 1
    d = _fd.diff(f, du, axis=axis)
    return d / v.reshape(v.shape + (1,) * (f.ndim - v.ndim))


# -- curve grids -------------------------------------------------------------

_BINARY_MAGIC = b"NFGRID\x00\x01"
_HEADER = struct.Struct("<8sIIIIdddd")
_HEADER_SIZE = 64
_KIND_CODE = {FrameKind.PARTIALLY_NULL: 0, FrameKind.PSEUDO_NULL: 1}


@dataclass
class CurveGrid:
    """A sampled curve family: axis 0 is time, axis 1 is the curve parameter."""

    kind: FrameKind
    u: np.ndarray
    t: np.ndarray
    positions: np.ndarray
    frames: np.ndarray
    curvatures: np.ndarray
    speed: np.ndarray
    coefficients: Optional[np.ndarray] = None
    dc1_du: Optional[np.ndarray] = None
    mode: str = "position"
    meta: dict = field(default_factory=dict)

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.t), len(self.u)

    def slice(self, j: int) -> FramedCurve:
        s, _ = arclength(self.speed[j], self.du)
        return FramedCurve(self.kind, s, self.positions[j], self.frames[j],
                           self.curvatures[j], self.speed[j])

    def total_lengths(self) -> np.ndarray:
        return arclength(self.speed, self.du)[1]

    def arclength_drift(self) -> np.ndarray:
        lengths = self.total_lengths()
        return (lengths - lengths[0]) / lengths[0]

    def max_residual(self) -> float:
        return float(np.max(np.abs(frame_residuals(self.frames, self.kind))))

    # serialisation

    def _rows(self) -> np.ndarray:
        nt, nu = self.shape
        uu, tt = np.meshgrid(self.u, self.t)
        return np.column_stack([
            uu.ravel(), tt.ravel(),
            self.positions.reshape(nt * nu, 4),
            self.frames.reshape(nt * nu, 16),
            self.speed.reshape(nt * nu),
            self.curvatures.reshape(nt * nu, 3),
        ])

    def to_csv(self, path) -> None:
        header = ["u", "t"] + [f"gamma.x{i}" for i in range(1, 5)]
        for name in ("T", "N", "B1", "B2"):
            header += [f"{name}.x{i}" for i in range(1, 5)]
        header += ["v", "k1", "k2", "k3"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in self._rows():
                w.writerow([format(x, ".17g") for x in row])

    def to_binary(self, path) -> None:
        """Fixed-layout little-endian snapshot, see ``docs/formats.md``."""
        nt, nu = self.shape
        head = _HEADER.pack(_BINARY_MAGIC, 1, _KIND_CODE[self.kind], nu, nt,
                            self.du, self.dt, float(self.u[0]), float(self.t[0]))
        with open(path, "wb") as fh:
            fh.write(head.ljust(_HEADER_SIZE, b"\x00"))
            fh.write(self._rows().astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "CurveGrid":
        with open(path, "rb") as fh:
            raw = fh.read()
        magic, version, kind_code, nu, nt, du, dt, u0, t0 = _HEADER.unpack_from(raw)
        if magic != _BINARY_MAGIC or version != 1:
            raise ValueError("not a curve grid snapshot")
        rows = np.frombuffer(raw, dtype="<f8", offset=_HEADER_SIZE).reshape(nt * nu, 26)
        kind = {v: k for k, v in _KIND_CODE.items()}[kind_code]
        return cls(
            kind=kind,
            u=rows[:nu, 0].copy(),
            t=rows[::nu, 1].copy(),
            positions=rows[:, 2:6].reshape(nt, nu, 4).copy(),
            frames=rows[:, 6:22].reshape(nt, nu, 4, 4).copy(),
            speed=rows[:, 22].reshape(nt, nu).copy(),
            curvatures=rows[:, 23:26].reshape(nt, nu, 3).copy(),
        )


def speed(grid: CurveGrid, i: int, j: int) -> float:
    """Speed at node (u_i, t_j) from the stored positions."""
    return float(speeds(grid.positions[j], grid.du)[i])


def arclength_time_derivative(grid: CurveGrid, j: int, mode: str = "fd") -> np.ndarray:
    """``d s(u, t) / dt`` at time slice ``j`` for every ``u``.

    ``mode="fd"`` differentiates the measured arclength across stored time
    slices; ``mode="formula"`` integrates the closed-form speed derivative.
    """
    if mode == "fd":
        if len(grid.t) < 3:
            raise ValueError("need at least 3 time slices")
        s, _ = arclength(grid.speed, grid.du)
        diff = _fd.diff if len(grid.t) >= 5 else _fd.diff3
        return diff(s, grid.dt, axis=0)[j]
    if mode == "formula":
        if grid.coefficients is None or grid.dc1_du is None:
            raise ValueError("grid carries no coefficient data")
        c = grid.coefficients[j]
        rate = dv_dt_formula(grid.kind, grid.dc1_du[j], c[:, 1], c[:, 3],
                             grid.curvatures[j, :, 0], grid.speed[j])
        return cumulative_simpson(rate, x=grid.u, initial=0.0)
    raise ValueError(f"unknown mode {mode!r}")


# -- evolution ---------------------------------------------------------------

def _initial_curve(kind, curvatures, frame0, p0, length, du) -> FramedCurve:
    return integrate_curve(kind, curvatures, frame0, p0, (0.0, length), du, t=0.0)


def evolve_position(
    kind: FrameKind,
    curvatures: Curvatures,
    frame0,
    p0,
    coeffs: CoefficientSource,
    length: float,
    du: float,
    dt: float,
    steps: int,
    gauge: GaugePolicy = GaugePolicy.REFERENCE_FRAME,
    initial: Optional[FramedCurve] = None,
) -> CurveGrid:
    """Explicit Euler in time, frames re-extracted from positions each step."""
    if dt <= 0 or du <= 0:
        raise ValueError("du and dt must be positive")
    start = initial or _initial_curve(kind, curvatures, frame0, p0, length, du)
    du = float(start.s[1] - start.s[0]) if initial is None else du
    nu = len(start.s)
    u = du * np.arange(nu)
    t = dt * np.arange(steps + 1)
    P = np.empty((steps + 1, nu, 4))
    F = np.empty((steps + 1, nu, 4, 4))
    K = np.empty((steps + 1, nu, 3))
    V = np.empty((steps + 1, nu))
    C = np.empty((steps + 1, nu, 4))
    D = np.empty((steps + 1, nu))

    current = extract_frames(start.positions, kind, du, gauge, reference=start.frames)
    for j in range(steps + 1):
        res = float(np.max(np.abs(current.residuals())))
        if not np.isfinite(res) or res > RESIDUAL_ABORT:
            raise NumericalAbort(
                f"frame residual {res:.3g} exceeds {RESIDUAL_ABORT:g} at t={t[j]:.6g}"
            )
        P[j], F[j], K[j], V[j] = current.positions, current.frames, current.curvatures, current.speed
        if isinstance(coeffs, FlowCoefficients):
            C[j], D[j] = coeffs.resolve(u, t[j], K[j, :, 0], V[j])
        else:
            C[j] = coeffs(j, t[j], current)
            D[j] = _fd.diff(C[j, :, 0], du)
        if j == steps:
            break
        nxt = P[j] + dt * flow_velocity(C[j], F[j])
        try:
            current = extract_frames(nxt, kind, du, gauge, reference=F[j])
        except FrameError as exc:
            raise NumericalAbort(f"frame extraction failed at t={t[j + 1]:.6g}: {exc}") from exc
    return CurveGrid(kind, u, t, P, F, K, V, C, D, mode="position")


def lorentz_path(generator, times) -> np.ndarray:
    """``exp(t W)`` for every time, shape ``(len(times), 4, 4)``."""
    w = lorentz_generator(generator) if np.shape(generator) == (6,) else np.asarray(generator)
    return np.stack([expm(float(ti) * w) for ti in np.asarray(times, dtype=float)])


def evolve_transport(
    kind: FrameKind,
    curvatures: Curvatures,
    frame0,
    p0,
    length: float,
    du: float,
    dt: float,
    steps: int,
    generator=(0.0,) * 6,
    drift=(0.0,) * 4,
    t0: float = 0.0,
) -> CurveGrid:
    """Synthesize every time slice from curvatures ``k(s, t)``.

    The base frame at ``u = 0`` is moved by ``exp(t W)`` with ``W`` built from
    the six ``generator`` numbers; the base point moves as
    ``exp(t W) p0 + t * drift``.  Flow coefficients are the frame components
    of the five-point time derivative of the positions.
    """
    if dt <= 0 or du <= 0:
        raise ValueError("du and dt must be positive")
    n = int(round(length / du))
    h = length / n
    t = t0 + dt * np.arange(steps + 1)
    lam = lorentz_path(generator, t)
    f0 = np.asarray(frame0.as_array() if hasattr(frame0, "as_array") else frame0, dtype=float)
    frames0 = np.einsum("jab,ib->jia", lam, f0)
    base = np.einsum("jab,b->ja", lam, np.asarray(p0, dtype=float))
    base = base + t[:, None] * np.asarray(drift, dtype=float)[None, :]
    tt = t[:, None]
    static = not np.any(generator) and not np.any(drift) and not any(
        "t" in ff.variables(e) for e in (curvatures.k1, curvatures.k2, curvatures.k3))
    if static:
        # every slice is the same curve; build it once so the family is exactly constant
        P, F = synthesize(kind, lambda s: curvatures.values(s, t[0]), frames0[0], base[0], 0.0, n, h)
        P = np.broadcast_to(P, (len(t),) + P.shape).copy()
        F = np.broadcast_to(F, (len(t),) + F.shape).copy()
    else:
        P, F = synthesize(kind, lambda s: curvatures.values(s, t), frames0, base, 0.0, n, h)
    u = h * np.arange(n + 1)
    K = curvatures.values(u[None, :], tt)
    V = speeds(P, h)
    grid = CurveGrid(kind, u, t, P, F, K, V, mode="transport")
    if steps + 1 >= 3:
        vel = (_fd.diff if steps + 1 >= 5 else _fd.diff3)(P, dt, axis=0)
        grid.coefficients = frame_components(vel, F, kind)
        grid.dc1_du = _fd.diff(grid.coefficients[..., 0], h, axis=1)
    grid.meta.update(generator=list(map(float, generator)), drift=list(map(float, drift)))
    return grid


def evolve(scenario, mode: Optional[str] = None, du: Optional[float] = None,
           dt: Optional[float] = None) -> CurveGrid:
    """Run a scenario (see ``nullflow.scenario.Scenario``) in the chosen mode."""
    mode = mode or scenario.mode
    du = du or scenario.du
    dt = dt or scenario.dt
    steps = int(round(scenario.duration / dt))
    if mode == "position":
        return evolve_position(scenario.kind, scenario.curvatures, scenario.frame0,
                               scenario.origin, scenario.flow, scenario.length,
                               du, dt, steps, scenario.gauge)
    if mode == "transport":
        return evolve_transport(scenario.kind, scenario.curvatures, scenario.frame0,
                                scenario.origin, scenario.length, du, dt, steps,
                                scenario.generator, scenario.drift)
    raise ValueError(f"unknown evolution mode {mode!r}")
