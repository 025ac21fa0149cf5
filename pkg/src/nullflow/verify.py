"""Finite-difference verification of the flow identities.

Every identity is written as a residual field on a curve grid.  A check
evaluates that residual on a sequence of grids refined by halving both
``du`` and ``dt``, samples it on the nodes shared by all refinements, and
estimates the convergence order from the max-abs residuals.

Identity names are stable strings such as ``"pn.frame.B2_t"`` or
``"psn.id4"``; where a displayed formula is disputed, each candidate is a
``Variant`` with a tag and a flag saying whether it is the stated form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _fd
from .flow import (
    CurveGrid,
    FlowCoefficients,
    arclength,
    d_ds,
    evolve_position,
    evolve_transport,
    flow_velocity,
    frame_components,
    speeds,
)
from .frames import Curvatures, FrameKind, frenet_matrix, integrate_curve
from .mink4 import dot

DEFAULT_TOL = 1e-4
DEFAULT_MIN_ORDER = 0.8
GUARD_REL = 1e-6
GUARD_SUPPORT = 0.5
ROUNDOFF_FLOOR = 1e-11
EDGE_MARGIN = 2
COARSE_DU = 0.05

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


# -- convergence -------------------------------------------------------------

def convergence_order(residuals: Sequence[float]) -> float:
    """Mean of ``log2(r_k / r_{k+1})`` over consecutive refinements.

    Returns ``inf`` when the finest residual is exactly zero, which reports
    as "exact".  Non-converging sequences give an order of zero or less.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2:
        raise ValueError("need at least two residuals")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite and non-negative")
    if r[-1] == 0.0:
        return math.inf
    r = np.maximum(r, np.finfo(float).tiny)
    return float(np.mean(np.log2(r[:-1] / r[1:])))


def format_order(order: Optional[float]) -> str:
    if order is None:
        return "-"
    return "exact" if math.isinf(order) and order > 0 else f"{order:.3f}"


# -- reports -----------------------------------------------------------------

@dataclass
class ResidualReport:
    name: str
    kind: str
    variant: Optional[str] = None
    stated: Optional[bool] = None
    grids: list = field(default_factory=list)
    max_abs: list = field(default_factory=list)
    rms: list = field(default_factory=list)
    scale: float = 1.0
    order: Optional[float] = None
    tolerance: float = DEFAULT_TOL
    min_order: float = DEFAULT_MIN_ORDER
    status: str = FAIL
    note: str = ""
    selected: bool = True

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        order = self.order
        if order is not None and math.isinf(order):
            order = "exact"
        return {
            "name": self.name,
            "kind": self.kind,
            "variant": self.variant,
            "stated": self.stated,
            "selected": self.selected,
            "grids": self.grids,
            "max_abs": self.max_abs,
            "rms": self.rms,
            "scale": self.scale,
            "order": order,
            "tolerance": self.tolerance,
            "min_order": self.min_order,
            "status": self.status,
            "pass": self.passed,
            "note": self.note,
        }


def reports_to_json(reports: Iterable[ResidualReport], **extra) -> str:
    payload = dict(extra)
    payload["reports"] = [r.to_dict() for r in reports]
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def format_table(reports: Iterable[ResidualReport]) -> str:
    """Aligned plain-text table, one row per report."""
    rows = [("identity", "variant", "finest max|r|", "scale", "order", "status")]
    for r in reports:
        finest = f"{r.max_abs[-1]:.3e}" if r.max_abs else "-"
        variant = (r.variant or "") + (" [stated]" if r.stated else "")
        status = r.status + ("" if r.selected else " (not selected)")
        rows.append((r.name, variant, finest, f"{r.scale:.3g}", format_order(r.order), status))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# -- grid quantities ---------------------------------------------------------

@dataclass(frozen=True)
class PsiCoefficients:
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: np.ndarray


def _dt(a, grid: CurveGrid):
    n = len(grid.t)
    if n < 3:
        raise ValueError("need at least 3 time slices")
    return (_fd.diff if n >= 5 else _fd.diff3)(a, grid.dt, axis=0)


def extract_psi(grid: CurveGrid) -> PsiCoefficients:
    """``<N_t, B1>``, ``<N_t, B2>``, ``<B1_t, B2>`` from stored frames."""
    Ft = _dt(grid.frames, grid)
    F = grid.frames
    return PsiCoefficients(
        dot(Ft[..., 1, :], F[..., 2, :]),
        dot(Ft[..., 1, :], F[..., 3, :]),
        dot(Ft[..., 2, :], F[..., 3, :]),
    )


class GridFields:
    """Derived quantities on a grid, computed lazily and cached."""

    def __init__(self, grid: CurveGrid):
        if grid.coefficients is None:
            raise ValueError("grid has no flow coefficients")
        self.grid = grid
        self.kind = grid.kind
        F = grid.frames
        self.T, self.N, self.B1, self.B2 = (F[..., i, :] for i in range(4))
        self.k1, self.k2, self.k3 = (grid.curvatures[..., i] for i in range(3))
        self.c = [grid.coefficients[..., i] for i in range(4)]
        self.v = grid.speed
        self.Ft = _dt(F, grid)
        self.Tt, self.Nt, self.B1t, self.B2t = (self.Ft[..., i, :] for i in range(4))
        psi = extract_psi(grid)
        self.psi1, self.psi2, self.psi3 = psi.psi1, psi.psi2, psi.psi3

    def ds(self, a):
        return d_ds(a, self.v, self.grid.du)

    def dt(self, a):
        return _dt(a, self.grid)

    def cs(self, i):
        return self.ds(self.c[i])

    def css(self, i):
        return self.ds(self.ds(self.c[i]))


def _vec(coeff, vec):
    return np.asarray(coeff)[..., None] * vec


# -- identity catalogue ------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    tag: Optional[str]
    stated: Optional[bool]
    fn: Callable[[GridFields], tuple]
    guard: Optional[Callable[[GridFields], np.ndarray]] = None


@dataclass(frozen=True)
class Identity:
    name: str
    kind: FrameKind
    variants: tuple
    recomputed: Optional[str] = None
    group: str = "identity"


def _pn_abc(g: GridFields):
    b1, b2, b3, b4 = g.c
    a = g.cs(1) + b1 * g.k1 - b4 * g.k2
    b = g.cs(2) + b2 * g.k2
    c = g.cs(3)
    return a, b, c


def _psn_abc(g: GridFields):
    a1, a2, a3, a4 = g.c
    a = a1 * g.k1 + g.cs(1) + a3 * g.k3
    b = a2 * g.k2 + g.cs(2) - a4 * g.k3
    c = g.cs(3) - a3 * g.k2
    return a, b, c


def _res(lhs, *terms):
    """Residual ``lhs - sum(terms)`` with its magnitude scale."""
    rhs = sum(terms) if terms else 0.0
    scale = max([float(np.max(np.abs(lhs)))] + [float(np.max(np.abs(t))) for t in terms] + [0.0])
    return np.asarray(lhs - rhs), scale


# partially null

def _pn_Tt(g):
    a, b, c = _pn_abc(g)
    return _res(g.Tt, _vec(a, g.N), _vec(b, g.B1), _vec(c, g.B2))


def _pn_Nt(g):
    a, _, _ = _pn_abc(g)
    return _res(g.Nt, _vec(-a, g.T), _vec(g.psi2, g.B1), _vec(g.psi1, g.B2))


def _pn_B1t(g):
    _, _, c = _pn_abc(g)
    return _res(g.B1t, _vec(-c, g.T), _vec(-g.psi1, g.N), _vec(g.psi3, g.B1))


def _pn_B2t(sign):
    def fn(g):
        _, b, _ = _pn_abc(g)
        return _res(g.B2t, _vec(-b, g.T), _vec(-g.psi2, g.N), _vec(sign * g.psi3, g.B2))
    return fn


def _pn_k1t(g):
    b1, b2, b3, b4 = g.c
    return _res(g.dt(g.k1), g.css(1), g.ds(b1 * g.k1), -g.ds(b4 * g.k2), -g.cs(3) * g.k2)


def _pn_psi1(g):
    return _res(g.k1, g.css(3) / g.psi1)


def _pn_psi2(g):
    b1, b2, b3, b4 = g.c
    lhs = g.css(2) + g.ds(b2 * g.k2) + g.cs(1) * g.k2 + b1 * g.k1 * g.k2 - b4 * g.k2 ** 2
    return _res(lhs, g.psi2 * g.k1)


def _pn_k1_from_psi1(g):
    return _res(g.k1, -g.ds(g.psi1) / g.cs(3))


def _pn_k2_from_psi3(g):
    return _res(g.k2, g.ds(g.psi3) / g.psi1)


def _pn_k2t(sign_b, sign_p):
    def fn(g):
        b1, b2, b3, b4 = g.c
        return _res(g.dt(g.k2), g.ds(g.psi2), g.cs(2) * g.k1,
                    sign_b * b2 * g.k1 * g.k2, sign_p * g.psi3 * g.k2)
    return fn


def _guard_psi1(g):
    return g.psi1


def _guard_beta4_s(g):
    return g.cs(3)


# pseudo null

def _psn_Tt(g):
    a, b, c = _psn_abc(g)
    return _res(g.Tt, _vec(a, g.N), _vec(b, g.B1), _vec(c, g.B2))


def _psn_Nt(g):
    _, _, c = _psn_abc(g)
    return _res(g.Nt, _vec(-c, g.T), _vec(g.psi2, g.N), _vec(g.psi1, g.B1))


def _psn_B1t(g):
    _, b, _ = _psn_abc(g)
    return _res(g.B1t, _vec(-b, g.T), _vec(g.psi3, g.N), _vec(-g.psi1, g.B2))


def _psn_B2t(g):
    a, _, _ = _psn_abc(g)
    return _res(g.B2t, _vec(-a, g.T), _vec(-g.psi3, g.B1), _vec(-g.psi2, g.B2))


def _psn_id1(g):
    a1, a2, a3, a4 = g.c
    k2, k3 = g.k2, g.k3
    lhs = (g.css(2) + g.ds(a2 * k2) - g.ds(a4 * k3) - g.cs(3) * k3 + g.cs(1) * k2
           + a1 * k2 + 2.0 * a3 * k3 * k2)
    return _res(lhs, g.psi1)


def _psn_id2(g):
    a1, a2, a3, a4 = g.c
    k2, k3 = g.k2, g.k3
    lhs = (g.css(1) + g.cs(0) + g.ds(a3 * k3) + g.cs(2) * k3 + a2 * k2 * k3
           - a4 * k3 ** 2)
    return _res(lhs, g.psi2)


def _psn_id3(power):
    def fn(g):
        a1, a2, a3, a4 = g.c
        k2, k3 = g.k2, g.k3
        return _res(g.css(3), g.ds(a3 * k2), g.cs(2) * k2, a2 * k2 ** power, -a4 * k2 * k3)
    return fn


def _psn_id4(reading):
    def fn(g):
        a1, a2, a3, a4 = g.c
        lhs = g.ds(g.k3) if reading == "s" else g.dt(g.k3)
        return _res(lhs, g.ds(g.psi3), -g.cs(2), -a2 * g.k2, a4 * g.k3, -g.psi2 * g.k3)
    return fn


def _psn_id5(reading):
    def fn(g):
        lhs = g.ds(g.k2) if reading == "s" else g.dt(g.k2)
        return _res(lhs, g.ds(g.psi1), g.psi2 * g.k2)
    return fn


def _psn_id6(stated):
    def fn(g):
        a1, a2, a3, a4 = g.c
        last = g.psi2 * g.k3 if stated else g.psi3 * g.k2
        return _res(g.ds(g.psi2), g.cs(3), -a3 * g.k2, -g.psi1 * g.k3, last)
    return fn


# shared

def _mixed(row):
    def fn(g):
        F = g.grid.frames
        K = frenet_matrix(g.kind, g.grid.curvatures)
        Fs = np.einsum("...ij,...ja->...ia", K, F)
        return _res(g.ds(g.Ft[..., row, :]), g.dt(Fs[..., row, :]))
    return fn


def _metric(pair_fn):
    def fn(g):
        return _res(*pair_fn(g))
    return fn


def _speed_rate(g):
    drive = g.c[1] if g.kind is FrameKind.PARTIALLY_NULL else g.c[3]
    # coefficients are measured in s; d c1/du = v d c1/ds
    return _res(g.dt(g.v), g.v * g.cs(0), -drive * g.k1 * g.v)


def _one(fn, guard=None):
    return (Variant(None, None, fn, guard),)


PN, PSN = FrameKind.PARTIALLY_NULL, FrameKind.PSEUDO_NULL

_PN_METRIC = [
    ("pn.metric.N_Nt", lambda g: (dot(g.N, g.Nt),)),
    ("pn.metric.B1_B1t", lambda g: (dot(g.B1, g.B1t),)),
    ("pn.metric.B2_B2t", lambda g: (dot(g.B2, g.B2t),)),
    ("pn.metric.T_Nt", lambda g: (dot(g.T, g.Nt), -_pn_abc(g)[0])),
    ("pn.metric.N_B1t", lambda g: (dot(g.N, g.B1t), -g.psi1)),
    ("pn.metric.B1_B2t", lambda g: (dot(g.B1, g.B2t), -g.psi3)),
]

_PSN_METRIC = [
    ("psn.metric.N_Nt", lambda g: (dot(g.N, g.Nt),)),
    ("psn.metric.B1_B1t", lambda g: (dot(g.B1, g.B1t),)),
    ("psn.metric.B2_B2t", lambda g: (dot(g.B2, g.B2t),)),
    ("psn.metric.T_Nt", lambda g: (dot(g.T, g.Nt), -_psn_abc(g)[2])),
    ("psn.metric.N_B1t", lambda g: (dot(g.N, g.B1t), -g.psi1)),
    ("psn.metric.B1_B2t", lambda g: (dot(g.B1, g.B2t), -g.psi3)),
]


def _catalogue() -> dict:
    ids = []
    for kind, prefix in ((PN, "pn"), (PSN, "psn")):
        for row, name in enumerate(("T", "N", "B1", "B2")):
            ids.append(Identity(f"{prefix}.mixed.{name}", kind, _one(_mixed(row)), group="backbone"))
        ids.append(Identity(f"{prefix}.speed_rate", kind, _one(_speed_rate), group="speed"))
    for name, pf in _PN_METRIC:
        ids.append(Identity(name, PN, _one(_metric(pf)), group="metric"))
    for name, pf in _PSN_METRIC:
        ids.append(Identity(name, PSN, _one(_metric(pf)), group="metric"))

    ids += [
        Identity("pn.frame.T_t", PN, _one(_pn_Tt), group="frame"),
        Identity("pn.frame.N_t", PN, _one(_pn_Nt), group="frame"),
        Identity("pn.frame.B1_t", PN, _one(_pn_B1t), group="frame"),
        Identity("pn.frame.B2_t", PN, (
            Variant("+psi3*B2", True, _pn_B2t(+1.0)),
            Variant("-psi3*B2", False, _pn_B2t(-1.0)),
        ), recomputed="-psi3*B2", group="frame"),
        Identity("pn.k1_t", PN, _one(_pn_k1t), group="curvature"),
        Identity("pn.k1_psi1", PN, _one(_pn_psi1, _guard_psi1), group="curvature"),
        Identity("pn.k1_psi2", PN, _one(_pn_psi2), group="curvature"),
        Identity("pn.k1_from_psi1_s", PN, _one(_pn_k1_from_psi1, _guard_beta4_s), group="curvature"),
        Identity("pn.k2_from_psi3_s", PN, _one(_pn_k2_from_psi3, _guard_psi1), group="curvature"),
        Identity("pn.k2_t", PN, tuple(
            Variant(f"{'+' if sb > 0 else '-'}b2k1k2 {'+' if sp > 0 else '-'}psi3k2",
                    sb < 0 and sp < 0, _pn_k2t(sb, sp))
            for sb in (-1.0, 1.0) for sp in (-1.0, 1.0)
        ), recomputed="+b2k1k2 -psi3k2", group="curvature"),

        Identity("psn.frame.T_t", PSN, _one(_psn_Tt), group="frame"),
        Identity("psn.frame.N_t", PSN, _one(_psn_Nt), group="frame"),
        Identity("psn.frame.B1_t", PSN, _one(_psn_B1t), group="frame"),
        Identity("psn.frame.B2_t", PSN, _one(_psn_B2t), group="frame"),
        Identity("psn.id1", PSN, _one(_psn_id1), group="curvature"),
        Identity("psn.id2", PSN, _one(_psn_id2), group="curvature"),
        Identity("psn.id3", PSN, (
            Variant("-a2*k2", True, _psn_id3(1)),
            Variant("-a2*k2^2", False, _psn_id3(2)),
        ), recomputed="-a2*k2^2", group="curvature"),
        Identity("psn.id4", PSN, (
            Variant("d/ds k3", True, _psn_id4("s")),
            Variant("d/dt k3", False, _psn_id4("t")),
        ), recomputed="d/dt k3", group="curvature"),
        Identity("psn.id5", PSN, (
            Variant("d/ds k2", True, _psn_id5("s")),
            Variant("d/dt k2", False, _psn_id5("t")),
        ), recomputed="d/dt k2", group="curvature"),
        Identity("psn.id6", PSN, (
            Variant("+psi2*k3", True, _psn_id6(True)),
            Variant("+psi3*k2", False, _psn_id6(False)),
        ), recomputed="+psi3*k2", group="curvature"),
    ]
    return {i.name: i for i in ids}


IDENTITIES = _catalogue()

AUDITED = ("pn.frame.B2_t", "pn.k2_t", "psn.id4", "psn.id5")
AUDIT_EXTRA = ("psn.id3", "psn.id6")

CHECK_GROUPS = {
    "frame_evolution_pn": ("pn.frame.T_t", "pn.frame.N_t", "pn.frame.B1_t", "pn.frame.B2_t"),
    "k1_evolution": ("pn.k1_t",),
    "psi_components_pn": ("pn.k1_psi1", "pn.k1_psi2"),
    "psi_quotients_pn": ("pn.k1_from_psi1_s", "pn.k2_from_psi3_s"),
    "k2_evolution": ("pn.k2_t",),
    "system_psn": ("psn.id1", "psn.id2", "psn.id3", "psn.id4", "psn.id5", "psn.id6"),
}


def identities_for(kind: FrameKind) -> list[Identity]:
    return [i for i in IDENTITIES.values() if i.kind is kind]


# -- evaluation across refinements -------------------------------------------

def _common_nodes(grid: CurveGrid, level: int, margin: int = EDGE_MARGIN):
    """Indices of the nodes of the coarsest grid, seen from refinement ``level``."""
    step = 2 ** level
    nt, nu = grid.shape
    ct, cu = (nt - 1) // step, (nu - 1) // step
    it = np.arange(margin, ct - margin + 1) * step
    iu = np.arange(margin, cu - margin + 1) * step
    if it.size == 0 or iu.size == 0:
        raise ValueError("grid too small for the evaluation margin")
    return np.ix_(it, iu)


def _roundoff(grid: CurveGrid) -> float:
    """Round-off level of a second s-derivative of a t-derivative of positions."""
    scale = max(1.0, float(np.max(np.abs(grid.positions))))
    dt = grid.dt or 1.0
    return 10.0 * np.finfo(float).eps * scale / (dt * grid.du ** 2)


def evaluate_identity(
    identity: Identity,
    fields: Sequence[GridFields],
    tolerance: float = DEFAULT_TOL,
    min_order: float = DEFAULT_MIN_ORDER,
    variant_choice: str = "recomputed",
) -> list[ResidualReport]:
    """One report per variant of ``identity`` over the refinement sequence."""
    reports = []
    for var in identity.variants:
        rep = ResidualReport(identity.name, identity.kind.value, var.tag, var.stated,
                             tolerance=tolerance, min_order=min_order)
        if var.tag is not None:
            want = identity.recomputed if variant_choice == "recomputed" else None
            rep.selected = (var.tag == want) if want else bool(var.stated)
        notes = []
        scale = 0.0
        for level, g in enumerate(fields):
            idx = _common_nodes(g.grid, level)
            with np.errstate(divide="ignore", invalid="ignore"):
                res, sc = var.fn(g)
            res = np.asarray(res)[idx]
            mask = np.ones(res.shape[:2], dtype=bool)
            if var.guard is not None:
                den = np.asarray(var.guard(g))[idx]
                ref = float(np.max(np.abs(den)))
                mask = np.abs(den) >= GUARD_REL * max(ref, 1e-300)
                if ref == 0.0 or mask.mean() < GUARD_SUPPORT:
                    notes.append(f"insufficient support at level {level}")
                    mask[:] = False
            if not mask.any():
                rep.max_abs.append(float("nan"))
                rep.rms.append(float("nan"))
            else:
                r = res[mask]
                rep.max_abs.append(float(np.max(np.abs(r))))
                rep.rms.append(float(np.sqrt(np.mean(r ** 2))))
            scale = sc
            rep.grids.append({"du": g.grid.du, "dt": g.grid.dt, "ds": g.grid.du})
        rep.scale = scale
        finite = [x for x in rep.max_abs if np.isfinite(x)]
        if notes or len(finite) < len(rep.max_abs):
            rep.status = SKIPPED
            rep.note = "; ".join(notes) or "non-finite residual"
        else:
            rep.order = convergence_order(rep.max_abs)
            ref = max(1.0, scale)
            finest = fields[-1].grid
            floor = max(ROUNDOFF_FLOOR, _roundoff(finest)) * ref
            if max(rep.max_abs) <= floor:
                rep.order = math.inf
                rep.note = "residual at round-off level"
            ok_tol = rep.max_abs[-1] <= tolerance * ref
            ok_order = rep.order >= min_order
            rep.status = PASS if ok_tol and ok_order else FAIL
        reports.append(rep)
    return reports


def evaluate_all(
    grids: Sequence[CurveGrid],
    names: Optional[Iterable[str]] = None,
    tolerance: float = DEFAULT_TOL,
    min_order: float = DEFAULT_MIN_ORDER,
    variant_choice: str = "recomputed",
) -> list[ResidualReport]:
    kind = grids[0].kind
    fields = [GridFields(g) for g in grids]
    chosen = identities_for(kind) if names is None else [IDENTITIES[n] for n in names]
    out = []
    for ident in chosen:
        if ident.kind is not kind:
            raise ValueError(f"{ident.name} does not apply to {kind.value} grids")
        out += evaluate_identity(ident, fields, tolerance, min_order, variant_choice)
    return out


# -- grids for verification ---------------------------------------------------

@dataclass
class TransportSetup:
    """Everything needed to build a family of transport grids."""

    kind: FrameKind
    curvatures: Curvatures
    frame0: object
    origin: np.ndarray
    length: float
    duration: float
    du: float
    dt: float
    generator: tuple = (0.0,) * 6
    drift: tuple = (0.0,) * 4
    label: str = ""

    def grid(self, level: int = 0) -> CurveGrid:
        du = self.du / 2 ** level
        dt = self.dt / 2 ** level
        steps = int(round(self.duration / dt))
        return evolve_transport(self.kind, self.curvatures, self.frame0, self.origin,
                                self.length, du, dt, steps, self.generator, self.drift)

    def grids(self, levels: int = 3) -> list[CurveGrid]:
        return [self.grid(i) for i in range(levels)]


def _check(setup: TransportSetup, names, levels=3, **kw) -> list[ResidualReport]:
    return evaluate_all(setup.grids(levels), names, **kw)


def check_frame_evolution_pn(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["frame_evolution_pn"], levels, **kw)


def check_k1_evolution(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["k1_evolution"], levels, **kw)


def check_psi_components_pn(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["psi_components_pn"], levels, **kw)


def check_psi_quotients_pn(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["psi_quotients_pn"], levels, **kw)


def check_k2_evolution(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["k2_evolution"], levels, **kw)


def check_system_psn(setup, levels=3, **kw):
    return _check(setup, CHECK_GROUPS["system_psn"], levels, **kw)


def check_backbone(setup, levels=3, **kw):
    prefix = "pn" if setup.kind is PN else "psn"
    names = [f"{prefix}.mixed.{n}" for n in ("T", "N", "B1", "B2")]
    return _check(setup, names, levels, **kw)


# -- speed-rate harness ------------------------------------------------------

def speed_rate_residual(kind: FrameKind, curvatures: Curvatures, frame0, origin,
                        coeffs: FlowCoefficients, length: float, du: float,
                        h: float = 1e-5, t0: float = 0.0) -> np.ndarray:
    """Measured minus closed-form ``dv/dt`` under a symmetric variation.

    The curve at time ``t0`` is synthesised from its curvatures; positions
    ``gamma +- h V`` give ``dv/dt`` by a central difference in time and five
    point stencils in ``u``.  The closed form uses the exact ``d c1/du``.
    """
    curve = integrate_curve(kind, curvatures, frame0, origin, (0.0, length), du, t=t0)
    u = curve.s
    step = float(u[1] - u[0])
    c, dc1 = coeffs.resolve(u, t0, curve.curvatures[:, 0], curve.speed)
    V = flow_velocity(c, curve.frames)
    v_plus = speeds(curve.positions + h * V, step)
    v_minus = speeds(curve.positions - h * V, step)
    measured = (v_plus - v_minus) / (2.0 * h)
    drive = c[:, 1] if kind is PN else c[:, 3]
    formula = dc1 - drive * curve.curvatures[:, 0] * curve.speed
    return measured - formula


def check_speed_rate(kind, curvatures, frame0, origin, coeffs, length, du,
                     levels=3, h=1e-5, tolerance=1e-5, min_order=1.5,
                     name=None) -> ResidualReport:
    """Space refinement of the speed-rate identity at a fixed small time step."""
    rep = ResidualReport(name or f"{'pn' if kind is PN else 'psn'}.speed_rate.variation",
                         kind.value, tolerance=tolerance, min_order=min_order)
    for level in range(levels):
        d = du / 2 ** level
        r = speed_rate_residual(kind, curvatures, frame0, origin, coeffs, length, d, h)
        r = r[:: 2 ** level]
        rep.max_abs.append(float(np.max(np.abs(r))))
        rep.rms.append(float(np.sqrt(np.mean(r ** 2))))
        rep.grids.append({"du": d, "dt": h, "ds": d})
    rep.order = convergence_order(rep.max_abs)
    # speeds of gamma +- hV differ by round-off of order eps / du, divided by 2h
    floor = max(ROUNDOFF_FLOOR, 10.0 * np.finfo(float).eps / (du / 2 ** (levels - 1) * h))
    if max(rep.max_abs) <= floor:
        rep.order = math.inf
        rep.note = "residual at round-off level"
    rep.status = PASS if rep.max_abs[-1] <= tolerance and rep.order >= min_order else FAIL
    return rep


# -- mode cross-check --------------------------------------------------------

def cross_check_modes(setup: TransportSetup, dt: Optional[float] = None) -> ResidualReport:
    """Position-mode replay of a transport grid's velocity field.

    The position run takes the transport velocity at each node, re-expressed
    in its own extracted frame.  Agreement is required within
    ``10 (dt + du^2) * duration`` on every node.  The replay runs on a
    coarse grid (``du >= COARSE_DU``).  Euler steps leave the
    curve class at first order in ``dt``, so the default step is ``du^2 / 2``.
    """
    du = min(max(setup.du, COARSE_DU), setup.length / 8)
    dt = dt or min(setup.dt, 0.5 * du ** 2)
    steps = max(4, int(round(setup.duration / dt)))
    ref = evolve_transport(setup.kind, setup.curvatures, setup.frame0, setup.origin,
                           setup.length, du, dt, steps, setup.generator, setup.drift)
    vel = _fd.diff(ref.positions, ref.dt, axis=0)

    def coeffs(j, t, curve):
        return frame_components(vel[j], curve.frames, setup.kind)

    start = ref.slice(0)
    pos = evolve_position(setup.kind, setup.curvatures, setup.frame0, setup.origin, coeffs,
                          setup.length, ref.du, ref.dt, len(ref.t) - 1, initial=start)
    err = float(np.max(np.abs(pos.positions - ref.positions)))
    bound = 10.0 * (ref.dt + ref.du ** 2) * (ref.t[-1] - ref.t[0])
    rep = ResidualReport("modes.position_vs_transport", setup.kind.value,
                         tolerance=bound, min_order=0.0)
    rep.grids.append({"du": ref.du, "dt": ref.dt, "ds": ref.du})
    rep.max_abs.append(err)
    rep.rms.append(float(np.sqrt(np.mean((pos.positions - ref.positions) ** 2))))
    rep.status = PASS if err <= bound else FAIL
    rep.note = f"bound 10*(dt + du^2)*duration = {bound:.3g}"
    return rep


# -- random scenarios and the sign audit --------------------------------------

def _num(x: float) -> str:
    return f"{x:.4f}"


def random_setup(kind: FrameKind, rng: np.random.Generator, label: str = "",
                 du: float = 0.05, dt: float = 0.05, length: float = 1.0,
                 duration: float = 0.4) -> TransportSetup:
    """A smooth random family with time-dependent curvatures and a Lorentz motion."""
    from .frames import canonical_frame

    p = rng.uniform(-1.0, 1.0, 12)
    wave = lambda a, b, c, fn: f"{_num(a)}*{fn}({_num(b)}*s + {_num(c)}*t)"
    if kind is PN:
        k1 = f"{_num(1.0 + 0.3 * p[0])} + {wave(0.3 * p[1], 1.0 + p[2], 1.0 + p[3], 'sin')}"
        k2 = f"{_num(0.8 * p[4])} + {wave(0.5 * p[5], 1.5 + p[6], 1.0 - p[7], 'cos')} + {_num(0.5 * p[8])}*s*t"
        k3 = "0"
    else:
        k1 = "1"
        k2 = f"{_num(0.8 * p[0])} + {wave(0.5 * p[1], 1.0 + p[2], 1.0 + p[3], 'sin')}"
        k3 = f"{_num(0.8 * p[4])} + {wave(0.5 * p[5], 1.5 + p[6], 1.0 - p[7], 'cos')} + {_num(0.5 * p[8])}*s*t"
    gen = tuple(float(x) for x in np.round(rng.uniform(-0.6, 0.6, 6), 4))
    drift = tuple(float(x) for x in np.round(rng.uniform(-0.5, 0.5, 4), 4))
    return TransportSetup(kind, Curvatures.from_strings(k1, k2, k3), canonical_frame(kind),
                          np.zeros(4), length, duration, du, dt, gen, drift, label=label)


def random_flow(kind: FrameKind, rng: np.random.Generator) -> FlowCoefficients:
    """Four smooth random coefficients ``a + b sin(w u + c t) + d u^2``."""
    terms = []
    for _ in range(4):
        a, b, c, d = rng.uniform(-0.5, 0.5, 4)
        w = rng.uniform(0.5, 2.0)
        terms.append(f"{_num(a)} + {_num(b)}*sin({_num(w)}*u + {_num(c)}*t) + {_num(d)}*u^2")
    return FlowCoefficients.from_strings(kind, *terms)


def describe_setup(setup: TransportSetup) -> dict:
    from .flowfield import to_text

    cv = setup.curvatures
    return {
        "label": setup.label,
        "kind": setup.kind.value,
        "k1": to_text(cv.k1), "k2": to_text(cv.k2), "k3": to_text(cv.k3),
        "generator": list(setup.generator),
        "drift": list(setup.drift),
        "length": setup.length, "duration": setup.duration,
        "du": setup.du, "dt": setup.dt,
    }


def audit_setups(seed: int = 0, runs: int = 3, **grid) -> dict:
    rng = np.random.default_rng(seed)
    return {
        kind: [random_setup(kind, rng, f"{kind.value}-{i}", **grid) for i in range(runs)]
        for kind in (PN, PSN)
    }


def sign_audit(seed: int = 0, runs: int = 3, levels: int = 3,
               identities: Sequence[str] = AUDITED + AUDIT_EXTRA,
               tolerance: float = DEFAULT_TOL, min_order: float = DEFAULT_MIN_ORDER,
               setups: Optional[dict] = None) -> dict:
    """Evaluate every variant of each disputed identity on random families.

    A variant wins when it passes on every random family and no other
    variant of the same identity does.
    """
    setups = setups or audit_setups(seed, runs)
    fields = {k: [[GridFields(g) for g in s.grids(levels)] for s in lst]
              for k, lst in setups.items()}
    result = {"seed": seed, "runs": runs, "levels": levels, "grid_runs": runs * levels,
              "scenarios": [describe_setup(s) for lst in setups.values() for s in lst],
              "identities": []}
    for name in identities:
        ident = IDENTITIES[name]
        per_variant = {v.tag: [] for v in ident.variants}
        for flist in fields[ident.kind]:
            for rep in evaluate_identity(ident, flist, tolerance, min_order):
                per_variant[rep.variant].append(rep)
        entries = []
        for var in ident.variants:
            reps = per_variant[var.tag]
            entries.append({
                "variant": var.tag,
                "stated": var.stated,
                "converged": [r.passed for r in reps],
                "orders": [format_order(r.order) for r in reps],
                "finest_residuals": [r.max_abs[-1] for r in reps],
                "all_converged": all(r.passed for r in reps),
            })
        winners = [e["variant"] for e in entries if e["all_converged"]]
        winner = winners[0] if len(winners) == 1 else None
        stated = next((v.tag for v in ident.variants if v.stated), None)
        result["identities"].append({
            "name": name,
            "kind": ident.kind.value,
            "variants": entries,
            "winner": winner,
            "stated_variant": stated,
            "stated_wins": winner is not None and winner == stated,
        })
    return result


def audit_to_json(audit: dict) -> str:
    return json.dumps(audit, indent=2) + "\n"


def audit_table(audit: dict) -> str:
    rows = [("identity", "variant", "converged (grid runs)", "winner")]
    levels = audit["levels"]
    for ent in audit["identities"]:
        for v in ent["variants"]:
            tag = v["variant"] + (" [stated]" if v["stated"] else "")
            n, total = sum(v["converged"]), len(v["converged"])
            count = f"{n * levels}/{total * levels}"
            rows.append((ent["name"], tag, count, "yes" if v["variant"] == ent["winner"] else ""))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
