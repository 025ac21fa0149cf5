"""INI scenario files: curve, flow, motion, grid and verification settings.

See ``docs/scenarios.md`` for the schema.  ``load_scenario`` reports every
problem it finds in one ``ScenarioError`` rather than stopping at the first.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import flowfield as ff
from .flow import FlowCoefficients
from .frames import (
    Curvatures,
    Frame4,
    FrameKind,
    GaugePolicy,
    canonical_frame,
    frame_residuals,
    FRAME_TOL,
)

SCHEMA = {
    "scenario": {"name", "kind", "mode", "gauge", "seed", "output"},
    "curve": {"k1", "k2", "k3", "frame", "origin", "length"},
    "flow": {"c1", "c2", "c3", "c4", "tangent"},
    "motion": {"generator", "drift"},
    "grid": {"du", "dt", "duration"},
    "verify": {"refinements", "tolerance", "min_order", "variant", "audit_runs",
               "speed_du", "speed_h", "max_drift", "min_drift"},
}


class ScenarioError(ValueError):
    def __init__(self, errors: list[str], source: str = "<scenario>"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: " + "; ".join(self.errors))


@dataclass
class Scenario:
    name: str
    kind: FrameKind
    curvatures: Curvatures
    frame0: Frame4
    origin: np.ndarray
    length: float
    flow: FlowCoefficients
    du: float
    dt: float
    duration: float
    mode: str = "transport"
    gauge: GaugePolicy = GaugePolicy.REFERENCE_FRAME
    generator: tuple = (0.0,) * 6
    drift: tuple = (0.0,) * 4
    seed: int = 0
    output: str = "nullflow-out"
    refinements: int = 3
    tolerance: float = 1e-4
    min_order: float = 0.8
    variant: str = "recomputed"
    audit_runs: int = 3
    speed_du: float = 0.1
    speed_h: float = 1e-5
    max_drift: Optional[float] = None
    min_drift: Optional[float] = None
    source: str = ""
    text: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def transport_setup(self):
        from .verify import TransportSetup

        return TransportSetup(self.kind, self.curvatures, self.frame0, self.origin,
                              self.length, self.duration, self.du, self.dt,
                              self.generator, self.drift, label=self.name)


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, None), no)
            continue
        m = re.match(r"\s*([A-Za-z0-9_.]+)\s*[=:]", line)
        if m and section is not None:
            out.setdefault((section, m.group(1).lower()), no)
    return out


def _floats(text: str, count: int) -> np.ndarray:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if len(parts) != count:
        raise ValueError(f"expected {count} numbers, got {len(parts)}")
    vals = np.array([float(p) for p in parts])
    if not np.all(np.isfinite(vals)):
        raise ValueError("numbers must be finite")
    return vals


def loads_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse and validate scenario text."""
    if not text.strip():
        raise ScenarioError(["line 1: parse error: empty scenario file"], source)
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ScenarioError([f"line {exc.lineno}: parse error: key outside any section"], source)
    except configparser.DuplicateOptionError as exc:
        raise ScenarioError([f"line {exc.lineno}: parse error: duplicate key {exc.option!r}"], source)
    except configparser.DuplicateSectionError as exc:
        raise ScenarioError([f"line {exc.lineno}: parse error: duplicate section {exc.section!r}"], source)
    except configparser.ParsingError as exc:
        raise ScenarioError([f"line {no}: parse error: {line.strip()}" for no, line in exc.errors],
                            source)

    lines = _key_lines(text)
    errors: list[str] = []

    def where(section, key=None):
        no = lines.get((section, key)) or lines.get((section, None))
        return f"line {no}: " if no else ""

    def err(section, key, msg):
        label = f"[{section}] {key}" if key else f"[{section}]"
        errors.append(f"{where(section, key)}{label}: {msg}")

    for section in cp.sections():
        if section not in SCHEMA:
            err(section, None, "unknown section")
            continue
        for key in cp[section]:
            if key not in SCHEMA[section]:
                err(section, key, "unknown key")

    def get(section, key, default=None):
        if cp.has_section(section) and key in cp[section]:
            return cp[section][key].strip()
        return default

    def number(section, key, default, cast=float, positive=False):
        raw = get(section, key)
        if raw is None:
            return default
        try:
            val = cast(raw)
        except ValueError:
            err(section, key, f"not a valid {cast.__name__}: {raw!r}")
            return default
        if cast is float and not np.isfinite(val):
            err(section, key, "must be finite")
            return default
        if positive and val <= 0:
            err(section, key, "must be positive")
        return val

    def expr(section, key, default):
        raw = get(section, key, default)
        try:
            return ff.parse(raw), raw
        except ff.ExprError as exc:
            err(section, key, f"expression error: {exc}")
            return None, raw

    kind = None
    raw_kind = get("scenario", "kind")
    if raw_kind is None:
        err("scenario", "kind", "missing required key")
    else:
        try:
            kind = FrameKind.parse(raw_kind)
        except ValueError as exc:
            err("scenario", "kind", str(exc))

    mode = get("scenario", "mode", "transport").lower()
    if mode not in ("transport", "position"):
        err("scenario", "mode", f"must be 'transport' or 'position', got {mode!r}")
    gauge = GaugePolicy.REFERENCE_FRAME
    if get("scenario", "gauge") is not None:
        try:
            gauge = GaugePolicy.parse(get("scenario", "gauge"))
        except ValueError as exc:
            err("scenario", "gauge", str(exc))
    seed = number("scenario", "seed", 0, int)
    if seed < 0 or seed >= 2 ** 64:
        err("scenario", "seed", "must fit in an unsigned 64-bit integer")

    k1, k1_text = expr("curve", "k1", None) if get("curve", "k1") else (None, None)
    if k1_text is None:
        err("curve", "k1", "missing required key")
    k2, k2_text = expr("curve", "k2", "0")
    k3, k3_text = expr("curve", "k3", "0")
    if kind is FrameKind.PARTIALLY_NULL and k3 is not None and k3 != ff.ZERO:
        err("curve", "k3", "must be 0 for a partially null curve (third curvature vanishes)")
    if kind is FrameKind.PSEUDO_NULL and k1 is not None and k1 not in (ff.ZERO, ff.ONE):
        err("curve", "k1", "must be 0 or 1 for a pseudo null curve")
    for name, e in (("k1", k1), ("k2", k2), ("k3", k3)):
        if e is not None and "u" in ff.variables(e):
            err("curve", name, "curvatures are functions of s and t only")

    frame0 = None
    raw_frame = get("curve", "frame", "canonical")
    if kind is not None:
        if raw_frame.lower() == "canonical":
            frame0 = canonical_frame(kind)
        else:
            try:
                arr = _floats(raw_frame, 16).reshape(4, 4)
                res = float(np.max(np.abs(frame_residuals(arr, kind))))
                if res > FRAME_TOL:
                    err("curve", "frame", f"violates the metric relations (max residual {res:.3g})")
                frame0 = Frame4.from_array(arr, kind)
            except ValueError as exc:
                err("curve", "frame", str(exc))
    origin = np.zeros(4)
    if get("curve", "origin") is not None:
        try:
            origin = _floats(get("curve", "origin"), 4)
        except ValueError as exc:
            err("curve", "origin", str(exc))
    length = number("curve", "length", 1.0, positive=True)

    coeffs = []
    for key in ("c1", "c2", "c3", "c4"):
        e, _ = expr("flow", key, "0")
        if e is not None and "s" in ff.variables(e):
            err("flow", key, "flow coefficients are functions of u and t")
        coeffs.append(e)
    tangent = get("flow", "tangent", "given").lower()
    if tangent not in ("given", "inextensible"):
        err("flow", "tangent", f"must be 'given' or 'inextensible', got {tangent!r}")

    generator, drift = (0.0,) * 6, (0.0,) * 4
    for key, count in (("generator", 6), ("drift", 4)):
        raw = get("motion", key)
        if raw is not None:
            try:
                vals = tuple(float(x) for x in _floats(raw, count))
                generator, drift = (vals, drift) if key == "generator" else (generator, vals)
            except ValueError as exc:
                err("motion", key, str(exc))

    du = number("grid", "du", 0.01, positive=True)
    dt = number("grid", "dt", 0.01, positive=True)
    duration = number("grid", "duration", 0.1, positive=True)
    if mode == "position" and dt > du:
        err("grid", "dt", "must not exceed du for explicit stepping")
    if du > 0 and length > 0 and length / du < 4:
        err("grid", "du", "need at least 5 samples along the curve")
    if dt > 0 and duration > 0 and duration / dt < 4 - 1e-9:
        err("grid", "duration", "need at least 5 time slices")

    refinements = number("verify", "refinements", 3, int)
    if refinements < 3:
        err("verify", "refinements", "at least 3 refinements are needed for an order estimate")
    tolerance = number("verify", "tolerance", 1e-4, positive=True)
    min_order = number("verify", "min_order", 0.8)
    variant = get("verify", "variant", "recomputed").lower()
    if variant not in ("recomputed", "stated"):
        err("verify", "variant", f"must be 'recomputed' or 'stated', got {variant!r}")
    audit_runs = number("verify", "audit_runs", 3, int)
    if audit_runs < 1:
        err("verify", "audit_runs", "must be at least 1")
    speed_du = number("verify", "speed_du", 0.1, positive=True)
    speed_h = number("verify", "speed_h", 1e-5, positive=True)
    max_drift = number("verify", "max_drift", None, positive=True)
    min_drift = number("verify", "min_drift", None, positive=True)

    if errors:
        raise ScenarioError(errors, source)

    name = get("scenario", "name") or Path(source).stem
    return Scenario(
        name=name,
        kind=kind,
        curvatures=Curvatures(k1, k2, k3),
        frame0=frame0,
        origin=origin,
        length=length,
        flow=FlowCoefficients(kind, *coeffs, tangent=tangent),
        du=du, dt=dt, duration=duration,
        mode=mode, gauge=gauge, generator=generator, drift=drift, seed=seed,
        output=get("scenario", "output", "nullflow-out"),
        refinements=refinements, tolerance=tolerance, min_order=min_order,
        variant=variant, audit_runs=audit_runs, speed_du=speed_du, speed_h=speed_h,
        max_drift=max_drift, min_drift=min_drift,
        source=source,
        text={"k1": k1_text, "k2": k2_text, "k3": k3_text},
    )


def builtin_names() -> list[str]:
    root = resources.files("nullflow") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def builtin_text(name: str) -> str:
    path = resources.files("nullflow") / "scenarios" / f"{name}.ini"
    if not path.is_file():
        raise FileNotFoundError(f"no built-in scenario named {name!r}")
    return path.read_text()


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario file, or a built-in scenario by name."""
    path = Path(path_or_name)
    if path.is_file():
        return loads_scenario(path.read_text(), str(path))
    name = str(path_or_name)
    if name.startswith("builtin:"):
        name = name[len("builtin:"):]
    if name in builtin_names():
        return loads_scenario(builtin_text(name), f"builtin:{name}")
    raise FileNotFoundError(f"scenario not found: {path_or_name}")
