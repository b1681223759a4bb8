"""Flat dotted key = value run configuration.

One assignment per line, ``#`` starts a comment::

    domain.kind = unit-disk
    field.kind = monomial
    field.kappa = 1
    beta = 50, 100, 200, 400, 800
    h = 0.02

``field.kind`` is constant, monomial, gauged or none (A = 0). Lists are
comma separated; ``field.phi`` and ``domain.corners`` take
``;``-separated groups.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .field import MagneticField, make_field
from .geometry import DomainSpec


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(",", " ").split())


def _groups(text: str) -> list[tuple[float, ...]]:
    return [_floats(g) for g in text.split(";") if g.strip()]


# key -> parser; values are parsed eagerly so errors carry the line number
KEYS = {
    "domain.kind": str,
    "domain.radius": float,
    "domain.bounds": _floats,
    "domain.corners": _groups,
    "field.kind": str,
    "field.B0": float,
    "field.kappa": int,
    "field.phi": _groups,
    "field.base": str,
    "beta": _floats,
    "h": float,
    "quadrature_order": int,
    "element": str,
    "k": int,
    "T": _floats,
    "seed": int,
    "jobs": int,
    "agmon.t": float,
    "agmon.rule": str,
    "sweep.bracket": _floats,
    "decay.r2_floor": float,
    "localization.scales": _floats,
    "localization.beta": float,
    "audit.betas": _floats,
    "audit.trials": int,
    "audit.h": float,
    "gauge.phi": _groups,
    "gauge.beta": float,
    "gauge.h": _floats,
    "gauge.tol": _groups,
    "verify.experiments": lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
}

PRESETS = {
    "nonvanishing": {
        "domain.kind": "unit-disk",
        "field.kind": "constant",
        "field.B0": "1",
        "beta": "50, 100, 200, 400, 800",
        "h": "0.01",
        "gauge.tol": "0.02 0.02; 0.01 0.006",
    },
    "montgomery-k": {
        "domain.kind": "unit-disk",
        "field.kind": "monomial",
        "field.kappa": "1",
        "field.B0": "1",
        "beta": "50, 100, 200, 400, 800",
        "h": "0.01",
    },
}

EXPERIMENTS = ("sweep", "decay", "localization", "audit", "gauge")


def parse_text(text: str, source: str = "<config>") -> dict[str, tuple[str, int | None]]:
    """Raw ``key -> (value, line)`` mapping; rejects unknown or repeated keys."""
    out: dict[str, tuple[str, int | None]] = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, n)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", source, n)
        if key in out:
            raise ConfigError(f"duplicate key {key!r} (first on line {out[key][1]})", source, n)
        out[key] = (value, n)
    return out


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    field: MagneticField | None     # None means A = 0
    betas: tuple[float, ...]
    h: float
    quadrature_order: int = 4
    element: str = "magnetic-p1"
    k: int = 1
    Ts: tuple[float, ...] = (1.0, 2.0, 4.0)
    seed: int = 0
    jobs: int | None = None
    agmon_t: float | None = None
    agmon_rule: str = "trapezoid"
    bracket: tuple[float, float] | None = None
    r2_floor: float = 0.9
    scales: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    localization_beta: float | None = None
    audit_betas: tuple[float, ...] = (100.0, 200.0, 400.0)
    audit_trials: int = 50
    audit_h: float | None = None
    gauge_phi: tuple = ((1, 1, 1.0),)
    gauge_beta: float = 100.0
    gauge_h: tuple[float, ...] = (0.02, 0.01)
    gauge_tol: dict = dc_field(default_factory=dict)
    experiments: tuple[str, ...] = EXPERIMENTS
    raw: dict = dc_field(default_factory=dict, compare=False)

    def snapshot(self) -> str:
        """Resolved configuration in the input format, keys sorted."""
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.raw.items()))


def load(path: str | None = None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge preset < file < overrides, parse and validate."""
    merged: dict[str, tuple[str, int | None, str]] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "--preset")
        merged.update({k: (v, None, f"preset {preset}") for k, v in PRESETS[preset].items()})
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from exc
        merged.update({k: (v, n, str(p)) for k, (v, n) in parse_text(text, str(p)).items()})
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = (str(v), None, f"--{k}")
    return validate(merged)


def validate(merged: dict[str, tuple[str, int | None, str]]) -> RunConfig:
    values = {}
    for key, (text, line, src) in merged.items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", src, line)
        try:
            values[key] = KEYS[key](text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", src, line) from exc

    def where(key):
        _, line, src = merged.get(key, ("", None, "<config>"))
        return src, line

    def need(key):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
        return values[key]

    def fail(key, msg):
        raise ConfigError(msg, *where(key))

    domain = _domain(values, need, fail)
    phi = _checked_phi(values, "field.phi", (), fail)
    gauge_phi = _checked_phi(values, "gauge.phi", ((1, 1, 1.0),), fail)
    try:
        fld = None if values.get("field.kind") == "none" else make_field(
            values.get("field.kind", "constant"), B0=values.get("field.B0", 1.0),
            kappa=values.get("field.kappa", 1), phi=phi, base_kind=values.get("field.base"))
    except ValueError as exc:
        fail("field.kind", str(exc))

    betas = values.get("beta", (0.0,)) if fld is None else need("beta")
    if not betas or any(b < 0 for b in betas):
        fail("beta", "beta values must be nonnegative")
    h = need("h")
    if not h > 0:
        fail("h", f"h must be positive, got {h:g}")
    if h >= domain.diameter:
        fail("h", f"h={h:g} is not smaller than the domain diameter")
    for key in ("quadrature_order", "k", "audit.trials"):
        if key in values and values[key] < 1:
            fail(key, f"{key} must be >= 1")
    if values.get("element", "magnetic-p1") not in ("magnetic-p1", "p1"):
        fail("element", "element must be magnetic-p1 or p1")
    if values.get("agmon.rule", "trapezoid") not in ("trapezoid", "simpson"):
        fail("agmon.rule", "agmon.rule must be trapezoid or simpson")
    if "jobs" in values and values["jobs"] < 1:
        fail("jobs", "jobs must be >= 1")
    for key in ("T", "localization.scales", "audit.betas", "gauge.h"):
        if key in values and (not values[key] or min(values[key]) <= 0):
            fail(key, f"{key} needs positive values")
    if "sweep.bracket" in values:
        br = values["sweep.bracket"]
        if len(br) != 2 or not br[0] < br[1]:
            fail("sweep.bracket", "sweep.bracket needs two increasing numbers")
    for key in ("agmon.t", "localization.beta", "gauge.beta", "audit.h"):
        if key in values and not values[key] > 0:
            fail(key, f"{key} must be positive")
    gauge_tol = {}
    for g in values.get("gauge.tol", ()):
        if len(g) != 2 or min(g) <= 0:
            fail("gauge.tol", f"gauge.tol entries are 'h tolerance' pairs of positive numbers, got {list(g)}")
        gauge_tol[g[0]] = g[1]
    exps = values.get("verify.experiments", EXPERIMENTS)
    for e in exps:
        if e not in EXPERIMENTS:
            fail("verify.experiments", f"unknown experiment {e!r}; choose from {EXPERIMENTS}")

    return RunConfig(
        domain=domain, field=fld, betas=tuple(sorted(betas)), h=h,
        quadrature_order=values.get("quadrature_order", 4), element=values.get("element", "magnetic-p1"),
        k=values.get("k", 1), Ts=tuple(values.get("T", (1.0, 2.0, 4.0))), seed=values.get("seed", 0),
        jobs=values.get("jobs"), agmon_t=values.get("agmon.t"), agmon_rule=values.get("agmon.rule", "trapezoid"),
        bracket=tuple(values["sweep.bracket"]) if "sweep.bracket" in values else None,
        r2_floor=values.get("decay.r2_floor", 0.9),
        scales=tuple(values.get("localization.scales", (1.0, 2.0, 4.0, 8.0))),
        localization_beta=values.get("localization.beta"),
        audit_betas=tuple(values.get("audit.betas", (100.0, 200.0, 400.0))),
        audit_trials=values.get("audit.trials", 50), audit_h=values.get("audit.h"),
        gauge_phi=gauge_phi,
        gauge_beta=values.get("gauge.beta", 100.0), gauge_h=tuple(values.get("gauge.h", (0.02, 0.01))),
        gauge_tol=gauge_tol,
        experiments=tuple(exps),
        raw={k: v for k, (v, _, _) in merged.items()},
    )


def _checked_phi(values, key, default, fail) -> tuple:
    out = []
    for g in values.get(key, default):
        if len(g) != 3 or g[0] != int(g[0]) or g[1] != int(g[1]) or g[0] < 0 or g[1] < 0:
            fail(key, f"gauge term must be 'i j c' with nonnegative integer exponents, got {list(g)}")
        out.append((int(g[0]), int(g[1]), float(g[2])))
    return tuple(out)


def _domain(values, need, fail) -> DomainSpec:
    kind = values.get("domain.kind", "unit-disk")
    try:
        if kind == "unit-disk":
            return DomainSpec.disk(values.get("domain.radius", 1.0))
        if kind == "rectangle":
            b = need("domain.bounds")
            if len(b) != 4:
                fail("domain.bounds", "domain.bounds needs x0, y0, x1, y1")
            return DomainSpec.rectangle(*b)
        if kind == "polygon":
            return DomainSpec.polygon(need("domain.corners"))
    except ValueError as exc:
        fail("domain.kind", str(exc))
    fail("domain.kind", f"unknown domain kind {kind!r}")
