"""Catalog of magnetic potentials with closed-form fields and derivatives.

Every entry is defined on the whole plane, so no extension of ``B`` outside
the domain is needed. Derivatives of ``B`` are analytic up to order
``kappa_star + 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


class FiniteTypeError(ValueError):
    """All derivatives of B up to kappa_star vanish (within tolerance) at a point."""


def multi_indices(order: int) -> list[tuple[int, int]]:
    """All 2D multi-indices of exactly the given order."""
    return [(order - j, j) for j in range(order + 1)]


def _points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class MagneticField:
    """Base class; subclasses provide ``potential`` and ``deriv``.

    ``deriv(points, alpha)`` returns the partial derivative of B with
    multi-index ``alpha`` at each point.
    """

    kappa_star: int
    tau_star: float
    label: str

    def potential(self, x) -> np.ndarray:
        raise NotImplementedError

    def deriv(self, x, alpha: tuple[int, int]) -> np.ndarray:
        raise NotImplementedError

    def B(self, x) -> np.ndarray:
        return self.deriv(x, (0, 0))

    @property
    def max_order(self) -> int:
        return self.kappa_star + 1

    def with_certificate(self, kappa_star: int, tau_star: float) -> "MagneticField":
        """Same field, different finite-type certificate data."""
        return replace(self, kappa_star=int(kappa_star), tau_star=float(tau_star))


@dataclass(frozen=True)
class ConstantField(MagneticField):
    """B = B0 in the symmetric gauge A = (-B0 y / 2, B0 x / 2)."""

    B0: float = 1.0

    @classmethod
    def make(cls, B0: float = 1.0) -> "ConstantField":
        if B0 == 0:
            raise ValueError("constant field needs B0 != 0")
        return cls(kappa_star=0, tau_star=abs(B0), label=f"constant(B0={B0:g})", B0=float(B0))

    def potential(self, x):
        p = _points(x)
        return 0.5 * self.B0 * np.stack([-p[:, 1], p[:, 0]], axis=1)

    def deriv(self, x, alpha):
        p = _points(x)
        return np.full(len(p), self.B0 if tuple(alpha) == (0, 0) else 0.0)


@dataclass(frozen=True)
class MonomialField(MagneticField):
    """B = B0 x1^kappa with A = (0, B0 x1^(kappa+1) / (kappa+1))."""

    kappa: int = 1
    B0: float = 1.0

    @classmethod
    def make(cls, kappa: int = 1, B0: float = 1.0) -> "MonomialField":
        if kappa < 1:
            raise ValueError("monomial field needs kappa >= 1")
        return cls(
            kappa_star=int(kappa),
            tau_star=abs(B0) * math.factorial(kappa),
            label=f"monomial(kappa={kappa},B0={B0:g})",
            kappa=int(kappa),
            B0=float(B0),
        )

    def potential(self, x):
        p = _points(x)
        k = self.kappa
        return np.stack([np.zeros(len(p)), self.B0 * p[:, 0] ** (k + 1) / (k + 1)], axis=1)

    def deriv(self, x, alpha):
        p = _points(x)
        a, b = alpha
        k = self.kappa
        if b > 0 or a > k:
            return np.zeros(len(p))
        coef = math.factorial(k) // math.factorial(k - a)
        return self.B0 * coef * p[:, 0] ** (k - a)


@dataclass(frozen=True)
class GaugedField(MagneticField):
    """A base field with potential shifted by the gradient of a polynomial.

    ``phi`` maps exponents ``(i, j)`` to the coefficient of ``x1^i x2^j``.
    """

    base: MagneticField | None = None
    phi: tuple[tuple[int, int, float], ...] = ()

    @classmethod
    def make(cls, base: MagneticField, phi) -> "GaugedField":
        terms = tuple(sorted((int(i), int(j), float(c)) for i, j, c in _phi_terms(phi)))
        if any(i < 0 or j < 0 for i, j, _ in terms):
            raise ValueError("gauge polynomial exponents must be nonnegative")
        desc = "+".join(f"{c:g}*x^{i}y^{j}" for i, j, c in terms) or "0"
        return cls(
            kappa_star=base.kappa_star,
            tau_star=base.tau_star,
            label=f"{base.label}+grad({desc})",
            base=base,
            phi=terms,
        )

    def gauge(self, x) -> np.ndarray:
        p = _points(x)
        out = np.zeros(len(p))
        for i, j, c in self.phi:
            out += c * p[:, 0] ** i * p[:, 1] ** j
        return out

    def grad_gauge(self, x) -> np.ndarray:
        p = _points(x)
        g = np.zeros_like(p)
        for i, j, c in self.phi:
            if i:
                g[:, 0] += c * i * p[:, 0] ** (i - 1) * p[:, 1] ** j
            if j:
                g[:, 1] += c * j * p[:, 0] ** i * p[:, 1] ** (j - 1)
        return g

    def potential(self, x):
        return self.base.potential(x) + self.grad_gauge(x)

    def deriv(self, x, alpha):
        return self.base.deriv(x, alpha)


def _phi_terms(phi):
    if isinstance(phi, dict):
        return [(i, j, c) for (i, j), c in phi.items()]
    return list(phi)


def make_field(kind: str, B0: float = 1.0, kappa: int = 1, phi=(), base_kind: str | None = None):
    """Build a catalog field from config-style keys."""
    if kind == "constant":
        return ConstantField.make(B0)
    if kind == "monomial":
        return MonomialField.make(kappa, B0)
    if kind == "gauged":
        base = make_field(base_kind or "constant", B0=B0, kappa=kappa)
        return GaugedField.make(base, phi)
    raise ValueError(f"unknown field kind {kind!r}")


# -- diagnostics ----------------------------------------------------------------

def eval_B_derivs(field: MagneticField, x, max_order: int) -> list[tuple[tuple[int, int], float]]:
    """All multi-index derivatives of B at a single point, up to ``max_order``."""
    if max_order > field.max_order:
        raise ValueError(
            f"derivative order {max_order} exceeds stored order {field.max_order} for {field.label}"
        )
    p = _points(x)[:1]
    return [
        (alpha, float(field.deriv(p, alpha)[0]))
        for k in range(max_order + 1)
        for alpha in multi_indices(k)
    ]


def derivative_sum(field: MagneticField, x, max_order: int | None = None) -> np.ndarray:
    """Sum of |d^alpha B| over |alpha| <= max_order (default kappa_star)."""
    order = field.kappa_star if max_order is None else max_order
    p = _points(x)
    return sum(np.abs(field.deriv(p, a)) for k in range(order + 1) for a in multi_indices(k))


def default_tolerance(field: MagneticField, samples) -> float:
    """1e-9 * (1 + C^kappa_star norm of B over the samples)."""
    return 1e-9 * (1.0 + float(np.max(derivative_sum(field, samples))))


def vanishing_order(field: MagneticField, x, tol: float | None = None, radius: float = 0.0) -> int:
    """Lowest order k at which some derivative of B exceeds ``tol`` at ``x``.

    With ``radius > 0`` a derivative only counts as nonzero if it cannot
    vanish within that distance to first order, i.e. it must exceed
    ``tol + radius * |grad d^alpha B(x)|``. This is how a discrete sample
    set resolves zeros that fall between sample points.
    """
    p = _points(x)[:1]
    if tol is None:
        tol = default_tolerance(field, p)
    if not tol > 0:
        raise ValueError("tol must be positive")
    for k in range(field.kappa_star + 1):
        for a in multi_indices(k):
            value = abs(field.deriv(p, a)[0])
            slack = 0.0
            if radius > 0:
                grad = np.hypot(field.deriv(p, (a[0] + 1, a[1]))[0], field.deriv(p, (a[0], a[1] + 1))[0])
                slack = radius * grad
            if value > tol + slack:
                return k
    raise FiniteTypeError(
        f"{field.label}: all derivatives up to order {field.kappa_star} vanish at {p[0].tolist()}"
    )


@dataclass(frozen=True)
class FiniteTypeReport:
    minimum: float
    argmin: tuple[float, float]
    passed: bool
    kappa_star: int
    tau_star: float


def certify_finite_type(field: MagneticField, sample_points) -> FiniteTypeReport:
    """Check the finite-type lower bound on a sample set."""
    p = np.asarray(sample_points, dtype=float).reshape(-1, 2)
    if len(p) == 0:
        raise ValueError("empty sample set")
    s = derivative_sum(field, p)
    i = int(np.argmin(s))
    return FiniteTypeReport(
        minimum=float(s[i]),
        argmin=(float(p[i, 0]), float(p[i, 1])),
        passed=bool(s[i] >= field.tau_star),
        kappa_star=field.kappa_star,
        tau_star=field.tau_star,
    )


def kappa0_gamma0(field: MagneticField, mesh, tol: float | None = None, resolution: float | None = None):
    """Highest boundary vanishing order and the boundary vertices attaining it.

    ``resolution`` defaults to the longest boundary edge: a zero of B lying
    between two boundary vertices is attributed to the nearest ones.
    """
    bv = mesh.boundary_vertices
    pts = mesh.vertices[bv]
    if tol is None:
        tol = default_tolerance(field, mesh.vertices)
    if resolution is None:
        resolution = 0.5 * float(mesh.boundary_edge_lengths.max())
    orders = np.array([vanishing_order(field, p, tol, resolution) for p in pts])
    kappa0 = int(orders.max())
    return kappa0, bv[orders == kappa0]
