"""Agmon metric quantities on a mesh.

Two local length scales are provided: the closed-form multiscale weight
``m_tilde`` and the ball-supremum radius function ``m_radius``. Agmon
distances are graph geodesics in the metric ``m_tilde ds^2``, and the
regularised distance averages them with a smooth partition of unity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .field import MagneticField, multi_indices
from .geometry import Mesh


class BetaCalibrationError(ValueError):
    """beta is too small for the local-scale machinery on this domain."""


def m_tilde(field: MagneticField, x, beta: float) -> np.ndarray:
    """sum over |alpha| <= kappa_star of (beta |d^alpha B(x)|)^(1/(|alpha|+2))."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    p = np.atleast_2d(np.asarray(x, float))
    total = np.zeros(len(p))
    for k in range(field.kappa_star + 1):
        for a in multi_indices(k):
            total += (beta * np.abs(field.deriv(p, a))) ** (1.0 / (k + 2))
    return total


# polar sample pattern on the unit disk: centre, 4 radii x 16 angles
_ANGLES = 2 * np.pi * np.arange(16) / 16
_COARSE = np.concatenate(
    [np.zeros((1, 2))]
    + [rho * np.stack([np.cos(_ANGLES), np.sin(_ANGLES)], axis=1) for rho in (0.25, 0.5, 0.75, 1.0)]
)
_DTH = np.linspace(-1, 1, 9) * (np.pi / 16)
_DRHO = np.array([-0.125, 0.0, 0.125])


def ball_sup_abs_B(field: MagneticField, centres: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Sampled sup of |B| over balls B(centre, r), with one local refinement."""
    c = np.atleast_2d(centres)
    r = np.asarray(r, float)
    pts = c[:, None, :] + r[:, None, None] * _COARSE[None]
    vals = np.abs(field.B(pts.reshape(-1, 2))).reshape(len(c), -1)
    best = np.argmax(vals, axis=1)
    coarse_max = vals[np.arange(len(c)), best]
    b = _COARSE[best]
    rho0 = np.linalg.norm(b, axis=1)
    th0 = np.arctan2(b[:, 1], b[:, 0])
    rho = np.clip(rho0[:, None, None] + _DRHO[None, None, :], 0.0, 1.0)
    th = th0[:, None, None] + _DTH[None, :, None]
    off = np.stack([rho * np.cos(th), rho * np.sin(th)], axis=-1).reshape(len(c), -1, 2)
    pts = c[:, None, :] + r[:, None, None] * off
    fine = np.abs(field.B(pts.reshape(-1, 2))).reshape(len(c), -1).max(axis=1)
    return np.maximum(coarse_max, fine)


def m_radius(field: MagneticField, x, beta: float, rmax: float = 2.0, rtol: float = 1e-4) -> np.ndarray:
    """1 / sup{r : r^2 sup_{B(x,r)} |beta B| <= 1}, by geometric bisection in r.

    Raises :class:`BetaCalibrationError` if the criterion still holds at
    ``rmax`` (the field is too weak near x for this beta).
    """
    p = np.atleast_2d(np.asarray(x, float))
    n = len(p)

    def ok(r):
        return r * r * beta * ball_sup_abs_B(field, p, r) <= 1.0

    hi = np.full(n, float(rmax))
    if np.any(ok(hi)):
        bad = p[ok(hi)][0].tolist()
        raise BetaCalibrationError(
            f"beta={beta:g}: ball criterion holds up to rmax={rmax:g} at {bad}; field too weak"
        )
    lo = np.full(n, rmax * 1e-9)
    while not np.all(ok(lo)):
        lo = np.where(ok(lo), lo, lo * 1e-3)
    while np.any(hi / lo > 1 + rtol):
        mid = np.sqrt(lo * hi)
        good = ok(mid)
        lo = np.where(good, mid, lo)
        hi = np.where(good, hi, mid)
    return 1.0 / np.sqrt(lo * hi)


def check_calibration(m_values: np.ndarray, r0: float, beta: float) -> None:
    """Require 1/m < r0 everywhere; the stand-in for beta > beta_0."""
    worst = float(np.max(1.0 / np.asarray(m_values)))
    if worst >= r0:
        raise BetaCalibrationError(
            f"beta={beta:g} below calibration: max 1/m = {worst:.4g} >= r0 = {r0:.4g}"
        )


# -- distances --------------------------------------------------------------------

def _graph(mesh: Mesh, weights_per_edge: np.ndarray, edges: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_vertices
    return sp.coo_matrix((weights_per_edge, (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()


def edge_weights(mesh: Mesh, field: MagneticField, beta: float, rule: str = "trapezoid",
                 m_values: np.ndarray | None = None):
    """Agmon lengths of the augmented edge set."""
    e = mesh.agmon_edges
    p = mesh.vertices
    length = np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)
    m = m_tilde(field, p, beta) if m_values is None else np.asarray(m_values)
    if rule == "trapezoid":
        w = 0.5 * (m[e[:, 0]] + m[e[:, 1]]) * length
    elif rule == "simpson":
        mid = m_tilde(field, 0.5 * (p[e[:, 0]] + p[e[:, 1]]), beta)
        w = (m[e[:, 0]] + 4 * mid + m[e[:, 1]]) / 6 * length
    else:
        raise ValueError(f"unknown edge rule {rule!r}")
    return e, w


def agmon_distance(mesh: Mesh, field: MagneticField, beta: float, sources, rule: str = "trapezoid",
                   m_values: np.ndarray | None = None) -> np.ndarray:
    """Multi-source shortest-path distance in the metric m_tilde ds^2."""
    src = np.unique(np.asarray(sources, dtype=np.int64).ravel())
    if len(src) == 0:
        raise ValueError("empty source set")
    e, w = edge_weights(mesh, field, beta, rule, m_values)
    d = dijkstra(_graph(mesh, w, e), directed=False, indices=src, min_only=True)
    d[src] = 0.0
    return d


def pairwise_agmon(mesh: Mesh, field: MagneticField, beta: float, sources, rule: str = "trapezoid",
                   m_values: np.ndarray | None = None) -> np.ndarray:
    """Distances from each source separately, shape (len(sources), V)."""
    e, w = edge_weights(mesh, field, beta, rule, m_values)
    return dijkstra(_graph(mesh, w, e), directed=False, indices=np.asarray(sources))


def magnetic_well(field: MagneticField, mesh: Mesh, beta: float, t: float,
                  m_values: np.ndarray | None = None) -> np.ndarray:
    """Boundary vertices where m_tilde <= t."""
    if not t > 0:
        raise ValueError("well threshold must be positive")
    bv = mesh.boundary_vertices
    m = m_tilde(field, mesh.vertices[bv], beta) if m_values is None else np.asarray(m_values)[bv]
    return bv[m <= t]


# -- regularised distance -------------------------------------------------------------

def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity cutoff: 1 for s <= 1, 0 for s >= 2.

    Built as g(2-s) / (g(2-s) + g(s-1)) with g(t) = exp(1 - 1/t), the same
    exponential profile as the standard mollifier.
    """
    s = np.asarray(s, float)

    def g(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(1.0 - 1.0 / t[pos])
        return out

    a, b = g(2.0 - s), g(s - 1.0)
    return a / (a + b)


@dataclass(frozen=True, eq=False)
class Cover:
    centres: np.ndarray          # vertex indices z_j
    radii: np.ndarray            # t_j = (1/2) / m(z_j)
    weights: sp.csr_matrix       # phi_j(x_v), shape (V, J), rows sum to 1


def build_cover(mesh: Mesh, m_values: np.ndarray) -> Cover:
    """Greedy maximal cover by balls B(z_j, t_j) and its partition of unity."""
    pts = mesh.vertices
    tree = cKDTree(pts)
    covered = np.zeros(mesh.n_vertices, bool)
    centres, radii = [], []
    for v in range(mesh.n_vertices):
        if covered[v]:
            continue
        t = 0.5 / m_values[v]
        centres.append(v)
        radii.append(t)
        covered[tree.query_ball_point(pts[v], t)] = True
        if len(centres) > mesh.n_vertices:
            raise RuntimeError("cover construction did not terminate")
    centres = np.asarray(centres)
    radii = np.asarray(radii)
    rows, cols, vals = [], [], []
    for j, (z, t) in enumerate(zip(centres, radii)):
        nb = np.asarray(tree.query_ball_point(pts[z], 2.0 * t), dtype=np.int64)
        s = np.linalg.norm(pts[nb] - pts[z], axis=1) / t
        bump = _smooth_step(s)
        keep = bump > 0
        rows.append(nb[keep])
        cols.append(np.full(keep.sum(), j))
        vals.append(bump[keep])
    W = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_vertices, len(centres)),
    ).tocsr()
    total = np.asarray(W.sum(axis=1)).ravel()
    W = sp.diags(1.0 / total) @ W
    return Cover(centres=centres, radii=radii, weights=W.tocsr())


def regularized_distance(mesh: Mesh, field: MagneticField, beta: float, t: float,
                         m_values: np.ndarray | None = None, dist: np.ndarray | None = None):
    """psi = sum_j d(z_j) phi_j at the vertices; returns (psi, dist, cover)."""
    mt = m_tilde(field, mesh.vertices, beta)
    if m_values is None:
        m_values = m_radius(field, mesh.vertices, beta, rmax=_rmax(mesh))
    if dist is None:
        well = magnetic_well(field, mesh, beta, t, mt)
        if len(well) == 0:
            raise ValueError(f"empty magnetic well at beta={beta:g}, t={t:g}")
        dist = agmon_distance(mesh, field, beta, well, m_values=mt)
    cover = build_cover(mesh, m_values)
    psi = cover.weights @ dist[cover.centres]
    return psi, dist, cover


def p1_gradient_norms(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """|grad| of the piecewise-linear interpolant on each triangle."""
    from .solver import p1_gradients

    g = np.einsum("fkd,fk->fd", p1_gradients(mesh), np.asarray(values)[mesh.triangles])
    return np.linalg.norm(g, axis=1)


def _rmax(mesh: Mesh) -> float:
    """Domain diameter (bounding-box diagonal when the mesh has no domain)."""
    if mesh.domain is not None:
        return float(mesh.domain.diameter)
    span = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    return float(np.linalg.norm(span))


# -- assembled metric data --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AgmonMetricData:
    beta: float
    m_tilde: np.ndarray
    m_radius: np.ndarray
    well_threshold: float
    well: np.ndarray
    dist: np.ndarray
    psi: np.ndarray
    cover: Cover | None = dc_field(default=None, repr=False)


def build_metric(mesh: Mesh, field: MagneticField, beta: float, t: float,
                 r0_fraction: float | None = 0.2, rule: str = "trapezoid",
                 with_psi: bool = True) -> AgmonMetricData:
    """Evaluate every Agmon quantity at the mesh vertices.

    ``r0_fraction`` times the domain diameter is the calibration radius; pass
    None to skip the check.
    """
    if not beta > 1:
        raise BetaCalibrationError("beta must exceed 1")
    pts = mesh.vertices
    mt = m_tilde(field, pts, beta)
    mr = m_radius(field, pts, beta, rmax=_rmax(mesh))
    if r0_fraction is not None:
        check_calibration(mr, r0_fraction * _rmax(mesh), beta)
    well = magnetic_well(field, mesh, beta, t, mt)
    if len(well) == 0:
        raise ValueError(f"empty magnetic well at beta={beta:g}, t={t:g}")
    dist = agmon_distance(mesh, field, beta, well, rule=rule, m_values=mt)
    psi, cover = np.full(len(pts), np.nan), None
    if with_psi:
        psi, _, cover = regularized_distance(mesh, field, beta, t, m_values=mr, dist=dist)
    return AgmonMetricData(beta=float(beta), m_tilde=mt, m_radius=mr, well_threshold=float(t),
                           well=well, dist=dist, psi=psi, cover=cover)


def write_metric_csv(mesh: Mesh, data: AgmonMetricData, path) -> None:
    is_well = np.zeros(mesh.n_vertices, bool)
    is_well[data.well] = True
    rows = ["x,y,m_tilde,m_radius,dist,psi,is_boundary,is_well"]
    cols = zip(mesh.vertices[:, 0].tolist(), mesh.vertices[:, 1].tolist(), data.m_tilde.tolist(),
               data.m_radius.tolist(), data.dist.tolist(), data.psi.tolist(),
               mesh.is_boundary.astype(int).tolist(), is_well.astype(int).tolist())
    rows += [",".join(repr(v) for v in row) for row in cols]
    Path(path).write_text("\n".join(rows) + "\n")


# -- audits of the local-scale properties -------------------------------------------------

def equivalence_bracket(field: MagneticField, points, beta: float, rmax: float = 2.0) -> tuple[float, float]:
    """(min, max) of m_radius / m_tilde over the sample points."""
    ratio = m_radius(field, points, beta, rmax) / m_tilde(field, points, beta)
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True)
class EnvelopeFit:
    """Upper envelope  y <= log C + exponent * t  of a point cloud."""

    exponent: float
    log_C: float
    n: int
    mean_gap: float

    @property
    def C(self) -> float:
        return math.exp(self.log_C)


def envelope_fit(t: np.ndarray, y: np.ndarray) -> EnvelopeFit:
    """Tightest line (nonnegative slope) lying above all points, in mean gap."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    # minimise sum(c + s t_i - y_i) subject to c + s t_i >= y_i, s >= 0
    res = linprog(
        c=[len(t), float(t.sum())],
        A_ub=-np.stack([np.ones_like(t), t], axis=1),
        b_ub=-y,
        bounds=[(None, None), (0, None)],
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"envelope fit failed: {res.message}")
    c, s = res.x
    gap = float(np.mean(c + s * t - y))
    return EnvelopeFit(exponent=float(s), log_C=float(c), n=len(t), mean_gap=gap)


def slow_variation_fit(field: MagneticField, beta: float, x, y, rmax: float = 2.0) -> EnvelopeFit:
    """Fit m(x) <= C (1 + |x-y| m(y))^l0 m(y) over the given pairs."""
    mx = m_radius(field, x, beta, rmax)
    my = m_radius(field, y, beta, rmax)
    sep = np.linalg.norm(np.asarray(x) - np.asarray(y), axis=1)
    return envelope_fit(np.log1p(sep * my), np.log(mx / my))


def growth_exponent_fit(mesh: Mesh, field: MagneticField, beta: float, pairs, m_values=None) -> EnvelopeFit:
    """Fit m(x) <= C m(y) (1 + d_beta(x, y))^l1 over vertex pairs."""
    pairs = np.asarray(pairs)
    m = m_radius(field, mesh.vertices, beta, _rmax(mesh)) if m_values is None else m_values
    src, inv = np.unique(pairs[:, 1], return_inverse=True)
    D = pairwise_agmon(mesh, field, beta, src)
    d = D[inv, pairs[:, 0]]
    return envelope_fit(np.log1p(d), np.log(m[pairs[:, 0]] / m[pairs[:, 1]]))
