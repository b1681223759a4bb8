"""P1 finite elements for the magnetic Steklov problem.

The magnetic form ``K`` discretises the energy of (D + beta A)u with
D = -i grad. The Dirichlet-to-Neumann matrix is its Schur complement onto
the boundary dofs, and Steklov pairs solve ``S f = lambda M_b f``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import MagneticField
from .geometry import Mesh

log = logging.getLogger(__name__)

ZERO_EIGENVALUE_RTOL = 1e-10


class FactorizationError(RuntimeError):
    """The interior block (or full form) could not be factorised."""


class SteklovError(RuntimeError):
    pass


# -- quadrature -------------------------------------------------------------------

# barycentric points and weights (weights sum to 1) on the reference triangle
_RULES = {
    1: (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])),
    2: (
        np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3),
    ),
    4: (
        np.array([
            [0.108103018168070, 0.445948490915965, 0.445948490915965],
            [0.445948490915965, 0.108103018168070, 0.445948490915965],
            [0.445948490915965, 0.445948490915965, 0.108103018168070],
            [0.816847572980459, 0.091576213509771, 0.091576213509771],
            [0.091576213509771, 0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.091576213509771, 0.816847572980459],
        ]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
    ),
    5: (
        np.array([
            [1 / 3, 1 / 3, 1 / 3],
            [0.059715871789770, 0.470142064105115, 0.470142064105115],
            [0.470142064105115, 0.059715871789770, 0.470142064105115],
            [0.470142064105115, 0.470142064105115, 0.059715871789770],
            [0.797426985353087, 0.101286507323456, 0.101286507323456],
            [0.101286507323456, 0.797426985353087, 0.101286507323456],
            [0.101286507323456, 0.101286507323456, 0.797426985353087],
        ]),
        np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
    ),
}


def triangle_rule(order: int):
    """Barycentric points and weights exact for polynomials of degree ``order``."""
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    for k in sorted(_RULES):
        if k >= order:
            return _RULES[k]
    raise ValueError(f"no triangle rule of order {order} (max {max(_RULES)})")


def _gauss_1d(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Constant gradients of the three hat functions on each triangle, shape (F, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2.0 * mesh.areas
    # grad of barycentric coordinate k is the rotated opposite edge over 2|T|
    g = np.empty_like(p)
    for k in range(3):
        e = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        g[:, k, 0] = -e[:, 1] / area2
        g[:, k, 1] = e[:, 0] / area2
    return g


def quadrature_points(mesh: Mesh, order: int):
    """Physical quadrature points (F, Q, 2), physical weights (F, Q), barycentrics (Q, 3)."""
    bary, w = triangle_rule(order)
    p = mesh.vertices[mesh.triangles]
    x = np.einsum("qk,fkd->fqd", bary, p)
    return x, mesh.areas[:, None] * w[None, :], bary


# -- assembly -----------------------------------------------------------------------

ELEMENTS = ("magnetic-p1", "p1")


@dataclass(frozen=True, eq=False)
class MagneticStiffness:
    K: sp.csr_matrix
    beta: float
    quadrature_order: int
    element: str = "magnetic-p1"

    def energy(self, u) -> float:
        u = np.asarray(u)
        return float(np.real(np.vdot(u, self.K @ u)))


def _check_element(element: str) -> None:
    if element not in ELEMENTS:
        raise ValueError(f"unknown element {element!r}; choose from {ELEMENTS}")


def _vertex_potential(mesh: Mesh, field: MagneticField | None, beta: float, element: str) -> np.ndarray:
    """beta * A at each vertex for the phase-fitted element, zero for plain P1."""
    if element == "p1" or field is None or beta == 0:
        return np.zeros((mesh.n_vertices, 2))
    return beta * field.potential(mesh.vertices)


def basis_at(mesh: Mesh, field, beta: float, x: np.ndarray, bary: np.ndarray, element: str):
    """Basis values and magnetic derivatives at points inside each triangle.

    ``x`` has shape (F, Q, 2) with barycentrics ``bary`` (Q, 3). Returns
    ``psi`` (F, Q, 3) and ``Dpsi`` = (D + beta A) psi of shape (F, Q, 3, 2).
    The phase-fitted basis is psi_k = phi_k exp(-i beta A(x_k).(x - x_k)).
    """
    t = mesh.triangles
    nf, nq = x.shape[:2]
    grads = p1_gradients(mesh)
    if field is None or beta == 0:
        a = np.zeros((nf, nq, 2))
    else:
        a = beta * field.potential(x.reshape(-1, 2)).reshape(nf, nq, 2)
    av = _vertex_potential(mesh, field, beta, element)[t]                # (F, 3, 2)
    xv = mesh.vertices[t]
    phase = np.einsum("fkd,fqkd->fqk", av, x[:, :, None, :] - xv[:, None, :, :])
    e = np.exp(-1j * phase)
    phi = np.broadcast_to(bary[None], (nf, nq, 3))
    b = a[:, :, None, :] - av[:, None, :, :]                           # (F, Q, 3, 2)
    Dpsi = e[..., None] * (-1j * grads[:, None, :, :] + b * phi[..., None])
    return e * phi, Dpsi


def assemble_magnetic_form(
    mesh: Mesh,
    field: MagneticField | None,
    beta: float,
    quadrature_order: int = 4,
    element: str = "magnetic-p1",
    chunk: int = 50000,
) -> MagneticStiffness:
    """Hermitian matrix of the form  int (D+bA)psi_q . conj((D+bA)psi_p).

    ``element='p1'`` uses plain hat functions; ``'magnetic-p1'`` multiplies
    each hat by a linear gauge phase anchored at its vertex, which removes
    the beta*|A|*h resolution requirement. Only the upper triangle of each
    element block is kept; the lower triangle is its conjugate mirror, so the
    result is exactly Hermitian.
    """
    _check_element(element)
    bary, w = triangle_rule(quadrature_order)
    nf = mesh.n_triangles
    iu, ju = np.triu_indices(3)
    vals = np.empty((nf, len(iu)), dtype=complex)
    for lo in range(0, nf, chunk):
        sub = slice(lo, min(nf, lo + chunk))
        sub_mesh = _TriangleSlice(mesh, sub)
        xq = np.einsum("qk,fkd->fqd", bary, mesh.vertices[mesh.triangles[sub]])
        _, X = basis_at(sub_mesh, field, beta, xq, bary, element)
        W = mesh.areas[sub, None] * w[None, :]
        local = np.einsum("fq,fqbd,fqad->fab", W, X, X.conj())      # [a, b] = int X_b . conj(X_a)
        vals[sub] = local[:, iu, ju]
    diag = iu == ju
    vals[:, diag] = vals[:, diag].real

    t = mesh.triangles
    rows = t[:, iu].ravel()
    cols = t[:, ju].ravel()
    vals = vals.ravel()
    n = mesh.n_vertices
    # a local (p, q) pair may map to a global lower-triangle position; fold it
    swap = rows > cols
    r2 = np.where(swap, cols, rows)
    c2 = np.where(swap, rows, cols)
    v2 = np.where(swap, np.conj(vals), vals)
    U = sp.coo_matrix((v2, (r2, c2)), shape=(n, n)).tocsr()
    D = sp.diags(U.diagonal().real)
    strict = sp.triu(U, k=1)
    K = (strict + strict.conj().T + D).tocsr()
    return MagneticStiffness(K=K, beta=float(beta), quadrature_order=int(quadrature_order), element=element)


class _TriangleSlice:
    """Mesh view restricted to a contiguous block of triangles."""

    def __init__(self, mesh: Mesh, sub: slice):
        self.vertices = mesh.vertices
        self.n_vertices = mesh.n_vertices
        self.triangles = mesh.triangles[sub]
        self.areas = mesh.areas[sub]


@dataclass(frozen=True, eq=False)
class BoundaryMass:
    M: sp.csr_matrix
    boundary: np.ndarray

    @property
    def block(self) -> np.ndarray:
        """Dense boundary-boundary block in ``boundary`` order."""
        return self.M[self.boundary][:, self.boundary].toarray()


def assemble_boundary_mass(
    mesh: Mesh, field: MagneticField | None = None, beta: float = 0.0, element: str = "p1", npts: int = 4
) -> BoundaryMass:
    """Boundary mass matrix of the trial traces.

    For plain P1 (or beta = 0) this is the real length/3, length/6 matrix.
    The phase-fitted element picks up the edge phase on the off-diagonal.
    """
    _check_element(element)
    e = mesh.boundary_edges
    L = mesh.boundary_edge_lengths
    av = _vertex_potential(mesh, field, beta, element)
    off = L / 6
    if np.any(av):
        s, w = _gauss_1d(npts)
        pa, pb = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        x = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
        ph_a = np.einsum("nd,nqd->nq", av[e[:, 0]], x - pa[:, None, :])
        ph_b = np.einsum("nd,nqd->nq", av[e[:, 1]], x - pb[:, None, :])
        # M[a, b] = int phi_a phi_b psi-phase_b conj(psi-phase_a)
        off = L * np.sum(w * s * (1 - s) * np.exp(-1j * (ph_b - ph_a)), axis=1)
    rows = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 0], e[:, 1], e[:, 1], e[:, 0]])
    vals = np.concatenate([L / 3, L / 3, off, np.conj(off)])
    n = mesh.n_vertices
    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    if not np.any(av):
        M = M.real.tocsr()
    return BoundaryMass(M=M, boundary=mesh.boundary_vertices)


# -- Dirichlet-to-Neumann ---------------------------------------------------------

@dataclass(eq=False)
class DirichletToNeumann:
    """Schur complement of ``K`` on the boundary dofs, with its interior solver."""

    matrix: np.ndarray | None
    boundary: np.ndarray
    interior: np.ndarray
    stiffness: MagneticStiffness
    _lu: object = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return len(self.boundary)

    def _blocks(self):
        K = self.stiffness.K
        return K[self.interior][:, self.boundary], K[self.boundary][:, self.boundary], K[self.boundary][:, self.interior]

    def extend(self, f) -> np.ndarray:
        """Discrete magnetic-harmonic extension of boundary data ``f``."""
        f = np.asarray(f, dtype=complex)
        K_ib, _, _ = self._blocks()
        u = np.zeros((self.stiffness.K.shape[0],) + f.shape[1:], dtype=complex)
        u[self.boundary] = f
        if len(self.interior):
            u[self.interior] = -self._lu.solve(np.asarray(K_ib @ f))
        return u

    def apply(self, f) -> np.ndarray:
        """S f, computed without forming S."""
        u = self.extend(f)
        return np.asarray(self.stiffness.K @ u)[self.boundary]


def _factorize(A: sp.spmatrix, what: str):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise FactorizationError(f"{what} factorisation failed ({exc}); matrix is singular") from exc


def discrete_dtn(K: MagneticStiffness, mesh: Mesh, dense: bool = True, block: int = 256) -> DirichletToNeumann:
    """S = K_bb - K_bi K_ii^{-1} K_ib, one interior solve per boundary column.

    With ``dense=False`` only the factorisation is prepared and S is applied
    matrix-free through :meth:`DirichletToNeumann.apply`.
    """
    bnd = mesh.boundary_vertices
    inn = mesh.interior_vertices
    A = K.K
    lu = _factorize(A[inn][:, inn], "interior block") if len(inn) else None
    dtn = DirichletToNeumann(matrix=None, boundary=bnd, interior=inn, stiffness=K, _lu=lu)
    if not dense:
        return dtn
    K_ib, K_bb, K_bi = dtn._blocks()
    S = K_bb.toarray().astype(complex)
    if len(inn):
        K_ib = K_ib.tocsc()
        for start in range(0, len(bnd), block):
            cols = K_ib[:, start:start + block].toarray()
            X = lu.solve(cols)
            S[:, start:start + block] -= K_bi @ X
    if not np.all(np.isfinite(S)):
        raise FactorizationError("interior solve produced non-finite values")
    dtn.matrix = 0.5 * (S + S.conj().T)
    return dtn


def reconstruct_eigenfunction(dtn: DirichletToNeumann, f) -> np.ndarray:
    """Full-domain vector: boundary values ``f``, interior -K_ii^{-1} K_ib f."""
    return dtn.extend(f)


# -- eigenproblem ---------------------------------------------------------------------

@dataclass(eq=False)
class SteklovSolution:
    eigenvalues: np.ndarray
    boundary_eigvecs: np.ndarray
    full_eigvecs: np.ndarray
    beta: float
    residuals: np.ndarray
    boundary: np.ndarray
    label: str = ""
    h: float = float("nan")
    element: str = "p1"
    dtn: "DirichletToNeumann | None" = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def ground_state(self) -> tuple[float, np.ndarray]:
        return float(self.eigenvalues[0]), self.full_eigvecs[:, 0]


def _mass_cholesky(M_bb: np.ndarray) -> np.ndarray:
    try:
        return sla.cholesky(M_bb, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SteklovError("boundary mass block is not positive definite") from exc


def _clamp(lam: np.ndarray, scale: float) -> np.ndarray:
    lam = lam.copy()
    lam[np.abs(lam) < ZERO_EIGENVALUE_RTOL * scale] = 0.0
    return lam


def steklov_eigs(dtn: DirichletToNeumann, M_b: BoundaryMass, k: int) -> SteklovSolution:
    """Lowest ``k`` Steklov pairs by Cholesky congruence of the dense pencil (S, M_bb)."""
    S = dtn.matrix
    if S is None:
        raise SteklovError("dense DtN matrix not formed; use discrete_dtn(dense=True)")
    nb = S.shape[0]
    if not 1 <= k <= nb:
        raise SteklovError(f"k={k} must lie in [1, {nb}]")
    M_bb = M_b.block
    L = _mass_cholesky(M_bb)
    Y = sla.solve_triangular(L, S, lower=True)
    C = sla.solve_triangular(L, Y.conj().T, lower=True).conj().T
    C = 0.5 * (C + C.conj().T)
    lam, Z = sla.eigh(C, subset_by_index=[0, k - 1])
    F = sla.solve_triangular(L.conj().T, Z, lower=False)
    scale = float(np.max(np.sum(np.abs(C), axis=1)))
    lam = _clamp(lam, scale)
    res = np.linalg.norm(S @ F - (M_bb @ F) * lam, axis=0) / np.linalg.norm(F, axis=0)
    U = dtn.extend(F)
    return SteklovSolution(
        eigenvalues=lam, boundary_eigvecs=F, full_eigvecs=U,
        beta=dtn.stiffness.beta, residuals=res, boundary=dtn.boundary, dtn=dtn,
    )


def steklov_eigs_lanczos(dtn: DirichletToNeumann, M_b: BoundaryMass, k: int, tol: float = 1e-13) -> SteklovSolution:
    """Lowest ``k`` Steklov pairs by Lanczos on the inverse congruent operator.

    Uses S^{-1} = (K^{-1})_bb, so each iteration is one sparse solve with the
    full magnetic form. Requires K nonsingular (beta > 0 with B != 0).
    """
    nb = dtn.size
    if not 1 <= k < nb:
        raise SteklovError(f"k={k} must lie in [1, {nb - 1}]")
    Kfull = dtn.stiffness.K
    lu = _factorize(Kfull, "magnetic form")
    n = Kfull.shape[0]
    L = _mass_cholesky(M_b.block)
    LH = L.conj().T

    def matvec(y):
        g = np.zeros(n, dtype=complex)
        g[dtn.boundary] = L @ np.ravel(y)
        return LH @ lu.solve(g)[dtn.boundary]

    op = spla.LinearOperator((nb, nb), matvec=matvec, dtype=complex)
    v0 = np.ones(nb, dtype=complex)
    mu, Z = spla.eigsh(op, k=k, which="LA", tol=tol, v0=v0)
    order = np.argsort(-mu)
    mu, Z = mu[order], Z[:, order]
    if np.any(mu <= 0):
        raise SteklovError("magnetic form is not positive definite; use the dense solver")
    lam = 1.0 / mu
    F = sla.solve_triangular(LH, Z, lower=False)
    U = dtn.extend(F)
    SF = np.asarray(Kfull @ U)[dtn.boundary]
    M_bb = M_b.block
    res = np.linalg.norm(SF - (M_bb @ F) * lam, axis=0) / np.linalg.norm(F, axis=0)
    return SteklovSolution(
        eigenvalues=lam, boundary_eigvecs=F, full_eigvecs=U,
        beta=dtn.stiffness.beta, residuals=res, boundary=dtn.boundary, dtn=dtn,
    )


DENSE_LIMIT = 1200


def solve_steklov(
    mesh: Mesh,
    field: MagneticField | None,
    beta: float,
    k: int = 1,
    quadrature_order: int = 4,
    method: str = "auto",
    element: str = "magnetic-p1",
) -> SteklovSolution:
    """Assemble, reduce and solve; ``method`` is 'dense', 'lanczos' or 'auto'."""
    K = assemble_magnetic_form(mesh, field, beta, quadrature_order, element)
    M_b = assemble_boundary_mass(mesh, field, beta, element)
    nb = len(mesh.boundary_vertices)
    if method == "auto":
        magnetic = field is not None and beta != 0
        method = "lanczos" if (magnetic and nb > DENSE_LIMIT and k < nb) else "dense"
    log.info("steklov solve: V=%d nb=%d beta=%g method=%s", mesh.n_vertices, nb, beta, method)
    if method == "dense":
        sol = steklov_eigs(discrete_dtn(K, mesh), M_b, k)
    elif method == "lanczos":
        sol = steklov_eigs_lanczos(discrete_dtn(K, mesh, dense=False), M_b, k)
    else:
        raise ValueError(f"unknown method {method!r}")
    sol.label = field.label if field is not None else "A=0"
    sol.h = mesh.h
    sol.element = element
    return sol


# -- integrals of discrete functions ---------------------------------------------------------

def boundary_values(mesh: Mesh, u, field=None, beta: float = 0.0, element: str = "p1", npts: int = 3):
    """Trace of the discrete function at Gauss points of each boundary edge.

    Returns (values (E, n), weights (E, n), points (E, n, 2)).
    """
    _check_element(element)
    u = np.asarray(u)
    e = mesh.boundary_edges
    s, w = _gauss_1d(npts)
    pa, pb = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
    x = pa[:, None, :] + s[None, :, None] * (pb - pa)[:, None, :]
    av = _vertex_potential(mesh, field, beta, element)
    ea = np.exp(-1j * np.einsum("nd,nqd->nq", av[e[:, 0]], x - pa[:, None, :]))
    eb = np.exp(-1j * np.einsum("nd,nqd->nq", av[e[:, 1]], x - pb[:, None, :]))
    uq = u[e[:, 0], None] * (1 - s) * ea + u[e[:, 1], None] * s * eb
    return uq, mesh.boundary_edge_lengths[:, None] * w[None, :], x


def boundary_integral(mesh: Mesh, u, weight=None, field=None, beta: float = 0.0,
                      element: str = "p1", npts: int = 3) -> float:
    """int over the boundary of weight * |u|^2.

    ``weight`` is either per-vertex (interpolated linearly) or a callable of
    points. ``field``/``beta``/``element`` select the trial basis that ``u``
    expands in.
    """
    uq, wq, x = boundary_values(mesh, u, field, beta, element, npts)
    vals = np.abs(uq) ** 2
    if weight is not None:
        vals = vals * _weight_at(mesh, weight, x, mesh.boundary_edges, edge=True)
    return float(np.sum(wq * vals))


def domain_values(mesh: Mesh, u, field=None, beta: float = 0.0, element: str = "p1", order: int = 4):
    """u and (D + beta A)u at the quadrature points of every triangle.

    Returns (u (F, Q), Du (F, Q, 2), weights (F, Q), points (F, Q, 2)).
    """
    _check_element(element)
    u = np.asarray(u, dtype=complex)
    x, wq, bary = quadrature_points(mesh, order)
    psi, Dpsi = basis_at(mesh, field, beta, x, bary, element)
    ut = u[mesh.triangles]
    return (np.einsum("fqk,fk->fq", psi, ut), np.einsum("fqkd,fk->fqd", Dpsi, ut), wq, x)


def domain_integral(mesh: Mesh, u, weight=None, field=None, beta: float = 0.0,
                    element: str = "p1", order: int = 4) -> float:
    """int over the domain of weight * |u|^2 (weight per-vertex or callable)."""
    uq, _, wq, x = domain_values(mesh, u, field, beta, element, order)
    vals = np.abs(uq) ** 2
    if weight is not None:
        vals = vals * _weight_at(mesh, weight, x, mesh.triangles)
    return float(np.sum(wq * vals))


def magnetic_gradient_density(mesh: Mesh, field: MagneticField | None, beta: float, u,
                              order: int = 4, element: str = "magnetic-p1"):
    """|(D + beta A)u|^2 at quadrature points, with the physical weights."""
    _, du, wq, _ = domain_values(mesh, u, field, beta, element, order)
    return np.sum(np.abs(du) ** 2, axis=2), wq


def _weight_at(mesh: Mesh, weight, x: np.ndarray, cells: np.ndarray, edge: bool = False) -> np.ndarray:
    if callable(weight):
        return np.asarray(weight(x.reshape(-1, 2)), float).reshape(x.shape[:2])
    wv = np.asarray(weight, float)[cells]
    if edge:
        pa = mesh.vertices[cells[:, 0]]
        pb = mesh.vertices[cells[:, 1]]
        s = np.einsum("nqd,nd->nq", x - pa[:, None, :], pb - pa) / np.sum((pb - pa) ** 2, axis=1)[:, None]
        return wv[:, 0, None] * (1 - s) + wv[:, 1, None] * s
    return _interp_triangles(mesh, wv, x)


def _interp_triangles(mesh: Mesh, wv: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of per-vertex triangle values at points inside them."""
    p = mesh.vertices[mesh.triangles]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    r = x - p[:, None, 0, :]
    l1 = (r[..., 0] * e2[:, None, 1] - r[..., 1] * e2[:, None, 0]) / det[:, None]
    l2 = (e1[:, None, 0] * r[..., 1] - e1[:, None, 1] * r[..., 0]) / det[:, None]
    return wv[:, 0, None] * (1 - l1 - l2) + wv[:, 1, None] * l1 + wv[:, 2, None] * l2


# -- export ----------------------------------------------------------------------------

def write_solution(sol: SteklovSolution, mesh: Mesh, out_dir, stem: str = "solution") -> list[Path]:
    """JSON header plus one per-vertex CSV per eigenpair."""
    out = Path(out_dir)
    header = {
        "beta": sol.beta,
        "h": sol.h,
        "field": sol.label,
        "k": sol.k,
        "eigenvalues": sol.eigenvalues.tolist(),
        "residuals": sol.residuals.tolist(),
    }
    paths = [out / f"{stem}.json"]
    paths[0].write_text(json.dumps(header, indent=2) + "\n")
    for j in range(sol.k):
        u = sol.full_eigvecs[:, j]
        rows = ["x,y,re_u,im_u,abs_u"]
        rows += [
            f"{x!r},{y!r},{a!r},{b!r},{c!r}"
            for (x, y), a, b, c in zip(mesh.vertices.tolist(), u.real.tolist(), u.imag.tolist(), np.abs(u).tolist())
        ]
        p = out / f"{stem}_{j}.csv"
        p.write_text("\n".join(rows) + "\n")
        paths.append(p)
    return paths
