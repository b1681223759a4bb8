import numpy as np
import pytest

from steklov_lab.field import ConstantField, GaugedField, MonomialField
from steklov_lab.geometry import DomainSpec, build_mesh
from steklov_lab.solver import (
    assemble_boundary_mass,
    assemble_magnetic_form,
    boundary_integral,
    discrete_dtn,
    domain_integral,
    magnetic_gradient_density,
    solve_steklov,
    write_solution,
)

FIELDS = [None, ConstantField.make(1.0), MonomialField.make(1), MonomialField.make(2)]


@pytest.mark.parametrize("element", ["p1", "magnetic-p1"])
def test_zero_beta_stiffness_is_real_laplacian(disk05, element):
    K = assemble_magnetic_form(disk05, MonomialField.make(1), 0.0, element=element).K
    assert np.abs(K.imag).max() == 0
    assert np.abs(K @ np.ones(disk05.n_vertices)).max() < 1e-12


@pytest.mark.parametrize("field", FIELDS[1:], ids=lambda f: f.label)
@pytest.mark.parametrize("element", ["p1", "magnetic-p1"])
def test_stiffness_hermitian_psd(disk05, field, element):
    K = assemble_magnetic_form(disk05, field, 100.0, element=element).K
    assert abs(K - K.conj().T).max() < 1e-12 * abs(K).max()
    w = np.linalg.eigvalsh(K.toarray())
    assert w.min() > -1e-10 * w.max()


@pytest.mark.parametrize("element", ["p1", "magnetic-p1"])
def test_boundary_mass(disk02, element):
    M = assemble_boundary_mass(disk02, MonomialField.make(1), 100.0, element=element)
    Mb = M.block
    assert np.allclose(Mb, Mb.conj().T)
    assert np.linalg.eigvalsh(Mb).min() > 0
    one = np.ones(len(M.boundary))
    total = assemble_boundary_mass(disk02).block.sum()
    assert 2 * np.pi - 0.01 <= total <= 2 * np.pi
    if element == "p1":
        assert np.vdot(one, Mb @ one).real == pytest.approx(total)


def test_zero_field_spectrum(disk02):
    sol = solve_steklov(disk02, None, 0.0, k=5)
    lam = sol.eigenvalues
    assert abs(lam[0]) < 1e-8
    assert np.allclose(lam[1:], [1, 1, 2, 2], rtol=2e-3)
    assert sol.element == "magnetic-p1"


@pytest.mark.parametrize("field", FIELDS[1:], ids=lambda f: f.label)
def test_eigenpairs(disk05, field):
    beta = 100.0
    sol = solve_steklov(disk05, field, beta, k=4)
    lam = sol.eigenvalues
    assert lam[0] > 0
    assert np.all(np.diff(lam) >= -1e-12)
    assert np.all(sol.residuals < 1e-8)
    K = assemble_magnetic_form(disk05, field, beta).K
    M = assemble_boundary_mass(disk05, field, beta, "magnetic-p1").block
    # interior equation is exact
    for j in range(sol.k):
        r = K @ sol.full_eigvecs[:, j]
        assert np.abs(r[disk05.interior_vertices]).max() < 1e-9 * np.abs(r).max()
    # boundary Gram matrix is the identity
    V = sol.full_eigvecs[sol.boundary]
    assert np.allclose(V.conj().T @ M @ V, np.eye(sol.k), atol=1e-10)


@pytest.mark.parametrize("beta", [100.0, 400.0])
def test_energy_identity(disk05, beta):
    # energy of the extension = lambda * boundary L2 norm^2, two ways
    f = MonomialField.make(1)
    sol = solve_steklov(disk05, f, beta, k=1)
    lam, u = sol.ground_state()
    K = assemble_magnetic_form(disk05, f, beta)
    norm2 = boundary_integral(disk05, u, field=f, beta=beta, element=sol.element)
    dens, wq = magnetic_gradient_density(disk05, f, beta, u)
    assert K.energy(u) == pytest.approx(lam * norm2, rel=1e-8)
    assert np.sum(wq * dens) == pytest.approx(K.energy(u), rel=1e-8)


def test_dtn_apply_matches_matrix(disk05):
    K = assemble_magnetic_form(disk05, MonomialField.make(1), 50.0)
    S = discrete_dtn(K, disk05)
    f = np.random.default_rng(0).normal(size=S.size) + 0j
    assert np.allclose(S.apply(f), S.matrix @ f)
    assert np.allclose(S.matrix, S.matrix.conj().T)


def test_lanczos_matches_dense(disk05):
    f = MonomialField.make(1)
    a = solve_steklov(disk05, f, 200.0, k=3, method="dense").eigenvalues
    b = solve_steklov(disk05, f, 200.0, k=3, method="lanczos").eigenvalues
    assert np.allclose(a, b, rtol=1e-9)
    with pytest.raises(ValueError):
        solve_steklov(disk05, f, 200.0, method="qr")


def test_maximum_principle_zero_field(disk05):
    sol = solve_steklov(disk05, None, 0.0, k=3)
    for j in range(1, 3):
        u = sol.full_eigvecs[:, j]
        assert np.abs(u).max() <= np.abs(u[sol.boundary]).max() * (1 + 1e-9)


def test_quadrature_order_stable(disk02):
    f = MonomialField.make(1)
    lam2 = solve_steklov(disk02, f, 100.0, quadrature_order=2).eigenvalues[0]
    lam4 = solve_steklov(disk02, f, 100.0, quadrature_order=4).eigenvalues[0]
    assert abs(lam2 - lam4) <= 1e-3 * lam4


@pytest.mark.parametrize("field", FIELDS[1:], ids=lambda f: f.label)
def test_maximum_principle_magnetic(disk05, field):
    sol = solve_steklov(disk05, field, 200.0, k=3)
    for u in sol.full_eigvecs.T:
        assert np.abs(u).max() <= (1 + 10 * disk05.h) * np.abs(u[sol.boundary]).max()


def test_dtn_energy_identity_random_data(disk05):
    K = assemble_magnetic_form(disk05, ConstantField.make(1.0), 100.0)
    S = discrete_dtn(K, disk05)
    rng = np.random.default_rng(7)
    for _ in range(20):
        f = rng.normal(size=S.size) + 1j * rng.normal(size=S.size)
        u = S.extend(f)
        assert np.vdot(f, S.matrix @ f).real == pytest.approx(K.energy(u), rel=1e-10)
    x = rng.normal(size=(disk05.n_vertices, 100)) + 1j * rng.normal(size=(disk05.n_vertices, 100))
    q = np.einsum("vi,vi->i", x.conj(), K.K @ x).real
    assert np.all(q >= -1e-12 * np.sum(np.abs(x) ** 2, axis=0))


def test_gauge_gap_converges():
    # the discrete spectrum is gauge invariant only in the limit; the gap
    # should shrink roughly like h^2
    base = MonomialField.make(1)
    g = GaugedField.make(base, [(1, 1, 1.0)])
    gaps = []
    for h in (0.1, 0.05, 0.025):
        mesh = build_mesh(DomainSpec.disk(), h)
        a = solve_steklov(mesh, base, 10.0).eigenvalues[0]
        gaps.append(abs(solve_steklov(mesh, g, 10.0).eigenvalues[0] - a) / a)
    assert gaps[0] / gaps[1] > 3 and gaps[1] / gaps[2] > 3
    assert gaps[2] < 0.015


def test_magnetic_element_beats_p1():
    # reference from a finer mesh; the phase-fitted element is closer on the coarse one
    f = ConstantField.make(1.0)
    ref = solve_steklov(build_mesh(DomainSpec.disk(), 0.02), f, 200.0).eigenvalues[0]
    coarse = build_mesh(DomainSpec.disk(), 0.05)
    e_mag = abs(solve_steklov(coarse, f, 200.0, element="magnetic-p1").eigenvalues[0] - ref)
    e_p1 = abs(solve_steklov(coarse, f, 200.0, element="p1").eigenvalues[0] - ref)
    assert e_mag < e_p1


def test_unknown_element(disk05):
    with pytest.raises(ValueError):
        solve_steklov(disk05, None, 0.0, element="p2")


def test_write_solution(tmp_path, disk05):
    sol = solve_steklov(disk05, MonomialField.make(1), 50.0, k=2)
    paths = write_solution(sol, disk05, tmp_path, stem="s")
    assert [p.name for p in paths] == ["s.json", "s_0.csv", "s_1.csv"]
    arr = np.loadtxt(paths[1], delimiter=",", skiprows=1)
    assert np.array_equal(arr[:, 2] + 1j * arr[:, 3], sol.full_eigvecs[:, 0])
