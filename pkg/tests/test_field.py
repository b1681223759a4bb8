import numpy as np
import pytest

from steklov_lab.field import (
    ConstantField,
    FiniteTypeError,
    GaugedField,
    MonomialField,
    certify_finite_type,
    eval_B_derivs,
    kappa0_gamma0,
    make_field,
    multi_indices,
    vanishing_order,
)

CATALOG = [
    ConstantField.make(1.0),
    ConstantField.make(-2.5),
    MonomialField.make(1),
    MonomialField.make(2, B0=0.7),
    MonomialField.make(3),
    GaugedField.make(MonomialField.make(2), {(1, 1): 1.0, (3, 0): -0.5}),
]


def curl(field, x, step=1e-5):
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    dA2 = (field.potential(x + ex)[:, 1] - field.potential(x - ex)[:, 1]) / (2 * step)
    dA1 = (field.potential(x + ey)[:, 0] - field.potential(x - ey)[:, 0]) / (2 * step)
    return dA2 - dA1


@pytest.mark.parametrize("field", CATALOG, ids=lambda f: f.label)
def test_B_is_curl_of_A(field):
    x = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    assert np.allclose(curl(field, x), field.B(x), atol=1e-7)


@pytest.mark.parametrize("field", CATALOG, ids=lambda f: f.label)
def test_derivatives_match_finite_differences(field):
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (100, 2))
    step = 1e-4
    for k in range(field.max_order):
        for a in multi_indices(k):
            f0 = field.deriv(x, a)
            for axis, b in ((0, (a[0] + 1, a[1])), (1, (a[0], a[1] + 1))):
                e = np.zeros(2)
                e[axis] = step
                fd = (field.deriv(x + e, a) - field.deriv(x - e, a)) / (2 * step)
                exact = field.deriv(x, b)
                scale = 1.0 + np.abs(exact).max() + np.abs(f0).max()
                assert np.max(np.abs(fd - exact)) / scale <= 1e-6


def test_eval_B_derivs_examples():
    d = dict(eval_B_derivs(ConstantField.make(1.0), [0.3, -0.2], 1))
    assert d == {(0, 0): 1.0, (1, 0): 0.0, (0, 1): 0.0}
    d = dict(eval_B_derivs(MonomialField.make(1), [0, 0], 2))
    assert d[(0, 0)] == 0 and d[(1, 0)] == 1 and d[(0, 1)] == 0
    d = dict(eval_B_derivs(MonomialField.make(2), [0, 0], 3))
    assert d[(0, 0)] == 0 and d[(1, 0)] == 0 and d[(0, 1)] == 0 and d[(2, 0)] == 2
    with pytest.raises(ValueError):
        eval_B_derivs(ConstantField.make(), [0, 0], 2)


def test_gauged_field_has_base_derivatives():
    base = MonomialField.make(2)
    g = GaugedField.make(base, [(1, 1, 1.0), (0, 2, 3.0)])
    x = np.random.default_rng(2).uniform(-1, 1, (20, 2))
    for k in range(base.max_order + 1):
        for a in multi_indices(k):
            assert np.array_equal(g.deriv(x, a), base.deriv(x, a))
    assert np.allclose(g.potential(x) - base.potential(x), g.grad_gauge(x))
    assert (g.kappa_star, g.tau_star) == (base.kappa_star, base.tau_star)


def test_vanishing_order_examples():
    assert vanishing_order(ConstantField.make(), [0.2, 0.9], 1e-9) == 0
    assert vanishing_order(MonomialField.make(1), [0, 0.5], 1e-9) == 1
    assert vanishing_order(MonomialField.make(1), [0.5, 0], 1e-9) == 0
    assert vanishing_order(MonomialField.make(2), [0, 1], 1e-9) == 2


def test_vanishing_order_tol_stable():
    f = MonomialField.make(2)
    for x in ([0, 0.3], [0.4, 0.1], [-0.7, 0.2]):
        assert vanishing_order(f, x, 1e-8) == vanishing_order(f, x, 0.5e-8)


def test_vanishing_order_errors():
    f = MonomialField.make(2).with_certificate(kappa_star=1, tau_star=0.5)
    with pytest.raises(FiniteTypeError):
        vanishing_order(f, [0, 0], 1e-9)
    with pytest.raises(ValueError):
        vanishing_order(ConstantField.make(), [0, 0], 0.0)


def test_certify_finite_type(disk05):
    pts = disk05.vertices
    r = certify_finite_type(ConstantField.make(1.0), pts)
    assert r.passed and r.minimum == 1.0
    assert certify_finite_type(MonomialField.make(1), pts).passed
    weak = MonomialField.make(1).with_certificate(kappa_star=0, tau_star=0.5)
    r = certify_finite_type(weak, pts)
    assert not r.passed and abs(r.argmin[0]) < 1e-12
    with pytest.raises(ValueError):
        certify_finite_type(ConstantField.make(), np.empty((0, 2)))


def test_kappa0_gamma0(disk05):
    k, g = kappa0_gamma0(ConstantField.make(), disk05)
    assert k == 0 and len(g) == len(disk05.boundary_vertices)
    for kappa in (1, 2):
        k, g = kappa0_gamma0(MonomialField.make(kappa), disk05)
        assert k == kappa
        pts = disk05.vertices[g]
        assert len(g) == 2
        assert np.allclose(np.sort(pts[:, 1]), [-1, 1], atol=1e-12)


def test_make_field():
    assert isinstance(make_field("constant", B0=2.0), ConstantField)
    f = make_field("gauged", kappa=1, phi=[(1, 1, 1.0)], base_kind="monomial")
    assert isinstance(f, GaugedField) and f.kappa_star == 1
    with pytest.raises(ValueError):
        make_field("dipole")
    with pytest.raises(ValueError):
        MonomialField.make(0)
    with pytest.raises(ValueError):
        ConstantField.make(0.0)
