import numpy as np
from hypothesis import given, settings, strategies as st

from steklov_lab import agmon, config as cfg, verify
from steklov_lab.field import ConstantField, MonomialField, vanishing_order
from steklov_lab.geometry import DomainSpec, build_mesh

from conftest import disk_mesh

coords = st.floats(-0.9, 0.9)
betas = st.floats(1.0, 1e5)


@given(x=coords, y=coords, b1=betas, b2=betas, kappa=st.integers(1, 3))
def test_m_tilde_monotone_in_beta(x, y, b1, b2, kappa):
    f = MonomialField.make(kappa)
    lo, hi = sorted((b1, b2))
    assert agmon.m_tilde(f, [x, y], lo)[0] <= agmon.m_tilde(f, [x, y], hi)[0] * (1 + 1e-12)


@given(b=st.floats(2.0, 1e4))
def test_constant_m_tilde_is_sqrt_beta(b):
    assert np.isclose(agmon.m_tilde(ConstantField.make(1.0), [0.1, 0.2], b)[0], np.sqrt(b))


@given(s=st.lists(st.floats(-5, 5), min_size=1, max_size=50))
def test_smooth_step_bounded(s):
    v = agmon._smooth_step(np.array(s))
    assert np.all((v >= 0) & (v <= 1))


@given(x=coords, y=st.floats(-0.9, 0.9).filter(lambda v: abs(v) > 1e-3), kappa=st.integers(1, 3))
def test_vanishing_order_monomial(x, y, kappa):
    # B = x1^kappa vanishes to order kappa on x1 = 0, nowhere else
    f = MonomialField.make(kappa)
    assert vanishing_order(f, [0.0, y], 1e-9) == kappa
    if abs(x) > 0.05:
        assert vanishing_order(f, [x, y], 1e-9) == 0


@settings(max_examples=30, deadline=None)
@given(src=st.lists(st.integers(0, 10_000), min_size=1, max_size=3, unique=True),
       b=st.floats(20.0, 500.0))
def test_agmon_distance_lipschitz_along_edges(src, b):
    mesh = disk_mesh(0.1)
    f = MonomialField.make(1)
    src = [s % mesh.n_vertices for s in src]
    d = agmon.agmon_distance(mesh, f, b, src)
    e, w = agmon.edge_weights(mesh, f, b)
    assert np.all(d[src] == 0)
    assert np.all(np.abs(d[e[:, 0]] - d[e[:, 1]]) <= w + 1e-9)


@given(slope=st.floats(-5, 5), icpt=st.floats(-5, 5))
def test_robust_fit_recovers_lines(slope, icpt):
    x = np.linspace(0, 3, 25)
    fit = verify.robust_fit(x, icpt + slope * x)
    assert np.isclose(fit["slope"], slope, atol=1e-6) and np.isclose(fit["intercept"], icpt, atol=1e-6)


@given(t=st.lists(st.floats(0, 10), min_size=2, max_size=30), noise=st.floats(0, 1))
def test_envelope_fit_dominates(t, noise):
    t = np.array(t)
    y = 0.3 * t - noise * np.sin(7 * t)
    fit = agmon.envelope_fit(t, y)
    assert fit.exponent >= 0
    assert np.all(fit.log_C + fit.exponent * t >= y - 1e-7)


@settings(max_examples=15, deadline=None)
@given(w=st.floats(0.5, 2.0), hgt=st.floats(0.5, 2.0), frac=st.floats(0.08, 0.2))
def test_rectangle_meshes_valid(w, hgt, frac):
    h = frac * min(w, hgt)
    mesh = build_mesh(DomainSpec.rectangle(0, 0, w, hgt), h)
    assert np.all(mesh.areas > 0)
    assert np.isclose(mesh.areas.sum(), w * hgt)
    assert np.isclose(mesh.boundary_length, 2 * (w + hgt))
    assert mesh.n_vertices - len(mesh.edges) + mesh.n_triangles == 1


@given(bs=st.lists(st.floats(0.0, 1e4), min_size=1, max_size=5), h=st.floats(0.01, 0.5))
def test_config_snapshot_roundtrip(tmp_path_factory, bs, h):
    c = cfg.load(overrides={"field.kind": "constant", "beta": ", ".join(repr(b) for b in bs), "h": repr(h)})
    path = tmp_path_factory.mktemp("c") / "snap.txt"
    path.write_text(c.snapshot())
    again = cfg.load(str(path))
    assert again.betas == c.betas and again.h == c.h
