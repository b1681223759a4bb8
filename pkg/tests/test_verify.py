import json
import math

import numpy as np
import pytest

from steklov_lab import verify
from steklov_lab.field import ConstantField, MonomialField
from steklov_lab.geometry import DomainSpec
from steklov_lab.solver import solve_steklov
from steklov_lab.verify import ExperimentError, ExperimentReport


def roundtrip(rep, tmp_path):
    """Read a written report back and recompute its verdict from disk."""
    js, cs = rep.write(tmp_path)
    back = ExperimentReport.from_json(js.read_text())
    back = ExperimentReport.from_csv(back, cs.read_text()).evaluate()
    assert back.verdict == rep.verdict
    assert [c["passed"] for c in back.checks] == [c["passed"] for c in rep.checks]
    return back


def test_linear_and_robust_fit():
    x = np.linspace(0, 5, 40)
    y = 1.0 - 2.0 * x
    lf = verify.linear_fit(x, y)
    assert lf["slope"] == pytest.approx(-2.0) and lf["r2"] == pytest.approx(1.0)
    y2 = y.copy()
    y2[5] += 30.0                  # one wild outlier
    rf = verify.robust_fit(x, y2)
    assert rf["slope"] == pytest.approx(-2.0, abs=0.05)
    assert abs(verify.linear_fit(x, y2)["slope"] + 2.0) > abs(rf["slope"] + 2.0)


def test_relative_spread():
    assert verify.relative_spread([2.0, 2.0, 2.0]) == 0.0
    assert verify.relative_spread([1.0, 3.0]) == pytest.approx(2.0)     # max / min - 1
    assert math.isinf(verify.relative_spread([1.0, float("nan")]))


def test_report_kind_validated():
    with pytest.raises(ValueError):
        ExperimentReport(kind="other", name="scaling", inputs={}, columns=[], table=[])


def test_empty_checks_fail():
    r = ExperimentReport(kind="scaling", name="scaling", inputs={}, columns=[], table=[])
    assert not r.verdict


def test_scaling_recheck_and_tamper(tmp_path, disk05, const_field):
    rep = verify.scaling_sweep(disk05, const_field, [50, 100, 200, 400, 800])
    assert rep.column("lambda1").min() > 0
    assert set(rep.fits) == {"loglog", "subset_slopes"}
    roundtrip(rep, tmp_path)
    # a tampered table must change the recomputed verdict
    bad = ExperimentReport.from_json(rep.to_json())
    bad.table = [[b, lam * b ** 0.3] for b, lam in bad.table]
    assert not bad.evaluate().verdict


def test_scaling_requires_decade(disk05, const_field):
    with pytest.raises(ExperimentError, match="decade"):
        verify.scaling_sweep(disk05, const_field, [100, 200, 400, 800])


def test_decay_rejects_zero_field(disk05):
    sol = solve_steklov(disk05, None, 0.0)
    with pytest.raises(ExperimentError, match="not positive"):
        verify.decay_profile(sol, disk05, ConstantField.make(1.0))


def test_decay_report_roundtrip(tmp_path, disk05, mono_field):
    sol = solve_steklov(disk05, mono_field, 200.0)
    rep = verify.decay_profile(sol, disk05, mono_field)
    assert rep.params["gate_proxy"] is False
    assert verify.fitted_rate(rep) > 0
    assert "proxy" in rep.fits
    back = roundtrip(rep, tmp_path)
    assert back.fits["best"] == rep.fits["best"]


def test_decay_empty_well_recorded(disk05, const_field):
    # lambda_1 < sqrt(beta) for a constant field, so small T leaves the well empty
    sol = solve_steklov(disk05, const_field, 100.0)
    rep = verify.decay_profile(sol, disk05, const_field, Ts=(1.0, 4.0))
    assert 1.0 in rep.params["empty_T"]
    assert "T=1" not in rep.fits and "T=4" in rep.fits
    with pytest.raises(ExperimentError):
        verify.fitted_rate(rep, T=1.0)


def test_localization_rejects_constant_field(disk05, const_field):
    sol = solve_steklov(disk05, const_field, 100.0)
    with pytest.raises(ExperimentError, match="whole boundary"):
        verify.localization_check(sol, const_field, disk05)


def test_localization_report(tmp_path, disk05, mono_field):
    sol = solve_steklov(disk05, mono_field, 400.0)
    rep = verify.localization_check(sol, mono_field, disk05)
    frac = rep.column("fraction")
    assert np.all(np.diff(frac) >= 0) and 0 < frac[-1] <= 1 + 1e-12
    assert rep.column("delta")[0] == pytest.approx(400 ** (-1 / 3))
    roundtrip(rep, tmp_path)


def test_weighted_ratios_at_zero_eps(disk05, mono_field):
    sol = solve_steklov(disk05, mono_field, 200.0)
    lam = sol.eigenvalues[0]
    d = verify.well_distances(disk05, mono_field, 200.0, lam, [4.0])[4.0]
    R1, R2, R3 = verify.weighted_l2_ratios(sol, disk05, mono_field, d, 0.0)
    assert R1 == pytest.approx(1.0, rel=1e-12)
    # without weight, R3 is the energy over lambda * boundary norm, i.e. 1
    assert R3 == pytest.approx(1.0, rel=1e-8)
    assert R2 > 0
    R1e, _, _ = verify.weighted_l2_ratios(sol, disk05, mono_field, d, 1.0)
    assert R1e > 1.0


def test_common_threshold():
    def rep(keys):
        return ExperimentReport(kind="decay", name="decay", inputs={}, columns=[], table=[],
                                fits={k: {} for k in keys})
    assert verify.common_threshold([rep(["T=2", "T=4"]), rep(["T=1", "T=2", "T=4"])]) == 2.0
    with pytest.raises(ExperimentError):
        verify.common_threshold([rep(["T=1"]), rep(["T=4"])])


def test_trial_functions_are_harmonic(disk05, mono_field):
    sol = solve_steklov(disk05, mono_field, 100.0, k=3)
    U = verify.trial_functions(sol, 5, np.random.default_rng(0))
    r = sol.dtn.stiffness.K @ U
    assert np.abs(r[disk05.interior_vertices]).max() < 1e-9 * np.abs(r).max()
    assert U.shape == (disk05.n_vertices, 5)


def test_coercivity_roundtrip(tmp_path, disk05, mono_field):
    rep = verify.coercivity_audit(disk05, mono_field, [100, 200], k=2, n_trials=5)
    assert len(rep.table) == 2 * (2 + 5)
    assert np.all(rep.column("boundary_ratio") > 0)
    roundtrip(rep, tmp_path)


def test_gauge_zero_phi(disk05):
    rep = verify.gauge_check(DomainSpec.disk(), MonomialField.make(1), [(1, 1, 0.0)], 50.0, hs=(0.1, 0.05))
    assert all(g == 0.0 for g in rep.fits["gap"].values())
    assert rep.verdict


def test_gauge_tolerances(tmp_path):
    rep = verify.gauge_check(DomainSpec.disk(), ConstantField.make(1.0), [(1, 1, 1.0)], 10.0,
                             hs=(0.1, 0.05), tolerances={0.1: 1e-9})
    assert not rep.verdict
    assert [c["name"] for c in rep.checks if not c["passed"]] == ["relative gap at h=0.1"]
    roundtrip(rep, tmp_path)


def test_psi_and_equivalence_reports(tmp_path, disk05, mono_field):
    rep = verify.psi_audit(disk05, mono_field, [100, 200])
    assert rep.column("min_psi").min() >= 0
    roundtrip(rep, tmp_path)
    eq = verify.equivalence_audit(mono_field, [100, 200], n=20)
    assert np.all(eq.column("c") <= eq.column("C"))
    roundtrip(eq, tmp_path)


def test_report_json_fields(disk05, const_field):
    rep = verify.scaling_sweep(disk05, const_field, [50, 100, 200, 500])
    doc = json.loads(rep.to_json())
    assert doc["verdict"] in ("pass", "fail")
    assert doc["columns"] == ["beta", "lambda1"]


def test_parallel_matches_serial(disk05, const_field):
    betas = [50, 100, 200, 500]
    a = verify.scaling_sweep(disk05, const_field, betas, jobs=1)
    b = verify.scaling_sweep(disk05, const_field, betas, jobs=2)
    assert a.table == b.table
