from __future__ import annotations

import math

import numpy as np
import pytest

from tte_estimands import (DgpConfig, IdentifiabilityError, RegimeSpec, Strategy, TrialDataset, aalen_johansen,
                           aalen_johansen_cif, apply_strategy, bootstrap_se, contrast, ipcw_survival, kaplan_meier,
                           km_estimate, simulate_trial)
from tte_estimands.data import CompetingDataset
from tte_estimands.estimation import EstimateResult
from tte_estimands.estimation.survival import TruncationWarning

NA = np.nan


def _ds(Y, A=None, **kw):
    Y = np.asarray(Y, dtype=float)
    n, K = Y.shape
    return TrialDataset(ids=[str(i) for i in range(n)], W=np.zeros((n, 0)),
                        A=np.ones((n, K)) if A is None else A, C=np.isnan(Y).astype(int), Y=Y, **kw)


def test_hand_product_limit_and_greenwood():
    ds = _ds([[1, 1, 1], [0, NA, NA], [0, 0, 1], [0, 0, 0]])
    cur = kaplan_meier(ds)
    np.testing.assert_allclose(cur.survival, [0.75, 0.75, 0.375], atol=1e-15)
    np.testing.assert_array_equal(cur.n_risk, [4, 2, 2])
    se1 = 0.75 * math.sqrt(1 / (4 * 3))
    se3 = 0.375 * math.sqrt(1 / (4 * 3) + 1 / (2 * 1))
    np.testing.assert_allclose(cur.se[[0, 2]], [se1, se3], rtol=1e-12)


def test_no_events_is_flat():
    assert (kaplan_meier(_ds(np.zeros((5, 4)))).survival == 1).all()


def test_no_censoring_is_empirical_proportion():
    rng = np.random.default_rng(1)
    ev = rng.integers(1, 7, size=50)
    Y = (np.arange(1, 6)[None, :] >= ev[:, None]).astype(float)
    assert kaplan_meier(_ds(Y)).at(5) == pytest.approx((Y[:, -1] == 0).mean(), abs=1e-15)


def test_km_arm_view_and_estimate():
    A = np.repeat([[0.0], [1.0]], [2, 2], axis=0) * np.ones((1, 2))
    ds = _ds([[0, 1], [0, 0], [0, 0], [0, 0]], A=A)
    assert kaplan_meier(ds, arm=0).at(2) == 0.5 and kaplan_meier(ds, arm=1).at(2) == 1.0
    res = km_estimate(ds, arm=0)
    assert res.point == 0.5 and res.method == "kaplan_meier"
    with pytest.raises(ValueError):
        kaplan_meier(ds, arm=3)


def test_ipcw_without_censoring_is_empirical():
    Y = np.array([[0, 1, 1], [0, 0, 0], [0, 0, 0], [1, 1, 1]], dtype=float)
    res, w = ipcw_survival(_ds(Y), RegimeSpec.static(1, 3), return_weights=True)
    assert res.point == 0.5
    np.testing.assert_array_equal(w, np.ones(4))


def test_ipcw_two_subject_weight():
    res, w = ipcw_survival(_ds([[NA], [0]]), RegimeSpec.static(1, 1), return_weights=True)
    np.testing.assert_array_equal(w, [0.0, 2.0])
    assert res.point == 1.0


def test_ipcw_truncation_warns():
    Y = np.array([[0]] + [[NA]] * 199, dtype=float)
    with pytest.warns(TruncationWarning):
        ipcw_survival(_ds(Y), RegimeSpec.static(1, 1), floor=0.01)


def test_ipcw_equals_km_with_saturated_censoring():
    sim = simulate_trial(DgpConfig.appendix(n=300, seed=21))
    for arm in (0, 1):
        km = kaplan_meier(sim.dataset, arm=arm)
        for t in range(1, 11):
            res = ipcw_survival(sim.dataset, RegimeSpec.static(arm, 10), t, censor_model="saturated")
            assert res.point == pytest.approx(km.at(t), abs=1e-10)


@pytest.mark.filterwarnings("ignore::tte_estimands.estimation.survival.TruncationWarning")
def test_ipcw_logistic_censoring_runs_with_covariates():
    sim = simulate_trial(DgpConfig.appendix(n=400, seed=3))
    res = ipcw_survival(sim.dataset, RegimeSpec.static(1, 10), censor_model="logistic")
    assert 0 <= res.point <= 1 and res.diagnostics["weight_min"] >= 1


def test_aalen_johansen_hand_example():
    Y = np.array([[1, 1], [0, 0], [0, 0]], dtype=float)
    Yce = np.array([[0, 0], [0, 1], [0, 0]], dtype=float)
    cds = CompetingDataset(ids=["a", "b", "c"], W=np.zeros((3, 0)), A=np.ones((3, 2)), C=np.zeros((3, 2)),
                           Y=Y, Y_ce=Yce)
    cur = aalen_johansen(cds)
    assert cur["cif_pe"][1] == pytest.approx(1 / 3, abs=1e-15)
    assert cur["cif_ce"][1] == pytest.approx(1 / 3, abs=1e-15)
    out = aalen_johansen_cif(cds, horizon=2)
    assert out["PE"].estimand == "CIF_PE(2)"


def test_aalen_johansen_without_competing_events_is_km():
    sim = simulate_trial(DgpConfig.appendix(n=300, seed=8))
    cds = apply_strategy(sim.dataset, [], "none", Strategy.COMPETING_RISK)
    cur = aalen_johansen(cds)
    np.testing.assert_array_equal(cur["cif_pe"], 1.0 - kaplan_meier(sim.dataset).survival)


def test_aalen_johansen_needs_competing_data():
    with pytest.raises(TypeError):
        aalen_johansen(_ds(np.zeros((2, 2))))


def test_contrast_arithmetic():
    a = EstimateResult("S", 0.7, 0.03, (0, 1), "x", 10)
    b = EstimateResult("S", 0.5, 0.04, (0, 1), "x", 10)
    c = contrast(a, b)
    assert c.point == pytest.approx(0.2, abs=1e-15) and c.se == pytest.approx(0.05, abs=1e-15)
    assert contrast(a, a).point == 0.0


def test_estimate_range_enforced():
    with pytest.raises(ValueError):
        EstimateResult("S", 1.2, 0.1, (0, 1), "x", 1)
    EstimateResult("D", -0.4, 0.1, (0, 1), "x", 1, scale="difference")


def test_bootstrap_degenerate_and_deterministic():
    ds = _ds(np.zeros((20, 3)))
    res = bootstrap_se(ds, lambda d: kaplan_meier(d).at(3), B=20, seed=1)
    assert res.se == 0.0
    sim = simulate_trial(DgpConfig.appendix(n=200, seed=2))
    f = lambda d: kaplan_meier(d, arm=1).at(10)  # noqa: E731
    a = bootstrap_se(sim.dataset, f, B=30, seed=4)
    b = bootstrap_se(sim.dataset, f, B=30, seed=4)
    assert a.ci95 == b.ci95 and a.se > 0


def test_ipcw_refuses_a_risk_set_censored_out():
    # both survivors of month 1 are censored before month 2
    ds = _ds([[1, 1], [0, NA], [0, NA]])
    assert kaplan_meier(ds).at(2) == pytest.approx(2 / 3)
    assert ipcw_survival(ds, RegimeSpec.static(1, 2), 1).point == pytest.approx(2 / 3)
    with pytest.raises(IdentifiabilityError, match="stage t=2"):
        ipcw_survival(ds, RegimeSpec.static(1, 2), 2)
