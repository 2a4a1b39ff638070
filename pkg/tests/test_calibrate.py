import math
import time

import numpy as np
import pytest

from conftest import random_instance
from marketflow.calibrate import (
    FitConfig,
    ObservedData,
    ObservedKind,
    build_objective,
    fit_huff,
    predicted_values,
)
from marketflow.decay import DecayKind, DecaySpec
from marketflow.errors import DimensionError, ValidationError
from marketflow.geo import GeoPoint
from marketflow.huff import HuffParams
from marketflow.metrics import gof_metrics
from marketflow.model import (
    CustomerOrigin,
    SupplyLocation,
    create_interaction_matrix,
    set_transport_costs,
)


def observed_for(matrix, kind, params):
    return ObservedData(kind, predicted_values(matrix, ObservedKind(kind), params))


# ---- goodness of fit


def test_gof_perfect():
    g = gof_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (g.r_squared, g.mae, g.rmse) == (1.0, 0.0, 0.0)


def test_gof_mean_prediction():
    assert gof_metrics([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]).r_squared == 0.0


def test_gof_hand_example():
    g = gof_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
    assert g.mae == pytest.approx(1 / 3, abs=1e-15)
    assert g.rmse == pytest.approx(math.sqrt(1 / 3), abs=1e-15)
    assert g.r_squared == pytest.approx(0.5, abs=1e-15)


def test_gof_zero_variance_has_no_r_squared():
    g = gof_metrics([2.0, 2.0], [1.0, 3.0])
    assert g.r_squared is None
    assert g.mae == 1.0


def test_gof_needs_two_values():
    with pytest.raises(DimensionError):
        gof_metrics([1.0], [1.0])


@pytest.mark.parametrize("seed", range(20))
def test_gof_rmse_at_least_mae(seed):
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=7)
    pred = obs + rng.normal(size=7) * rng.uniform(0, 3)
    g = gof_metrics(obs, pred)
    assert g.rmse >= g.mae >= 0


def test_gof_equal_residuals():
    g = gof_metrics([0.1, 0.2, 0.3], [0.2, 0.3, 0.4])
    assert g.rmse >= g.mae


# ---- observed data


def test_observed_share_rows_must_sum_to_one():
    with pytest.raises(ValidationError):
        ObservedData("shares", [[0.5, 0.4]])
    ObservedData("shares", [[0.5, 0.5 + 5e-7]])


def test_observed_negative_flows_rejected():
    with pytest.raises(ValidationError):
        ObservedData("flows", [[1.0, -1.0]])


def test_observed_from_mapping(rng):
    m = random_instance(rng, 2, 2)
    obs = ObservedData.from_mapping("flows", m, {("o0", "l1"): 4.0, ("o1", "l0"): 2.0})
    assert obs.values.tolist() == [[0.0, 4.0], [2.0, 0.0]]
    with pytest.raises(ValidationError):
        ObservedData.from_mapping("totals", m, {"zz": 1.0})


def test_dimension_mismatch(rng):
    m = random_instance(rng, 2, 3)
    with pytest.raises(DimensionError):
        build_objective(m, ObservedData("totals", [1.0, 2.0]), "power", False)


def test_fit_config_mapping():
    cfg = FitConfig.from_mapping({"lambda": "2.5", "fix-gamma": "true", "restarts": "1"})
    assert cfg.lam == 2.5 and cfg.fit_gamma is False and cfg.restarts == 1
    with pytest.raises(ValidationError):
        FitConfig.from_mapping({"bogus": 1})


# ---- objectives


@pytest.mark.parametrize("kind", ["shares", "flows"])
def test_self_consistency(rng, kind):
    m = random_instance(rng, 5, 4)
    truth = HuffParams(0.9, DecaySpec.power(2.1))
    obj = build_objective(m, observed_for(m, kind, truth), "power", True)
    best = obj([0.9, 2.1])
    for _ in range(20):
        theta = np.array([0.9, 2.1]) + rng.normal(scale=0.05, size=2)
        assert best <= obj(theta)


def test_totals_objective_zero_at_truth(rng):
    m = random_instance(rng, 5, 4)
    truth = HuffParams(1.0, DecaySpec.exponential(0.15))
    obj = build_objective(m, observed_for(m, "totals", truth), "exponential", False)
    assert obj([0.15]) <= 1e-12


def test_out_of_bounds_is_infinite(rng):
    m = random_instance(rng, 2, 2)
    obj = build_objective(m, observed_for(m, "flows", HuffParams(1.0, DecaySpec.power(1.0))),
                          "power", True)
    assert obj([1.0, -0.5]) == math.inf
    assert obj([1.0, 0.0]) == math.inf


def test_totals_sum_mismatch_warns(rng):
    m = random_instance(rng, 3, 2)
    with pytest.warns(UserWarning, match="cannot match them exactly"):
        build_objective(m, ObservedData("totals", [1.0, 1.0]), "power", False)


def test_totals_with_gamma_warns(rng):
    m = random_instance(rng, 3, 2)
    obs = observed_for(m, "totals", HuffParams(1.0, DecaySpec.power(1.0)))
    with pytest.warns(UserWarning, match="under-identified"):
        build_objective(m, obs, "power", True)


def test_symmetric_instance_is_flat_in_lambda():
    origins = [CustomerOrigin(GeoPoint("o", 0, 0), 100.0)]
    locations = [SupplyLocation(GeoPoint(f"l{k}", 0, lon), 1.0) for k, lon in enumerate((1, -1))]
    m = create_interaction_matrix(origins, locations)
    m = set_transport_costs(m)
    obj = build_objective(m, ObservedData("shares", [[0.5, 0.5]]), "exponential", False)
    assert obj([0.1]) == pytest.approx(obj([3.0]), rel=1e-14)


# ---- fitting


@pytest.mark.parametrize("truth,kind", [
    (HuffParams(0.9, DecaySpec.power(2.1)), "power"),
    (HuffParams(1.2, DecaySpec.exponential(0.3)), "exponential"),
])
def test_flow_recovery(rng, truth, kind):
    m = random_instance(rng, 5, 4)
    start = time.perf_counter()
    fit = fit_huff(m, observed_for(m, "flows", truth), kind)
    assert time.perf_counter() - start < 10
    assert fit.converged
    assert fit.fit_gamma
    assert fit.params.gamma == pytest.approx(truth.gamma, abs=1e-3)
    assert fit.params.decay.lam == pytest.approx(truth.decay.lam, abs=1e-3)
    assert fit.gof.loglik == pytest.approx(-fit.objective_value)


@pytest.mark.parametrize("seed", range(10))
def test_recovery_random_parameters(seed):
    rng = np.random.default_rng(1000 + seed)
    kind = ("power", "exponential")[seed % 2]
    n_i, n_j = rng.integers(3, 11), rng.integers(3, 11)
    m = random_instance(rng, n_i, n_j)
    lam = rng.uniform(0.5, 3.0) if kind == "power" else rng.uniform(0.5, 3.0) / 10
    truth = HuffParams(rng.uniform(0.5, 1.5), DecaySpec(kind, lam=lam))
    fit = fit_huff(m, observed_for(m, "shares", truth), kind)
    assert fit.converged
    assert fit.params.gamma == pytest.approx(truth.gamma, abs=1e-3)
    assert fit.params.decay.lam == pytest.approx(lam, abs=1e-3)


def test_totals_recovery(rng):
    m = random_instance(rng, 6, 4)
    truth = HuffParams(1.0, DecaySpec.exponential(0.15))
    fit = fit_huff(m, observed_for(m, "totals", truth), "exponential")
    assert not fit.fit_gamma
    assert fit.params.gamma == 1.0
    assert fit.params.decay.lam == pytest.approx(0.15, abs=1e-2)
    assert fit.gof.loglik is None


def test_logistic_fit_runs(rng):
    m = random_instance(rng, 6, 5)
    truth = HuffParams(1.0, DecaySpec.logistic(-1.0, 0.4))
    fit = fit_huff(m, observed_for(m, "flows", truth), "logistic",
                   FitConfig(fit_gamma=False, a=-0.5, b=0.3))
    assert fit.params.decay.kind is DecayKind.LOGISTIC
    assert fit.params.decay.b > 0


@pytest.mark.parametrize("seed", range(10))
def test_wrong_family_fits_worse(seed):
    rng = np.random.default_rng(2000 + seed)
    m = random_instance(rng, 6, 5)
    truth = HuffParams(1.0, DecaySpec.power(2.0))
    obs = observed_for(m, "shares", truth)
    right = fit_huff(m, obs, "power")
    wrong = fit_huff(m, obs, "exponential")
    assert wrong.gof.rmse > right.gof.rmse


def test_demand_scale_does_not_move_argmin(rng):
    m = random_instance(rng, 5, 4)
    truth = HuffParams(0.8, DecaySpec.power(1.6))
    flows = predicted_values(m, ObservedKind.FLOWS, truth)
    # perturb so the optimum is not simply the generating point
    flows = flows * rng.uniform(0.8, 1.2, size=flows.shape)
    scaled = create_interaction_matrix(
        [CustomerOrigin(o.point, o.demand * 25.0) for o in m.origins], m.locations
    ).replace(transport_cost=m.transport_cost, cost_unit=m.cost_unit)
    base = fit_huff(m, ObservedData("flows", flows), "power")
    big = fit_huff(scaled, ObservedData("flows", flows * 25.0), "power")
    np.testing.assert_allclose(base.params.decay.lam, big.params.decay.lam, atol=1e-6)
    np.testing.assert_allclose(base.params.gamma, big.params.gamma, atol=1e-6)


def test_deterministic_fit(rng):
    m = random_instance(rng, 5, 4)
    obs = observed_for(m, "flows", HuffParams(0.9, DecaySpec.exponential(0.25)))
    obs = ObservedData("flows", obs.values * rng.uniform(0.9, 1.1, size=obs.values.shape))
    cfg = FitConfig(seed=7)
    a, b = fit_huff(m, obs, "exponential", cfg), fit_huff(m, obs, "exponential", cfg)
    assert a.as_dict() == b.as_dict()
    assert a.trace == b.trace


def test_non_convergence_is_reported(rng):
    m = random_instance(rng, 5, 4)
    obs = observed_for(m, "flows", HuffParams(0.9, DecaySpec.power(2.1)))
    with pytest.warns(UserWarning, match="did not converge"):
        fit = fit_huff(m, obs, "power", FitConfig(max_iterations=3))
    assert not fit.converged
    assert fit.iterations <= 3


def test_fit_result_dict(rng):
    m = random_instance(rng, 3, 3)
    fit = fit_huff(m, observed_for(m, "flows", HuffParams(1.0, DecaySpec.power(1.5))), "power")
    d = fit.as_dict()
    assert d["observed"] == "flows"
    assert set(d["gof"]) == {"r_squared", "mae", "rmse", "loglik", "n"}
