import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from marketflow.decay import DecaySpec
from marketflow.errors import DimensionError, StateError, ValidationError
from marketflow.geo import GeoPoint
from marketflow.huff import (
    CDParams,
    HuffParams,
    cd_probabilities,
    clustering_indicator,
    flows,
    huff_model,
    huff_shares,
    inter_location_costs,
    market_areas,
    probabilities,
    utilities,
)
from marketflow.model import (
    CustomerOrigin,
    SupplyLocation,
    create_interaction_matrix,
    set_transport_costs,
)


def small(attractions, costs, demand=None):
    """Matrix with given attractions and an explicit cost table."""
    costs = np.atleast_2d(np.asarray(costs, dtype=float))
    n_i, n_j = costs.shape
    demand = demand if demand is not None else [1.0] * n_i
    origins = [CustomerOrigin(GeoPoint(f"o{i}", 0, 0), demand[i]) for i in range(n_i)]
    locations = [SupplyLocation(GeoPoint(f"l{j}", 0, 0), a) for j, a in enumerate(attractions)]
    m = create_interaction_matrix(origins, locations)
    return set_transport_costs(m, "external", costs=costs, unit="min", cost_floor=0.0)


# ---- oracle: direct loops over the textbook formulas


def oracle_huff(matrix, gamma, decay):
    n_i, n_j = matrix.shape
    a = [loc.attraction for loc in matrix.locations]
    t = matrix.transport_cost
    u = [[a[j] ** gamma * decay(t[i][j]) for j in range(n_j)] for i in range(n_i)]
    p = [[u[i][j] / math.fsum(u[i]) for j in range(n_j)] for i in range(n_i)]
    e = [[p[i][j] * matrix.origins[i].demand for j in range(n_j)] for i in range(n_i)]
    totals = [math.fsum(e[i][j] for i in range(n_i)) for j in range(n_j)]
    return u, p, e, totals


def test_utility_examples():
    m = utilities(small([100.0], [[10.0]]), HuffParams(1.0, DecaySpec.power(2.0)))
    assert m.utility[0, 0] == pytest.approx(1.0, rel=1e-15)
    m = utilities(small([1.0], [[37.0]]), HuffParams(0.0, DecaySpec.exponential(0.0)))
    assert m.utility[0, 0] == 1.0
    m = utilities(small([50.0], [[5.0]]), HuffParams(0.9, DecaySpec.power(1.5)))
    assert m.utility[0, 0] == pytest.approx(50**0.9 * 5**-1.5, rel=1e-14)


def test_probability_examples():
    params = HuffParams(1.0, DecaySpec.power(2.0))
    m = probabilities(utilities(small([7.0, 7.0], [[3.0, 3.0]]), params))
    assert m.probability.tolist() == [[0.5, 0.5]]
    m = probabilities(utilities(small([7.0], [[3.0]]), params))
    assert m.probability.tolist() == [[1.0]]
    m = probabilities(utilities(small([100.0, 50.0], [[10.0, 10.0]]), params))
    np.testing.assert_allclose(m.probability, [[2 / 3, 1 / 3]], atol=1e-15)


def test_flow_examples():
    params = HuffParams(1.0, DecaySpec.power(2.0))
    m = huff_model(small([5.0, 5.0], [[2.0, 2.0]], demand=[1000.0]), params)
    assert m.flow.tolist() == [[500.0, 500.0]]
    m = huff_model(small([100.0, 50.0], [[10.0, 10.0]], demand=[900.0]), params)
    np.testing.assert_allclose(m.flow, [[600.0, 300.0]], rtol=1e-14)
    m = huff_model(small([1.0, 2.0], [[2.0, 2.0]], demand=[0.0]), params)
    assert m.flow.tolist() == [[0.0, 0.0]]


def test_market_area_examples():
    params = HuffParams(1.0, DecaySpec.power(2.0))
    m = huff_model(small([5.0, 5.0], [[2.0, 2.0]], demand=[1000.0]), params)
    assert market_areas(m).totals == {"l0": 500.0, "l1": 500.0}
    # all probability on location 1: location 2 is astronomically far
    m = huff_model(small([1.0, 1.0], [[1.0, 1e200], [1.0, 1e200]], demand=[100.0, 200.0]),
                   HuffParams(1.0, DecaySpec.power(2.0)))
    areas = market_areas(m)
    assert areas["l0"] == pytest.approx(300.0, rel=1e-14)
    assert areas["l1"] == pytest.approx(0.0, abs=1e-300)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("decay", [DecaySpec.power(1.7), DecaySpec.exponential(0.12),
                                   DecaySpec.logistic(-2.0, 0.3)])
def test_pipeline_matches_oracle(seed, decay):
    rng = np.random.default_rng(seed)
    m = random_instance(rng, 3, 4)
    gamma = rng.uniform(0.3, 1.5)
    fitted = huff_model(m, HuffParams(gamma, decay))
    f = {
        "power": lambda t: t ** -decay.lam,
        "exponential": lambda t: math.exp(-decay.lam * t),
        "logistic": lambda t: 1 / (1 + math.exp(decay.a + decay.b * t)),
    }[decay.kind.value]
    u, p, e, totals = oracle_huff(m, gamma, f)
    np.testing.assert_allclose(fitted.utility, u, rtol=1e-12, atol=0)
    np.testing.assert_allclose(fitted.probability, p, rtol=0, atol=1e-12)
    np.testing.assert_allclose(fitted.flow, e, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(market_areas(fitted).as_array(), totals, rtol=1e-12)


def test_stage_order_enforced():
    m = create_interaction_matrix(
        [CustomerOrigin(GeoPoint("o", 0, 0))], [SupplyLocation(GeoPoint("l", 0, 1))]
    )
    params = HuffParams(1.0, DecaySpec.power(2.0))
    with pytest.raises(StateError):
        utilities(m, params)
    m = set_transport_costs(m)
    with pytest.raises(StateError):
        probabilities(m)
    with pytest.raises(StateError):
        flows(utilities(m, params))
    with pytest.raises(StateError):
        market_areas(probabilities(utilities(m, params)))


def test_huff_shares_matches_pipeline(rng):
    m = random_instance(rng, 4, 5)
    params = HuffParams(0.8, DecaySpec.power(2.2))
    np.testing.assert_allclose(
        huff_shares(m.attraction, m.transport_cost, params.gamma, params.decay),
        huff_model(m, params).probability,
        atol=1e-14,
    )


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 2.0), st.floats(0.5, 3.0))
def test_properties(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    m = random_instance(rng, 3, 4)
    params = HuffParams(gamma, DecaySpec.power(lam))
    out = huff_model(m, params)
    np.testing.assert_allclose(out.probability.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((out.probability >= 0) & (out.probability <= 1))
    assert market_areas(out).as_array().sum() == pytest.approx(m.demand.sum(), rel=1e-9)

    # attraction scale invariance
    scaled = create_interaction_matrix(
        m.origins, [SupplyLocation(loc.point, loc.attraction * 7.3) for loc in m.locations]
    )
    scaled = set_transport_costs(scaled)
    np.testing.assert_allclose(huff_model(scaled, params).probability, out.probability,
                               atol=1e-12, rtol=0)

    # monotonicity in one pair's cost
    costs = np.array(m.transport_cost)
    costs[1, 2] *= 1.5
    bumped = huff_model(m.replace(transport_cost=costs), params).probability
    assert bumped[1, 2] < out.probability[1, 2]
    others = [k for k in range(4) if k != 2]
    assert np.all(bumped[1, others] > out.probability[1, others])


# ---- competing destinations


def loc_at(id_, lat, lon, a):
    return SupplyLocation(GeoPoint(id_, lat, lon), a)


def test_clustering_examples():
    locs = [loc_at("a", 0, 0, 10.0), loc_at("b", 0, 1, 10.0)]
    c = clustering_indicator(locs, [[0.0, 10.0], [10.0, 0.0]], 1.0, 1.0)
    assert c == {"a": 1.0, "b": 1.0}

    locs = [loc_at(f"l{k}", 0, k, 3.0 + k) for k in range(4)]
    c = clustering_indicator(locs, inter_location_costs(locs), 0.0, 0.0)
    assert c == {f"l{k}": 3.0 for k in range(4)}


@pytest.mark.parametrize("seed", range(10))
def test_clustering_matches_double_loop(seed):
    rng = np.random.default_rng(100 + seed)
    locs = [loc_at(f"l{k}", rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(1, 50))
            for k in range(3)]
    t = inter_location_costs(locs)
    alpha, delta = rng.uniform(0.2, 1.5), rng.uniform(0.2, 2.0)
    c = clustering_indicator(locs, t, alpha, delta)
    for j, lj in enumerate(locs):
        expected = math.fsum(
            locs[k].attraction ** alpha / t[j][k] ** delta for k in range(3) if k != j
        )
        assert c[lj.id] == pytest.approx(expected, rel=1e-12)


def test_clustering_needs_two_locations():
    with pytest.raises(DimensionError):
        clustering_indicator([loc_at("a", 0, 0, 1.0)], [[0.0]], 1.0, 1.0)


def test_cd_requires_exponential_unless_flagged():
    with pytest.raises(ValidationError):
        CDParams(HuffParams(1.0, DecaySpec.power(2.0)), beta=1.0)
    CDParams(HuffParams(1.0, DecaySpec.power(2.0)), beta=1.0, allow_any_decay=True)


def test_cd_beta_zero_equals_huff(rng):
    m = random_instance(rng, 5, 4)
    base = HuffParams(0.9, DecaySpec.exponential(0.2))
    c = clustering_indicator(m.locations, inter_location_costs(m.locations), 1.0, 1.0)
    cd = cd_probabilities(m, CDParams(base, beta=0.0), c)
    huff = probabilities(utilities(m, base))
    np.testing.assert_allclose(cd.probability, huff.probability, atol=1e-12, rtol=0)


def test_cd_symmetric():
    m = small([4.0, 4.0], [[2.0, 2.0]])
    out = cd_probabilities(m, CDParams(HuffParams(1.0, DecaySpec.exponential(0.3)), 1.0),
                           {"l0": 2.5, "l1": 2.5})
    assert out.probability.tolist() == [[0.5, 0.5]]


def test_cd_beta_one_hand_evaluated():
    attractions = [10.0, 20.0, 5.0]
    costs = [[1.0, 2.0, 3.0], [4.0, 1.5, 0.5]]
    c = {"l0": 2.0, "l1": 0.5, "l2": 4.0}
    gamma, lam = 0.8, 0.4
    out = cd_probabilities(small(attractions, costs),
                           CDParams(HuffParams(gamma, DecaySpec.exponential(lam)), 1.0), c)
    for i in range(2):
        num = [attractions[j] ** gamma * math.exp(-lam * costs[i][j]) * c[f"l{j}"]
               for j in range(3)]
        for j in range(3):
            assert out.probability[i, j] == pytest.approx(num[j] / math.fsum(num), abs=1e-12)


def test_cd_missing_clustering_value():
    m = small([4.0, 4.0], [[2.0, 2.0]])
    with pytest.raises(ValidationError):
        cd_probabilities(m, CDParams(HuffParams(1.0, DecaySpec.exponential(0.3)), 1.0),
                         {"l0": 1.0})
