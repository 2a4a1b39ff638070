"""Huff model pipeline and the Competing Destinations extension.

The classical Huff utility is ``U_ij = A_j**gamma * t_ij**-lam``. Here the
transport-cost term is any :mod:`marketflow.decay` family, so power decay
reproduces the classical model and exponential/logistic decay are drop-in
alternatives. Stages run in order::

    utilities -> probabilities -> flows -> market_areas

and each one returns a new matrix; skipping a stage raises StateError.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from marketflow.decay import DecayKind, DecaySpec, eval_decay, log_decay
from marketflow.errors import (
    DegenerateOriginError,
    DimensionError,
    DomainError,
    ValidationError,
)
from marketflow.geo import distance_matrix
from marketflow.model import DEFAULT_COST_FLOOR, InteractionMatrix, SupplyLocation


@dataclass(frozen=True)
class HuffParams:
    gamma: float
    decay: DecaySpec

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValidationError("gamma must be finite")
        object.__setattr__(self, "gamma", float(self.gamma))

    def as_dict(self) -> dict:
        return {"gamma": self.gamma, "decay": self.decay.as_dict()}


@dataclass(frozen=True)
class CDParams:
    """Competing Destinations parameters.

    ``beta`` weights the clustering indicator C_j, which itself is built from
    competitor attractions raised to ``alpha`` over inter-location costs raised
    to ``delta``. The base decay must be exponential unless
    ``allow_any_decay`` is set.
    """

    base: HuffParams
    beta: float
    alpha: float = 1.0
    delta: float = 1.0
    allow_any_decay: bool = False

    def __post_init__(self):
        if self.base.decay.kind is not DecayKind.EXPONENTIAL and not self.allow_any_decay:
            raise ValidationError(
                "the competing destinations model uses exponential decay; "
                "set allow_any_decay=True to use another family"
            )
        for name in ("beta", "alpha", "delta"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class MarketAreas:
    """Total expected demand T_j captured by each location."""

    totals: dict[str, float]
    locations: tuple[SupplyLocation, ...] = field(default=(), repr=False)

    def __getitem__(self, location_id: str) -> float:
        return self.totals[location_id]

    def as_array(self) -> np.ndarray:
        return np.array(list(self.totals.values()))


def _normalize_rows(weights: np.ndarray) -> np.ndarray:
    totals = weights.sum(axis=1, keepdims=True)
    bad = np.flatnonzero(~(totals[:, 0] > 0) | ~np.isfinite(totals[:, 0]))
    if bad.size:
        raise DegenerateOriginError(
            f"origin row(s) {bad.tolist()} have zero or non-finite total utility"
        )
    return weights / totals


def huff_log_utilities(
    attraction: np.ndarray, costs: np.ndarray, gamma: float, decay: DecaySpec
) -> np.ndarray:
    """``log U_ij`` for vectors of attractions and an (I, J) cost table."""
    return gamma * np.log(attraction)[None, :] + log_decay(decay, costs)


def huff_shares(
    attraction: np.ndarray, costs: np.ndarray, gamma: float, decay: DecaySpec
) -> np.ndarray:
    """Huff probabilities computed in log space (softmax over each row).

    Used by calibration, where parameter trials can push utilities far
    outside the range where ``A**gamma * f(t)`` is representable.
    """
    log_u = huff_log_utilities(attraction, costs, gamma, decay)
    log_u = log_u - log_u.max(axis=1, keepdims=True)
    w = np.exp(log_u)
    return w / w.sum(axis=1, keepdims=True)


def utilities(matrix: InteractionMatrix, params: HuffParams) -> InteractionMatrix:
    costs = matrix.require("transport_cost", "utilities")
    u = matrix.attraction[None, :] ** params.gamma * eval_decay(params.decay, costs)
    return matrix.replace(utility=u, probability=None, flow=None)


def probabilities(matrix: InteractionMatrix) -> InteractionMatrix:
    """p_ij = U_ij / sum_j U_ij."""
    u = matrix.require("utility", "probabilities")
    return matrix.replace(probability=_normalize_rows(np.asarray(u)), flow=None)


def flows(matrix: InteractionMatrix) -> InteractionMatrix:
    p = matrix.require("probability", "flows")
    return matrix.replace(flow=p * matrix.demand[:, None])


def market_areas(matrix: InteractionMatrix) -> MarketAreas:
    e = matrix.require("flow", "market_areas")
    totals = e.sum(axis=0)
    return MarketAreas(
        totals={loc.id: float(t) for loc, t in zip(matrix.locations, totals)},
        locations=matrix.locations,
    )


def huff_model(matrix: InteractionMatrix, params: HuffParams) -> InteractionMatrix:
    """Run utilities, probabilities and flows in one go."""
    return flows(probabilities(utilities(matrix, params)))


def inter_location_costs(
    locations: Sequence[SupplyLocation], cost_floor: float = DEFAULT_COST_FLOOR
) -> np.ndarray:
    """J x J haversine km between locations, floored off the diagonal."""
    points = [loc.point for loc in locations]
    costs = distance_matrix(points, points)
    off = ~np.eye(len(points), dtype=bool)
    costs[off] = np.maximum(costs[off], cost_floor)
    return costs


def clustering_indicator(
    locations: Sequence[SupplyLocation],
    inter_location_costs,
    alpha: float,
    delta: float,
) -> dict[str, float]:
    """C_j = sum over competitors k != j of A_k**alpha / t_jk**delta."""
    n = len(locations)
    if n < 2:
        raise DimensionError("the clustering indicator needs at least two locations")
    costs = np.asarray(inter_location_costs, dtype=float)
    if costs.shape != (n, n):
        raise DimensionError(f"inter-location costs have shape {costs.shape}, expected {(n, n)}")
    off = ~np.eye(n, dtype=bool)
    if np.any(costs[off] <= 0) or np.any(np.isnan(costs[off])):
        raise DomainError("inter-location costs must be > 0 off the diagonal")
    attraction = np.array([loc.attraction for loc in locations])
    # diagonal is set to inf and then dropped by the mask
    safe = np.where(off, costs, np.inf)
    terms = np.where(off, attraction[None, :] ** alpha / safe**delta, 0.0)
    values = terms.sum(axis=1)
    return {loc.id: float(c) for loc, c in zip(locations, values)}


def cd_probabilities(
    matrix: InteractionMatrix, params: CDParams, clustering: Mapping[str, float]
) -> InteractionMatrix:
    """Competing Destinations shares.

    p_ij is proportional to ``A_j**gamma * exp(-lam * t_ij) * C_j**beta``.
    The weighted numerator is stored as the pair utility.
    """
    costs = matrix.require("transport_cost", "cd_probabilities")
    try:
        c = np.array([clustering[loc.id] for loc in matrix.locations], dtype=float)
    except KeyError as exc:
        raise ValidationError(f"no clustering indicator for location {exc.args[0]!r}") from None
    if np.any(c <= 0):
        raise DomainError("clustering indicators must be > 0")
    base = params.base
    u = (
        matrix.attraction[None, :] ** base.gamma
        * eval_decay(base.decay, costs)
        * (c**params.beta)[None, :]
    )
    return matrix.replace(utility=u, probability=_normalize_rows(u), flow=None)
