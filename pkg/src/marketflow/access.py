"""Spatial accessibility: Hansen potential and basic 2SFCA."""

from __future__ import annotations

import enum
import warnings
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from marketflow.decay import DecaySpec, eval_decay
from marketflow.errors import MarketflowWarning, ValidationError
from marketflow.model import CustomerOrigin, InteractionMatrix, SupplyLocation


class AccessMethod(str, enum.Enum):
    HANSEN = "hansen"
    FCA2S = "2sfca"


@dataclass(frozen=True)
class AccessibilityResult:
    """Accessibility per origin, plus supply-to-demand ratios for 2SFCA."""

    method: AccessMethod
    per_origin: dict[str, float]
    per_location: dict[str, float] = field(default_factory=dict)
    parameters: dict[str, object] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    origins: tuple[CustomerOrigin, ...] = field(default=(), repr=False)
    locations: tuple[SupplyLocation, ...] = field(default=(), repr=False)


def _values(ids: list[str], mapping: Mapping[str, float] | None, fallback, what: str) -> np.ndarray:
    if mapping is None:
        return np.asarray(fallback, dtype=float)
    out = []
    for id_ in ids:
        if id_ not in mapping:
            raise ValidationError(f"no {what} value for {id_!r}")
        value = float(mapping[id_])
        if not np.isfinite(value) or value < 0:
            raise ValidationError(f"{what} of {id_!r} must be finite and >= 0, got {value}")
        out.append(value)
    return np.array(out)


def hansen(
    matrix: InteractionMatrix,
    opportunities: Mapping[str, float] | None,
    decay: DecaySpec,
) -> AccessibilityResult:
    """A_i = sum_j O_j * f(d_ij).

    ``opportunities`` maps location id to O_j; ``None`` uses each
    location's attraction.
    """
    costs = matrix.require("transport_cost", "hansen")
    o = _values(matrix.location_ids, opportunities, matrix.attraction, "opportunity")
    weights = eval_decay(decay, costs)
    values = (weights * o[None, :]).sum(axis=1)
    return AccessibilityResult(
        method=AccessMethod.HANSEN,
        per_origin={oid: float(v) for oid, v in zip(matrix.origin_ids, values)},
        parameters={"decay": str(decay), "cost_unit": matrix.cost_unit},
        origins=matrix.origins,
        locations=matrix.locations,
    )


def fca2s(
    matrix: InteractionMatrix,
    supply: Mapping[str, float] | None,
    population: Mapping[str, float] | None,
    d0: float,
) -> AccessibilityResult:
    """Two-step floating catchment area accessibility.

    Step 1 divides each location's supply S_j by the population of the
    origins within ``d0`` of it (inclusive). Step 2 sums those ratios over
    the locations within ``d0`` of each origin. A location with no population
    in its catchment gets ratio 0 and a warning.

    ``supply`` and ``population`` default to attraction and demand.
    """
    if not d0 > 0:
        raise ValidationError(f"catchment threshold must be > 0, got {d0}")
    costs = matrix.require("transport_cost", "fca2s")
    s = _values(matrix.location_ids, supply, matrix.attraction, "supply")
    p = _values(matrix.origin_ids, population, matrix.demand, "population")
    inside = costs <= d0

    catchment_pop = (np.where(inside, 1.0, 0.0) * p[:, None]).sum(axis=0)
    empty = ~(catchment_pop > 0)
    ratios = np.where(empty, 0.0, s / np.where(empty, 1.0, catchment_pop))
    notes = []
    for j in np.flatnonzero(empty):
        notes.append(
            f"location {matrix.locations[j].id!r} has no population within {d0}; ratio set to 0"
        )
    for note in notes:
        warnings.warn(note, MarketflowWarning, stacklevel=2)

    access = (np.where(inside, 1.0, 0.0) * ratios[None, :]).sum(axis=1)
    return AccessibilityResult(
        method=AccessMethod.FCA2S,
        per_origin={oid: float(v) for oid, v in zip(matrix.origin_ids, access)},
        per_location={lid: float(v) for lid, v in zip(matrix.location_ids, ratios)},
        parameters={"d0": float(d0), "cost_unit": matrix.cost_unit},
        warnings=tuple(notes),
        origins=matrix.origins,
        locations=matrix.locations,
    )
