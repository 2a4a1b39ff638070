"""Customer origins, supply locations and the interaction matrix.

An :class:`InteractionMatrix` is the dense origin x location table every model
works on. It is immutable: each pipeline step returns an enriched copy.
"""

from __future__ import annotations

import dataclasses
import enum
import warnings
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from marketflow.errors import (
    DimensionError,
    MarketflowWarning,
    StateError,
    ValidationError,
)
from marketflow.geo import GeoPoint, distance_matrix

DEFAULT_COST_FLOOR = 0.1

# Name of the pseudo-attribute that resolves to the pair's transport cost.
TRANSPORT_COST_ATTRIBUTE = "t"


@dataclass(frozen=True)
class CustomerOrigin:
    point: GeoPoint
    demand: float = 1.0

    def __post_init__(self):
        demand = float(self.demand)
        if not np.isfinite(demand) or demand < 0:
            raise ValidationError(f"origin {self.point.id!r}: demand must be >= 0, got {demand}")
        object.__setattr__(self, "demand", demand)

    @property
    def id(self) -> str:
        return self.point.id


@dataclass(frozen=True, eq=False)
class SupplyLocation:
    point: GeoPoint
    attraction: float = 1.0
    attributes: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        attraction = float(self.attraction)
        if not np.isfinite(attraction) or attraction <= 0:
            raise ValidationError(
                f"location {self.point.id!r}: attraction must be > 0, got {attraction}"
            )
        object.__setattr__(self, "attraction", attraction)
        attrs = {}
        for name, value in self.attributes.items():
            value = float(value)
            if not np.isfinite(value) or value <= 0:
                raise ValidationError(
                    f"location {self.point.id!r}: attribute {name!r} must be > 0, got {value}"
                )
            attrs[str(name)] = value
        object.__setattr__(self, "attributes", attrs)

    @property
    def id(self) -> str:
        return self.point.id

    def __eq__(self, other):
        if not isinstance(other, SupplyLocation):
            return NotImplemented
        return (self.point, self.attraction, self.attributes) == (
            other.point,
            other.attraction,
            other.attributes,
        )


class CostSource(str, enum.Enum):
    HAVERSINE = "haversine"
    EXTERNAL_MATRIX = "external"
    TRAVEL_TIME_CLIENT = "traveltime"


class Pair(NamedTuple):
    origin_id: str
    location_id: str
    transport_cost: float | None
    utility: float | None
    probability: float | None
    flow: float | None
    observed_probability: float | None
    observed_flow: float | None


_PAIR_FIELDS = (
    "transport_cost",
    "utility",
    "probability",
    "flow",
    "observed_probability",
    "observed_flow",
)


def _frozen(arr):
    if arr is None:
        return None
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Every origin x location pair plus the per-pair model fields.

    Pair fields are ``(I, J)`` float arrays (row = origin, column = location)
    or ``None`` while the corresponding stage has not run.
    """

    origins: tuple[CustomerOrigin, ...]
    locations: tuple[SupplyLocation, ...]
    transport_cost: np.ndarray | None = None
    cost_unit: str | None = None
    cost_floor: float | None = None
    utility: np.ndarray | None = None
    probability: np.ndarray | None = None
    flow: np.ndarray | None = None
    observed_probability: np.ndarray | None = None
    observed_flow: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "origins", tuple(self.origins))
        object.__setattr__(self, "locations", tuple(self.locations))
        for name in _PAIR_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            value = _frozen(value)
            if value.shape != self.shape:
                raise DimensionError(f"{name} has shape {value.shape}, expected {self.shape}")
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.origins), len(self.locations))

    @property
    def origin_ids(self) -> list[str]:
        return [o.id for o in self.origins]

    @property
    def location_ids(self) -> list[str]:
        return [loc.id for loc in self.locations]

    @property
    def demand(self) -> np.ndarray:
        return np.array([o.demand for o in self.origins])

    @property
    def attraction(self) -> np.ndarray:
        return np.array([loc.attraction for loc in self.locations])

    def location_attribute(self, name: str) -> np.ndarray:
        """Values of one location attribute as a length-J array.

        ``"attraction"`` resolves to A_j when no attribute of that name exists.
        """
        values = []
        for loc in self.locations:
            if name in loc.attributes:
                values.append(loc.attributes[name])
            elif name == "attraction":
                values.append(loc.attraction)
            else:
                raise ValidationError(f"location {loc.id!r} has no attribute {name!r}")
        return np.array(values)

    def pair_attribute(self, name: str) -> np.ndarray:
        """An attribute broadcast to the full ``(I, J)`` table.

        The name ``"t"`` selects the transport cost of each pair.
        """
        if name == TRANSPORT_COST_ATTRIBUTE:
            return np.array(self.require("transport_cost", f"attribute {name!r}"))
        return np.broadcast_to(self.location_attribute(name), self.shape).copy()

    def require(self, name: str, stage: str) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise StateError(f"{stage} needs {name.replace('_', ' ')}, which is not set yet")
        return value

    def replace(self, **changes) -> InteractionMatrix:
        return dataclasses.replace(self, **changes)

    def pairs(self) -> Iterator[Pair]:
        """Yield one :class:`Pair` per cell in origin-major order."""
        for i, origin in enumerate(self.origins):
            for j, loc in enumerate(self.locations):
                values = []
                for name in _PAIR_FIELDS:
                    arr = getattr(self, name)
                    values.append(None if arr is None else float(arr[i, j]))
                yield Pair(origin.id, loc.id, *values)

    def __len__(self) -> int:
        return len(self.origins) * len(self.locations)


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for id_ in ids:
        if id_ in seen:
            raise ValidationError(f"duplicate id {id_!r} among {what}")
        seen.add(id_)


def create_interaction_matrix(
    origins: Sequence[CustomerOrigin], locations: Sequence[SupplyLocation]
) -> InteractionMatrix:
    """Cross every origin with every location (origin-major order)."""
    if not origins or not locations:
        raise DimensionError("an interaction matrix needs at least one origin and one location")
    _check_unique([o.id for o in origins], "origins")
    _check_unique([loc.id for loc in locations], "locations")
    return InteractionMatrix(origins=tuple(origins), locations=tuple(locations))


def set_transport_costs(
    matrix: InteractionMatrix,
    source: CostSource | str = CostSource.HAVERSINE,
    *,
    costs=None,
    unit: str | None = None,
    client: Callable[[list[GeoPoint], list[GeoPoint]], np.ndarray] | None = None,
    cost_floor: float = DEFAULT_COST_FLOOR,
) -> InteractionMatrix:
    """Populate t_ij for every pair.

    Args:
        source: ``HAVERSINE`` (great-circle km), ``EXTERNAL_MATRIX`` (``costs``
            given as an I x J array) or ``TRAVEL_TIME_CLIENT`` (``client`` is
            called with origin and location points and returns minutes).
        unit: unit tag; defaults to ``km`` / ``min`` for the computed sources.
        cost_floor: every cost below this value is raised to it, so power
            decay stays finite for coincident points.

    Downstream fields (utility, probability, flow) are cleared because they
    would no longer match the new costs.
    """
    source = CostSource(source)
    if cost_floor < 0:
        raise ValidationError("cost_floor must be >= 0")
    origin_points = [o.point for o in matrix.origins]
    location_points = [loc.point for loc in matrix.locations]

    if source is CostSource.HAVERSINE:
        values = distance_matrix(origin_points, location_points)
        unit = unit or "km"
    elif source is CostSource.EXTERNAL_MATRIX:
        if costs is None:
            raise ValidationError("EXTERNAL_MATRIX source needs a cost matrix")
        values = np.array(costs, dtype=float)
        unit = unit or "unknown"
    else:
        if client is None:
            raise ValidationError("TRAVEL_TIME_CLIENT source needs a client")
        values = np.array(client(origin_points, location_points), dtype=float)
        unit = unit or "min"

    if values.shape != matrix.shape:
        raise DimensionError(f"cost matrix has shape {values.shape}, expected {matrix.shape}")
    if np.any(np.isnan(values)):
        raise ValidationError("transport costs contain NaN")
    if np.any(values < 0):
        raise ValidationError("transport costs must be non-negative")

    floored = np.maximum(values, cost_floor)
    n_floored = int(np.count_nonzero(values < cost_floor))
    if n_floored:
        warnings.warn(
            f"{n_floored} transport cost(s) below {cost_floor} {unit} raised to the floor",
            MarketflowWarning,
            stacklevel=2,
        )
    return matrix.replace(
        transport_cost=floored,
        cost_unit=unit,
        cost_floor=float(cost_floor),
        utility=None,
        probability=None,
        flow=None,
    )


def set_observed(
    matrix: InteractionMatrix,
    *,
    shares=None,
    flows=None,
) -> InteractionMatrix:
    """Attach observed shares and/or flows to the pair table.

    When only flows are given, observed shares are derived per origin as
    ``flow / row total``; origins without any observed flow get zero shares.
    """
    if shares is None and flows is None:
        raise ValidationError("set_observed needs shares or flows")
    changes = {}
    if flows is not None:
        flows = np.array(flows, dtype=float)
        if flows.shape != matrix.shape:
            raise DimensionError(f"observed flows have shape {flows.shape}, expected {matrix.shape}")
        if np.any(~np.isfinite(flows)) or np.any(flows < 0):
            raise ValidationError("observed flows must be finite and >= 0")
        changes["observed_flow"] = flows
        if shares is None:
            totals = flows.sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                shares = np.where(totals > 0, flows / np.where(totals > 0, totals, 1.0), 0.0)
    if shares is not None:
        shares = np.array(shares, dtype=float)
        if shares.shape != matrix.shape:
            raise DimensionError(f"observed shares have shape {shares.shape}, expected {matrix.shape}")
        if np.any(~np.isfinite(shares)) or np.any(shares < 0) or np.any(shares > 1):
            raise ValidationError("observed shares must lie in [0, 1]")
        changes["observed_probability"] = shares
    return matrix.replace(**changes)
