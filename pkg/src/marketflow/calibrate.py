"""Nonlinear calibration of Huff weighting parameters.

Observed shares or flows are fit by maximizing the multinomial likelihood of
destination choice within each origin. Observed location totals carry no
per-origin information, so they are fit by least squares on T_j instead.
Both objectives are minimized with the Nelder-Mead simplex from several
seeded starting points.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import logsumexp

from marketflow.decay import DecayKind, DecaySpec
from marketflow.errors import DimensionError, DomainError, MarketflowWarning, ValidationError
from marketflow.huff import HuffParams, huff_log_utilities, huff_shares
from marketflow.metrics import GOFMetrics, gof_metrics
from marketflow.model import InteractionMatrix
from marketflow.optimize import simplex_minimize

logger = logging.getLogger(__name__)


class ObservedKind(str, enum.Enum):
    SHARES = "shares"
    FLOWS = "flows"
    TOTALS = "totals"


@dataclass(frozen=True, eq=False)
class ObservedData:
    """Empirical data to calibrate against.

    ``values`` is an (I, J) array for shares and flows, and a length-J array
    of location totals for ``TOTALS``.
    """

    kind: ObservedKind
    values: np.ndarray

    def __post_init__(self):
        kind = ObservedKind(self.kind)
        values = np.array(self.values, dtype=float)
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise ValidationError(f"observed {kind.value} must be finite and >= 0")
        if kind is ObservedKind.TOTALS:
            if values.ndim != 1:
                raise DimensionError("observed totals must be a vector (one per location)")
        else:
            if values.ndim != 2:
                raise DimensionError(f"observed {kind.value} must be an origin x location table")
        if kind is ObservedKind.SHARES:
            if np.any(values > 1):
                raise ValidationError("observed shares must lie in [0, 1]")
            sums = values.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-6):
                bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-6).tolist()
                raise ValidationError(f"observed shares of origin row(s) {bad} do not sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mapping(
        cls, kind: ObservedKind | str, matrix: InteractionMatrix, values: Mapping
    ) -> ObservedData:
        """Build from ``{(origin_id, location_id): v}`` or ``{location_id: v}``.

        Pairs missing from the mapping count as zero.
        """
        kind = ObservedKind(kind)
        loc_index = {lid: j for j, lid in enumerate(matrix.location_ids)}
        if kind is ObservedKind.TOTALS:
            arr = np.zeros(len(loc_index))
            for lid, v in values.items():
                if lid not in loc_index:
                    raise ValidationError(f"unknown location id {lid!r} in observed totals")
                arr[loc_index[lid]] = v
            return cls(kind, arr)
        org_index = {oid: i for i, oid in enumerate(matrix.origin_ids)}
        arr = np.zeros(matrix.shape)
        for (oid, lid), v in values.items():
            if oid not in org_index or lid not in loc_index:
                raise ValidationError(f"unknown pair ({oid!r}, {lid!r}) in observed {kind.value}")
            arr[org_index[oid], loc_index[lid]] = v
        return cls(kind, arr)


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings; every field maps to a flat config key."""

    gamma: float = 1.0
    lam: float = 1.0
    a: float = 0.0
    b: float = 0.5
    fit_gamma: bool | None = None
    tolerance: float = 1e-8
    max_iterations: int = 2000
    restarts: int = 3
    seed: int = 0

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> FitConfig:
        aliases = {"lambda": "lam"}
        kwargs: dict[str, object] = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key == "fix_gamma":
                kwargs["fit_gamma"] = not _as_bool(raw)
                continue
            key = aliases.get(key, key)
            if key not in types:
                raise ValidationError(f"unknown fit config key {key!r}")
            if key == "fit_gamma":
                kwargs[key] = _as_bool(raw)
            elif key in ("max_iterations", "restarts", "seed"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)

    def initial_vector(self, kind: DecayKind, fit_gamma: bool) -> list[float]:
        decay = [self.a, self.b] if kind is DecayKind.LOGISTIC else [self.lam]
        return ([self.gamma] if fit_gamma else []) + decay


def _as_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"cannot read {raw!r} as a boolean")


@dataclass(frozen=True, eq=False)
class FitResult:
    params: HuffParams
    objective_value: float
    converged: bool
    iterations: int
    gof: GOFMetrics
    kind: ObservedKind
    fit_gamma: bool
    trace: list[float] = field(default_factory=list, repr=False)
    warnings: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "model": "huff",
            "observed": self.kind.value,
            "params": self.params.as_dict(),
            "fit_gamma": self.fit_gamma,
            "objective_value": self.objective_value,
            "converged": self.converged,
            "iterations": self.iterations,
            "gof": self.gof.as_dict(),
            "warnings": list(self.warnings),
        }


def _unpack(theta, kind: DecayKind, fit_gamma: bool, gamma: float):
    """Parameter vector -> (gamma, DecaySpec), or None outside the bounds."""
    theta = [float(v) for v in theta]
    if fit_gamma:
        gamma, theta = theta[0], theta[1:]
    if not all(math.isfinite(v) for v in theta) or not math.isfinite(gamma):
        return None
    # lambda > 0 for power/exponential, b > 0 for logistic
    if theta[-1] <= 0:
        return None
    return gamma, DecaySpec.from_vector(kind, theta)


def _expected_counts(matrix: InteractionMatrix, observed: ObservedData) -> np.ndarray:
    if observed.kind is ObservedKind.FLOWS:
        return np.asarray(observed.values)
    return observed.values * matrix.demand[:, None]


def _check_dimensions(matrix: InteractionMatrix, observed: ObservedData) -> None:
    expected = (matrix.shape[1],) if observed.kind is ObservedKind.TOTALS else matrix.shape
    if observed.values.shape != expected:
        raise DimensionError(
            f"observed {observed.kind.value} have shape {observed.values.shape}, expected {expected}"
        )


def build_objective(
    matrix: InteractionMatrix,
    observed: ObservedData,
    decay_kind: DecayKind | str,
    fit_gamma: bool,
    *,
    gamma: float = 1.0,
) -> Callable[[np.ndarray], float]:
    """Objective over the parameter vector ``[gamma,] decay params``.

    Shares and flows give the negative multinomial log-likelihood
    ``-sum n_ij log p_ij`` (shares are turned into counts with C_i); totals
    give ``sum_j (T_j - T_j_obs)**2``. Vectors outside the parameter bounds
    evaluate to ``+inf``. ``gamma`` is the fixed value used when
    ``fit_gamma`` is false.
    """
    kind = DecayKind.parse(decay_kind)
    costs = np.asarray(matrix.require("transport_cost", "build_objective"))
    _check_dimensions(matrix, observed)
    attraction = matrix.attraction
    demand = matrix.demand

    if observed.kind is ObservedKind.TOTALS:
        target = np.asarray(observed.values)
        total_demand = demand.sum()
        if total_demand > 0 and abs(target.sum() - total_demand) > 0.01 * total_demand:
            warnings.warn(
                f"observed totals sum to {target.sum():.6g} but total demand is "
                f"{total_demand:.6g}; predicted totals cannot match them exactly",
                MarketflowWarning,
                stacklevel=2,
            )
        if fit_gamma:
            warnings.warn(
                "fitting gamma and decay jointly from location totals may be "
                "under-identified",
                MarketflowWarning,
                stacklevel=2,
            )

        def objective(theta) -> float:
            unpacked = _unpack(theta, kind, fit_gamma, gamma)
            if unpacked is None:
                return math.inf
            p = huff_shares(attraction, costs, *unpacked)
            predicted = (p * demand[:, None]).sum(axis=0)
            return float(np.sum((predicted - target) ** 2))

        return objective

    counts = _expected_counts(matrix, observed)
    mask = counts > 0

    def objective(theta) -> float:
        unpacked = _unpack(theta, kind, fit_gamma, gamma)
        if unpacked is None:
            return math.inf
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            log_u = huff_log_utilities(attraction, costs, *unpacked)
            log_p = log_u - logsumexp(log_u, axis=1, keepdims=True)
        return float(-np.sum(counts[mask] * log_p[mask]))

    return objective


def _starts(x0: np.ndarray, config: FitConfig) -> list[np.ndarray]:
    rng = np.random.default_rng(config.seed)
    out = [x0]
    positive = np.zeros(x0.size, dtype=bool)
    positive[-1] = True  # lambda or logistic b
    for _ in range(config.restarts):
        z = rng.normal(size=x0.size)
        x = np.where(
            positive,
            x0 * np.exp(0.3 * z),
            x0 + 0.3 * z * np.maximum(1.0, np.abs(x0)),
        )
        out.append(x)
    return out


def predicted_values(
    matrix: InteractionMatrix, kind: ObservedKind, params: HuffParams
) -> np.ndarray:
    """Model predictions in the same units as observations of ``kind``."""
    costs = np.asarray(matrix.require("transport_cost", "predicted_values"))
    p = huff_shares(matrix.attraction, costs, params.gamma, params.decay)
    if kind is ObservedKind.SHARES:
        return p
    flows = p * matrix.demand[:, None]
    return flows if kind is ObservedKind.FLOWS else flows.sum(axis=0)


def fit_huff(
    matrix: InteractionMatrix,
    observed: ObservedData,
    decay_kind: DecayKind | str,
    config: FitConfig | None = None,
) -> FitResult:
    """Estimate gamma and the decay parameters from observed data.

    Runs the simplex from the configured start and from ``config.restarts``
    seeded, jittered copies of it; the run with the lowest objective wins
    (ties go to the earlier run). Gamma is fit by default for shares and
    flows and held at ``config.gamma`` for totals.
    """
    config = config or FitConfig()
    kind = DecayKind.parse(decay_kind)
    fit_gamma = config.fit_gamma
    if fit_gamma is None:
        fit_gamma = observed.kind is not ObservedKind.TOTALS

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MarketflowWarning)
        objective = build_objective(matrix, observed, kind, fit_gamma, gamma=config.gamma)
    notes = [str(w.message) for w in caught]
    for note in notes:
        warnings.warn(note, MarketflowWarning, stacklevel=2)

    x0 = np.array(config.initial_vector(kind, fit_gamma), dtype=float)
    best = None
    for index, start in enumerate(_starts(x0, config)):
        try:
            run = simplex_minimize(objective, start, config.tolerance, config.max_iterations)
        except DomainError:
            logger.debug("start %d infeasible: %s", index, start)
            continue
        logger.debug("start %d: f=%.12g converged=%s", index, run.fun, run.converged)
        if best is None or run.fun < best.fun:
            best = run
    if best is None:
        raise DomainError("the objective is not finite at any starting point")

    gamma, decay = _unpack(best.x, kind, fit_gamma, config.gamma)
    params = HuffParams(gamma=gamma, decay=decay)
    predicted = predicted_values(matrix, observed.kind, params)
    loglik = None if observed.kind is ObservedKind.TOTALS else -best.fun
    gof = gof_metrics(observed.values, predicted, loglik=loglik)
    if not best.converged:
        note = f"simplex did not converge within {config.max_iterations} iterations"
        notes.append(note)
        warnings.warn(note, MarketflowWarning, stacklevel=2)

    return FitResult(
        params=params,
        objective_value=best.fun,
        converged=best.converged,
        iterations=best.iterations,
        gof=gof,
        kind=observed.kind,
        fit_gamma=fit_gamma,
        trace=best.trace,
        warnings=tuple(notes),
    )
