"""Multiplicative Competitive Interaction (MCI) model.

The MCI share of location j for origin i is proportional to
``prod_h A_hj ** gamma_h``. Dividing shares and attributes by their
per-origin geometric means and taking logs removes the denominator, which
turns estimation into a no-intercept least-squares problem::

    log(p_ij / p~_i) = sum_h gamma_h * log(A_hj / A~_hi) + error

:func:`log_centering_transform` builds that design, :func:`mci_fit` solves it,
and :func:`mci_predict` maps coefficients back to shares.
"""

from __future__ import annotations

import enum
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from marketflow.errors import (
    CollinearityError,
    DimensionError,
    DomainError,
    MarketflowWarning,
    ValidationError,
)
from marketflow.metrics import GOFMetrics, gof_metrics
from marketflow.model import InteractionMatrix


class ZeroSharePolicy(str, enum.Enum):
    DROP = "drop"
    ADD_EPSILON = "add_epsilon"


@dataclass(frozen=True, eq=False)
class MCIDesign:
    """Log-centered regression design, one row per retained (origin, location)."""

    response: np.ndarray
    regressors: np.ndarray
    attribute_names: tuple[str, ...]
    origin_ids: tuple[str, ...]
    location_ids: tuple[str, ...]
    zero_policy: ZeroSharePolicy
    dropped_origins: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return self.response.shape[0]

    def groups(self) -> dict[str, np.ndarray]:
        """Row indices of each retained origin."""
        ids = np.array(self.origin_ids)
        return {o: np.flatnonzero(ids == o) for o in dict.fromkeys(self.origin_ids)}


@dataclass(frozen=True, eq=False)
class MCIFit:
    coefficients: dict[str, float]
    residuals: np.ndarray
    fitted: np.ndarray
    gof: GOFMetrics
    share_gof: GOFMetrics | None
    zero_policy: ZeroSharePolicy
    n_rows: int
    warnings: tuple[str, ...] = field(default=())

    def summary(self) -> str:
        width = max(len("coefficient"), *(len(k) for k in self.coefficients))
        lines = [f"{'coefficient':<{width}}  value"]
        lines += [f"{k:<{width}}  {v:.17g}" for k, v in self.coefficients.items()]
        r2 = self.gof.r_squared
        lines.append("")
        lines.append(f"rows: {self.n_rows}  zero shares: {self.zero_policy.value}")
        lines.append(f"R^2 (log-centered): {'n/a' if r2 is None else format(r2, '.6f')}")
        if self.share_gof is not None:
            lines.append(f"RMSE (shares): {self.share_gof.rmse:.6g}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "model": "mci",
            "coefficients": dict(self.coefficients),
            "zero_policy": self.zero_policy.value,
            "n_rows": self.n_rows,
            "gof": self.gof.as_dict(),
            "share_gof": None if self.share_gof is None else self.share_gof.as_dict(),
            "warnings": list(self.warnings),
        }


def _attribute_logs(matrix: InteractionMatrix, attributes: Sequence[str]) -> np.ndarray:
    """Stack log attribute tables into an (I, J, H) array."""
    if not attributes:
        raise ValidationError("the MCI model needs at least one attribute")
    if len(set(attributes)) != len(attributes):
        raise CollinearityError(
            "attribute list contains duplicates",
            sorted({a for a in attributes if list(attributes).count(a) > 1}),
        )
    logs = []
    for name in attributes:
        values = matrix.pair_attribute(name)
        if np.any(~(values > 0)) or np.any(~np.isfinite(values)):
            raise DomainError(f"attribute {name!r} must be finite and > 0 for every pair")
        logs.append(np.log(values))
    return np.stack(logs, axis=-1)


def log_centering_transform(
    matrix: InteractionMatrix,
    attributes: Sequence[str],
    *,
    zero_policy: ZeroSharePolicy | str = ZeroSharePolicy.DROP,
    epsilon: float = 1e-6,
) -> MCIDesign:
    """Build the log-centered design from observed shares.

    Args:
        attributes: location attribute names; ``"t"`` adds the transport cost
            of each pair and ``"attraction"`` the location's A_j.
        zero_policy: ``DROP`` removes pairs with zero observed share before the
            geometric means are taken; ``ADD_EPSILON`` replaces zeros with
            ``epsilon`` and renormalizes each origin's shares.

    Origins that end up with fewer than two alternatives are dropped with a
    warning.
    """
    zero_policy = ZeroSharePolicy(zero_policy)
    shares = np.array(matrix.require("observed_probability", "log_centering_transform"))
    log_attrs = _attribute_logs(matrix, attributes)
    notes: list[str] = []

    empty = shares.sum(axis=1) <= 0
    if zero_policy is ZeroSharePolicy.ADD_EPSILON:
        if epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        shares = np.where(shares > 0, shares, epsilon)
        shares = shares / shares.sum(axis=1, keepdims=True)

    response, regressors, o_ids, l_ids, dropped = [], [], [], [], []
    for i, origin in enumerate(matrix.origins):
        keep = np.flatnonzero(shares[i] > 0)
        if empty[i] or keep.size < 2:
            dropped.append(origin.id)
            notes.append(
                f"origin {origin.id!r} dropped: {keep.size if not empty[i] else 0} "
                "alternative(s) with positive observed share"
            )
            continue
        log_p = np.log(shares[i, keep])
        x = log_attrs[i, keep, :]
        response.append(log_p - log_p.mean())
        regressors.append(x - x.mean(axis=0))
        o_ids += [origin.id] * keep.size
        l_ids += [matrix.locations[j].id for j in keep]

    for note in notes:
        warnings.warn(note, MarketflowWarning, stacklevel=2)
    if not response:
        raise ValidationError("no origin has at least two alternatives with positive share")

    return MCIDesign(
        response=np.concatenate(response),
        regressors=np.concatenate(regressors, axis=0),
        attribute_names=tuple(attributes),
        origin_ids=tuple(o_ids),
        location_ids=tuple(l_ids),
        zero_policy=zero_policy,
        dropped_origins=tuple(dropped),
        warnings=tuple(notes),
    )


def _collinear_columns(x: np.ndarray, names: Sequence[str]) -> list[str] | None:
    """Names of the first linearly dependent group of columns, or None."""
    scale = np.linalg.norm(x, axis=0)
    tol = 1e-10
    for k in range(x.shape[1]):
        if scale[k] <= tol * max(1.0, scale.max()):
            return [names[k]]
        if k == 0:
            continue
        prev = x[:, :k] / scale[:k]
        col = x[:, k] / scale[k]
        coef, *_ = np.linalg.lstsq(prev, col, rcond=None)
        if np.linalg.norm(col - prev @ coef) < 1e-8:
            involved = [names[m] for m in range(k) if abs(coef[m]) > 1e-8]
            return involved + [names[k]]
    return None


def _centered_softmax(z: np.ndarray) -> np.ndarray:
    w = np.exp(z - z.max())
    return w / w.sum()


def mci_fit(design: MCIDesign) -> MCIFit:
    """Ordinary least squares without intercept on a log-centered design.

    The H x H normal equations are solved by Cholesky factorization.
    """
    x, y = design.regressors, design.response
    n, h = x.shape
    if n < h + 1:
        raise DimensionError(f"MCI fit needs at least {h + 1} rows, got {n}")
    bad = _collinear_columns(x, design.attribute_names)
    if bad is not None:
        raise CollinearityError(f"collinear attribute columns: {', '.join(bad)}", bad)

    gram = x.T @ x
    rhs = x.T @ y
    try:
        gamma = linalg.cho_solve(linalg.cho_factor(gram), rhs)
    except linalg.LinAlgError:
        raise CollinearityError(
            "normal equations are not positive definite", list(design.attribute_names)
        ) from None

    fitted = x @ gamma
    residuals = y - fitted
    gof = gof_metrics(y, fitted)

    # compare shares implied by the fit with the (retained) observed shares
    obs_shares, pred_shares = [], []
    for rows in design.groups().values():
        obs_shares.append(_centered_softmax(y[rows]))
        pred_shares.append(_centered_softmax(fitted[rows]))
    share_gof = gof_metrics(np.concatenate(obs_shares), np.concatenate(pred_shares))

    return MCIFit(
        coefficients={name: float(g) for name, g in zip(design.attribute_names, gamma)},
        residuals=residuals,
        fitted=fitted,
        gof=gof,
        share_gof=share_gof,
        zero_policy=design.zero_policy,
        n_rows=n,
        warnings=design.warnings,
    )


def mci_predict(matrix: InteractionMatrix, coefficients: Mapping[str, float]) -> InteractionMatrix:
    """Predicted shares via the inverse log-centering transformation.

    Each origin's attributes are centered on their geometric mean over all J
    locations; the weighted sum is exponentiated and normalized per origin.
    """
    names = list(coefficients)
    gamma = np.array([float(coefficients[n]) for n in names])
    log_attrs = _attribute_logs(matrix, names)
    centered = log_attrs - log_attrs.mean(axis=1, keepdims=True)
    z = centered @ gamma
    z = z - z.max(axis=1, keepdims=True)
    w = np.exp(z)
    p = w / w.sum(axis=1, keepdims=True)
    return matrix.replace(utility=None, probability=p, flow=None)


def mci_shares(matrix: InteractionMatrix, coefficients: Mapping[str, float]) -> np.ndarray:
    """Forward MCI shares ``prod_h A_hj**g_h / sum_j prod_h A_hj**g_h``."""
    num = np.ones(matrix.shape)
    for name, g in coefficients.items():
        values = matrix.pair_attribute(name)
        if np.any(~(values > 0)):
            raise DomainError(f"attribute {name!r} must be > 0 for every pair")
        num = num * values ** float(g)
    return num / num.sum(axis=1, keepdims=True)
