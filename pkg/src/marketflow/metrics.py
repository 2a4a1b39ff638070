"""Goodness-of-fit metrics shared by the MCI and nonlinear fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from marketflow.errors import DimensionError


@dataclass(frozen=True)
class GOFMetrics:
    """Observed-vs-predicted comparison.

    ``r_squared`` is ``None`` when the observed values have zero variance;
    ``loglik`` is only set for share/flow data.
    """

    r_squared: float | None
    mae: float
    rmse: float
    loglik: float | None = None
    n: int = 0

    def as_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "mae": self.mae,
            "rmse": self.rmse,
            "loglik": self.loglik,
            "n": self.n,
        }


def gof_metrics(observed, predicted, *, loglik: float | None = None) -> GOFMetrics:
    obs = np.asarray(observed, dtype=float).ravel()
    pred = np.asarray(predicted, dtype=float).ravel()
    if obs.shape != pred.shape:
        raise DimensionError(f"observed has {obs.size} values, predicted has {pred.size}")
    if obs.size < 2:
        raise DimensionError("goodness of fit needs at least two values")
    resid = obs - pred
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((obs - obs.mean()) ** 2))
    mae = float(np.mean(np.abs(resid)))
    rmse = math.sqrt(ssr / obs.size)
    # rounding can leave rmse a hair below mae when all residuals are equal
    rmse = max(rmse, mae)
    return GOFMetrics(
        r_squared=1.0 - ssr / sst if sst > 0 else None,
        mae=mae,
        rmse=rmse,
        loglik=loglik,
        n=int(obs.size),
    )
