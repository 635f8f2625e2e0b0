"""Coefficient of determination."""

from __future__ import annotations

import numpy as np


def r2(actual, predicted):
    """1 - SSres/SStot with SStot about the mean of ``actual``."""
    y = np.asarray(actual, dtype=np.float64).ravel()
    yhat = np.asarray(predicted, dtype=np.float64).ravel()
    if y.size != yhat.size:
        raise ValueError("actual and predicted must have the same length")
    if y.size < 2:
        raise ValueError("r2 needs at least 2 observations")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r2 undefined: actual values have zero variance")
    ss_res = float(np.sum((y - yhat) ** 2))
    return 1.0 - ss_res / ss_tot
