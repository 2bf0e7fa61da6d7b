"""Univariate benchmarks: trailing-mean random walks and autoregressions.

The AR benchmark demeans the estimation window, regresses the series on
its own lags without an intercept, and re-adds the window mean to its
forecasts; order selection minimises BIC over 1..max_order with every
candidate scored on the same effective sample so the criteria are
comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnderdeterminedError
from .gnar import _ols

__all__ = ["ArFit", "rw_forecast", "ar_fit", "ar_forecast", "ar_bic_select", "avar_forecast"]


def rw_forecast(series: np.ndarray, n: int) -> float:
    """Mean of the last n observations; used flat across all horizons."""
    series = np.asarray(series, dtype=float)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if series.ndim != 1 or len(series) < n:
        raise ValueError(f"need a 1-D series with at least {n} observations")
    return float(series[-n:].mean())


@dataclass
class ArFit:
    """Autoregression on a demeaned window."""

    order: int
    coef: np.ndarray  # (order,)
    series_mean: float
    residual_variance: float


def ar_fit(series: np.ndarray, p: int) -> ArFit:
    """Least squares AR(p) on the demeaned series."""
    series = np.asarray(series, dtype=float)
    if p < 1:
        raise ValueError(f"order must be >= 1, got {p}")
    if series.ndim != 1:
        raise ValueError("series must be 1-D")
    t = len(series)
    if t - p < p:
        raise UnderdeterminedError(f"{t} observations give {t - p} rows for {p} coefficients")
    mean = float(series.mean())
    x = series - mean
    X = np.column_stack([x[p - j : t - j] for j in range(1, p + 1)])
    y = x[p:]
    coef, _ = _ols(X, y)
    rss = float(np.sum((y - X @ coef) ** 2))
    return ArFit(
        order=p,
        coef=coef,
        series_mean=mean,
        residual_variance=rss / max(len(y) - p, 1),
    )


def ar_forecast(fit: ArFit, history: np.ndarray, horizon: int) -> np.ndarray:
    """Iterate the fitted map `horizon` steps past the end of `history`."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    history = np.asarray(history, dtype=float)
    if len(history) < fit.order:
        raise ValueError(f"history of {len(history)} values cannot supply {fit.order} lags")
    buf = list(history[-fit.order :] - fit.series_mean)
    out = []
    for _ in range(horizon):
        nxt = float(np.dot(fit.coef, buf[::-1][: fit.order]))
        buf.append(nxt)
        out.append(nxt)
    return np.array(out) + fit.series_mean


def ar_bic_select(series: np.ndarray, max_order: int) -> int:
    """BIC-minimising AR order over 1..max_order, ties to the smaller p.

    Every candidate is fitted on the rows remaining after dropping
    max_order lags, so all criteria share the same sample size T:
    BIC(p) = T log(RSS/T) + p log(T).
    """
    series = np.asarray(series, dtype=float)
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    t = len(series)
    if t - max_order < max_order:
        raise ValueError(
            f"window of {t} observations is too short to compare orders up to {max_order}"
        )
    x = series - series.mean()
    rows = t - max_order
    y = x[max_order:]
    lags = np.column_stack([x[max_order - j : t - j] for j in range(1, max_order + 1)])
    best_p, best_bic = None, np.inf
    for p in range(1, max_order + 1):
        coef, _ = _ols(lags[:, :p], y)
        rss = float(np.sum((y - lags[:, :p] @ coef) ** 2))
        with np.errstate(divide="ignore"):
            bic = rows * np.log(rss / rows) + p * np.log(rows)
        if bic < best_bic:
            best_p, best_bic = p, bic
    return int(best_p)


def avar_forecast(series: np.ndarray, orders, horizon: int) -> np.ndarray:
    """Equal-weight average of AR(p) forecast paths over an order set.

    Orders are treated as a set: duplicates collapse, ordering is
    irrelevant.
    """
    uniq = sorted(set(int(p) for p in orders))
    if not uniq:
        raise ValueError("order set is empty")
    paths = []
    for p in uniq:
        fit = ar_fit(series, p)
        paths.append(ar_forecast(fit, series, horizon))
    return np.mean(paths, axis=0)
