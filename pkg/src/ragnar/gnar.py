"""Network autoregressive models on staged neighbourhood averages.

Each node's next value is regressed on its own lags and on the plain
averages of its stage-r neighbour sets at those lags:

    x[i,t] = sum_j alpha[i,j] x[i,t-j]
           + sum_j sum_{r<=s_j} beta[i,j,r] avg_{k in stage_r(i)} x[k,t-j]
           + noise

Three coefficient-sharing classes are supported:

* global_alpha      - alpha and beta shared by every node
* standard          - alpha per node, beta shared
* local_alpha_beta  - everything per node

Nodes whose stage-r set is empty simply lose that term; in the shared
classes the corresponding regressor is zero for those rows so the common
beta is estimated from the nodes that have neighbours.  Estimation is
ordinary least squares on a demeaned window (no intercept); stationarity
is not enforced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UnderdeterminedError
from .graphs import Graph, _stage_masks, stage_mean_operators
from .panel import PanelWindow

__all__ = [
    "PARAM_CLASSES",
    "GnarSpec",
    "RegressionProblem",
    "GnarFit",
    "ForecastPath",
    "param_count",
    "build_design",
    "assemble",
    "fit",
    "fit_gnar",
    "forecast",
    "fit_to_text",
    "fit_from_text",
]

PARAM_CLASSES = ("global_alpha", "standard", "local_alpha_beta")

# Tiny ridge applied only when the design is rank deficient; scaled to
# the problem so it perturbs well-identified coefficients negligibly.
RIDGE_SCALE = 1e-8


@dataclass(frozen=True)
class GnarSpec:
    """Model order: sharing class, lag depth p, neighbourhood depths s."""

    param_class: str
    p: int
    s: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.param_class not in PARAM_CLASSES:
            raise ValueError(f"param_class must be one of {PARAM_CLASSES}, got {self.param_class!r}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        if len(self.s) != self.p:
            raise ValueError(f"s must have length p={self.p}, got {len(self.s)}")
        if any(v < 0 for v in self.s):
            raise ValueError("all stage depths must be >= 0")

    @classmethod
    def constant(cls, param_class: str, p: int, s: int) -> "GnarSpec":
        """Same neighbourhood depth s at every lag."""
        return cls(param_class=param_class, p=p, s=(s,) * p)

    @property
    def s_max(self) -> int:
        return max(self.s) if self.s else 0

    @property
    def beta_keys(self) -> tuple[tuple[int, int], ...]:
        """(lag, stage) pairs in canonical column order."""
        return tuple((j, r) for j in range(1, self.p + 1) for r in range(1, self.s[j - 1] + 1))


def param_count(spec: GnarSpec, n_nodes: int) -> int:
    """Number of free coefficients the sharing class implies."""
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    ssum = sum(spec.s)
    if spec.param_class == "global_alpha":
        return spec.p + ssum
    if spec.param_class == "standard":
        return n_nodes * spec.p + ssum
    return n_nodes * (spec.p + ssum)


@dataclass
class RegressionProblem:
    """Per-node regression blocks plus the sharing pattern to assemble."""

    spec: GnarSpec
    targets: tuple[int, ...]
    n_nodes: int
    series_ids: tuple[str, ...]
    window_end: object
    window_means: np.ndarray  # (n_nodes,) zeros when the window was not demeaned
    y: np.ndarray  # (n_targets, rows)
    own_lags: np.ndarray  # (n_targets, rows, p)
    nb: np.ndarray  # (n_targets, rows, n_beta) zero-filled where the stage set is empty
    nb_empty: np.ndarray  # (n_targets, n_beta) structural-empty flags

    @property
    def n_rows(self) -> int:
        return self.y.shape[1]

    @property
    def beta_keep(self) -> np.ndarray:
        """Shared beta columns identified by at least one node."""
        return ~self.nb_empty.all(axis=0)


def build_design(
    window: PanelWindow,
    graph: Graph,
    spec: GnarSpec,
    targets: Sequence[int] | None = None,
) -> RegressionProblem:
    """Lay out regressands and regressors for the requested equations.

    `targets` restricts the problem to a subset of node equations (the
    ranking stage fits only the headline node); None means every node.
    Regressors for the value at t are taken at t-1..t-p, so the first p
    window rows serve only as lags.
    """
    n_nodes = len(window.series_ids)
    if graph.n_nodes != n_nodes:
        raise ValueError(f"graph has {graph.n_nodes} nodes but window has {n_nodes} series")
    if targets is None:
        targets = tuple(range(n_nodes))
    else:
        targets = tuple(int(t) for t in targets)
        if any(not 0 <= t < n_nodes for t in targets):
            raise IndexError("target node out of range")
        if len(set(targets)) != len(targets):
            raise ValueError("duplicate target nodes")
    p = spec.p
    length = len(window)
    rows = length - p
    if rows < 1:
        raise UnderdeterminedError(
            f"window of {length} rows cannot fit p={p} lags (needs at least {p + 1})"
        )
    V = window.values
    keys = spec.beta_keys
    n_beta = len(keys)
    adj = graph.adjacency

    y = np.empty((len(targets), rows))
    own = np.empty((len(targets), rows, p))
    nb = np.zeros((len(targets), rows, n_beta))
    empty = np.zeros((len(targets), n_beta), dtype=bool)
    for a, i in enumerate(targets):
        y[a] = V[p:, i]
        for j in range(1, p + 1):
            own[a, :, j - 1] = V[p - j : length - j, i]
        if spec.s_max:
            masks = _stage_masks(adj, i, spec.s_max, graph.directed)
            avgs = []
            for mask in masks:
                avgs.append(V[:, mask].mean(axis=1) if mask.any() else None)
            for b, (j, r) in enumerate(keys):
                series = avgs[r - 1]
                if series is None:
                    empty[a, b] = True
                else:
                    nb[a, :, b] = series[p - j : length - j]
    return RegressionProblem(
        spec=spec,
        targets=targets,
        n_nodes=n_nodes,
        series_ids=window.series_ids,
        window_end=window.end_date,
        window_means=window.means if window.demeaned else np.zeros(n_nodes),
        y=y,
        own_lags=own,
        nb=nb,
        nb_empty=empty,
    )


def assemble(problem: RegressionProblem) -> tuple[np.ndarray, np.ndarray]:
    """Full stacked design matrix and regressand for the sharing class.

    Intended for inspection and small-problem cross-checks; the solver
    in `fit` produces identical least squares solutions without ever
    materialising the standard-class block-diagonal matrix.
    """
    spec = problem.spec
    n_t, rows, p = problem.own_lags.shape
    keep = problem.beta_keep
    y = problem.y.reshape(-1)
    if spec.param_class == "global_alpha":
        X = np.concatenate(
            [
                problem.own_lags.reshape(n_t * rows, p),
                problem.nb[:, :, keep].reshape(n_t * rows, int(keep.sum())),
            ],
            axis=1,
        )
        return X, y
    if spec.param_class == "standard":
        X = np.zeros((n_t * rows, n_t * p + int(keep.sum())))
        for a in range(n_t):
            X[a * rows : (a + 1) * rows, a * p : (a + 1) * p] = problem.own_lags[a]
        X[:, n_t * p :] = problem.nb[:, :, keep].reshape(n_t * rows, int(keep.sum()))
        return X, y
    # local_alpha_beta: block diagonal in everything
    widths = [p + int((~problem.nb_empty[a]).sum()) for a in range(n_t)]
    X = np.zeros((n_t * rows, sum(widths)))
    at = 0
    for a in range(n_t):
        cols = np.concatenate([problem.own_lags[a], problem.nb[a][:, ~problem.nb_empty[a]]], axis=1)
        X[a * rows : (a + 1) * rows, at : at + widths[a]] = cols
        at += widths[a]
    return X, y


def _ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares via rank-revealing decomposition with ridge fallback.

    On rank deficiency re-solves the normal equations with a tiny ridge
    lambda = RIDGE_SCALE * trace(X'X) / n_cols and reports the fallback.
    """
    if X.shape[1] == 0:
        shape = (0,) if y.ndim == 1 else (0, y.shape[1])
        return np.zeros(shape), False
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank == X.shape[1]:
        return coef, False
    gram = X.T @ X
    lam = RIDGE_SCALE * np.trace(gram) / X.shape[1]
    coef = np.linalg.solve(gram + lam * np.eye(X.shape[1]), X.T @ y)
    return coef, True


def fit(problem: RegressionProblem) -> "GnarFit":
    """Estimate the coefficients of `problem` by least squares."""
    spec = problem.spec
    n_t, rows, p = problem.own_lags.shape
    keys = spec.beta_keys
    n_beta = len(keys)
    keep = problem.beta_keep
    ridge_used = False

    alpha = np.zeros((n_t, p))
    beta_flat = np.zeros((n_t, n_beta))

    if spec.param_class == "local_alpha_beta":
        for a in range(n_t):
            keep_a = ~problem.nb_empty[a]
            X = np.concatenate([problem.own_lags[a], problem.nb[a][:, keep_a]], axis=1)
            if rows < X.shape[1]:
                raise UnderdeterminedError(
                    f"node {problem.series_ids[problem.targets[a]]}: {rows} rows for "
                    f"{X.shape[1]} coefficients"
                )
            coef, deficient = _ols(X, problem.y[a])
            ridge_used |= deficient
            alpha[a] = coef[:p]
            beta_flat[a, keep_a] = coef[p:]
    elif spec.param_class == "global_alpha":
        X, y = assemble(problem)
        if X.shape[0] < X.shape[1]:
            raise UnderdeterminedError(f"{X.shape[0]} stacked rows for {X.shape[1]} coefficients")
        coef, ridge_used = _ols(X, y)
        alpha[:] = coef[:p]
        beta_flat[:, keep] = coef[p:]
    elif spec.param_class == "standard":
        # Shared beta by residual regression: project each node's block
        # onto its own-lag columns, pool the residuals for beta, then
        # back out the per-node alphas.  Exactly the stacked solution.
        if n_t * rows < n_t * p + int(keep.sum()):
            raise UnderdeterminedError(
                f"{n_t * rows} stacked rows for {n_t * p + int(keep.sum())} coefficients"
            )
        if rows < p:
            raise UnderdeterminedError(f"{rows} rows cannot identify {p} own-lag coefficients")
        resid_y = np.empty_like(problem.y)
        resid_b = np.empty((n_t, rows, int(keep.sum())))
        for a in range(n_t):
            A = problem.own_lags[a]
            B = problem.nb[a][:, keep]
            proj, deficient = _ols(A, np.concatenate([problem.y[a][:, None], B], axis=1))
            ridge_used |= deficient
            fitted = A @ proj
            resid_y[a] = problem.y[a] - fitted[:, 0]
            resid_b[a] = B - fitted[:, 1:]
        shared, deficient = _ols(resid_b.reshape(n_t * rows, -1), resid_y.reshape(-1))
        ridge_used |= deficient
        beta_flat[:, keep] = shared
        for a in range(n_t):
            adj_y = problem.y[a] - problem.nb[a][:, keep] @ shared
            coef, deficient = _ols(problem.own_lags[a], adj_y)
            ridge_used |= deficient
            alpha[a] = coef

    # per-node residual variance; shared classes spread their
    # coefficient count evenly over the fitted equations
    if spec.param_class == "local_alpha_beta":
        k_per_node = np.array([p + int((~problem.nb_empty[a]).sum()) for a in range(n_t)], dtype=float)
    elif spec.param_class == "global_alpha":
        k_per_node = np.full(n_t, (p + int(keep.sum())) / n_t)
    else:
        k_per_node = np.full(n_t, p + int(keep.sum()) / n_t)
    variance = np.empty(n_t)
    for a in range(n_t):
        pred = problem.own_lags[a] @ alpha[a] + problem.nb[a] @ beta_flat[a]
        rss = float(np.sum((problem.y[a] - pred) ** 2))
        variance[a] = rss / max(rows - k_per_node[a], 1.0)

    beta = np.zeros((n_t, p, spec.s_max))
    for b, (j, r) in enumerate(keys):
        beta[:, j - 1, r - 1] = beta_flat[:, b]

    if spec.param_class == "global_alpha":
        alpha_out: np.ndarray = alpha[0].copy()
        beta_out = beta[0].copy()
    elif spec.param_class == "standard":
        alpha_out = alpha
        beta_out = beta[0].copy()
    else:
        alpha_out = alpha
        beta_out = beta
    return GnarFit(
        spec=spec,
        node_ids=problem.targets,
        n_nodes=problem.n_nodes,
        series_ids=problem.series_ids,
        alpha=alpha_out,
        beta=beta_out,
        residual_variance=variance,
        node_means=np.asarray(problem.window_means, dtype=float),
        fitted_through=problem.window_end,
        ridge_applied=bool(ridge_used),
    )


@dataclass
class GnarFit:
    """Estimated coefficients plus everything needed to forecast.

    Array shapes follow the sharing class exactly: global_alpha stores
    alpha (p,) and beta (p, s_max); standard stores alpha (n_fitted, p)
    and beta (p, s_max); local_alpha_beta stores alpha (n_fitted, p) and
    beta (n_fitted, p, s_max).  Structurally absent terms (stage depth
    below s_max at a lag, or an empty neighbour set in the local class)
    hold zero.
    """

    spec: GnarSpec
    node_ids: tuple[int, ...]
    n_nodes: int
    series_ids: tuple[str, ...]
    alpha: np.ndarray
    beta: np.ndarray
    residual_variance: np.ndarray
    node_means: np.ndarray
    fitted_through: object
    ridge_applied: bool
    graph_id: int = -1

    def expanded_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-node (n_nodes, p) alpha and (n_nodes, p, s_max) beta,
        zero-filled outside the fitted equations."""
        p, s_max = self.spec.p, self.spec.s_max
        af = np.zeros((self.n_nodes, p))
        bf = np.zeros((self.n_nodes, p, s_max))
        ids = list(self.node_ids)
        af[ids] = self.alpha  # shared classes broadcast over the node axis
        bf[ids] = self.beta
        return af, bf


@dataclass(frozen=True)
class ForecastPath:
    """Multi-horizon forecasts issued from one origin, on the raw scale."""

    origin: object  # pd.Period: last observed month
    values: np.ndarray  # (horizon, n_nodes); NaN outside fitted nodes
    series_ids: tuple[str, ...]
    target: int

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    @property
    def target_series(self) -> np.ndarray:
        return self.values[:, self.target]

    def at(self, h: int) -> np.ndarray:
        if not 1 <= h <= self.horizon:
            raise ValueError(f"horizon {h} outside 1..{self.horizon}")
        return self.values[h - 1]


def forecast(
    fit_result: GnarFit,
    graph: Graph,
    history: PanelWindow,
    horizon: int,
    mean_ops: list[np.ndarray] | None = None,
) -> ForecastPath:
    """Iterate the fitted one-step map `horizon` months past the window end.

    Later steps substitute earlier forecasts for the unobserved values,
    so multi-horizon forecasting needs every node equation; fits
    restricted to a subset of nodes may only forecast one step.  Window
    means are added back, returning forecasts on the raw scale.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    spec = fit_result.spec
    n = fit_result.n_nodes
    if len(history.series_ids) != n:
        raise ValueError("history panel width does not match fit")
    if len(history) < spec.p:
        raise ValueError(f"history of {len(history)} rows cannot supply p={spec.p} lags")
    partial = len(fit_result.node_ids) < n
    if partial and horizon > 1:
        raise ValueError("fits restricted to a node subset can only forecast horizon 1")
    if history.demeaned:
        if not np.allclose(history.means, fit_result.node_means, atol=1e-9):
            raise ValueError("demeaned history has different means than the fit")
        work = history.values
    else:
        work = history.values - fit_result.node_means
    if np.isnan(work[-spec.p :]).any():
        raise ValueError("history lags contain NaN")

    if mean_ops is None:
        mean_ops = stage_mean_operators(graph, spec.s_max)
    af, bf = fit_result.expanded_coeffs()
    hist = [work[k] for k in range(-spec.p, 0)]
    steps = []
    for _ in range(horizon):
        x = np.zeros(n)
        for j in range(1, spec.p + 1):
            past = hist[-j]
            x += af[:, j - 1] * past
            for r in range(1, spec.s_max + 1):
                x += bf[:, j - 1, r - 1] * (mean_ops[r - 1] @ past)
        hist.append(x)
        steps.append(x)
    out = np.array(steps) + fit_result.node_means
    if partial:
        mask = np.ones(n, dtype=bool)
        mask[list(fit_result.node_ids)] = False
        out[:, mask] = np.nan
    return ForecastPath(
        origin=history.end_date,
        values=out,
        series_ids=history.series_ids,
        target=history.target,
    )


def fit_gnar(
    window: PanelWindow,
    graph: Graph,
    spec: GnarSpec,
    targets: Sequence[int] | None = None,
    graph_id: int = -1,
) -> GnarFit:
    """Convenience: build the design and fit in one call."""
    result = fit(build_design(window, graph, spec, targets))
    result.graph_id = graph_id
    return result


# --- flat text serialization ---------------------------------------------


def _fmt(arr: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in np.asarray(arr, dtype=float).reshape(-1))


def fit_to_text(fit_result: GnarFit) -> str:
    """Flat key=value text; arrays are row-major comma-joined floats
    (alpha node-major then lag; beta node-major, lag, stage)."""
    lines = [
        f"class={fit_result.spec.param_class}",
        f"p={fit_result.spec.p}",
        f"s={','.join(str(v) for v in fit_result.spec.s)}",
        f"graph_id={fit_result.graph_id}",
        f"n_nodes={fit_result.n_nodes}",
        f"node_ids={','.join(str(v) for v in fit_result.node_ids)}",
        f"series_ids={','.join(fit_result.series_ids)}",
        f"fitted_through={fit_result.fitted_through}",
        f"ridge_applied={int(fit_result.ridge_applied)}",
        f"alpha={_fmt(fit_result.alpha)}",
        f"beta={_fmt(fit_result.beta)}",
        f"means={_fmt(fit_result.node_means)}",
        f"variances={_fmt(fit_result.residual_variance)}",
    ]
    return "\n".join(lines) + "\n"


def fit_from_text(text: str) -> GnarFit:
    """Inverse of fit_to_text."""
    import pandas as pd

    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if line:
            key, val = line.split("=", 1)
            fields[key] = val

    def floats(key: str) -> np.ndarray:
        raw = fields[key]
        return np.array([float(v) for v in raw.split(",")]) if raw else np.array([])

    spec = GnarSpec(
        param_class=fields["class"],
        p=int(fields["p"]),
        s=tuple(int(v) for v in fields["s"].split(",")),
    )
    node_ids = tuple(int(v) for v in fields["node_ids"].split(",")) if fields["node_ids"] else ()
    n_nodes = int(fields["n_nodes"])
    n_t = len(node_ids)
    p, s_max = spec.p, spec.s_max
    if spec.param_class == "global_alpha":
        alpha = floats("alpha").reshape(p)
        beta = floats("beta").reshape(p, s_max) if s_max else np.zeros((p, 0))
    elif spec.param_class == "standard":
        alpha = floats("alpha").reshape(n_t, p)
        beta = floats("beta").reshape(p, s_max) if s_max else np.zeros((p, 0))
    else:
        alpha = floats("alpha").reshape(n_t, p)
        beta = floats("beta").reshape(n_t, p, s_max) if s_max else np.zeros((n_t, p, 0))
    return GnarFit(
        spec=spec,
        node_ids=node_ids,
        n_nodes=n_nodes,
        series_ids=tuple(fields["series_ids"].split(",")),
        alpha=alpha,
        beta=beta,
        residual_variance=floats("variances"),
        node_means=floats("means"),
        fitted_through=pd.Period(fields["fitted_through"], freq="M"),
        ridge_applied=bool(int(fields["ridge_applied"])),
        graph_id=int(fields["graph_id"]),
    )
