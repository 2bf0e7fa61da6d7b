"""Network ranking, ensemble order selection, and rolling-origin backtests.

The engine maintains, for every candidate model order (p, s), a rolling
record of each random network's one-step forecast errors at the target
series.  Networks are ranked by the RMSE of those errors; an ensemble
BIC over the best quarter of networks selects the model order; forecasts
average the paths of full model fits on the top-n networks.  Benchmarks
(random-walk means and autoregressions) run on the same windows.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import pickle
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .benchmarks import ar_bic_select, ar_fit, ar_forecast, avar_forecast, rw_forecast
from .errors import ConfigError, DataError
from .gnar import PARAM_CLASSES, GnarSpec, _ols, fit_gnar, forecast
from .graphs import Graph, _stage_masks, build_directed_graph, generate_ensemble, stage_mean_operators
from .panel import _BasePanel, panel_fingerprint, window

log = logging.getLogger(__name__)

CADENCES = ("monthly", "quarterly")
REFRESH_INTERVAL = {"monthly": 1, "quarterly": 3}

DEFAULT_ORDER_SETS = (("p1", (1, 13, 25)), ("p2", (2, 13, 25)))
DEFAULT_STAGE_SETS = (("s1", (1,)), ("s2", (2,)), ("s3", (1, 2)))

SpecKey = tuple[int, int]  # (lag order p, constant neighbourhood stage s)


# --- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class BacktestConfig:
    """Protocol parameters for one backtest run.

    `candidate_orders` x `candidate_stages` is the grid searched by the
    BIC labels; `order_sets` / `stage_sets` name the member grids the
    averaged (AvGNAR / AvAR) labels span.  `labels` filters the produced
    model labels (empty tuple = all).
    """

    n_train: int = 150
    n_val: int = 30
    g_graphs: int = 10000
    edge_prob: float = 0.03
    top_n: int = 5
    k_fraction: float = 0.25
    horizons: int = 12
    cadence: str = "monthly"
    candidate_orders: tuple[int, ...] = tuple(range(1, 26))
    candidate_stages: tuple[int, ...] = (1, 2)
    order_sets: tuple[tuple[str, tuple[int, ...]], ...] = DEFAULT_ORDER_SETS
    stage_sets: tuple[tuple[str, tuple[int, ...]], ...] = DEFAULT_STAGE_SETS
    param_classes: tuple[str, ...] = PARAM_CLASSES
    fixed_specs: tuple[SpecKey, ...] = ()
    rw_windows: tuple[int, ...] = (1, 4)
    labels: tuple[str, ...] = ()
    seed: int = 0
    first_origin: str | None = None
    last_origin: str | None = None
    directed: bool = False
    directed_order: int = 1
    directed_stage: int = 1

    def validate(self) -> None:
        def bad(key: str, why: str) -> ConfigError:
            return ConfigError(f"backtest.{key}: {why}")

        if self.n_train < 2:
            raise bad("n_train", f"must be >= 2, got {self.n_train}")
        if self.n_val < 1:
            raise bad("n_val", f"must be >= 1, got {self.n_val}")
        if self.g_graphs < 1:
            raise bad("g_graphs", f"must be >= 1, got {self.g_graphs}")
        if not 0.0 < self.edge_prob <= 1.0:
            raise bad("edge_prob", f"must lie in (0, 1], got {self.edge_prob}")
        if not 1 <= self.top_n <= self.g_graphs:
            raise bad("top_n", f"must lie in 1..g_graphs={self.g_graphs}, got {self.top_n}")
        if not 0.0 < self.k_fraction <= 1.0:
            raise bad("k_fraction", f"must lie in (0, 1], got {self.k_fraction}")
        if self.horizons < 1:
            raise bad("horizons", f"must be >= 1, got {self.horizons}")
        if self.cadence not in CADENCES:
            raise bad("cadence", f"must be one of {CADENCES}, got {self.cadence!r}")
        for key, vals in (
            ("candidate_orders", self.candidate_orders),
            ("rw_windows", self.rw_windows),
        ):
            if not vals or any(v < 1 for v in vals):
                raise bad(key, f"needs positive entries, got {vals}")
        if not self.candidate_stages or any(v < 0 for v in self.candidate_stages):
            raise bad("candidate_stages", f"needs entries >= 0, got {self.candidate_stages}")
        for key, sets, floor in (("order_sets", self.order_sets, 1), ("stage_sets", self.stage_sets, 0)):
            names = [name for name, _ in sets]
            if len(set(names)) != len(names):
                raise bad(key, f"set names must be unique, got {names}")
            for name, vals in sets:
                if not vals or any(v < floor for v in vals):
                    raise bad(key, f"set {name!r} needs entries >= {floor}, got {vals}")
        if not self.param_classes:
            raise bad("param_classes", "needs at least one parameter class")
        for cls in self.param_classes:
            if cls not in PARAM_CLASSES:
                raise bad("param_classes", f"unknown class {cls!r}; known: {PARAM_CLASSES}")
        for p, s in self.fixed_specs:
            if p < 1 or s < 0:
                raise bad("fixed_specs", f"need p >= 1 and s >= 0, got ({p}, {s})")
        if self.directed_order < 1 or self.directed_stage < 1:
            raise bad("directed_order", "directed variant needs order >= 1 and stage >= 1")
        for origin_key in ("first_origin", "last_origin"):
            val = getattr(self, origin_key)
            if val is not None:
                try:
                    pd.Period(val, freq="M")
                except Exception as exc:
                    raise bad(origin_key, f"not a YYYY-MM month: {val!r} ({exc})") from None
        # every fitted window must leave at least as many rows as columns
        for p, s in self.all_specs():
            rows, cols = self.n_train - p, p * (1 + s)
            if rows < cols:
                raise bad(
                    "n_train",
                    f"{self.n_train}-month windows leave {rows} rows for the "
                    f"{cols} coefficients of order ({p}, {s})",
                )
        if self.n_train < 2 * max(self.candidate_orders):
            raise bad(
                "n_train",
                f"order selection up to {max(self.candidate_orders)} needs "
                f"windows of >= {2 * max(self.candidate_orders)} months",
            )

    def all_specs(self) -> tuple[SpecKey, ...]:
        """Every (p, s) pair any label of this config could fit."""
        specs = {(p, s) for p in self.candidate_orders for s in self.candidate_stages}
        for _, orders in self.order_sets:
            for _, stages in self.stage_sets:
                specs |= {(p, s) for p in orders for s in stages}
        specs |= set(self.fixed_specs)
        if self.directed:
            specs.add((self.directed_order, self.directed_stage))
        return tuple(sorted(specs))

    def fingerprint(self, panel: _BasePanel) -> str:
        """sha256 over the protocol parameters and the panel contents."""
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        h = hashlib.sha256(blob.encode())
        h.update(panel_fingerprint(panel).encode())
        return h.hexdigest()


# --- model labels ----------------------------------------------------------


@dataclass(frozen=True)
class LabelSpec:
    """One forecast column of the backtest output."""

    name: str
    kind: str  # rw | ar_bic | avar | bic | avgnar | fixed | directed
    param_class: str = ""
    rw_n: int = 0
    orders: tuple[int, ...] = ()
    stages: tuple[int, ...] = ()

    def members(self, selected: SpecKey | None = None) -> tuple[SpecKey, ...]:
        """Model orders whose fits this label averages over."""
        if self.kind == "bic":
            return (selected,) if selected is not None else ()
        if self.kind in ("avgnar", "fixed", "directed"):
            return tuple((p, s) for p in self.orders for s in self.stages)
        return ()


def label_plan(config: BacktestConfig) -> list[LabelSpec]:
    """All labels the config produces, benchmarks first, filtered by
    config.labels when that is non-empty."""
    plan = [LabelSpec(f"rw{n}", "rw", rw_n=n) for n in config.rw_windows]
    plan.append(LabelSpec("ar_bic", "ar_bic", orders=config.candidate_orders))
    for name, orders in config.order_sets:
        plan.append(LabelSpec(f"avar_{name}", "avar", orders=orders))
    for cls in config.param_classes:
        for st in config.candidate_stages:
            plan.append(
                LabelSpec(f"{cls}_bic_s{st}", "bic", cls, orders=config.candidate_orders, stages=(st,))
            )
        if len(config.candidate_stages) > 1:
            plan.append(
                LabelSpec(
                    f"{cls}_bic_sfree",
                    "bic",
                    cls,
                    orders=config.candidate_orders,
                    stages=tuple(config.candidate_stages),
                )
            )
        for oname, orders in config.order_sets:
            for sname, stages in config.stage_sets:
                plan.append(LabelSpec(f"{cls}_avgnar_{oname}_{sname}", "avgnar", cls, orders=orders, stages=stages))
        for p, s in config.fixed_specs:
            plan.append(LabelSpec(f"{cls}_gnar_p{p}_s{s}", "fixed", cls, orders=(p,), stages=(s,)))
        if config.directed:
            plan.append(
                LabelSpec(
                    f"{cls}_directed", "directed", cls, orders=(config.directed_order,), stages=(config.directed_stage,)
                )
            )
    if config.labels:
        known = {lab.name for lab in plan}
        unknown = [name for name in config.labels if name not in known]
        if unknown:
            raise ConfigError(
                f"backtest.labels: unknown label(s) {unknown}; known: {sorted(known)}"
            )
        plan = [lab for lab in plan if lab.name in config.labels]
    return plan


def ranked_specs(plan: Iterable[LabelSpec]) -> tuple[SpecKey, ...]:
    """(p, s) pairs whose network rankings the plan requires."""
    specs: set[SpecKey] = set()
    for lab in plan:
        if lab.kind in ("bic", "avgnar", "fixed"):
            specs |= {(p, s) for p in lab.orders for s in lab.stages}
    return tuple(sorted(specs))


# --- network ranking -------------------------------------------------------


@dataclass(frozen=True)
class RankingTable:
    """One spec's rolling one-step errors at the target, per network."""

    order: int
    stage: int
    as_of: pd.Period
    errors: np.ndarray  # (n_graphs, n_val) signed errors, oldest column first

    def __post_init__(self) -> None:
        self.errors.setflags(write=False)

    @property
    def n_graphs(self) -> int:
        return self.errors.shape[0]

    @cached_property
    def rmse(self) -> np.ndarray:
        out = np.sqrt(np.mean(self.errors**2, axis=1))
        out.setflags(write=False)
        return out

    @cached_property
    def ranking(self) -> np.ndarray:
        """Graph indices from best to worst; RMSE ties go to the lower index."""
        out = np.lexsort((np.arange(self.n_graphs), self.rmse))
        out.setflags(write=False)
        return out

    def top(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.n_graphs:
            raise ValueError(f"n must lie in 1..{self.n_graphs}, got {n}")
        return self.ranking[:n]


def network_bic(rmse: np.ndarray, order: int, stage: int, n_val: int, k_fraction: float) -> float:
    """Ensemble information criterion over the best fraction of networks.

    Mean of 2*log(RMSE) over the best round(k_fraction * G) networks
    plus the coefficient penalty order*(stage+1)*log(n_val)/n_val.  A
    zero RMSE drives the criterion to -inf, so perfect rankings win any
    comparison outright.
    """
    rmse = np.asarray(rmse, dtype=float)
    if rmse.ndim != 1 or rmse.size == 0:
        raise ValueError("rmse must be a non-empty vector")
    if not 0.0 < k_fraction <= 1.0:
        raise ValueError(f"k_fraction must lie in (0, 1], got {k_fraction}")
    k = max(1, round(k_fraction * rmse.size))
    best = np.sort(rmse)[:k]
    with np.errstate(divide="ignore"):
        fit_term = float(np.mean(2.0 * np.log(best)))
    penalty = order * (stage + 1) * np.log(n_val) / n_val
    return fit_term + penalty


def select_spec(
    tables: Mapping[SpecKey, RankingTable],
    candidates: Iterable[SpecKey],
    n_val: int,
    k_fraction: float,
) -> SpecKey:
    """Model order with the smallest ensemble BIC; ties prefer smaller p, then s."""
    best_key, best_val = None, np.inf
    for p, s in sorted(candidates):
        table = tables[(p, s)]
        val = network_bic(table.rmse, p, s, n_val, k_fraction)
        if val < best_val or best_key is None:
            best_key, best_val = (p, s), val
    if best_key is None:
        raise ValueError("no candidate model orders supplied")
    return best_key


def _node_stage_series(
    values: np.ndarray, graph: Graph, node: int, max_stage: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stage-1..max_stage neighbourhood-average series of one node.

    Returns (T, max_stage) series plus a flag per stage marking empty
    neighbour sets (their columns are zero and never enter a design).
    """
    t = values.shape[0]
    out = np.zeros((t, max_stage))
    empty = np.zeros(max_stage, dtype=bool)
    if max_stage == 0:
        return out, empty
    masks = _stage_masks(graph.adjacency, node, max_stage, graph.directed)
    for r, mask in enumerate(masks):
        if mask.any():
            out[:, r] = values[:, mask].mean(axis=1)
        else:
            empty[r] = True
    return out, empty


def _one_step_prediction(
    x: np.ndarray,
    z: np.ndarray,
    z_empty: np.ndarray,
    month: int,
    n_train: int,
    order: int,
    stage: int,
) -> float:
    """Single-equation one-step forecast of x[month] from the n_train
    months before it, using own lags plus neighbourhood-average lags.

    Matches a full multi-node fit restricted to this node's equation:
    within the window both the series and its neighbourhood averages are
    demeaned (the two averaging operators commute), and the prediction
    adds the window mean back.
    """
    lo = month - n_train
    p = order
    xw = x[lo:month]
    mx = xw.mean()
    xd = xw - mx
    cols = [xd[p - j : n_train - j] for j in range(1, p + 1)]
    tail = [x[month - j] - mx for j in range(1, p + 1)]
    for r in range(1, stage + 1):
        if z_empty[r - 1]:
            continue
        zw = z[lo:month, r - 1]
        mz = zw.mean()
        zd = zw - mz
        cols.extend(zd[p - j : n_train - j] for j in range(1, p + 1))
        tail.extend(z[month - j, r - 1] - mz for j in range(1, p + 1))
    design = np.stack(cols, axis=1)
    coef, _ = _ols(design, xd[p:])
    return float(mx + coef @ np.asarray(tail))


class RankingState:
    """Rolling per-network validation errors for a set of model orders.

    Holds, for every ranked (p, s) and every network, the signed
    one-step errors at the target over the n_val months ending at the
    last refresh.  `refresh` advances to a later month by computing only
    the missing columns, so monthly updates cost one new fit per network
    and spec rather than n_val.
    """

    def __init__(
        self,
        panel: _BasePanel,
        graphs: Sequence[Graph],
        specs: Sequence[SpecKey],
        n_train: int,
        n_val: int,
    ) -> None:
        self.values = panel.values
        self.dates = panel.dates
        self.target = panel.target
        self.graphs = list(graphs)
        self.specs = tuple(sorted(specs))
        self.n_train = n_train
        self.n_val = n_val
        self.as_of: pd.Period | None = None
        self.errors = np.full((len(self.specs), len(self.graphs), n_val), np.nan)
        self._max_stage = max((s for _, s in self.specs), default=0)
        self._z: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _target_series(self, graph_idx: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._z.get(graph_idx)
        if cached is None:
            cached = _node_stage_series(self.values, self.graphs[graph_idx], self.target, self._max_stage)
            self._z[graph_idx] = cached
        return cached

    def _errors_for_graph(self, graph_idx: int, months: Sequence[int]) -> np.ndarray:
        """(n_specs, len(months)) signed one-step errors for one network."""
        x = self.values[:, self.target]
        z, z_empty = self._target_series(graph_idx)
        out = np.empty((len(self.specs), len(months)))
        for si, (p, s) in enumerate(self.specs):
            for mi, m in enumerate(months):
                pred = _one_step_prediction(x, z, z_empty, m, self.n_train, p, s)
                out[si, mi] = pred - x[m]
        return out

    def refresh(self, origin, pool: ThreadPoolExecutor | None = None) -> None:
        """Advance the error buffers so their last column is month `origin`."""
        if not self.specs:
            self.as_of = pd.Period(origin, freq="M")
            return
        origin = pd.Period(origin, freq="M")
        pos = int(self.dates.get_indexer([origin])[0])
        if pos < 0:
            raise ValueError(f"origin {origin} outside panel range")
        if self.as_of is not None and origin <= self.as_of:
            if origin < self.as_of:
                raise ValueError(f"cannot refresh backwards from {self.as_of} to {origin}")
            return
        if self.as_of is None:
            gap = self.n_val
        else:
            gap = min(pos - int(self.dates.get_indexer([self.as_of])[0]), self.n_val)
        months = list(range(pos - gap + 1, pos + 1))
        earliest = months[0] - self.n_train
        if earliest < 0:
            raise ValueError(
                f"ranking at {origin} needs {self.n_train + self.n_val} months of history; "
                f"earliest feasible refresh month is {self.dates[self.n_train + self.n_val - 1]}"
            )
        indices = range(len(self.graphs))
        if pool is None:
            blocks = [self._errors_for_graph(g, months) for g in indices]
        else:
            blocks = list(pool.map(lambda g: self._errors_for_graph(g, months), indices))
        fresh = np.stack(blocks, axis=1)  # (n_specs, n_graphs, gap)
        self.errors = np.concatenate([self.errors[:, :, gap:], fresh], axis=2)
        self.as_of = origin

    def table(self, spec: SpecKey) -> RankingTable:
        if self.as_of is None:
            raise RuntimeError("rankings requested before the first refresh")
        idx = self.specs.index(tuple(spec))
        # a view is safe: refresh replaces the buffer instead of mutating it
        return RankingTable(order=spec[0], stage=spec[1], as_of=self.as_of, errors=self.errors[idx])

    def tables(self) -> dict[SpecKey, RankingTable]:
        return {spec: self.table(spec) for spec in self.specs}

    def snapshot(self) -> dict:
        return {"as_of": None if self.as_of is None else str(self.as_of), "errors": self.errors.copy()}

    def restore(self, snap: dict) -> None:
        errors = np.asarray(snap["errors"], dtype=float)
        if errors.shape != self.errors.shape:
            raise ValueError(f"snapshot shape {errors.shape} does not match {self.errors.shape}")
        self.errors = errors
        self.as_of = None if snap["as_of"] is None else pd.Period(snap["as_of"], freq="M")


def score_networks(
    panel: _BasePanel,
    graphs: Sequence[Graph],
    order: int,
    stage: int,
    origin,
    n_train: int,
    n_val: int,
    target: int | None = None,
    workers: int = 1,
) -> RankingTable:
    """From-scratch ranking of networks by one-step RMSE at the target.

    For every network, fits the target's single equation on rolling
    n_train-month windows and records the n_val one-step errors ending
    at `origin`.  Agrees with incrementally refreshed RankingState
    buffers.
    """
    origin = pd.Period(origin, freq="M")
    pos = int(panel.dates.get_indexer([origin])[0])
    if pos < 0:
        raise ValueError(f"origin {origin} outside panel range {panel.dates[0]}..{panel.dates[-1]}")
    node = panel.target if target is None else target
    months = list(range(pos - n_val + 1, pos + 1))
    if months[0] - n_train < 0:
        raise ValueError(
            f"scoring at {origin} needs {n_train + n_val} months of history; "
            f"earliest feasible origin is {panel.dates[n_train + n_val - 1]}"
        )
    x = panel.values[:, node]

    def score_one(graph: Graph) -> np.ndarray:
        z, z_empty = _node_stage_series(panel.values, graph, node, stage)
        return np.array(
            [
                _one_step_prediction(x, z, z_empty, m, n_train, order, stage) - x[m]
                for m in months
            ]
        )

    if workers <= 1:
        rows = [score_one(g) for g in graphs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(score_one, graphs))
    return RankingTable(order=order, stage=stage, as_of=origin, errors=np.stack(rows, axis=0))


class _DirectedState:
    """Per-node rolling validation errors used to pick each node's best network.

    The directed variant gives every node the stage-1 neighbourhood of
    whichever random network forecast that node best; those in-edges are
    assembled into one directed graph for full model fits.
    """

    def __init__(
        self,
        panel: _BasePanel,
        graphs: Sequence[Graph],
        order: int,
        stage: int,
        n_train: int,
        n_val: int,
    ) -> None:
        self.values = panel.values
        self.dates = panel.dates
        self.graphs = list(graphs)
        self.order = order
        self.stage = stage
        self.n_train = n_train
        self.n_val = n_val
        self.as_of: pd.Period | None = None
        n = panel.n_series
        self.errors = np.full((len(graphs), n, n_val), np.nan)
        self._ops: dict[int, list[np.ndarray]] = {}

    def _graph_errors(self, graph_idx: int, months: Sequence[int]) -> np.ndarray:
        """(n_nodes, len(months)) one-step errors of one network at every node."""
        graph = self.graphs[graph_idx]
        ops = self._ops.get(graph_idx)
        if ops is None:
            ops = stage_mean_operators(graph, self.stage)
            self._ops[graph_idx] = ops
        n = self.values.shape[1]
        z_all = np.stack([self.values @ op.T for op in ops], axis=2)  # (T, n, stage)
        empty_all = np.stack([~op.any(axis=1) for op in ops], axis=1)  # (n, stage)
        out = np.empty((n, len(months)))
        for i in range(n):
            x = self.values[:, i]
            z = z_all[:, i, :]
            for mi, m in enumerate(months):
                pred = _one_step_prediction(x, z, empty_all[i], m, self.n_train, self.order, self.stage)
                out[i, mi] = pred - x[m]
        return out

    def refresh(self, origin, pool: ThreadPoolExecutor | None = None) -> None:
        origin = pd.Period(origin, freq="M")
        pos = int(self.dates.get_indexer([origin])[0])
        if self.as_of is not None and origin <= self.as_of:
            return
        gap = (
            self.n_val
            if self.as_of is None
            else min(pos - int(self.dates.get_indexer([self.as_of])[0]), self.n_val)
        )
        months = list(range(pos - gap + 1, pos + 1))
        indices = range(len(self.graphs))
        if pool is None:
            blocks = [self._graph_errors(g, months) for g in indices]
        else:
            blocks = list(pool.map(lambda g: self._graph_errors(g, months), indices))
        fresh = np.stack(blocks, axis=0)
        self.errors = np.concatenate([self.errors[:, :, gap:], fresh], axis=2)
        self.as_of = origin

    def directed_graph(self) -> Graph:
        """One directed graph keeping each node's best network's in-edges."""
        if self.as_of is None:
            raise RuntimeError("directed graph requested before the first refresh")
        rmse = np.sqrt(np.mean(self.errors**2, axis=2))  # (n_graphs, n_nodes)
        best = np.argmin(rmse, axis=0)  # ties go to the lower graph index
        return build_directed_graph([self.graphs[g] for g in best])

    def snapshot(self) -> dict:
        return {"as_of": None if self.as_of is None else str(self.as_of), "errors": self.errors.copy()}

    def restore(self, snap: dict) -> None:
        errors = np.asarray(snap["errors"], dtype=float)
        if errors.shape != self.errors.shape:
            raise ValueError(f"snapshot shape {errors.shape} does not match {self.errors.shape}")
        self.errors = errors
        self.as_of = None if snap["as_of"] is None else pd.Period(snap["as_of"], freq="M")


# --- averaged forecasts ----------------------------------------------------


def _member_path(win, graph: Graph, param_class: str, order: int, stage: int, horizon: int, mean_ops=None) -> np.ndarray:
    """Target forecast path of one full model fit on one network."""
    spec = GnarSpec.constant(param_class, order, stage)
    fit_result = fit_gnar(win, graph, spec)
    return forecast(fit_result, graph, win, horizon, mean_ops).target_series


def _average_paths(paths: Sequence[np.ndarray], label: str, origin) -> np.ndarray:
    """Equal-weight mean over member paths, excluding non-finite ones."""
    stack = np.stack(paths, axis=0)
    finite = np.isfinite(stack).all(axis=1)
    if not finite.all():
        log.warning(
            "%s at %s: dropping %d of %d member paths with non-finite values",
            label,
            origin,
            int((~finite).sum()),
            len(paths),
        )
    if not finite.any():
        return np.full(stack.shape[1], np.nan)
    return stack[finite].mean(axis=0)


@dataclass(frozen=True)
class RagnarForecast:
    """Averaged multi-horizon forecast over the best-ranked networks."""

    origin: pd.Period
    order: int
    stage: int
    param_class: str
    graph_ids: tuple[int, ...]
    member_paths: np.ndarray  # (top_n, horizon) target paths
    path: np.ndarray  # (horizon,) equal-weight average


def ragnar_forecast(
    panel: _BasePanel,
    graphs: Sequence[Graph],
    table: RankingTable,
    param_class: str,
    origin,
    horizon: int,
    top_n: int,
    n_train: int,
) -> RagnarForecast:
    """Fit the full model on the top-n networks and average the forecasts."""
    origin = pd.Period(origin, freq="M")
    win = window(panel, origin, n_train)
    ids = table.top(top_n)
    members = [
        _member_path(win, graphs[g], param_class, table.order, table.stage, horizon) for g in ids
    ]
    name = f"{param_class}_gnar_p{table.order}_s{table.stage}"
    return RagnarForecast(
        origin=origin,
        order=table.order,
        stage=table.stage,
        param_class=param_class,
        graph_ids=tuple(int(g) for g in ids),
        member_paths=np.stack(members, axis=0),
        path=_average_paths(members, name, origin),
    )


# --- backtest driver -------------------------------------------------------


@dataclass
class BacktestResult:
    """Forecasts, selection metadata, and bookkeeping from one run."""

    config: BacktestConfig
    origins: tuple[str, ...]
    forecasts: dict[str, pd.DataFrame]  # label -> (origin_date, horizon, forecast)
    metadata: pd.DataFrame
    refresh_count: int
    elapsed_seconds: float = 0.0

    def save(self, out_dir) -> None:
        """Per-label forecast CSVs plus metadata and a run summary.

        Floats are written with repr so identical runs produce
        byte-identical files.
        """
        out = os.fspath(out_dir)
        fdir = os.path.join(out, "forecasts")
        os.makedirs(fdir, exist_ok=True)
        for label, frame in self.forecasts.items():
            lines = ["origin_date,horizon,forecast"]
            for origin_date, horizon, value in frame.itertuples(index=False):
                lines.append(f"{origin_date},{int(horizon)},{float(value)!r}")
            with open(os.path.join(fdir, f"{label}.csv"), "w") as fh:
                fh.write("\n".join(lines) + "\n")
        lines = ["origin_date,rank,graph_id,target_stage1_members,selected_p,selected_s"]
        for row in self.metadata.itertuples(index=False):
            lines.append(
                f"{row.origin_date},{int(row.rank)},{int(row.graph_id)},"
                f"{row.target_stage1_members},{int(row.selected_p)},{int(row.selected_s)}"
            )
        with open(os.path.join(out, "metadata.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")
        summary = {
            "labels": sorted(self.forecasts),
            "origins": list(self.origins),
            "refresh_count": self.refresh_count,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
        }
        with open(os.path.join(out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _resolve_origins(panel: _BasePanel, config: BacktestConfig) -> pd.PeriodIndex:
    dates = panel.dates
    min_pos = config.n_train + config.n_val - 1
    if min_pos >= len(dates):
        raise ConfigError(
            f"backtest.n_train: panel with {len(dates)} months cannot supply "
            f"{config.n_train} training plus {config.n_val} validation months"
        )
    if config.first_origin is None:
        first = dates[min_pos]
    else:
        first = pd.Period(config.first_origin, freq="M")
        if first < dates[min_pos] or first > dates[-1]:
            raise ConfigError(
                f"backtest.first_origin: {first} outside the feasible range "
                f"{dates[min_pos]}..{dates[-1]}"
            )
    if config.last_origin is None:
        last_pos = len(dates) - 1 - config.horizons
        if last_pos < 0 or dates[last_pos] < first:
            raise ConfigError(
                f"backtest.last_origin: no origin from {first} leaves "
                f"{config.horizons} months of actuals for evaluation"
            )
        last = dates[last_pos]
    else:
        last = pd.Period(config.last_origin, freq="M")
        if last < first or last > dates[-1]:
            raise ConfigError(
                f"backtest.last_origin: {last} outside the feasible range {first}..{dates[-1]}"
            )
    return pd.period_range(first, last, freq="M")


def _check_clean_span(panel: _BasePanel, config: BacktestConfig, origins: pd.PeriodIndex) -> None:
    start = int(panel.dates.get_indexer([origins[0]])[0]) - config.n_val + 1 - config.n_train
    stop = int(panel.dates.get_indexer([origins[-1]])[0]) + 1
    block = panel.values[start:stop]
    if np.isnan(block).any():
        t, i = np.argwhere(np.isnan(block))[0]
        raise DataError(
            f"series {panel.series_ids[i]!r} is missing at {panel.dates[start + t]}, "
            f"inside the span the backtest needs ({panel.dates[start]}..{panel.dates[stop - 1]}); "
            "drop or truncate short series first"
        )


def _write_checkpoint(path: str, payload: dict) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        pickle.dump(payload, fh)
    os.replace(tmp, path)


def run_backtest(
    panel: _BasePanel,
    config: BacktestConfig,
    graphs: Sequence[Graph] | None = None,
    workers: int = 1,
    checkpoint_dir=None,
    resume: bool = False,
    progress=None,
) -> BacktestResult:
    """Monthly rolling-origin backtest of every labelled model.

    At each origin the engine (depending on cadence) refreshes the
    network rankings with the months observed since the last refresh,
    re-selects model orders by ensemble BIC, fits the labelled models on
    the trailing n_train window, and records forecasts for horizons
    1..horizons.  Worker threads only change the execution order of
    independent fits, never the output.  `progress(done, total, origin)`
    is called after each completed origin.
    """
    t0 = time.monotonic()
    config.validate()
    plan = label_plan(config)
    origins = _resolve_origins(panel, config)
    _check_clean_span(panel, config, origins)
    if graphs is None:
        graphs = generate_ensemble(panel.n_series, config.edge_prob, config.g_graphs, config.seed, workers=workers)
    else:
        graphs = list(graphs)
        if len(graphs) != config.g_graphs:
            raise ConfigError(
                f"backtest.g_graphs: {config.g_graphs} configured but {len(graphs)} graphs supplied"
            )
        for k, g in enumerate(graphs):
            if g.n_nodes != panel.n_series:
                raise ConfigError(
                    f"backtest.g_graphs: graph {k} has {g.n_nodes} nodes, panel has {panel.n_series}"
                )

    specs = ranked_specs(plan)
    state = RankingState(panel, graphs, specs, config.n_train, config.n_val)
    dstate = None
    if any(lab.kind == "directed" for lab in plan):
        dstate = _DirectedState(
            panel, graphs, config.directed_order, config.directed_stage, config.n_train, config.n_val
        )

    rows: dict[str, list[tuple[str, int, float]]] = {lab.name: [] for lab in plan}
    meta_rows: list[tuple[str, int, int, str, int, int]] = []
    refresh_count = 0
    start_at = 0

    ckpt_path = None
    if checkpoint_dir is not None:
        os.makedirs(os.fspath(checkpoint_dir), exist_ok=True)
        ckpt_path = os.path.join(os.fspath(checkpoint_dir), "checkpoint.pkl")
        fingerprint = config.fingerprint(panel)
        if resume and os.path.exists(ckpt_path):
            with open(ckpt_path, "rb") as fh:
                snap = pickle.load(fh)
            if snap["fingerprint"] != fingerprint:
                raise ConfigError(
                    "checkpoint was produced by a different configuration or panel; "
                    "remove it or point --out elsewhere"
                )
            rows = {name: list(vals) for name, vals in snap["rows"].items()}
            meta_rows = list(snap["meta_rows"])
            refresh_count = int(snap["refresh_count"])
            start_at = int(snap["next_origin"])
            state.restore(snap["ranking"])
            if dstate is not None and snap.get("directed") is not None:
                dstate.restore(snap["directed"])
            log.info("resuming at origin %d of %d", start_at + 1, len(origins))

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    interval = REFRESH_INTERVAL[config.cadence]
    ops_cache: dict[int, list[np.ndarray]] = {}
    max_fit_stage = max((s for _, s in specs), default=0)
    if dstate is not None:
        max_fit_stage = max(max_fit_stage, config.directed_stage)
    directed_graph = None
    directed_ops = None

    try:
        if start_at > 0 and dstate is not None and dstate.as_of is not None:
            directed_graph = dstate.directed_graph()
            directed_ops = stage_mean_operators(directed_graph, config.directed_stage)
        for oi in range(start_at, len(origins)):
            origin = origins[oi]
            origin_str = str(origin)
            pos = int(panel.dates.get_indexer([origin])[0])
            if oi % interval == 0:
                state.refresh(origin, pool)
                if dstate is not None:
                    dstate.refresh(origin, pool)
                    directed_graph = dstate.directed_graph()
                    directed_ops = stage_mean_operators(directed_graph, config.directed_stage)
                refresh_count += 1
            tables = state.tables()

            # class-independent order selection, shared by every class's labels
            selections: dict[tuple[int, ...], SpecKey] = {}
            for lab in plan:
                if lab.kind == "bic" and lab.stages not in selections:
                    cands = [(p, s) for p in lab.orders for s in lab.stages]
                    selections[lab.stages] = select_spec(tables, cands, config.n_val, config.k_fraction)

            # benchmark forecasts from the same trailing window
            series = panel.values[pos - config.n_train + 1 : pos + 1, panel.target]
            for lab in plan:
                if lab.kind == "rw":
                    flat = rw_forecast(series, lab.rw_n)
                    path = np.full(config.horizons, flat)
                elif lab.kind == "ar_bic":
                    p_star = ar_bic_select(series, max(lab.orders))
                    path = ar_forecast(ar_fit(series, p_star), series, config.horizons)
                elif lab.kind == "avar":
                    path = avar_forecast(series, lab.orders, config.horizons)
                else:
                    continue
                rows[lab.name].extend(
                    (origin_str, h, float(path[h - 1])) for h in range(1, config.horizons + 1)
                )

            # unique full fits needed by the network labels at this origin
            win = window(panel, origin, config.n_train) if (specs or dstate is not None) else None
            needed: list[tuple[str, int, int, int]] = []
            seen = set()
            for lab in plan:
                if lab.kind not in ("bic", "avgnar", "fixed"):
                    continue
                members = lab.members(selections.get(lab.stages) if lab.kind == "bic" else None)
                for p, s in members:
                    for g in tables[(p, s)].top(config.top_n):
                        key = (lab.param_class, int(g), p, s)
                        if key not in seen:
                            seen.add(key)
                            needed.append(key)
            for gid in {int(g) for _, g, _, _ in needed}:
                if gid not in ops_cache:
                    ops_cache[gid] = stage_mean_operators(graphs[gid], max_fit_stage)

            def fit_one(key: tuple[str, int, int, int]) -> np.ndarray:
                cls, gid, p, s = key
                ops = ops_cache[gid][:s] if s else []
                return _member_path(win, graphs[gid], cls, p, s, config.horizons, ops)

            if pool is None or len(needed) < 2:
                paths = [fit_one(key) for key in needed]
            else:
                paths = list(pool.map(fit_one, needed))
            memo = dict(zip(needed, paths))

            for lab in plan:
                if lab.kind in ("bic", "avgnar", "fixed"):
                    members = lab.members(selections.get(lab.stages) if lab.kind == "bic" else None)
                    member_paths = [
                        memo[(lab.param_class, int(g), p, s)]
                        for p, s in members
                        for g in tables[(p, s)].top(config.top_n)
                    ]
                    path = _average_paths(member_paths, lab.name, origin_str)
                elif lab.kind == "directed":
                    path = _member_path(
                        win,
                        directed_graph,
                        lab.param_class,
                        config.directed_order,
                        config.directed_stage,
                        config.horizons,
                        directed_ops,
                    )
                else:
                    continue
                rows[lab.name].extend(
                    (origin_str, h, float(path[h - 1])) for h in range(1, config.horizons + 1)
                )

            # selection metadata from the best-BIC spec over every ranked order
            if specs:
                meta_spec = select_spec(tables, specs, config.n_val, config.k_fraction)
                top_ids = tables[meta_spec].top(config.top_n)
                for rank, gid in enumerate(top_ids, start=1):
                    graph = graphs[int(gid)]
                    mask = _stage_masks(graph.adjacency, panel.target, 1, graph.directed)[0]
                    members_str = "|".join(panel.series_ids[i] for i in np.flatnonzero(mask))
                    meta_rows.append(
                        (origin_str, rank, int(gid), members_str, meta_spec[0], meta_spec[1])
                    )

            if ckpt_path is not None:
                _write_checkpoint(
                    ckpt_path,
                    {
                        "fingerprint": fingerprint,
                        "next_origin": oi + 1,
                        "rows": rows,
                        "meta_rows": meta_rows,
                        "refresh_count": refresh_count,
                        "ranking": state.snapshot(),
                        "directed": None if dstate is None else dstate.snapshot(),
                    },
                )
            if progress is not None:
                progress(oi + 1, len(origins), origin_str)
    finally:
        if pool is not None:
            pool.shutdown()

    forecasts = {
        name: pd.DataFrame(vals, columns=["origin_date", "horizon", "forecast"])
        for name, vals in rows.items()
    }
    metadata = pd.DataFrame(
        meta_rows,
        columns=["origin_date", "rank", "graph_id", "target_stage1_members", "selected_p", "selected_s"],
    )
    return BacktestResult(
        config=config,
        origins=tuple(str(o) for o in origins),
        forecasts=forecasts,
        metadata=metadata,
        refresh_count=refresh_count,
        elapsed_seconds=time.monotonic() - t0,
    )
