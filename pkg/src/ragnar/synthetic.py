"""Synthetic panels: a process simulator and the bundled test fixture.

The simulator iterates the network autoregression exactly as the
forecaster does (own lags plus staged neighbourhood averages), which
makes it the natural source of recovery oracles: fitting a noiseless
simulation must return the generating coefficients.

The fixture is a small economy of eight monthly price indices whose
inflation rates follow a known network process around a CPI-like
headline node, plus one annual-only series and one late-starting series
to exercise the ingestion filters.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .graphs import Graph, stage_mean_operators

__all__ = ["simulate_gnar", "random_stable_coeffs", "make_fixture_frame", "FIXTURE_TARGET"]

FIXTURE_TARGET = "CPI"


def simulate_gnar(
    graph: Graph,
    alpha: np.ndarray,
    beta: np.ndarray,
    n_obs: int,
    noise_sd: float,
    seed: int,
    init: np.ndarray | None = None,
    burn_in: int = 0,
) -> np.ndarray:
    """Simulate (n_obs, n_nodes) observations of the network process.

    alpha has shape (n_nodes, p); beta has shape (n_nodes, p, s_max)
    where entry (i, j-1, r-1) multiplies the stage-r neighbourhood
    average of node i at lag j.  Nodes with an empty stage-r set simply
    receive no such term.  noise_sd = 0 gives the deterministic map.
    """
    n_nodes, p = alpha.shape
    s_max = beta.shape[2] if beta.size else 0
    ops = stage_mean_operators(graph, s_max)
    rng = np.random.default_rng(seed)
    if init is None:
        init = rng.normal(size=(p, n_nodes))
    hist = [np.asarray(row, dtype=float) for row in init]
    out = []
    for t in range(burn_in + n_obs):
        x = np.zeros(n_nodes)
        for j in range(1, p + 1):
            past = hist[-j]
            x += alpha[:, j - 1] * past
            for r in range(1, s_max + 1):
                x += beta[:, j - 1, r - 1] * (ops[r - 1] @ past)
        if noise_sd:
            x += rng.normal(scale=noise_sd, size=n_nodes)
        hist.append(x)
        if t >= burn_in:
            out.append(x)
    return np.array(out)


def random_stable_coeffs(
    rng: np.random.Generator,
    n_nodes: int,
    p: int,
    s: tuple[int, ...],
    param_class: str,
    scale: float = 0.9,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw coefficients with per-node absolute row sums below `scale`.

    Because every neighbourhood-average operator has row sums at most
    one, keeping sum_j(|alpha_ij| + sum_r |beta_ijr|) < 1 guarantees a
    stable process.  Sharing across nodes follows param_class.
    """
    s_max = max(s) if s else 0
    if param_class == "global_alpha":
        alpha = np.tile(rng.uniform(-1, 1, size=p), (n_nodes, 1))
        beta = np.tile(rng.uniform(-1, 1, size=(p, s_max)), (n_nodes, 1, 1))
    elif param_class == "standard":
        alpha = rng.uniform(-1, 1, size=(n_nodes, p))
        beta = np.tile(rng.uniform(-1, 1, size=(p, s_max)), (n_nodes, 1, 1))
    elif param_class == "local_alpha_beta":
        alpha = rng.uniform(-1, 1, size=(n_nodes, p))
        beta = rng.uniform(-1, 1, size=(n_nodes, p, s_max))
    else:
        raise ValueError(f"unknown param_class {param_class!r}")
    beta = beta.reshape(n_nodes, p, s_max)
    for j in range(p):  # zero out stages beyond s_j
        beta[:, j, s[j] :] = 0.0
    load = np.abs(alpha).sum(axis=1) + np.abs(beta).sum(axis=(1, 2))
    factor = scale / max(load.max(), 1e-12)
    return alpha * factor, beta * factor


# --- bundled fixture -----------------------------------------------------

_SIM_IDS = ("CPI", "FOOD", "ENER", "TRAN", "GOOD", "SERV", "HOUS", "COMM")
_SIM_EDGES = [
    (0, 1),  # CPI - FOOD
    (0, 2),  # CPI - ENER
    (0, 3),  # CPI - TRAN
    (1, 2),  # FOOD - ENER
    (1, 4),  # FOOD - GOOD
    (3, 6),  # TRAN - HOUS
    (4, 5),  # GOOD - SERV
    (5, 7),  # SERV - COMM
    (2, 6),  # ENER - HOUS
]
_SIM_MEANS = np.array([2.0, 3.5, 4.0, 2.5, 1.0, 3.0, 1.5, 2.0])


def _fixture_rates(n_obs: int, seed: int) -> np.ndarray:
    graph = Graph(n_nodes=8, edge_index=np.array(sorted(_SIM_EDGES), dtype=np.int32))
    rng = np.random.default_rng(seed)
    p, s_max = 2, 1
    alpha = np.column_stack([rng.uniform(0.35, 0.5, 8), rng.uniform(0.05, 0.15, 8)])
    beta = np.zeros((8, p, s_max))
    beta[:, 0, 0] = rng.uniform(0.2, 0.3, 8)
    beta[0, 0, 0] = 0.45  # headline node leans hard on its neighbourhood
    beta[:, 1, 0] = rng.uniform(0.0, 0.05, 8)
    devs = simulate_gnar(graph, alpha, beta, n_obs, noise_sd=0.55, seed=seed, burn_in=60)
    return devs + _SIM_MEANS


def make_fixture_frame(
    start: str = "1995-01",
    n_price_months: int = 192,
    seed: int = 20,
) -> pd.DataFrame:
    """Long-format price-index frame for tests and examples.

    Eight monthly series (headline CPI plus seven components) whose
    year-on-year rates follow a known network process, one January-only
    series VINTAGE, and one late-starting monthly series LATE.
    """
    dates = pd.period_range(start, periods=n_price_months, freq="M")
    rates = _fixture_rates(n_price_months - 12, seed)
    prices = np.empty((n_price_months, 8))
    prices[:12] = 100.0 * np.power(1.002, np.arange(12))[:, None]
    for k in range(n_price_months - 12):
        prices[12 + k] = prices[k] * (1.0 + rates[k] / 100.0)

    rows = []
    for i, sid in enumerate(_SIM_IDS):
        for t, d in enumerate(dates):
            rows.append((sid, d.strftime("%Y-%m"), f"{prices[t, i]:.6f}"))
    for t, d in enumerate(dates):
        if d.month == 1:
            rows.append(("VINTAGE", d.strftime("%Y-%m"), f"{50.0 + 0.8 * t:.6f}"))
    late_start = dates[72]  # six years in
    for k, d in enumerate(pd.period_range(late_start, dates[-1], freq="M")):
        rows.append(("LATE", d.strftime("%Y-%m"), f"{100.0 * 1.003 ** k + 0.4 * np.sin(k / 5):.6f}"))
    return pd.DataFrame(rows, columns=["series_id", "date", "value"])
