"""Forecast accuracy tables, external comparisons, and network diagnostics.

Scores are computed on (origin, horizon) pairs, so every comparison —
across models, against an external forecaster, or across replication
seeds — is restricted to identical forecast targets.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, EmptyOverlapError
from .panel import _BasePanel

FORECAST_COLUMNS = ("origin_date", "horizon", "forecast")


def rmse(errors: np.ndarray) -> float:
    """Root mean squared error of a vector of forecast errors."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise ValueError("rmse needs at least one error")
    return float(np.sqrt(np.mean(errors**2)))


def mape(pairs: Iterable[tuple[float, float]]) -> float:
    """Mean absolute percentage error with a damped denominator.

    100 * mean(|actual - forecast| / (|actual| + 1)); the +1 keeps
    months where the actual rate crosses zero from dominating the mean.
    """
    actual, predicted = [], []
    for a, f in pairs:
        actual.append(float(a))
        predicted.append(float(f))
    if not actual:
        raise ValueError("mape needs at least one (actual, forecast) pair")
    a = np.array(actual)
    f = np.array(predicted)
    return float(100.0 * np.mean(np.abs(a - f) / (np.abs(a) + 1.0)))


def load_forecast_csv(path) -> pd.DataFrame:
    """Read an (origin_date, horizon, forecast) CSV, validating columns."""
    frame = pd.read_csv(path, dtype={"origin_date": str})
    missing = [c for c in FORECAST_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"forecast file {path} is missing column(s) {missing}")
    frame["horizon"] = frame["horizon"].astype(int)
    frame["forecast"] = frame["forecast"].astype(float)
    return frame[list(FORECAST_COLUMNS)]


def read_forecasts(out_dir) -> dict[str, pd.DataFrame]:
    """All per-label forecast CSVs under <out_dir>/forecasts."""
    fdir = os.path.join(os.fspath(out_dir), "forecasts")
    if not os.path.isdir(fdir):
        raise FileNotFoundError(f"no forecasts directory under {out_dir}")
    out = {}
    for name in sorted(os.listdir(fdir)):
        if name.endswith(".csv"):
            out[name[:-4]] = load_forecast_csv(os.path.join(fdir, name))
    if not out:
        raise FileNotFoundError(f"no forecast CSVs under {fdir}")
    return out


def _target_actuals(panel: _BasePanel) -> pd.Series:
    return pd.Series(panel.values[:, panel.target], index=panel.dates.astype(str))


def _attach_actuals(frame: pd.DataFrame, actuals: pd.Series) -> pd.DataFrame:
    """Rows of `frame` whose forecast month has an observed, finite actual."""
    origins = pd.PeriodIndex(frame["origin_date"], freq="M")
    target_month = (origins + frame["horizon"].to_numpy()).astype(str)
    matched = frame.assign(target_month=target_month)
    matched["actual"] = actuals.reindex(target_month).to_numpy()
    matched = matched[np.isfinite(matched["actual"]) & np.isfinite(matched["forecast"])]
    return matched


def horizon_table(
    forecasts: Mapping[str, pd.DataFrame],
    panel: _BasePanel,
    benchmark: str | None = None,
) -> pd.DataFrame:
    """Per-label, per-horizon accuracy at the target series.

    Columns: n scored pairs, rmse, mape and — when a benchmark label is
    given — rmse_rel, the RMSE ratio to the benchmark computed on the
    (origin, horizon) pairs both labels scored.  Horizons a label never
    scored are absent from the table.
    """
    if benchmark is not None and benchmark not in forecasts:
        raise ValueError(f"benchmark label {benchmark!r} not among forecasts")
    actuals = _target_actuals(panel)
    matched = {name: _attach_actuals(frame, actuals) for name, frame in forecasts.items()}
    rows = []
    for name in sorted(matched):
        frame = matched[name]
        for h, chunk in frame.groupby("horizon"):
            err = chunk["forecast"].to_numpy() - chunk["actual"].to_numpy()
            row = {
                "label": name,
                "horizon": int(h),
                "n": len(chunk),
                "rmse": rmse(err),
                "mape": mape(zip(chunk["actual"], chunk["forecast"])),
            }
            if benchmark is not None:
                bench = matched[benchmark]
                joined = chunk.merge(
                    bench[bench["horizon"] == h],
                    on=("origin_date", "horizon"),
                    suffixes=("", "_bench"),
                )
                if len(joined):
                    own = rmse(joined["forecast"].to_numpy() - joined["actual"].to_numpy())
                    ref = rmse(joined["forecast_bench"].to_numpy() - joined["actual"].to_numpy())
                    row["rmse_rel"] = own / ref if ref > 0 else np.inf
                    row["n_common"] = len(joined)
            rows.append(row)
    if not rows:
        raise EmptyOverlapError("no forecast lands on an observed month of the panel")
    return pd.DataFrame(rows).sort_values(["label", "horizon"]).reset_index(drop=True)


def compare_external(
    forecasts: pd.DataFrame,
    external: pd.DataFrame,
    panel: _BasePanel,
) -> pd.DataFrame:
    """Head-to-head accuracy against an outside forecaster.

    Both inputs are (origin_date, horizon, forecast) frames; scoring is
    restricted to the (origin, horizon) pairs present in both and
    observed in the panel.  Raises EmptyOverlapError when nothing
    matches.
    """
    for name, frame in (("forecasts", forecasts), ("external", external)):
        missing = [c for c in FORECAST_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"{name} frame is missing column(s) {missing}")
    actuals = _target_actuals(panel)
    own = _attach_actuals(forecasts, actuals)
    other = _attach_actuals(external, actuals)
    joined = own.merge(
        other[["origin_date", "horizon", "forecast"]],
        on=("origin_date", "horizon"),
        suffixes=("", "_external"),
    )
    if joined.empty:
        raise EmptyOverlapError(
            "no (origin, horizon) pair is shared by both forecast sets and observed in the panel"
        )
    rows = []
    for h, chunk in joined.groupby("horizon"):
        own_err = chunk["forecast"].to_numpy() - chunk["actual"].to_numpy()
        ext_err = chunk["forecast_external"].to_numpy() - chunk["actual"].to_numpy()
        ref = rmse(ext_err)
        rows.append(
            {
                "horizon": int(h),
                "n": len(chunk),
                "rmse": rmse(own_err),
                "rmse_external": ref,
                "rmse_rel": rmse(own_err) / ref if ref > 0 else np.inf,
            }
        )
    return pd.DataFrame(rows).sort_values("horizon").reset_index(drop=True)


def component_frequency(metadata: pd.DataFrame, trailing: int = 6) -> pd.DataFrame:
    """How often each series sits in the target's stage-1 set of a top network.

    For every origin, the share (in %) of top-ranked networks whose
    stage-1 neighbourhood of the target contains the series, plus a
    trailing moving average over the given number of months.  Output is
    long form: (origin_date, series_id, pct, pct_ma).
    """
    if trailing < 1:
        raise ValueError(f"trailing must be >= 1, got {trailing}")
    needed = {"origin_date", "rank", "target_stage1_members"}
    missing = needed - set(metadata.columns)
    if missing:
        raise DataError(f"metadata frame is missing column(s) {sorted(missing)}")
    origins = sorted(metadata["origin_date"].unique())
    series = sorted(
        {
            sid
            for cell in metadata["target_stage1_members"].fillna("")
            for sid in str(cell).split("|")
            if sid
        }
    )
    counts = pd.DataFrame(0.0, index=origins, columns=series)
    sizes = metadata.groupby("origin_date").size()
    for row in metadata.itertuples(index=False):
        cell = row.target_stage1_members
        if isinstance(cell, str) and cell:
            for sid in cell.split("|"):
                counts.loc[row.origin_date, sid] += 1.0
    pct = counts.div(sizes, axis=0) * 100.0
    ma = pct.rolling(trailing, min_periods=1).mean()
    out = pct.stack().rename("pct").to_frame()
    out["pct_ma"] = ma.stack()
    out = out.reset_index()
    out.columns = ["origin_date", "series_id", "pct", "pct_ma"]
    return out


# --- report container ------------------------------------------------------


@dataclass
class EvalReport:
    """Accuracy table plus optional diagnostics, exportable as CSV + JSON."""

    table: pd.DataFrame
    benchmark: str | None = None
    components: pd.DataFrame | None = None

    def save(self, out_dir) -> None:
        out = os.fspath(out_dir)
        os.makedirs(out, exist_ok=True)
        self.table.to_csv(os.path.join(out, "accuracy.csv"), index=False)
        payload = {
            "benchmark": self.benchmark,
            "rows": self.table.to_dict(orient="records"),
        }
        with open(os.path.join(out, "accuracy.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        if self.components is not None:
            self.components.to_csv(os.path.join(out, "components.csv"), index=False)


def evaluate_run(
    out_dir,
    panel: _BasePanel,
    benchmark: str | None = None,
    metadata: pd.DataFrame | None = None,
) -> EvalReport:
    """Score a saved backtest directory against a panel of actuals."""
    forecasts = read_forecasts(out_dir)
    if benchmark is not None and benchmark not in forecasts:
        raise ValueError(f"benchmark label {benchmark!r} has no forecast CSV under {out_dir}")
    table = horizon_table(forecasts, panel, benchmark)
    components = None
    meta_path = os.path.join(os.fspath(out_dir), "metadata.csv")
    if metadata is None and os.path.exists(meta_path):
        metadata = pd.read_csv(meta_path, dtype={"origin_date": str, "target_stage1_members": str})
    if metadata is not None and len(metadata):
        components = component_frequency(metadata)
    return EvalReport(table=table, benchmark=benchmark, components=components)


def aggregate_reports(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Mean and spread of accuracy across replication seeds.

    Labels/horizons are matched across reports; rmse and mape are
    averaged with their standard deviation over seeds (ddof=1, zero for
    a single report).
    """
    if not reports:
        raise ValueError("need at least one report to aggregate")
    frames = []
    for k, rep in enumerate(reports):
        frame = rep.table.copy()
        frame["seed_index"] = k
        frames.append(frame)
    stacked = pd.concat(frames, ignore_index=True)
    grouped = stacked.groupby(["label", "horizon"])

    def sd(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    out = grouped.agg(
        n_seeds=("seed_index", "nunique"),
        n=("n", "sum"),
        rmse_mean=("rmse", "mean"),
        rmse_sd=("rmse", sd),
        mape_mean=("mape", "mean"),
        mape_sd=("mape", sd),
    ).reset_index()
    if "rmse_rel" in stacked.columns and stacked["rmse_rel"].notna().any():
        rel = grouped.agg(rmse_rel_mean=("rmse_rel", "mean"), rmse_rel_sd=("rmse_rel", sd))
        out = out.merge(rel.reset_index(), on=["label", "horizon"], how="left")
    return out
