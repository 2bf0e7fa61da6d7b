"""Price-index panel ingestion and transforms.

Input is a long-format CSV of (series id, date, value) rows holding
monthly price indices.  Series observed at an annual (or any coarser
uniform) cadence are excluded up front; gaps inside a retained monthly
series are a hard error rather than something to impute.  Year-on-year
inflation rates are 100 * (P_t / P_{t-12} - 1), and model fitting works
on fixed-length trailing windows demeaned column by column with the
means kept for re-addition at forecast time.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

__all__ = [
    "PanelSchema",
    "PricePanel",
    "RatePanel",
    "PanelWindow",
    "load_panel",
    "yoy_transform",
    "window",
    "write_panel_csv",
    "drop_short_series",
    "panel_fingerprint",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for the long-format CSV."""

    series_col: str = "series_id"
    date_col: str = "date"
    value_col: str = "value"
    date_format: str = "%Y-%m"
    target: str = "CPI"
    include: tuple[str, ...] = ()  # empty means keep every retained series


@dataclass(frozen=True)
class _BasePanel:
    series_ids: tuple[str, ...]
    dates: pd.PeriodIndex  # monthly, strictly increasing, contiguous
    values: np.ndarray  # (n_months, n_series) float64, NaN outside a series' span
    target: int  # column index of the headline series

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != (len(self.dates), len(self.series_ids)):
            raise ValueError("values shape does not match dates x series")
        if not 0 <= self.target < len(self.series_ids):
            raise ValueError("target column out of range")
        if len(self.dates) > 1 and not (np.diff(self.dates.asi8) == 1).all():
            raise ValueError("dates must be contiguous months")

    @property
    def n_series(self) -> int:
        return len(self.series_ids)

    @property
    def target_id(self) -> str:
        return self.series_ids[self.target]

    def column(self, series_id: str) -> int:
        try:
            return self.series_ids.index(series_id)
        except ValueError:
            raise KeyError(f"series {series_id!r} not in panel") from None


@dataclass(frozen=True)
class PricePanel(_BasePanel):
    """Monthly price-index levels."""


@dataclass(frozen=True)
class RatePanel(_BasePanel):
    """Year-on-year percentage change of a PricePanel."""


@dataclass(frozen=True)
class PanelWindow:
    """A trailing block of a panel, optionally demeaned column-wise."""

    series_ids: tuple[str, ...]
    target: int
    dates: pd.PeriodIndex
    values: np.ndarray  # (length, n_series)
    means: np.ndarray  # (n_series,) column means of the raw block
    demeaned: bool

    def __post_init__(self) -> None:
        self.values.setflags(write=False)
        self.means.setflags(write=False)

    @property
    def end_date(self) -> pd.Period:
        return self.dates[-1]

    def __len__(self) -> int:
        return self.values.shape[0]


def _classify_series(obs: pd.PeriodIndex) -> str:
    """monthly / coarser (uniform gap > 1 month) / single / ragged."""
    if len(obs) == 1:
        return "single"
    gaps = np.diff(obs.asi8)
    if (gaps == 1).all():
        return "monthly"
    if (gaps == gaps[0]).all() and gaps[0] > 1:
        return "coarser"
    return "ragged"


def load_panel(source, schema: PanelSchema = PanelSchema()) -> PricePanel:
    """Load a long-format CSV (path or DataFrame) into a PricePanel.

    Series observed at a uniform cadence coarser than monthly (annual
    publications, for instance) are dropped with a log note, as are
    single-observation series.  Irregular gaps inside a series raise
    DataError: missing months are never imputed.  The schema's target
    series must survive the filters.
    """
    if isinstance(source, pd.DataFrame):
        df = source.copy()
    else:
        df = pd.read_csv(source)
    for col in (schema.series_col, schema.date_col, schema.value_col):
        if col not in df.columns:
            raise DataError(f"input is missing column {col!r}")
    try:
        stamps = pd.to_datetime(df[schema.date_col], format=schema.date_format)
    except ValueError as exc:
        raise DataError(f"unparseable date in column {schema.date_col!r}: {exc}") from exc
    df = pd.DataFrame(
        {
            "series": df[schema.series_col].astype(str),
            "period": pd.PeriodIndex(stamps, freq="M"),
            "value": pd.to_numeric(df[schema.value_col], errors="coerce"),
        }
    )
    if df["value"].isna().any():
        bad = df.loc[df["value"].isna()].iloc[0]
        raise DataError(f"non-numeric value for series {bad['series']!r} at {bad['period']}")

    dup = df.duplicated(subset=["series", "period"])
    if dup.any():
        bad = df.loc[dup].iloc[0]
        raise DataError(f"duplicate observation for series {bad['series']!r} at {bad['period']}")

    if schema.include:
        allowed = set(schema.include)
        df = df[df["series"].isin(allowed)]

    kept: list[str] = []
    for sid, group in df.groupby("series", sort=True):
        obs = pd.PeriodIndex(group["period"]).sort_values()
        kind = _classify_series(obs)
        if kind == "monthly":
            kept.append(str(sid))
        elif kind in ("coarser", "single"):
            log.info("excluding series %s: %s cadence, not monthly", sid, kind)
        else:
            raise DataError(f"series {sid!r} has irregular gaps inside its span")
    if not kept:
        raise DataError("no monthly series retained from input")
    if schema.target not in kept:
        raise ConfigError(f"target series {schema.target!r} not present after filtering")

    sub = df[df["series"].isin(kept)]
    wide = sub.pivot(index="period", columns="series", values="value")
    full_range = pd.period_range(wide.index.min(), wide.index.max(), freq="M")
    wide = wide.reindex(full_range).loc[:, sorted(kept)]
    ids = tuple(str(c) for c in wide.columns)
    return PricePanel(
        series_ids=ids,
        dates=pd.PeriodIndex(wide.index, freq="M"),
        values=wide.to_numpy(dtype=float),
        target=ids.index(schema.target),
    )


def yoy_transform(panel: PricePanel) -> RatePanel:
    """Year-on-year percentage growth: 100 * (P_t / P_{t-12} - 1).

    The first twelve months are consumed by the comparison, so the
    output dates start twelve months after the input's.  A zero price
    level twelve months back is a data error.
    """
    if len(panel.dates) <= 12:
        raise DataError("need more than 12 months of prices for a year-on-year transform")
    cur = panel.values[12:]
    base = panel.values[:-12]
    both = ~np.isnan(cur) & ~np.isnan(base)
    if (both & (base == 0.0)).any():
        t, i = np.argwhere(both & (base == 0.0))[0]
        raise DataError(
            f"zero price level for series {panel.series_ids[i]!r} at {panel.dates[t]}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = 100.0 * (cur / base - 1.0)
    rates[~both] = np.nan
    return RatePanel(
        series_ids=panel.series_ids,
        dates=panel.dates[12:],
        values=rates,
        target=panel.target,
    )


def window(panel: _BasePanel, end_date, length: int, demean: bool = True) -> PanelWindow:
    """Trailing block of `length` months ending at `end_date` inclusive.

    Demeaning subtracts each column's mean over the block; the means are
    stored on the window so forecasts can be shifted back to the
    original level.  Missing values inside the block are a data error.
    """
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    end = pd.Period(end_date, freq="M")
    locs = panel.dates.get_indexer([end])
    if locs[0] < 0:
        raise ValueError(f"end_date {end} outside panel range {panel.dates[0]}..{panel.dates[-1]}")
    stop = int(locs[0]) + 1
    if stop < length:
        raise ValueError(
            f"not enough history for a {length}-month window ending {end}; "
            f"earliest feasible end_date is {panel.dates[length - 1]}"
        )
    block = panel.values[stop - length : stop].copy()
    if np.isnan(block).any():
        t, i = np.argwhere(np.isnan(block))[0]
        raise DataError(
            f"missing value for series {panel.series_ids[i]!r} at "
            f"{panel.dates[stop - length + t]} inside requested window"
        )
    means = block.mean(axis=0)
    if demean:
        block = block - means
    return PanelWindow(
        series_ids=panel.series_ids,
        target=panel.target,
        dates=panel.dates[stop - length : stop],
        values=block,
        means=means,
        demeaned=demean,
    )


def write_panel_csv(panel: _BasePanel, path, schema: PanelSchema = PanelSchema()) -> None:
    """Export back to the long CSV shape (one row per observation)."""
    rows = []
    for j, sid in enumerate(panel.series_ids):
        col = panel.values[:, j]
        ok = ~np.isnan(col)
        for t in np.nonzero(ok)[0]:
            rows.append((sid, panel.dates[t].strftime(schema.date_format), repr(float(col[t]))))
    df = pd.DataFrame(rows, columns=[schema.series_col, schema.date_col, schema.value_col])
    df.to_csv(path, index=False)


def drop_short_series(panel: _BasePanel, earliest, latest=None):
    """Drop series whose span misses [earliest, latest]; keeps the rest.

    Used before a backtest so that every retained node has data for the
    whole exercise.  Dropping the target is a configuration error.
    """
    earliest = pd.Period(earliest, freq="M")
    latest = panel.dates[-1] if latest is None else pd.Period(latest, freq="M")
    keep: list[int] = []
    dropped: list[str] = []
    for j, sid in enumerate(panel.series_ids):
        ok = ~np.isnan(panel.values[:, j])
        covered = ok.any() and panel.dates[ok][0] <= earliest and panel.dates[ok][-1] >= latest
        if covered:
            keep.append(j)
        else:
            dropped.append(sid)
    if dropped:
        log.info("dropping %d series not covering %s..%s: %s", len(dropped), earliest, latest, dropped)
    if panel.target not in keep:
        raise ConfigError(
            f"target series {panel.target_id!r} does not cover {earliest}..{latest}"
        )
    ids = tuple(panel.series_ids[j] for j in keep)
    start = panel.dates.get_loc(earliest)
    stop = panel.dates.get_loc(latest) + 1
    cls = type(panel)
    return cls(
        series_ids=ids,
        dates=panel.dates[start:stop],
        values=panel.values[start:stop, keep],
        target=ids.index(panel.target_id),
    )


def panel_fingerprint(panel: _BasePanel) -> str:
    """Stable content hash used in run manifests."""
    h = hashlib.sha256()
    h.update(",".join(panel.series_ids).encode())
    h.update(str(panel.dates[0]).encode())
    h.update(str(panel.dates[-1]).encode())
    h.update(np.ascontiguousarray(panel.values).tobytes())
    h.update(str(panel.target).encode())
    return h.hexdigest()
