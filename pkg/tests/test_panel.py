"""Panel ingestion, year-on-year transform, and rolling windows."""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragnar.errors import ConfigError, DataError
from ragnar.panel import (
    PanelSchema,
    load_panel,
    drop_short_series,
    panel_fingerprint,
    window,
    write_panel_csv,
    yoy_transform,
)
from ragnar.synthetic import make_fixture_frame


def frame_of(records):
    return pd.DataFrame(records, columns=["series_id", "date", "value"])


def tiny_frame(n_months=30, ids=("A", "CPI")):
    dates = pd.period_range("2000-01", periods=n_months, freq="M")
    recs = []
    for k, sid in enumerate(ids):
        for t, d in enumerate(dates):
            recs.append((sid, d.strftime("%Y-%m"), 100.0 + t + 10.0 * k))
    return frame_of(recs)


class TestLoadPanel:
    def test_basic_shape_and_sorted_ids(self):
        panel = load_panel(tiny_frame(ids=("B", "CPI", "A")))
        assert panel.series_ids == ("A", "B", "CPI")
        assert panel.target_id == "CPI"
        assert panel.values.shape == (30, 3)

    def test_annual_series_excluded(self):
        df = tiny_frame()
        extra = [("YEARLY", f"{y}-01", 50.0 + y - 2000) for y in range(2000, 2003)]
        panel = load_panel(pd.concat([df, frame_of(extra)]))
        assert "YEARLY" not in panel.series_ids

    def test_duplicate_rows_named(self):
        df = pd.concat([tiny_frame(), frame_of([("A", "2000-03", 1.0)])])
        with pytest.raises(DataError, match="'A'.*2000-03"):
            load_panel(df)

    def test_internal_gap_is_hard_error(self):
        df = tiny_frame()
        df = df[~((df.series_id == "A") & (df.date == "2000-05"))]
        with pytest.raises(DataError, match="'A'"):
            load_panel(df)

    def test_missing_target_is_config_error(self):
        with pytest.raises(ConfigError, match="'CPI'"):
            load_panel(tiny_frame(ids=("A", "B")))

    def test_missing_column(self):
        df = tiny_frame().rename(columns={"value": "level"})
        with pytest.raises(DataError, match="'value'"):
            load_panel(df)

    def test_schema_remaps_columns(self):
        df = tiny_frame().rename(
            columns={"series_id": "code", "date": "month", "value": "level"}
        )
        schema = PanelSchema(series_col="code", date_col="month", value_col="level")
        assert load_panel(df, schema).n_series == 2

    def test_include_filter(self):
        schema = PanelSchema(include=("CPI",))
        panel = load_panel(tiny_frame(ids=("A", "CPI")), schema)
        assert panel.series_ids == ("CPI",)

    def test_non_numeric_value(self):
        df = tiny_frame().astype({"value": object})
        df.loc[3, "value"] = "n/a"
        with pytest.raises(DataError, match="non-numeric"):
            load_panel(df)

    def test_late_series_padded_with_nan(self):
        df = tiny_frame()
        late = [("L", d.strftime("%Y-%m"), 7.0) for d in pd.period_range("2000-07", "2002-06", freq="M")]
        panel = load_panel(pd.concat([df, frame_of(late)]))
        j = panel.column("L")
        assert np.isnan(panel.values[0, j])
        assert panel.values[6, j] == 7.0


class TestYoy:
    def test_exact_formula(self):
        panel = load_panel(tiny_frame(n_months=26))
        rates = yoy_transform(panel)
        assert rates.dates[0] == panel.dates[12]
        j = panel.column("CPI")
        want = 100.0 * (panel.values[12, j] / panel.values[0, j] - 1.0)
        assert rates.values[0, rates.column("CPI")] == pytest.approx(want, abs=1e-12)

    def test_constant_prices_zero_inflation(self):
        recs = [("CPI", d.strftime("%Y-%m"), 100.0) for d in pd.period_range("2000-01", periods=30, freq="M")]
        rates = yoy_transform(load_panel(frame_of(recs)))
        assert np.allclose(rates.values, 0.0)

    def test_doubling_means_hundred_percent(self):
        vals = [100.0] * 12 + [200.0] * 12 + [400.0] * 12
        recs = [
            ("CPI", d.strftime("%Y-%m"), v)
            for d, v in zip(pd.period_range("2000-01", periods=36, freq="M"), vals)
        ]
        rates = yoy_transform(load_panel(frame_of(recs)))
        assert np.allclose(rates.values, 100.0)

    @given(factor=st.floats(0.01, 100.0, allow_nan=False))
    @settings(max_examples=25, deadline=None)
    def test_scale_invariance(self, factor):
        base = load_panel(tiny_frame(n_months=28))
        scaled = type(base)(
            series_ids=base.series_ids,
            dates=base.dates,
            values=base.values * factor,
            target=base.target,
        )
        a, b = yoy_transform(base), yoy_transform(scaled)
        assert np.allclose(a.values, b.values, atol=1e-9)

    def test_zero_base_price_rejected(self):
        df = tiny_frame()
        df.loc[(df.series_id == "A") & (df.date == "2000-02"), "value"] = 0.0
        with pytest.raises(DataError, match="'A'"):
            yoy_transform(load_panel(df))

    def test_too_short(self):
        with pytest.raises(DataError):
            yoy_transform(load_panel(tiny_frame(n_months=12)))


class TestWindow:
    def setup_method(self):
        self.rates = yoy_transform(load_panel(make_fixture_frame(), PanelSchema()))

    def test_demeaned_columns_sum_to_zero(self):
        w = window(self.rates, "2007-12", 60)
        assert np.abs(w.values.sum(axis=0)).max() < 1e-9 * 60
        assert w.demeaned and len(w) == 60

    def test_means_restore_raw_block(self):
        w = window(self.rates, "2007-12", 24, demean=True)
        raw = window(self.rates, "2007-12", 24, demean=False)
        assert np.allclose(w.values + w.means, raw.values, atol=1e-12)
        assert np.allclose(w.means, raw.means)

    def test_consecutive_windows_overlap(self):
        a = window(self.rates, "2007-12", 36, demean=False)
        b = window(self.rates, "2008-01", 36, demean=False)
        assert np.array_equal(a.values[1:], b.values[:-1])

    def test_insufficient_history_names_earliest_feasible(self):
        earliest = self.rates.dates[59]
        with pytest.raises(ValueError, match=str(earliest)):
            window(self.rates, self.rates.dates[10], 60)

    def test_end_date_outside_range(self):
        with pytest.raises(ValueError, match="outside panel"):
            window(self.rates, "2030-01", 12)

    def test_nan_inside_window_rejected(self):
        with pytest.raises(DataError, match="'LATE'"):
            window(self.rates, "2001-06", 24)


class TestFixture:
    def test_fixture_filters(self):
        panel = load_panel(make_fixture_frame())
        assert "VINTAGE" not in panel.series_ids  # annual cadence
        assert "LATE" in panel.series_ids
        assert panel.target_id == "CPI"
        assert panel.n_series == 9

    def test_drop_short_series(self):
        rates = yoy_transform(load_panel(make_fixture_frame()))
        trimmed = drop_short_series(rates, "2000-01", "2009-12")
        assert "LATE" not in trimmed.series_ids
        assert trimmed.n_series == 8
        assert not np.isnan(trimmed.values).any()

    def test_drop_short_series_protects_target(self):
        rates = yoy_transform(load_panel(make_fixture_frame()))
        with pytest.raises(ConfigError, match="'CPI'"):
            drop_short_series(rates, "1990-01")

    def test_round_trip_export(self, tmp_path):
        panel = load_panel(make_fixture_frame())
        path = tmp_path / "panel.csv"
        write_panel_csv(panel, path)
        back = load_panel(path)
        assert back.series_ids == panel.series_ids
        assert np.allclose(back.values, panel.values, equal_nan=True)
        assert panel_fingerprint(back) == panel_fingerprint(panel)

    def test_fixture_deterministic(self):
        a, b = make_fixture_frame(), make_fixture_frame()
        assert a.equals(b)
