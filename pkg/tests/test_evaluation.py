"""Accuracy tables, external comparison, and component diagnostics."""

import json

import numpy as np
import pandas as pd
import pytest

from ragnar.errors import DataError, EmptyOverlapError
from ragnar.evaluation import (
    EvalReport,
    aggregate_reports,
    compare_external,
    component_frequency,
    evaluate_run,
    horizon_table,
    load_forecast_csv,
    mape,
    read_forecasts,
    rmse,
)
from ragnar.panel import drop_short_series, load_panel, yoy_transform
from ragnar.selection import BacktestConfig, run_backtest
from ragnar.synthetic import make_fixture_frame


def tiny_panel(values, start="2000-01"):
    n = len(values)
    frame = pd.DataFrame(
        {
            "series_id": ["CPI"] * n,
            "date": pd.period_range(start, periods=n, freq="M").astype(str),
            "value": values,
        }
    )
    return load_panel(frame)


def fframe(rows):
    return pd.DataFrame(rows, columns=["origin_date", "horizon", "forecast"])


class TestPointMetrics:
    def test_rmse(self):
        assert rmse(np.array([3.0, 4.0])) == pytest.approx(np.sqrt(12.5))
        assert rmse(np.array([0.0])) == 0.0
        with pytest.raises(ValueError):
            rmse(np.array([]))

    def test_mape_basic_example(self):
        assert mape([(2.0, 3.0)]) == pytest.approx(100.0 / 3.0)

    def test_mape_zero_actual_stays_finite(self):
        assert mape([(0.0, 0.5)]) == pytest.approx(50.0)

    def test_mape_averages_pairs(self):
        # |1-2|/2 = 0.5 and |3-3|/4 = 0 -> mean 25%
        assert mape([(1.0, 2.0), (3.0, 3.0)]) == pytest.approx(25.0)

    def test_mape_empty(self):
        with pytest.raises(ValueError):
            mape([])


class TestHorizonTable:
    def test_hand_example_with_benchmark(self):
        panel = tiny_panel([float(i) for i in range(1, 13)])  # actual = month number
        forecasts = {
            # origin 2000-04 (actual 4): h=1 targets 5, h=2 targets 6
            "model": fframe([("2000-04", 1, 5.5), ("2000-04", 2, 7.0)]),
            "bench": fframe([("2000-04", 1, 6.0), ("2000-04", 2, 4.0)]),
        }
        table = horizon_table(forecasts, panel, benchmark="bench")
        model = table[table.label == "model"].set_index("horizon")
        assert model.loc[1, "rmse"] == pytest.approx(0.5)
        assert model.loc[2, "rmse"] == pytest.approx(1.0)
        assert model.loc[1, "mape"] == pytest.approx(100.0 * 0.5 / 6.0)
        assert model.loc[1, "rmse_rel"] == pytest.approx(0.5 / 1.0)
        assert model.loc[2, "rmse_rel"] == pytest.approx(1.0 / 2.0)
        assert int(model.loc[1, "n"]) == 1

    def test_unobserved_months_are_dropped(self):
        panel = tiny_panel([1.0] * 12)
        forecasts = {"m": fframe([("2000-11", 1, 1.0), ("2000-11", 2, 9.9), ("2000-11", 3, 9.9)])}
        table = horizon_table(forecasts, panel)
        assert list(table.horizon) == [1]  # 2001-01 and 2001-02 are unobserved
        assert table.iloc[0].rmse == 0.0

    def test_non_finite_forecasts_are_dropped(self):
        panel = tiny_panel([1.0] * 12)
        forecasts = {
            "m": fframe([("2000-05", 1, np.nan), ("2000-06", 1, 2.0)]),
        }
        table = horizon_table(forecasts, panel)
        assert int(table.iloc[0].n) == 1
        assert table.iloc[0].rmse == pytest.approx(1.0)

    def test_relative_column_uses_common_pairs_only(self):
        panel = tiny_panel([0.0] * 12)
        forecasts = {
            "m": fframe([("2000-03", 1, 1.0), ("2000-04", 1, 5.0)]),
            "b": fframe([("2000-03", 1, 2.0)]),  # only one shared origin
        }
        table = horizon_table(forecasts, panel, benchmark="b")
        row = table[table.label == "m"].iloc[0]
        # own rmse over both origins, but the ratio only over 2000-03
        assert row.rmse == pytest.approx(np.sqrt((1.0 + 25.0) / 2.0))
        assert row.rmse_rel == pytest.approx(0.5)
        assert int(row.n_common) == 1

    def test_unknown_benchmark(self):
        panel = tiny_panel([1.0] * 12)
        with pytest.raises(ValueError, match="benchmark"):
            horizon_table({"m": fframe([("2000-05", 1, 1.0)])}, panel, benchmark="nope")

    def test_nothing_scored(self):
        panel = tiny_panel([1.0] * 12)
        with pytest.raises(EmptyOverlapError):
            horizon_table({"m": fframe([("2000-12", 1, 1.0)])}, panel)


class TestCompareExternal:
    def test_half_overlap(self):
        panel = tiny_panel([0.0] * 12)
        own = fframe([("2000-03", 1, 1.0), ("2000-04", 1, 1.0)])
        ext = fframe([("2000-04", 1, 2.0), ("2000-05", 1, 2.0)])
        table = compare_external(own, ext, panel)
        assert len(table) == 1
        row = table.iloc[0]
        assert int(row.n) == 1
        assert row.rmse == pytest.approx(1.0)
        assert row.rmse_external == pytest.approx(2.0)
        assert row.rmse_rel == pytest.approx(0.5)

    def test_no_overlap_raises(self):
        panel = tiny_panel([0.0] * 12)
        own = fframe([("2000-03", 1, 1.0)])
        ext = fframe([("2000-08", 1, 2.0)])
        with pytest.raises(EmptyOverlapError):
            compare_external(own, ext, panel)

    def test_missing_column_named(self):
        panel = tiny_panel([0.0] * 12)
        bad = pd.DataFrame({"origin_date": ["2000-03"], "value": [1.0]})
        with pytest.raises(DataError, match="horizon"):
            compare_external(fframe([("2000-03", 1, 1.0)]), bad, panel)


class TestComponentFrequency:
    def make_meta(self):
        rows = [
            ("2000-01", 1, 0, "A|B", 1, 1),
            ("2000-01", 2, 1, "A", 1, 1),
            ("2000-02", 1, 2, "", 1, 1),
            ("2000-02", 2, 3, "B", 1, 1),
            ("2000-03", 1, 4, "A", 1, 1),
            ("2000-03", 2, 5, "A", 1, 1),
        ]
        return pd.DataFrame(
            rows,
            columns=["origin_date", "rank", "graph_id", "target_stage1_members", "selected_p", "selected_s"],
        )

    def test_percentages_and_trailing_mean(self):
        out = component_frequency(self.make_meta(), trailing=2)
        a = out[out.series_id == "A"].set_index("origin_date")
        b = out[out.series_id == "B"].set_index("origin_date")
        assert list(a.pct) == [100.0, 0.0, 100.0]
        assert list(b.pct) == [50.0, 50.0, 0.0]
        assert list(a.pct_ma) == [100.0, 50.0, 50.0]
        assert list(b.pct_ma) == [50.0, 50.0, 25.0]

    def test_missing_columns(self):
        with pytest.raises(DataError, match="target_stage1_members"):
            component_frequency(pd.DataFrame({"origin_date": [], "rank": []}))

    def test_bad_trailing(self):
        with pytest.raises(ValueError):
            component_frequency(self.make_meta(), trailing=0)


class TestAggregate:
    def make_report(self, rmse_val):
        table = pd.DataFrame(
            [{"label": "m", "horizon": 1, "n": 4, "rmse": rmse_val, "mape": 10.0 * rmse_val}]
        )
        return EvalReport(table=table)

    def test_mean_and_sd_across_seeds(self):
        out = aggregate_reports([self.make_report(1.0), self.make_report(2.0)])
        row = out.iloc[0]
        assert row.rmse_mean == pytest.approx(1.5)
        assert row.rmse_sd == pytest.approx(np.std([1.0, 2.0], ddof=1))
        assert row.mape_mean == pytest.approx(15.0)
        assert int(row.n_seeds) == 2
        assert int(row.n) == 8

    def test_single_report_sd_zero(self):
        out = aggregate_reports([self.make_report(1.0)])
        assert out.iloc[0].rmse_sd == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate_reports([])


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    rates = drop_short_series(yoy_transform(load_panel(make_fixture_frame())), "1996-01")
    cfg = BacktestConfig(
        n_train=60,
        n_val=12,
        g_graphs=8,
        edge_prob=0.25,
        top_n=2,
        horizons=4,
        candidate_orders=(1, 2),
        candidate_stages=(1,),
        order_sets=(("p1", (1, 2)),),
        stage_sets=(("s1", (1,)),),
        param_classes=("standard",),
        first_origin="2008-01",
        last_origin="2008-04",
        seed=3,
    )
    result = run_backtest(rates, cfg)
    out = tmp_path_factory.mktemp("run")
    result.save(out)
    return out, rates, result


class TestRoundTrip:
    def test_read_back_equals_in_memory(self, run_dir):
        out, rates, result = run_dir
        loaded = read_forecasts(out)
        assert set(loaded) == set(result.forecasts)
        for name, frame in loaded.items():
            ref = result.forecasts[name]
            assert np.allclose(frame.forecast.to_numpy(), ref.forecast.to_numpy())
            assert list(frame.origin_date) == list(ref.origin_date)

    def test_evaluate_run_end_to_end(self, run_dir, tmp_path):
        out, rates, result = run_dir
        report = evaluate_run(out, rates, benchmark="rw1")
        assert {"label", "horizon", "n", "rmse", "mape", "rmse_rel"} <= set(report.table.columns)
        assert set(report.table.label) == set(result.forecasts)
        bench_rows = report.table[report.table.label == "rw1"]
        assert np.allclose(bench_rows.rmse_rel, 1.0)
        assert report.components is not None
        assert set(report.components.columns) == {"origin_date", "series_id", "pct", "pct_ma"}
        report.save(tmp_path / "eval")
        saved = json.loads((tmp_path / "eval" / "accuracy.json").read_text())
        assert saved["benchmark"] == "rw1"
        assert len(saved["rows"]) == len(report.table)
        assert (tmp_path / "eval" / "accuracy.csv").exists()
        assert (tmp_path / "eval" / "components.csv").exists()

    def test_load_forecast_csv_validates(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("origin_date,forecast\n2000-01,1.0\n")
        with pytest.raises(DataError, match="horizon"):
            load_forecast_csv(p)

    def test_read_forecasts_missing_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_forecasts(tmp_path / "nothing")
