"""INI config parsing, environment overrides, and the run manifest."""

import pytest

from ragnar.config import RunManifest, load_config
from ragnar.errors import ConfigError


def write_config(tmp_path, body):
    path = tmp_path / "test.ini"
    path.write_text(body)
    return path


class TestDefaults:
    def test_published_protocol_defaults(self):
        cfg = load_config(None, env={})
        bt = cfg.backtest
        assert bt.n_train == 150
        assert bt.n_val == 30
        assert bt.g_graphs == 10000
        assert bt.edge_prob == 0.03
        assert bt.k_fraction == 0.25
        assert bt.top_n == 5
        assert bt.horizons == 12
        assert bt.candidate_orders == tuple(range(1, 26))
        assert bt.candidate_stages == (1, 2)
        assert dict(bt.order_sets) == {"p1": (1, 13, 25), "p2": (2, 13, 25)}
        assert dict(bt.stage_sets) == {"s1": (1,), "s2": (2,), "s3": (1, 2)}
        assert cfg.data.schema.target == "CPI"
        assert cfg.data.transform == "yoy"
        assert cfg.run.benchmark == "rw1"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.ini", env={})


class TestParsing:
    def test_full_file(self, tmp_path):
        path = write_config(
            tmp_path,
            """
            [data]
            path = panel.csv
            target = HEADLINE
            series_col = code
            include = HEADLINE, FOOD
            transform = none
            earliest = 1999-01

            [graphs]
            count = 50
            pi = 0.10
            seed = 9

            [backtest]
            n_train = 80
            n_val = 10
            top_n = 4
            cadence = quarterly
            first_origin = 2005-06

            [models]
            candidate_orders = 1-3,6
            candidate_stages = 1
            order_sets = a:1,2;b:3
            stage_sets = x:1
            param_classes = standard
            fixed_specs = 2:1;1:0
            rw_windows = 2
            directed = true

            [run]
            out_dir = out/here
            workers = 3
            seeds = 1,2,3
            benchmark = rw2
            """,
        )
        cfg = load_config(path, env={})
        assert cfg.data.path == "panel.csv"
        assert cfg.data.schema.target == "HEADLINE"
        assert cfg.data.schema.series_col == "code"
        assert cfg.data.schema.include == ("HEADLINE", "FOOD")
        assert cfg.data.transform == "none"
        assert cfg.data.earliest == "1999-01"
        bt = cfg.backtest
        assert bt.g_graphs == 50
        assert bt.edge_prob == 0.10
        assert bt.seed == 9
        assert bt.n_train == 80
        assert bt.cadence == "quarterly"
        assert bt.first_origin == "2005-06"
        assert bt.candidate_orders == (1, 2, 3, 6)
        assert bt.order_sets == (("a", (1, 2)), ("b", (3,)))
        assert bt.fixed_specs == ((2, 1), (1, 0))
        assert bt.rw_windows == (2,)
        assert bt.directed is True
        assert cfg.run.workers == 3
        assert cfg.run.seeds == (1, 2, 3)
        assert cfg.run.benchmark == "rw2"

    def test_env_override_beats_file(self, tmp_path):
        path = write_config(tmp_path, "[graphs]\ncount = 50\n")
        cfg = load_config(path, env={"RAGNAR_GRAPHS_COUNT": "7", "RAGNAR_BACKTEST_N_VAL": "5"})
        assert cfg.backtest.g_graphs == 7
        assert cfg.backtest.n_val == 5

    def test_env_only(self):
        cfg = load_config(None, env={"RAGNAR_GRAPHS_PI": "0.2"})
        assert cfg.backtest.edge_prob == 0.2


class TestErrors:
    def test_unknown_section(self, tmp_path):
        path = write_config(tmp_path, "[nets]\ncount = 5\n")
        with pytest.raises(ConfigError, match=r"unknown config section \[nets\]"):
            load_config(path, env={})

    def test_unknown_key_names_section(self, tmp_path):
        path = write_config(tmp_path, "[graphs]\npie = 0.03\n")
        with pytest.raises(ConfigError, match="graphs.pie"):
            load_config(path, env={})

    def test_unparseable_value_names_entry(self, tmp_path):
        path = write_config(tmp_path, "[graphs]\npi = lots\n")
        with pytest.raises(ConfigError, match="graphs.pi"):
            load_config(path, env={})

    def test_out_of_range_pi_named_as_config_entry(self, tmp_path):
        path = write_config(tmp_path, "[graphs]\npi = 1.5\n")
        with pytest.raises(ConfigError, match=r"graphs\.pi"):
            load_config(path, env={})

    def test_models_keys_translated(self, tmp_path):
        path = write_config(tmp_path, "[models]\nparam_classes = fancy\n")
        with pytest.raises(ConfigError, match=r"models\.param_classes"):
            load_config(path, env={})

    def test_bad_transform(self, tmp_path):
        path = write_config(tmp_path, "[data]\ntransform = log\n")
        with pytest.raises(ConfigError, match="data.transform"):
            load_config(path, env={})

    def test_descending_span(self, tmp_path):
        path = write_config(tmp_path, "[models]\ncandidate_orders = 5-2\n")
        with pytest.raises(ConfigError, match="candidate_orders"):
            load_config(path, env={})

    def test_bad_workers(self, tmp_path):
        path = write_config(tmp_path, "[run]\nworkers = 0\n")
        with pytest.raises(ConfigError, match="run.workers"):
            load_config(path, env={})


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = RunManifest(
            seeds=(1, 2),
            panel_fingerprint="abc123",
            config={"graphs": {"count": "5"}},
            stage_seconds={"backtest": 1.234},
        )
        manifest.write(tmp_path)
        loaded = RunManifest.read(tmp_path)
        assert loaded.seeds == (1, 2)
        assert loaded.panel_fingerprint == "abc123"
        assert loaded.config == {"graphs": {"count": "5"}}
        assert loaded.prng == "numpy:PCG64"
        assert loaded.stage_seconds == {"backtest": 1.234}
        assert loaded.created_utc  # stamped on creation

    def test_raw_sections_recorded(self, tmp_path):
        path = write_config(tmp_path, "[graphs]\ncount = 5\npi = 0.5\n")
        cfg = load_config(path, env={"RAGNAR_GRAPHS_SEED": "11"})
        raw = cfg.raw_sections()
        assert raw["graphs"] == {"count": "5", "pi": "0.5", "seed": "11"}
