"""INI-file configuration with environment overrides, plus run manifests.

A config file has up to five sections — data, graphs, backtest, models,
run — each holding flat key=value entries.  Any entry can be overridden
by an environment variable named RAGNAR_<SECTION>_<KEY> (upper case),
which takes precedence over the file.  Values are validated on load;
errors name the offending entry as section.key.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Mapping

from . import __version__
from .errors import ConfigError
from .panel import PanelSchema
from .selection import DEFAULT_ORDER_SETS, DEFAULT_STAGE_SETS, BacktestConfig, label_plan

PRNG_ID = "numpy:PCG64"


# --- value parsers ---------------------------------------------------------


def _parse_int(text: str) -> int:
    return int(text.strip())


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_str_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    """Comma-separated integers; a-b spans expand inclusively (1,4-6 -> 1,4,5,6)."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo_text, sep, hi_text = part.partition("-")
        if sep and lo_text.strip():
            lo, hi = int(lo_text), int(hi_text)
            if hi < lo:
                raise ValueError(f"descending span {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty integer list")
    return tuple(out)


def _parse_named_sets(text: str) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """name:ints groups separated by ';' (p1:1,13,25;p2:2,13,25)."""
    out = []
    for group in text.split(";"):
        group = group.strip()
        if not group:
            continue
        if ":" not in group:
            raise ValueError(f"group {group!r} is missing the name: prefix")
        name, vals = group.split(":", 1)
        out.append((name.strip(), _parse_int_list(vals)))
    if not out:
        raise ValueError("no groups given")
    return tuple(out)


def _parse_spec_pairs(text: str) -> tuple[tuple[int, int], ...]:
    """p:s pairs separated by ';' (2:1;1:2)."""
    out = []
    for pair in text.split(";"):
        pair = pair.strip()
        if not pair:
            continue
        if ":" not in pair:
            raise ValueError(f"pair {pair!r} is not p:s")
        p_text, s_text = pair.split(":", 1)
        out.append((int(p_text), int(s_text)))
    return tuple(out)


# --- section schemas -------------------------------------------------------

_PARSERS: dict[str, dict[str, Callable]] = {
    "data": {
        "path": _parse_str,
        "series_col": _parse_str,
        "date_col": _parse_str,
        "value_col": _parse_str,
        "date_format": _parse_str,
        "target": _parse_str,
        "include": _parse_str_list,
        "transform": _parse_str,
        "earliest": _parse_str,
        "latest": _parse_str,
    },
    "graphs": {
        "count": _parse_int,
        "pi": _parse_float,
        "seed": _parse_int,
    },
    "backtest": {
        "n_train": _parse_int,
        "n_val": _parse_int,
        "top_n": _parse_int,
        "k_fraction": _parse_float,
        "horizons": _parse_int,
        "cadence": _parse_str,
        "first_origin": _parse_str,
        "last_origin": _parse_str,
    },
    "models": {
        "param_classes": _parse_str_list,
        "candidate_orders": _parse_int_list,
        "candidate_stages": _parse_int_list,
        "order_sets": _parse_named_sets,
        "stage_sets": _parse_named_sets,
        "fixed_specs": _parse_spec_pairs,
        "labels": _parse_str_list,
        "rw_windows": _parse_int_list,
        "directed": _parse_bool,
        "directed_order": _parse_int,
        "directed_stage": _parse_int,
    },
    "run": {
        "out_dir": _parse_str,
        "workers": _parse_int,
        "seeds": _parse_int_list,
        "benchmark": _parse_str,
    },
}


@dataclass(frozen=True)
class DataConfig:
    """Where the raw panel lives and how to read and prepare it."""

    path: str = ""
    schema: PanelSchema = PanelSchema()
    transform: str = "yoy"  # yoy | none
    earliest: str | None = None
    latest: str | None = None


@dataclass(frozen=True)
class RunConfig:
    out_dir: str = "runs/latest"
    workers: int = 1
    seeds: tuple[int, ...] = ()
    benchmark: str = "rw1"


@dataclass(frozen=True)
class AppConfig:
    data: DataConfig
    backtest: BacktestConfig
    run: RunConfig
    raw: tuple[tuple[str, tuple[tuple[str, str], ...]], ...] = ()

    def raw_sections(self) -> dict[str, dict[str, str]]:
        return {section: dict(entries) for section, entries in self.raw}


def _read_sections(path, env: Mapping[str, str]) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {name: {} for name in _PARSERS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str.lower  # keys are case-insensitive
        read = parser.read(os.fspath(path))
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in _PARSERS:
                raise ConfigError(f"unknown config section [{section}]; known: {sorted(_PARSERS)}")
            for key, value in parser.items(section):
                if key not in _PARSERS[section]:
                    raise ConfigError(
                        f"{section}.{key}: unknown key; known: {sorted(_PARSERS[section])}"
                    )
                sections[section][key] = value
    for section, keys in _PARSERS.items():
        for key in keys:
            env_name = f"RAGNAR_{section.upper()}_{key.upper()}"
            if env_name in env:
                sections[section][key] = env[env_name]
    return sections


def load_config(path=None, env: Mapping[str, str] | None = None) -> AppConfig:
    """Parse and validate a config file plus RAGNAR_* environment overrides.

    With no path, defaults (the published protocol's parameters) are
    used, still honouring environment overrides.
    """
    env = os.environ if env is None else env
    sections = _read_sections(path, env)

    parsed: dict[str, dict] = {}
    for section, entries in sections.items():
        parsed[section] = {}
        for key, text in entries.items():
            try:
                parsed[section][key] = _PARSERS[section][key](text)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{section}.{key}: cannot parse {text!r} ({exc})") from None

    data_keys = parsed["data"]
    schema = PanelSchema(
        series_col=data_keys.get("series_col", "series_id"),
        date_col=data_keys.get("date_col", "date"),
        value_col=data_keys.get("value_col", "value"),
        date_format=data_keys.get("date_format", "%Y-%m"),
        target=data_keys.get("target", "CPI"),
        include=data_keys.get("include", ()),
    )
    transform = data_keys.get("transform", "yoy")
    if transform not in ("yoy", "none"):
        raise ConfigError(f"data.transform: must be 'yoy' or 'none', got {transform!r}")
    data = DataConfig(
        path=data_keys.get("path", ""),
        schema=schema,
        transform=transform,
        earliest=data_keys.get("earliest"),
        latest=data_keys.get("latest"),
    )

    g = parsed["graphs"]
    b = parsed["backtest"]
    m = parsed["models"]
    backtest = BacktestConfig(
        n_train=b.get("n_train", 150),
        n_val=b.get("n_val", 30),
        g_graphs=g.get("count", 10000),
        edge_prob=g.get("pi", 0.03),
        top_n=b.get("top_n", 5),
        k_fraction=b.get("k_fraction", 0.25),
        horizons=b.get("horizons", 12),
        cadence=b.get("cadence", "monthly"),
        candidate_orders=m.get("candidate_orders", tuple(range(1, 26))),
        candidate_stages=m.get("candidate_stages", (1, 2)),
        order_sets=m.get("order_sets", DEFAULT_ORDER_SETS),
        stage_sets=m.get("stage_sets", DEFAULT_STAGE_SETS),
        param_classes=m.get("param_classes", ("global_alpha", "standard", "local_alpha_beta")),
        fixed_specs=m.get("fixed_specs", ()),
        rw_windows=m.get("rw_windows", (1, 4)),
        labels=m.get("labels", ()),
        seed=g.get("seed", 0),
        first_origin=b.get("first_origin"),
        last_origin=b.get("last_origin"),
        directed=m.get("directed", False),
        directed_order=m.get("directed_order", 1),
        directed_stage=m.get("directed_stage", 1),
    )
    try:
        backtest.validate()
    except ConfigError as exc:
        # translate engine field names back to their config entries
        msg = str(exc)
        msg = msg.replace("backtest.edge_prob", "graphs.pi")
        msg = msg.replace("backtest.g_graphs", "graphs.count")
        for key in _PARSERS["models"]:
            msg = msg.replace(f"backtest.{key}", f"models.{key}")
        raise ConfigError(msg) from None
    try:
        label_plan(backtest)  # reject unknown label filters before any work runs
    except ConfigError as exc:
        raise ConfigError(str(exc).replace("backtest.labels", "models.labels")) from None

    r = parsed["run"]
    run = RunConfig(
        out_dir=r.get("out_dir", "runs/latest"),
        workers=r.get("workers", 1),
        seeds=r.get("seeds", ()),
        benchmark=r.get("benchmark", "rw1"),
    )
    if run.workers < 1:
        raise ConfigError(f"run.workers: must be >= 1, got {run.workers}")

    raw = tuple(
        (section, tuple(sorted(entries.items()))) for section, entries in sections.items()
    )
    return AppConfig(data=data, backtest=backtest, run=run, raw=raw)


# --- run manifest ----------------------------------------------------------


@dataclass
class RunManifest:
    """Everything needed to reproduce a run, written before its results."""

    seeds: tuple[int, ...]
    panel_fingerprint: str
    config: dict
    package_version: str = __version__
    prng: str = PRNG_ID
    created_utc: str = ""
    stage_seconds: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.created_utc:
            self.created_utc = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def write(self, out_dir) -> None:
        os.makedirs(os.fspath(out_dir), exist_ok=True)
        payload = {
            "package_version": self.package_version,
            "prng": self.prng,
            "created_utc": self.created_utc,
            "seeds": list(self.seeds),
            "panel_fingerprint": self.panel_fingerprint,
            "config": self.config,
            "stage_seconds": {k: round(v, 3) for k, v in self.stage_seconds.items()},
        }
        with open(os.path.join(os.fspath(out_dir), "manifest.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, out_dir) -> "RunManifest":
        with open(os.path.join(os.fspath(out_dir), "manifest.json")) as fh:
            payload = json.load(fh)
        return cls(
            seeds=tuple(payload["seeds"]),
            panel_fingerprint=payload["panel_fingerprint"],
            config=payload["config"],
            package_version=payload["package_version"],
            prng=payload["prng"],
            created_utc=payload["created_utc"],
            stage_seconds=payload["stage_seconds"],
        )
