"""Command-line pipeline: ingest -> gen-graphs -> backtest -> evaluate.

Each stage reads the previous stage's files from the output directory,
so runs can be staged, checkpointed, and resumed.  `run` chains every
stage and supports multi-seed replication into seed_<s>/ directories
with an aggregate accuracy table.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np
import pandas as pd

from .config import AppConfig, RunManifest, load_config
from .errors import ConfigError, RagnarError, StageOrderError
from .evaluation import aggregate_reports, evaluate_run
from .graph_dist import MAX_EXACT_STAGE, membership_prob, neighbour_size_distribution
from .graphs import generate_ensemble, read_graphs, write_graphs
from .panel import (
    PanelSchema,
    drop_short_series,
    load_panel,
    panel_fingerprint,
    write_panel_csv,
    yoy_transform,
)
from .selection import run_backtest, score_networks
from dataclasses import replace

log = logging.getLogger(__name__)

PANEL_FILE = "panel.csv"
GRAPHS_FILE = "graphs.txt"
RANKINGS_FILE = "rankings.csv"


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragnar",
        description=(
            "Forecasting with ensembles of random networks: rank graphs by "
            "one-step accuracy at a target series, select model orders by "
            "ensemble BIC, and average forecasts over the best networks."
        ),
    )
    parser.add_argument("--config", help="INI config file (defaults + RAGNAR_* env overrides otherwise)")
    parser.add_argument("--out", help="output directory (overrides run.out_dir)")
    parser.add_argument("--threads", type=int, help="worker threads (overrides run.workers)")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="load, transform, and canonicalise the raw panel")
    ingest.add_argument("--data", help="raw CSV path (overrides data.path)")

    sub.add_parser("gen-graphs", help="sample the random graph ensemble")

    rank = sub.add_parser("rank", help="rank the ensemble by one-step RMSE at the target")
    rank.add_argument("--origin", help="ranking month YYYY-MM (default: last panel month)")

    backtest = sub.add_parser("backtest", help="rolling-origin forecasts for every labelled model")
    backtest.add_argument("--resume", action="store_true", help="continue from the checkpoint")

    evaluate = sub.add_parser("evaluate", help="score saved forecasts against the panel")
    evaluate.add_argument("--benchmark", help="denominator label for relative RMSE")

    run = sub.add_parser("run", help="all stages end-to-end, optionally over several seeds")
    run.add_argument("--data", help="raw CSV path (overrides data.path)")
    run.add_argument("--seed-list", help="comma-separated graph seeds for replication")
    run.add_argument("--resume", action="store_true", help="continue interrupted backtests")
    run.add_argument("--benchmark", help="denominator label for relative RMSE")

    pmf = sub.add_parser("analytic-pmf", help="exact neighbourhood-size laws for the ensemble")
    pmf.add_argument("--nodes", type=int, help="node count (default: width of the ingested panel)")

    return parser


def _resolve_data_path(config: AppConfig, config_path: str | None, override: str | None) -> str:
    path = override or config.data.path
    if not path:
        raise ConfigError("data.path: no raw CSV configured (set data.path or pass --data)")
    if not os.path.isabs(path) and config_path and override is None:
        candidate = os.path.join(os.path.dirname(os.path.abspath(config_path)), path)
        if os.path.exists(candidate):
            return candidate
    return path


def _panel_schema_for_readback(config: AppConfig) -> PanelSchema:
    return PanelSchema(target=config.data.schema.target)


def _load_stage_panel(out_dir: str, config: AppConfig):
    path = os.path.join(out_dir, PANEL_FILE)
    if not os.path.exists(path):
        raise StageOrderError(f"missing {path}; run `ragnar ingest` first")
    return load_panel(path, _panel_schema_for_readback(config))


def _load_stage_graphs(out_dir: str):
    path = os.path.join(out_dir, GRAPHS_FILE)
    if not os.path.exists(path):
        raise StageOrderError(f"missing {path}; run `ragnar gen-graphs` first")
    return read_graphs(path)


def _cmd_ingest(config: AppConfig, out_dir: str, data_path: str) -> None:
    panel = load_panel(data_path, config.data.schema)
    if config.data.transform == "yoy":
        panel = yoy_transform(panel)
    if config.data.earliest is not None or config.data.latest is not None:
        earliest = config.data.earliest or str(panel.dates[0])
        panel = drop_short_series(panel, earliest, config.data.latest)
    os.makedirs(out_dir, exist_ok=True)
    write_panel_csv(panel, os.path.join(out_dir, PANEL_FILE))
    print(
        f"ingested {panel.n_series} series x {len(panel.dates)} months "
        f"({panel.dates[0]}..{panel.dates[-1]}) -> {os.path.join(out_dir, PANEL_FILE)}"
    )


def _cmd_gen_graphs(config: AppConfig, out_dir: str, workers: int) -> None:
    panel = _load_stage_panel(out_dir, config)
    cfg = config.backtest
    graphs = generate_ensemble(panel.n_series, cfg.edge_prob, cfg.g_graphs, cfg.seed, workers=workers)
    write_graphs(graphs, os.path.join(out_dir, GRAPHS_FILE))
    print(
        f"sampled {cfg.g_graphs} graphs on {panel.n_series} nodes "
        f"(pi={cfg.edge_prob}, seed={cfg.seed}) -> {os.path.join(out_dir, GRAPHS_FILE)}"
    )


def _cmd_rank(config: AppConfig, out_dir: str, origin: str | None, workers: int) -> None:
    panel = _load_stage_panel(out_dir, config)
    graphs = _load_stage_graphs(out_dir)
    cfg = config.backtest
    when = origin or str(panel.dates[-1])
    from .selection import label_plan, ranked_specs

    specs = ranked_specs(label_plan(cfg))
    if not specs:
        raise ConfigError("models.labels: no network model labels, nothing to rank")
    lines = ["p,s,rank,graph_id,rmse"]
    for p, s in specs:
        table = score_networks(panel, graphs, p, s, when, cfg.n_train, cfg.n_val, workers=workers)
        for rank_pos, gid in enumerate(table.ranking, start=1):
            lines.append(f"{p},{s},{rank_pos},{int(gid)},{float(table.rmse[gid])!r}")
    path = os.path.join(out_dir, RANKINGS_FILE)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"ranked {len(graphs)} graphs for {len(specs)} model orders as of {when} -> {path}")


def _cmd_backtest(config: AppConfig, out_dir: str, workers: int, resume: bool) -> None:
    panel = _load_stage_panel(out_dir, config)
    graphs = _load_stage_graphs(out_dir)
    cfg = config.backtest
    manifest = RunManifest(
        seeds=(cfg.seed,),
        panel_fingerprint=panel_fingerprint(panel),
        config=config.raw_sections(),
    )
    manifest.write(out_dir)  # reproducibility record precedes any result
    t0 = time.monotonic()

    def report(done: int, total: int, origin: str) -> None:
        if done % 12 == 0 or done == total:
            log.info("backtest %d/%d origins (through %s)", done, total, origin)

    result = run_backtest(
        panel,
        cfg,
        graphs=graphs,
        workers=workers,
        checkpoint_dir=os.path.join(out_dir, "checkpoint"),
        resume=resume,
        progress=report,
    )
    result.save(out_dir)
    manifest.stage_seconds["backtest"] = time.monotonic() - t0
    manifest.write(out_dir)
    print(
        f"backtested {len(result.origins)} origins x {len(result.forecasts)} labels "
        f"({result.refresh_count} ranking refreshes) -> {out_dir}"
    )


def _cmd_evaluate(config: AppConfig, out_dir: str, benchmark: str | None):
    panel = _load_stage_panel(out_dir, config)
    if not os.path.isdir(os.path.join(out_dir, "forecasts")):
        raise StageOrderError(f"missing {os.path.join(out_dir, 'forecasts')}; run `ragnar backtest` first")
    label = benchmark or config.run.benchmark
    report = evaluate_run(out_dir, panel, benchmark=label)
    report.save(os.path.join(out_dir, "eval"))
    print(f"scored {report.table.label.nunique()} labels -> {os.path.join(out_dir, 'eval')}")
    return report


def _cmd_analytic_pmf(config: AppConfig, out_dir: str, nodes: int | None) -> None:
    if nodes is None:
        panel_path = os.path.join(out_dir, PANEL_FILE)
        if not os.path.exists(panel_path):
            raise StageOrderError(
                f"pass --nodes or run `ragnar ingest` first (no {panel_path} to take the node count from)"
            )
        nodes = load_panel(panel_path, _panel_schema_for_readback(config)).n_series
    pi = config.backtest.edge_prob
    os.makedirs(out_dir, exist_ok=True)
    lines = ["stage,size,probability"]
    for stage in range(1, MAX_EXACT_STAGE + 1):
        member = membership_prob(nodes, pi, stage)
        print(f"stage {stage}: membership probability {member:.6f}")
        pmf = neighbour_size_distribution(nodes, pi, stage)
        for size, prob in enumerate(pmf):
            lines.append(f"{stage},{size},{float(prob)!r}")
    path = os.path.join(out_dir, "analytic_pmf.csv")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"exact stage-size laws for {nodes} nodes, pi={pi} -> {path}")


def _cmd_run(
    config: AppConfig,
    out_dir: str,
    workers: int,
    data_path: str,
    seeds: tuple[int, ...],
    resume: bool,
    benchmark: str | None,
) -> None:
    timings: dict[str, float] = {}
    t0 = time.monotonic()
    _cmd_ingest(config, out_dir, data_path)
    timings["ingest"] = time.monotonic() - t0
    panel = _load_stage_panel(out_dir, config)
    manifest = RunManifest(
        seeds=seeds,
        panel_fingerprint=panel_fingerprint(panel),
        config=config.raw_sections(),
        stage_seconds=timings,
    )
    manifest.write(out_dir)

    multi = len(seeds) > 1
    reports = []
    for seed in seeds:
        seed_dir = os.path.join(out_dir, f"seed_{seed}") if multi else out_dir
        os.makedirs(seed_dir, exist_ok=True)
        if multi and not os.path.exists(os.path.join(seed_dir, PANEL_FILE)):
            write_panel_csv(panel, os.path.join(seed_dir, PANEL_FILE))
        seed_config = AppConfig(
            data=config.data,
            backtest=replace(config.backtest, seed=seed),
            run=config.run,
            raw=config.raw,
        )
        t1 = time.monotonic()
        _cmd_gen_graphs(seed_config, seed_dir, workers)
        timings[f"gen_graphs_seed_{seed}"] = time.monotonic() - t1
        t1 = time.monotonic()
        _cmd_backtest(seed_config, seed_dir, workers, resume)
        timings[f"backtest_seed_{seed}"] = time.monotonic() - t1
        reports.append(_cmd_evaluate(seed_config, seed_dir, benchmark))
    if multi:
        table = aggregate_reports(reports)
        agg_path = os.path.join(out_dir, "aggregate.csv")
        table.to_csv(agg_path, index=False)
        print(f"aggregated {len(seeds)} seeds -> {agg_path}")
    manifest.stage_seconds = timings
    manifest.write(out_dir)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = load_config(args.config)
        out_dir = args.out or config.run.out_dir
        workers = args.threads if args.threads is not None else config.run.workers
        if workers < 1:
            raise ConfigError(f"run.workers: must be >= 1, got {workers}")

        if args.command == "ingest":
            data_path = _resolve_data_path(config, args.config, args.data)
            _cmd_ingest(config, out_dir, data_path)
        elif args.command == "gen-graphs":
            _cmd_gen_graphs(config, out_dir, workers)
        elif args.command == "rank":
            _cmd_rank(config, out_dir, args.origin, workers)
        elif args.command == "backtest":
            _cmd_backtest(config, out_dir, workers, args.resume)
        elif args.command == "evaluate":
            _cmd_evaluate(config, out_dir, args.benchmark)
        elif args.command == "analytic-pmf":
            _cmd_analytic_pmf(config, out_dir, args.nodes)
        elif args.command == "run":
            data_path = _resolve_data_path(config, args.config, args.data)
            if args.seed_list:
                seeds = tuple(int(v) for v in args.seed_list.split(",") if v.strip())
            elif config.run.seeds:
                seeds = config.run.seeds
            else:
                seeds = (config.backtest.seed,)
            if not seeds:
                raise ConfigError("run.seeds: empty seed list")
            _cmd_run(config, out_dir, workers, data_path, seeds, args.resume, args.benchmark)
        else:  # pragma: no cover - argparse enforces the choices
            parser.error(f"unknown command {args.command!r}")
    except RagnarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
