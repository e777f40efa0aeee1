"""Command line entry point: ``auxtasks <subcommand> [flags]``.

A config file (YAML/JSON, or a previous run's manifest.json) is the source of
truth; flags override single keys.  Exit codes: 0 ok, 1 config error,
2 provider error, 3 infeasible task.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, ltl
from .config import CONDITIONS, ConfigError, ExperimentConfig, apply_overrides, from_mapping, load_config
from .embeddings import (
    EmbeddingStore,
    ProviderError,
    cluster_csv,
    default_fixture_path,
    kmeans,
)
from .env import MapError, heatmap_from_csv, room_fractions
from .learner import InfeasibleTaskError, QBank, evaluate, normalized_return

EXIT_OK, EXIT_CONFIG, EXIT_PROVIDER, EXIT_INFEASIBLE = 0, 1, 2, 3

# flag dest -> dotted config key
_FLAG_KEYS = {
    "map_path": "map_path",
    "task": "task",
    "condition": "condition",
    "aux_count": "aux_count",
    "k": "k",
    "ucb_c": "ucb_c",
    "alpha": "alpha",
    "gamma": "gamma",
    "epsilon": "epsilon",
    "max_steps": "max_steps",
    "episodes": "episodes",
    "eval_period": "eval_period",
    "seeds": "seeds",
    "min_aux": "min_aux",
    "provider_mode": "provider.mode",
    "describe_url": "provider.describe_url",
    "embed_url": "provider.embed_url",
    "token_env": "provider.token_env",
    "cache_path": "cache_path",
    "out_dir": "out_dir",
}


def _seed_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    g.add_argument("--config", help="YAML/JSON config or manifest.json")
    g.add_argument("--map-path")
    g.add_argument("--task")
    g.add_argument("--condition", choices=CONDITIONS)
    g.add_argument("--aux-count", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--ucb-c", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--max-steps", type=int)
    g.add_argument("--episodes", type=int)
    g.add_argument("--eval-period", type=int)
    g.add_argument("--seeds", type=_seed_list, help="e.g. 0-6 or 0,3,5")
    g.add_argument("--min-aux", type=int)
    g.add_argument("--provider-mode", choices=("offline", "remote"))
    g.add_argument("--describe-url")
    g.add_argument("--embed-url")
    g.add_argument("--token-env")
    g.add_argument("--cache-path")
    g.add_argument("--out-dir")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    base = load_config(args.config)
    overrides = {key: getattr(args, dest, None) for dest, key in _FLAG_KEYS.items()}
    return from_mapping(apply_overrides(base.to_dict(), overrides))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="auxtasks", description="Auxiliary LTL task generation and multitask Q-learning")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="build or refresh the embedding cache")
    _config_flags(p)
    p.add_argument("--out", help="cache file to write (default: cache_path)")

    p = sub.add_parser("cluster", help="k-means++ over object embeddings, CSV to stdout")
    _config_flags(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-tasks", help="generate auxiliary tasks for one condition")
    _config_flags(p)

    p = sub.add_parser("train", help="train one condition over the configured seeds")
    _config_flags(p)

    p = sub.add_parser("eval", help="greedy evaluation of a dumped Q-bank")
    _config_flags(p)
    p.add_argument("qbank", help="Q-bank JSON written by `train`")
    p.add_argument("--eval-task", help="formula to evaluate (default: the config task)")

    p = sub.add_parser("experiment", help="all three conditions over all seeds")
    _config_flags(p)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("heatmap", help="render a heatmap CSV and its per-room fractions")
    _config_flags(p)
    p.add_argument("csv", help="heatmap_<condition>_<seed>.csv")
    return ap


# ---------------------------------------------------------------------------
# subcommands


def cmd_embed(cfg: ExperimentConfig, args) -> int:
    out = args.out or cfg.cache_path
    if out is None:
        raise ConfigError("embed needs --out or cache_path")
    grid = harness.load_grid(cfg)
    if cfg.provider.mode == "offline":
        store = EmbeddingStore.load(cfg.cache_path or default_fixture_path(), grid.propositions)
        store.save(out)
    else:
        store = harness.fetch_store(cfg, grid)
        store.save(out)
    print(f"wrote {len(store)} embeddings to {out}")
    return EXIT_OK


def cmd_cluster(cfg: ExperimentConfig, args) -> int:
    grid = harness.load_grid(cfg)
    store = harness.load_store(cfg, grid)
    model = kmeans(store, cfg.k, harness.stream_seed(args.seed, "kmeans"))
    sys.stdout.write(cluster_csv(model))
    return EXIT_OK


def cmd_gen_tasks(cfg: ExperimentConfig, args) -> int:
    grid = harness.load_grid(cfg)
    store = harness.load_store(cfg, grid) if cfg.condition != "RandomTasks" else None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        tasks, extra = harness.auxiliary_tasks(cfg, cfg.condition, seed, grid, store)
        tag = f"{cfg.condition}_{seed}"
        (out / f"tasks_{tag}.txt").write_text(tasks.lines())
        (out / f"tasks_{tag}.json").write_text(tasks.dumps_sidecar(**extra, condition=cfg.condition) + "\n")
        print(f"{tag}: {len(tasks.tasks)} tasks{' (shortfall)' if tasks.shortfall else ''}")
    return EXIT_OK


def _final_line(results) -> str:
    agg = harness.aggregate(results)
    if not agg.episodes:
        return f"{results[0].condition}: no evaluation points"
    return (
        f"{results[0].condition}: episode {agg.episodes[-1]} given_norm_return "
        f"{agg.given_mean[-1]:.3f}±{agg.given_std[-1]:.3f} aux_success_rate "
        f"{agg.aux_mean[-1]:.3f}±{agg.aux_std[-1]:.3f}"
    )


def cmd_train(cfg: ExperimentConfig, args) -> int:
    grid = harness.load_grid(cfg)
    store = harness.load_store(cfg, grid) if cfg.condition != "RandomTasks" else None
    results = [harness.run_condition(cfg, s, cfg.condition, grid, store, keep_bank=True) for s in cfg.seeds]
    harness.emit(results, cfg.out_dir, cfg)
    for r in results:
        (Path(cfg.out_dir) / f"qbank_{r.condition}_{r.seed}.json").write_text(r.bank.dumps() + "\n")
    print(_final_line(results))
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    grid = harness.load_grid(cfg)
    try:
        data = json.loads(Path(args.qbank).read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read Q-bank {args.qbank}: {e}") from None
    bank = QBank.from_json(data, grid)
    task = ltl.canonicalize(ltl.parse(args.eval_task or cfg.task))
    if task not in bank:
        raise ConfigError(f"task {ltl.to_string(task)} has no table in {args.qbank}")
    res = evaluate(bank, task, grid, cfg.learner())
    norm = normalized_return(res.discounted_return, task, grid, cfg.gamma)
    print(json.dumps({
        "task": ltl.to_string(task),
        "success": res.success,
        "steps": res.steps,
        "discounted_return": res.discounted_return,
        "normalized_return": norm,
    }, sort_keys=True))
    return EXIT_OK


def cmd_experiment(cfg: ExperimentConfig, args) -> int:
    results = harness.run_experiment(cfg, workers=args.workers)
    harness.emit(results, cfg.out_dir, cfg)
    for cond in CONDITIONS:
        print(_final_line([r for r in results if r.condition == cond]))
    return EXIT_OK


_SHADES = " .:-=+*#%@"


def cmd_heatmap(cfg: ExperimentConfig, args) -> int:
    grid = harness.load_grid(cfg)
    try:
        heat = heatmap_from_csv(Path(args.csv).read_text())
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read heatmap {args.csv}: {e}") from None
    if heat.shape != (grid.height, grid.width):
        raise ConfigError(f"heatmap shape {heat.shape} does not match the map")
    scaled = np.log1p(heat) / max(np.log1p(heat).max(), 1e-12)
    for y in range(grid.height):
        row = []
        for x in range(grid.width):
            if (x, y) in grid.walls:
                row.append("X")
            else:
                row.append(_SHADES[min(int(scaled[y, x] * (len(_SHADES) - 1) + 0.5), len(_SHADES) - 1)])
        print("".join(row))
    print(f"total steps {int(heat.sum())}")
    for room, frac in room_fractions(grid, heat).items():
        print(f"{room}: {frac:.3f}")
    return EXIT_OK


COMMANDS = {
    "embed": cmd_embed,
    "cluster": cmd_cluster,
    "gen-tasks": cmd_gen_tasks,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "heatmap": cmd_heatmap,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except InfeasibleTaskError as e:
        print(f"infeasible task: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ProviderError as e:
        print(f"provider error: {e}", file=sys.stderr)
        return EXIT_PROVIDER
    except (ConfigError, MapError, ltl.LTLSyntaxError, harness.ShortfallError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
