"""Three-condition experiment runner, seed aggregation and result files.

Every run draws from named random streams (``action``, ``kmeans``,
``task-sampling``, ``generation``) derived from its master seed, so changing
how one stage consumes randomness never shifts another stage.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import ltl
from .config import CONDITIONS, ConfigError, ExperimentConfig
from .embeddings import (
    EmbeddingStore,
    ProviderError,
    RemoteDescriptionProvider,
    RemoteEmbeddingProvider,
    default_fixture_path,
    describe_objects,
    embed,
    kmeans,
)
from .env import GridMap, default_map_path, heatmap_to_csv, load_map_file, new_heatmap
from .generator import (
    AuxiliaryTaskSet,
    SelectionState,
    build_template,
    generate_auxiliary_tasks,
    sample_random_tasks,
)
from .learner import BehaviorPolicy, QBank, TrainingCurves, optimal_steps, train

CURVES_HEADER = ("condition", "seed", "episode", "given_norm_return", "aux_success_rate")
STREAMS = ("action", "kmeans", "task-sampling", "generation")


class ShortfallError(RuntimeError):
    pass


def stream_seed(master_seed: int, name: str) -> int:
    """A 63-bit seed for the named stream; stable across platforms and runs."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    state = np.random.SeedSequence([master_seed, tag]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


def stream(master_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, name))


@dataclass
class RunResult:
    condition: str
    seed: int
    curves: TrainingCurves
    heatmap: np.ndarray
    tasks: AuxiliaryTaskSet
    total_steps: int
    duration: float = 0.0
    bank: Optional[QBank] = field(default=None, repr=False)
    sidecar_extra: dict = field(default_factory=dict)


@dataclass
class AggregateSeries:
    episodes: list
    given_mean: np.ndarray
    given_std: np.ndarray
    aux_mean: np.ndarray
    aux_std: np.ndarray


# ---------------------------------------------------------------------------
# pipeline pieces


def load_grid(cfg: ExperimentConfig) -> GridMap:
    return load_map_file(cfg.map_path)


def load_store(cfg: ExperimentConfig, grid: GridMap, client=None) -> EmbeddingStore:
    """Embeddings for every object on the map.

    Offline mode replays the fixture (bundled unless ``cache_path`` is set).
    Remote mode reuses ``cache_path`` when it already covers the map and
    otherwise queries the providers and writes the cache.
    """
    props = grid.propositions
    if cfg.provider.mode == "offline":
        return EmbeddingStore.load(cfg.cache_path or default_fixture_path(), props)
    if cfg.cache_path and Path(cfg.cache_path).is_file():
        try:
            return EmbeddingStore.load(cfg.cache_path, props)
        except (ProviderError, KeyError, ValueError):
            pass
    return fetch_store(cfg, grid, client=client, cache_path=cfg.cache_path)


def fetch_store(cfg: ExperimentConfig, grid: GridMap, client=None, cache_path=None) -> EmbeddingStore:
    """Query the remote description and embedding providers for every object."""
    kw = {"token_env": cfg.provider.token_env, "client": client}
    describer = RemoteDescriptionProvider(cfg.provider.describe_url, cfg.provider.prompt_template, **kw)
    encoder = RemoteEmbeddingProvider(cfg.provider.embed_url, **kw)
    descs = describe_objects(grid.objects, describer)
    return embed(descs, encoder, cache_path=cache_path)


def auxiliary_tasks(
    cfg: ExperimentConfig, condition: str, seed: int, grid: GridMap, store: EmbeddingStore
) -> tuple[AuxiliaryTaskSet, dict]:
    given = ltl.parse(cfg.task)
    if condition == "RandomTasks":
        length = len(ltl.propositions(given))
        tasks = sample_random_tasks(grid.propositions, length, cfg.aux_count, stream_seed(seed, "task-sampling"))
        return tasks, {"seed": seed, "length": length}
    model = kmeans(store, cfg.k, stream_seed(seed, "kmeans"))
    state = SelectionState(c=cfg.ucb_c)
    tasks = generate_auxiliary_tasks(
        build_template(given, store), model, store, cfg.aux_count, state, seed=stream_seed(seed, "generation")
    )
    extra = {
        "seed": seed,
        "c": cfg.ucb_c,
        "k": cfg.k,
        "counts": dict(sorted(state.counts.items())),
        "total_trials": state.total_trials,
        "clusters": {p: c for p, c in sorted(model.assignment.items())},
    }
    return tasks, extra


def run_condition(
    cfg: ExperimentConfig,
    seed: int,
    condition: Optional[str] = None,
    grid: Optional[GridMap] = None,
    store: Optional[EmbeddingStore] = None,
    keep_bank: bool = False,
) -> RunResult:
    condition = condition or cfg.condition
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}")
    t0 = time.perf_counter()
    grid = grid if grid is not None else load_grid(cfg)
    given = ltl.parse(cfg.task)
    optimal_steps(given, grid)  # infeasible tasks fail before any work
    if store is None and condition != "RandomTasks":
        store = load_store(cfg, grid)
    tasks, extra = auxiliary_tasks(cfg, condition, seed, grid, store)
    if len(tasks.tasks) < cfg.min_aux:
        raise ShortfallError(f"{condition} seed {seed}: {len(tasks.tasks)} auxiliary tasks, need {cfg.min_aux}")
    policy = BehaviorPolicy.UniformRandom if condition == "RandomBehavior" else BehaviorPolicy.EpsilonGreedyOnGivenTask
    bank, curves, heatmap, steps = train(
        grid, given, tasks.tasks, policy, cfg.learner(), stream(seed, "action")
    )
    return RunResult(
        condition, seed, curves, heatmap, tasks, steps,
        duration=time.perf_counter() - t0,
        bank=bank if keep_bank else None,
        sidecar_extra=extra,
    )


def _run_job(args) -> RunResult:
    cfg, seed, condition = args
    return run_condition(cfg, seed, condition)


def run_experiment(
    cfg: ExperimentConfig, conditions: Sequence[str] = CONDITIONS, workers: int = 1
) -> list[RunResult]:
    """All conditions x seeds.  Results do not depend on ``workers``."""
    jobs = [(cfg, seed, cond) for cond in conditions for seed in cfg.seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_job, jobs))
    grid = load_grid(cfg)
    optimal_steps(ltl.parse(cfg.task), grid)
    store = load_store(cfg, grid) if any(c != "RandomTasks" for c in conditions) else None
    return [run_condition(cfg, seed, cond, grid, store) for _, seed, cond in jobs]


def aggregate(results: Sequence[RunResult]) -> AggregateSeries:
    """Pointwise mean and population standard deviation over seeds."""
    if not results:
        raise ValueError("nothing to aggregate")
    lengths = {len(r.curves.episodes) for r in results}
    if len(lengths) != 1:
        raise ValueError(f"series length mismatch: {sorted(lengths)}")
    given = np.array([r.curves.given_norm_return for r in results], dtype=float)
    aux = np.array([r.curves.aux_success_rate for r in results], dtype=float)
    return AggregateSeries(
        list(results[0].curves.episodes),
        given.mean(axis=0), given.std(axis=0),
        aux.mean(axis=0), aux.std(axis=0),
    )


# ---------------------------------------------------------------------------
# output files


def _fmt(v: float) -> str:
    return repr(float(v))


def curves_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVES_HEADER)
    for r in results:
        c = r.curves
        for ep, g, a in zip(c.episodes, c.given_norm_return, c.aux_success_rate):
            w.writerow((r.condition, r.seed, ep, _fmt(g), _fmt(a)))
    return buf.getvalue()


def summary_csv(results: Sequence[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("condition", "episode", "given_mean", "given_std", "aux_mean", "aux_std", "n_seeds"))
    for cond in dict.fromkeys(r.condition for r in results):
        group = [r for r in results if r.condition == cond]
        agg = aggregate(group)
        for i, ep in enumerate(agg.episodes):
            w.writerow((cond, ep, _fmt(agg.given_mean[i]), _fmt(agg.given_std[i]),
                        _fmt(agg.aux_mean[i]), _fmt(agg.aux_std[i]), len(group)))
    return buf.getvalue()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "networkx", "scikit-learn", "httpx", "PyYAML"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def manifest(cfg: ExperimentConfig) -> dict:
    """Resolved config plus versions and input digests.  No timestamps."""
    map_path = Path(cfg.map_path) if cfg.map_path else default_map_path()
    inputs = {"map_sha256": _sha256(map_path)}
    fixture = Path(cfg.cache_path) if cfg.cache_path else (
        default_fixture_path() if cfg.provider.mode == "offline" else None
    )
    if fixture is not None and fixture.is_file():
        inputs["embeddings_sha256"] = _sha256(fixture)
    return {"config": cfg.to_dict(), "versions": versions(), "inputs": inputs}


def emit(results: Sequence[RunResult], out_dir, cfg: Optional[ExperimentConfig] = None) -> list[Path]:
    """Write curves, heatmaps, task lists (+ JSON sidecars) and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        p = out / name
        p.write_text(text)
        written.append(p)

    put("curves.csv", curves_csv(results))
    if results:
        put("summary.csv", summary_csv(results))
    for r in results:
        tag = f"{r.condition}_{r.seed}"
        put(f"heatmap_{tag}.csv", heatmap_to_csv(r.heatmap))
        put(f"tasks_{tag}.txt", r.tasks.lines())
        put(f"tasks_{tag}.json", r.tasks.dumps_sidecar(**r.sidecar_extra, condition=r.condition) + "\n")
    if cfg is not None:
        put("manifest.json", json.dumps(manifest(cfg), indent=2, sort_keys=True) + "\n")
    return written
