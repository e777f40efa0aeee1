"""Auxiliary task generation by object substitution over a task template.

A template is the task's syntax graph with every proposition node carrying
the embedding of its object.  New tasks keep the operator skeleton and swap
each proposition for an object from the same embedding cluster, chosen by a
UCB rule over cosine similarity.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from . import ltl
from .embeddings import ClusterModel, EmbeddingStore, cluster_members, cosine_similarity
from .ltl import Formula

log = logging.getLogger(__name__)

DEFAULT_UCB_C = 0.5
FALLBACK_NEIGHBOURS = 5
RETRY_FACTOR = 50


@dataclass(frozen=True, eq=False)
class TemplateNode:
    node_id: int
    proposition: str
    vector: np.ndarray


@dataclass(frozen=True, eq=False)
class TaskTemplate:
    source: Formula
    graph: nx.DiGraph
    nodes: tuple  # TemplateNode, in pre-order (matches substitute_atoms)

    @property
    def operator_nodes(self) -> list[int]:
        return [n for n, d in self.graph.nodes(data=True) if d["kind"] != "embedding"]


@dataclass
class SelectionState:
    c: float = DEFAULT_UCB_C
    total_trials: int = 1
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("exploration constant c must be >= 0")

    def count(self, p: str) -> int:
        return self.counts.get(p, 0)

    def record(self, p: str) -> None:
        self.counts[p] = self.count(p) + 1
        self.total_trials += 1


@dataclass
class AuxiliaryTaskSet:
    tasks: list = field(default_factory=list)
    provenance: list = field(default_factory=list)  # per task: {node_id: (source, chosen)}
    shortfall: bool = False
    attempts: int = 0

    def lines(self) -> str:
        return "".join(ltl.to_string(ltl.canonicalize(t)) + "\n" for t in self.tasks)

    def sidecar(self, **extra) -> dict:
        return {
            "tasks": [ltl.to_string(ltl.canonicalize(t)) for t in self.tasks],
            "substitutions": [
                {str(k): {"source": s, "chosen": c} for k, (s, c) in prov.items()} for prov in self.provenance
            ],
            "shortfall": self.shortfall,
            "attempts": self.attempts,
            **extra,
        }

    def dumps_sidecar(self, **extra) -> str:
        return json.dumps(self.sidecar(**extra), indent=2, sort_keys=True)


def build_template(f: Formula, store: EmbeddingStore) -> TaskTemplate:
    graph = ltl.ast_graph(f)
    nodes = []
    for nid, data in graph.nodes(data=True):
        if data["kind"] != "proposition":
            continue
        p = data["label"]
        if p not in store:
            raise KeyError(f"proposition {p!r} has no embedding")
        vec = store.vector(p)
        graph.nodes[nid].update(kind="embedding", proposition=p, embedding=vec)
        nodes.append(TemplateNode(nid, p, vec))
    return TaskTemplate(f, graph, tuple(sorted(nodes, key=lambda n: n.node_id)))


def ucb_score(similarity: float, count: int, total_trials: int, c: float) -> float:
    if c == 0:
        return similarity
    if count == 0:
        return math.inf
    return similarity + c * math.sqrt(math.log(total_trials) / count)


def select_object(
    node: TemplateNode,
    candidates: Sequence[str],
    state: SelectionState,
    store: EmbeddingStore,
    rng: Optional[np.random.Generator] = None,
) -> str:
    """Pick the candidate maximising similarity plus the UCB bonus; updates ``state``.

    Never-selected candidates get an infinite bonus when ``c > 0``.  Ties on
    score fall to the higher similarity, then to ``rng`` if given (only when
    ``c > 0``), else to proposition name.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    best_key, best = None, []
    for p in sorted(set(candidates)):
        sim = cosine_similarity(node.vector, store.vector(p))
        key = (ucb_score(sim, state.count(p), state.total_trials, state.c), sim)
        if best_key is None or key > best_key:
            best_key, best = key, [p]
        elif key == best_key:
            best.append(p)
    choice = best[0]
    if len(best) > 1 and rng is not None and state.c > 0:
        choice = best[int(rng.integers(len(best)))]
    state.record(choice)
    return choice


def _neighbours(node: TemplateNode, store: EmbeddingStore, n: int) -> list[str]:
    sims = [(-cosine_similarity(node.vector, store.vector(p)), p) for p in store.propositions]
    return [p for _, p in sorted(sims)[:n]]


def generate_auxiliary_tasks(
    template: TaskTemplate,
    model: ClusterModel,
    store: EmbeddingStore,
    x: int,
    state: SelectionState,
    seed: int = 0,
    retry_factor: int = RETRY_FACTOR,
) -> AuxiliaryTaskSet:
    """Generate up to ``x`` distinct tasks by swapping objects at every proposition node.

    Nodes are filled in pre-order.  A candidate is admissible when it is not
    already used in the task and some completion of the partial task is
    neither the source nor an earlier task.  Candidates come from the node's
    embedding cluster, or, when none of those is admissible, from the
    store-wide nearest neighbours of the node's embedding.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    rng = np.random.default_rng(seed)
    seen = {ltl.canonicalize(template.source)}
    nodes = template.nodes
    clusters = [cluster_members(model, n.proposition) for n in nodes]
    neighbours = [_neighbours(n, store, FALLBACK_NEIGHBOURS) for n in nodes]
    out = AuxiliaryTaskSet()

    def options(prefix: tuple, memo: dict) -> list[str]:
        i = len(prefix)
        for pool in (clusters[i], neighbours[i]):
            ok = [p for p in pool if p not in prefix and alive(prefix + (p,), memo)]
            if ok:
                return ok
        return []

    def alive(prefix: tuple, memo: dict) -> bool:
        if prefix not in memo:
            if len(prefix) == len(nodes):
                memo[prefix] = ltl.canonicalize(ltl.substitute_atoms(template.source, prefix)) not in seen
            else:
                memo[prefix] = any(True for _ in _lazy_options(prefix, memo))
        return memo[prefix]

    def _lazy_options(prefix: tuple, memo: dict):
        i = len(prefix)
        for pool in (clusters[i], neighbours[i]):
            for p in pool:
                if p not in prefix and alive(prefix + (p,), memo):
                    yield p
                    return

    while len(out.tasks) < x and out.attempts < retry_factor * x:
        out.attempts += 1
        memo: dict = {}
        chosen: tuple = ()
        for node in nodes:
            pool = options(chosen, memo)
            if not pool:
                break
            chosen += (select_object(node, pool, state, store, rng),)
        if len(chosen) != len(nodes):
            # nothing unseen is reachable any more
            break
        task = ltl.substitute_atoms(template.source, chosen)
        seen.add(ltl.canonicalize(task))
        out.tasks.append(task)
        out.provenance.append({n.node_id: (n.proposition, p) for n, p in zip(nodes, chosen)})
    if len(out.tasks) < x:
        out.shortfall = True
        log.warning("generated only %d of %d auxiliary tasks", len(out.tasks), x)
    return out


def sample_random_tasks(propositions: Iterable[str], length: int, x: int, seed: int) -> AuxiliaryTaskSet:
    """``x`` distinct sequential tasks over ``length`` distinct random propositions."""
    props = sorted(set(propositions))
    if length < 1 or len(props) < length:
        raise ValueError(f"insufficient propositions: need {length}, have {len(props)}")
    if math.perm(len(props), length) < x:
        raise ValueError(f"insufficient propositions for {x} distinct tasks of length {length}")
    rng = np.random.default_rng(seed)
    out = AuxiliaryTaskSet()
    seen = set()
    while len(out.tasks) < x:
        out.attempts += 1
        picks = [props[i] for i in rng.choice(len(props), size=length, replace=False)]
        task = ltl.sequential_task(picks)
        if task in seen:
            continue
        seen.add(task)
        out.tasks.append(task)
        out.provenance.append({i: (None, p) for i, p in enumerate(picks)})
    return out
