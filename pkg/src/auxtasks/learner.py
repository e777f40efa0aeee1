"""Tabular multitask Q-learning with counterfactual updates over a formula bank.

One value table per formula in the progression closure of the task set.  The
behavior policy follows only the given task, but every observed transition
updates every table with the reward that table's formula would have produced.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import ltl
from .env import ACTIONS, Action, EnvState, GridMap, new_heatmap
from .ltl import FALSE, TRUE, Formula


class InfeasibleTaskError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    alpha: float = 0.5
    gamma: float = 0.95
    epsilon: float = 0.1
    max_steps_per_episode: int = 500
    episodes: int = 2000
    eval_period: int = 25

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.max_steps_per_episode < 1 or self.episodes < 0 or self.eval_period < 1:
            raise ValueError("max_steps_per_episode and eval_period must be >= 1, episodes >= 0")


class BehaviorPolicy(enum.Enum):
    EpsilonGreedyOnGivenTask = "epsilon_greedy"
    UniformRandom = "uniform_random"


@dataclass(frozen=True)
class TransitionRecord:
    state: tuple[int, int]
    action: Action
    next_state: tuple[int, int]
    next_label: frozenset[str]


class QBank:
    """Map from canonical formula to a (cell, action) value table.

    Tables are stored densely in one array ``values[formula, cell, action]``
    with two extra all-zero rows standing in for the absorbing formulas
    ``true`` and ``false``.
    """

    def __init__(self, formulas: Iterable[Formula], grid: GridMap):
        self.formulas: list[Formula] = sorted(set(formulas), key=ltl.to_string)
        self.index = {f: i for i, f in enumerate(self.formulas)}
        self.grid = grid
        n = len(self.formulas)
        self.values = np.zeros((n + 2, len(grid.cells), len(ACTIONS)))
        self.true_row, self.false_row = n, n + 1
        self._dynamics: Optional[_Dynamics] = None

    def __len__(self) -> int:
        return len(self.formulas)

    def __contains__(self, f: Formula) -> bool:
        return f in self.index

    def keys(self) -> list[Formula]:
        return list(self.formulas)

    def row(self, f: Formula) -> int:
        if isinstance(f, ltl.TrueConst):
            return self.true_row
        if isinstance(f, ltl.FalseConst):
            return self.false_row
        return self.index[f]

    def q(self, f: Formula, cell, action: Action) -> float:
        return float(self.values[self.row(f), self.grid.cell_index[cell], int(action)])

    def table(self, f: Formula) -> np.ndarray:
        """Read-only view ``[cell, action]`` of one formula's values."""
        view = self.values[self.row(f)].view()
        view.setflags(write=False)
        return view

    def copy(self) -> "QBank":
        other = QBank.__new__(QBank)
        other.formulas = list(self.formulas)
        other.index = dict(self.index)
        other.grid = self.grid
        other.values = self.values.copy()
        other.true_row, other.false_row = self.true_row, self.false_row
        other._dynamics = self._dynamics
        return other

    @property
    def dynamics(self) -> "_Dynamics":
        if self._dynamics is None:
            self._dynamics = _Dynamics(self)
        return self._dynamics

    def to_json(self) -> dict:
        """Formula string -> ``[[x, y, action, q], ...]`` for non-zero entries."""
        out = {}
        for f in self.formulas:
            table = self.values[self.index[f]]
            entries = []
            for ci, a in zip(*np.nonzero(table)):
                x, y = self.grid.cells[ci]
                entries.append([x, y, Action(int(a)).name, float(table[ci, a])])
            out[ltl.to_string(f)] = entries
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, data: dict, grid: GridMap) -> "QBank":
        bank = cls([ltl.parse(k) for k in data], grid)
        for key, entries in data.items():
            row = bank.index[ltl.parse(key)]
            for x, y, a, q in entries:
                bank.values[row, grid.cell_index[(x, y)], Action[a]] = q
        return bank


class _Dynamics:
    """Per-cell progression tables for a bank on its grid.

    ``next_row[label, f]`` is the row of ``progress(f, label)`` and
    ``reward[label, f]`` is 1 where that progression is ``true``.
    """

    def __init__(self, bank: QBank):
        grid = bank.grid
        labels = [frozenset()] + [frozenset([o.proposition]) for o in grid.objects]
        self.labels = labels
        label_id = {lab: i for i, lab in enumerate(labels)}
        self.cell_label = np.array(
            [label_id[_cell_label(grid, c)] for c in grid.cells], dtype=np.int64
        )
        n = len(bank.formulas)
        next_row = np.empty((len(labels), n), dtype=np.int64)
        reward = np.zeros((len(labels), n))
        for li, lab in enumerate(labels):
            for fi, f in enumerate(bank.formulas):
                g = ltl.progress(f, lab)
                if g not in bank.index and not isinstance(g, (ltl.TrueConst, ltl.FalseConst)):
                    raise KeyError(f"progression {ltl.to_string(g)} of {ltl.to_string(f)} missing from bank")
                next_row[li, fi] = bank.row(g)
                reward[li, fi] = 1.0 if g == TRUE else 0.0
        self.next_row = next_row
        self.reward = reward
        self.next_cell = grid.next_cell


def _cell_label(grid: GridMap, cell) -> frozenset[str]:
    obj = grid.object_at(cell)
    return frozenset() if obj is None else frozenset([obj.proposition])


def init_bank(tasks: Iterable[Formula], grid: GridMap) -> QBank:
    return QBank(ltl.progression_closure(tasks), grid)


def counterfactual_reward(phi: Formula, next_label: Iterable[str]) -> tuple[int, Formula]:
    nxt = ltl.progress(phi, next_label)
    return (1 if nxt == TRUE else 0), nxt


def q_update(bank: QBank, phi: Formula, t: TransitionRecord, config: LearnerConfig) -> QBank:
    r, nxt = counterfactual_reward(phi, t.next_label)
    cells = bank.grid.cell_index
    s, s2, a = cells[t.state], cells[t.next_state], int(t.action)
    boot = 0.0 if nxt in (TRUE, FALSE) else float(bank.values[bank.row(nxt), s2].max())
    q = bank.values[bank.row(phi), s, a]
    bank.values[bank.row(phi), s, a] = q + config.alpha * (r + config.gamma * boot - q)
    return bank


def _all_updates_idx(values, dyn: _Dynamics, s: int, a: int, s2: int, alpha: float, gamma: float) -> None:
    lab = dyn.cell_label[s2]
    nxt = dyn.next_row[lab]
    n = nxt.shape[0]
    boot = values[nxt, s2].max(axis=1)
    col = values[:n, s, a]
    values[:n, s, a] = col + alpha * (dyn.reward[lab] + gamma * boot - col)


def all_updates(bank: QBank, t: TransitionRecord, config: LearnerConfig) -> QBank:
    """Apply the counterfactual update to every table for one transition."""
    cells = bank.grid.cell_index
    _all_updates_idx(
        bank.values, bank.dynamics, cells[t.state], int(t.action), cells[t.next_state],
        config.alpha, config.gamma,
    )
    return bank


def _greedy_tiebreak(qs: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(qs == qs.max())
    return int(best[0]) if best.size == 1 else int(best[rng.integers(best.size)])


def choose_action(
    bank: QBank,
    current_task_form: Formula,
    s,
    policy: BehaviorPolicy,
    epsilon: float,
    rng: np.random.Generator,
) -> Action:
    if policy is BehaviorPolicy.UniformRandom:
        return Action(int(rng.integers(len(ACTIONS))))
    if rng.random() < epsilon:
        return Action(int(rng.integers(len(ACTIONS))))
    qs = bank.values[bank.row(current_task_form), bank.grid.cell_index[s]]
    return Action(_greedy_tiebreak(qs, rng))


@dataclass
class EpisodeResult:
    steps: int
    episode_return: float
    satisfied_at: Optional[int]
    transitions: list = field(default_factory=list)


def run_episode(
    grid: GridMap,
    bank: QBank,
    given: Formula,
    policy: BehaviorPolicy,
    config: LearnerConfig,
    rng: np.random.Generator,
    heatmap: Optional[np.ndarray] = None,
    record: bool = False,
) -> EpisodeResult:
    """Run one training episode, updating every table on every step.

    ``heatmap`` (indexed ``[y, x]``) receives one count per step at the cell
    the action was taken from.  The return is ``gamma**n`` when the given task
    is first satisfied at step ``n``, else 0.
    """
    dyn = bank.dynamics
    values = bank.values
    cells = grid.cells
    alpha, gamma, eps = config.alpha, config.gamma, config.epsilon
    form = ltl.canonicalize(given)
    row = bank.row(form)
    s = grid.cell_index[grid.start_cell]
    greedy = policy is BehaviorPolicy.EpsilonGreedyOnGivenTask
    transitions = []
    for t in range(1, config.max_steps_per_episode + 1):
        if not greedy or rng.random() < eps:
            a = int(rng.integers(4))
        else:
            a = _greedy_tiebreak(values[row, s], rng)
        s2 = int(dyn.next_cell[s, a])
        if heatmap is not None:
            x, y = cells[s]
            heatmap[y, x] += 1
        _all_updates_idx(values, dyn, s, a, s2, alpha, gamma)
        lab = dyn.cell_label[s2]
        if record:
            transitions.append(TransitionRecord(cells[s], Action(a), cells[s2], dyn.labels[lab]))
        row = int(dyn.next_row[lab, row])
        s = s2
        if row == bank.true_row:
            return EpisodeResult(t, gamma ** t, t, transitions)
        if row == bank.false_row:
            return EpisodeResult(t, 0.0, None, transitions)
    return EpisodeResult(config.max_steps_per_episode, 0.0, None, transitions)


@dataclass(frozen=True)
class Evaluation:
    success: bool
    discounted_return: float
    steps: int


def evaluate(bank: QBank, task: Formula, grid: GridMap, config: LearnerConfig) -> Evaluation:
    """Greedy rollout (ties go to the first action in Up, Down, Left, Right).

    Never updates the bank.  A repeated (cell, formula) pair means the
    deterministic rollout is cycling, so it stops early as a failure.
    """
    dyn = bank.dynamics
    values = bank.values
    row = bank.row(ltl.canonicalize(task))
    s = grid.cell_index[grid.start_cell]
    seen = set()
    for t in range(1, config.max_steps_per_episode + 1):
        if (s, row) in seen:
            break
        seen.add((s, row))
        a = int(np.argmax(values[row, s]))
        s = int(dyn.next_cell[s, a])
        row = int(dyn.next_row[dyn.cell_label[s], row])
        if row == bank.true_row:
            return Evaluation(True, config.gamma ** t, t)
        if row == bank.false_row:
            break
    return Evaluation(False, 0.0, config.max_steps_per_episode)


def optimal_steps(task: Formula, grid: GridMap) -> int:
    """Fewest steps from the start cell that satisfy ``task`` (BFS over cell x formula)."""
    from .env import _move

    start = (grid.start_cell, ltl.canonicalize(task))
    if start[1] == TRUE:
        return 0
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cell, f = queue.popleft()
        for a in ACTIONS:
            c2 = _move(grid, cell, a)
            f2 = ltl.progress(f, _cell_label(grid, c2))
            if f2 == TRUE:
                return dist[(cell, f)] + 1
            if f2 == FALSE or (c2, f2) in dist:
                continue
            dist[(c2, f2)] = dist[(cell, f)] + 1
            queue.append((c2, f2))
    raise InfeasibleTaskError(f"task {ltl.to_string(task)} cannot be satisfied on this map")


def normalized_return(discounted_return: float, task: Formula, grid: GridMap, gamma: float) -> float:
    best = gamma ** optimal_steps(task, grid)
    return discounted_return / best if best > 0 else 0.0


@dataclass
class TrainingCurves:
    episodes: list[int] = field(default_factory=list)
    given_norm_return: list[float] = field(default_factory=list)
    aux_success_rate: list[float] = field(default_factory=list)


def train(
    grid: GridMap,
    given: Formula,
    auxiliary: Sequence[Formula],
    policy: BehaviorPolicy,
    config: LearnerConfig,
    rng: np.random.Generator,
    bank: Optional[QBank] = None,
) -> tuple[QBank, TrainingCurves, np.ndarray, int]:
    """Learn the given task and all auxiliary tasks from one behavior stream.

    Returns the bank, evaluation curves (one point every ``eval_period``
    episodes), the behavior heatmap and the total number of behavior steps.
    """
    if bank is None:
        bank = init_bank([given, *auxiliary], grid)
    best_given = config.gamma ** optimal_steps(given, grid)
    heatmap = new_heatmap(grid)
    curves = TrainingCurves()
    total_steps = 0
    for ep in range(1, config.episodes + 1):
        total_steps += run_episode(grid, bank, given, policy, config, rng, heatmap).steps
        if ep % config.eval_period == 0:
            g = evaluate(bank, given, grid, config)
            successes = [evaluate(bank, t, grid, config).success for t in auxiliary]
            curves.episodes.append(ep)
            curves.given_norm_return.append(g.discounted_return / best_given)
            curves.aux_success_rate.append(float(np.mean(successes)) if successes else 0.0)
    return bank, curves, heatmap, total_steps
