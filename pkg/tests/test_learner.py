import dataclasses
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auxtasks import env, ltl
from auxtasks.env import Action, load_map
from auxtasks.learner import (
    BehaviorPolicy,
    InfeasibleTaskError,
    LearnerConfig,
    QBank,
    TransitionRecord,
    all_updates,
    choose_action,
    counterfactual_reward,
    evaluate,
    init_bank,
    normalized_return,
    optimal_steps,
    q_update,
    run_episode,
    train,
)

P = ltl.parse


@pytest.fixture
def row3():
    # one row: start, empty, apple
    return load_map("S.a", {"a": ("apple", "Kitchen")})


# --- update rule -----------------------------------------------------------

def test_update_hand_value(row3):
    bank = init_bank([P("F a")], row3)
    t = TransitionRecord((1, 0), Action.Right, (2, 0), frozenset({"a"}))
    q_update(bank, P("F a"), t, LearnerConfig(alpha=0.5, gamma=0.9))
    assert bank.q(P("F a"), (1, 0), Action.Right) == pytest.approx(0.5)


def test_update_bootstraps_from_successor(row3):
    bank = init_bank([P("F a")], row3)
    bank.values[bank.row(P("F a")), row3.cell_index[(1, 0)], :] = [0.0, 0.0, 0.0, 0.8]
    t = TransitionRecord((0, 0), Action.Right, (1, 0), frozenset())
    q_update(bank, P("F a"), t, LearnerConfig(alpha=0.5, gamma=0.9))
    assert bank.q(P("F a"), (0, 0), Action.Right) == pytest.approx(0.5 * 0.9 * 0.8)


def test_alpha_one_is_target(row3):
    bank = init_bank([P("F a")], row3)
    t = TransitionRecord((1, 0), Action.Right, (2, 0), frozenset({"a"}))
    q_update(bank, P("F a"), t, LearnerConfig(alpha=1.0))
    assert bank.q(P("F a"), (1, 0), Action.Right) == 1.0


def test_alpha_zero_rejected():
    with pytest.raises(ValueError):
        LearnerConfig(alpha=0.0)


def test_counterfactual_reward():
    assert counterfactual_reward(P("F b"), {"b"}) == (1, ltl.TRUE)
    assert counterfactual_reward(P("F (a & F b)"), {"a"}) == (0, P("F b"))
    assert counterfactual_reward(P("F (a & F b)"), {"c"}) == (0, P("F (a & F b)"))


def test_init_bank_sizes(grid7):
    assert len(init_bank([P("F (a & F b)"), P("F (c & F b)")], grid7)) == 3
    assert len(init_bank([P("F a")], grid7)) == 1
    assert len(init_bank([P("F (a & F (b & F (c & F (d & F (e & F f)))))")], grid7)) == 6


def test_all_updates_touch_every_table(grid7):
    tasks = [P("F (a & F b)"), P("F (c & F b)")]
    bank = init_bank(tasks, grid7)
    cfg = LearnerConfig(alpha=0.5, gamma=0.9)
    # step onto b from its left neighbour
    t = TransitionRecord((0, 2), Action.Down, (0, 3), frozenset({"b"}))
    ref = bank.copy()
    for f in ref.keys():
        q_update(ref, f, t, cfg)
    all_updates(bank, t, cfg)
    assert np.array_equal(bank.values, ref.values)
    assert bank.q(P("F b"), (0, 2), Action.Down) == 0.5
    assert bank.q(P("F (a & F b)"), (0, 2), Action.Down) == 0.0


@given(st.lists(st.tuples(st.sampled_from(range(49)), st.sampled_from(list(Action))), max_size=60))
@settings(max_examples=30)
def test_vectorized_updates_match_single_updates(grid7, moves):
    tasks = [P("F (a & F b)"), P("F (c & F (b & F d))"), P("F e")]
    fast = init_bank(tasks, grid7)
    slow = fast.copy()
    cfg = LearnerConfig()
    cells = grid7.cells
    for ci, a in moves:
        s = cells[ci % len(cells)]
        s2 = env.step(grid7, env.EnvState(s), a).agent_cell
        t = TransitionRecord(s, a, s2, env.label(grid7, env.EnvState(s2)))
        all_updates(fast, t, cfg)
        for f in slow.keys():
            q_update(slow, f, t, cfg)
    assert np.allclose(fast.values, slow.values, atol=1e-12)


# --- action selection --------------------------------------------------------

def test_greedy_picks_argmax(row3):
    bank = init_bank([P("F a")], row3)
    bank.values[0, 0] = [0.1, 0.2, 0.0, 0.7]
    rng = np.random.default_rng(0)
    acts = {choose_action(bank, P("F a"), (0, 0), BehaviorPolicy.EpsilonGreedyOnGivenTask, 0.0, rng) for _ in range(50)}
    assert acts == {Action.Right}


def test_epsilon_one_is_uniform(row3):
    bank = init_bank([P("F a")], row3)
    bank.values[0, 0] = [0.1, 0.2, 0.0, 0.7]
    rng = np.random.default_rng(1)
    n = 4000
    counts = Counter(choose_action(bank, P("F a"), (0, 0), BehaviorPolicy.EpsilonGreedyOnGivenTask, 1.0, rng) for _ in range(n))
    for a in Action:
        assert abs(counts[a] / n - 0.25) < 0.03


def test_ties_broken_uniformly(row3):
    bank = init_bank([P("F a")], row3)
    rng = np.random.default_rng(2)
    n = 4000
    counts = Counter(choose_action(bank, P("F a"), (0, 0), BehaviorPolicy.EpsilonGreedyOnGivenTask, 0.0, rng) for _ in range(n))
    assert set(counts) == set(Action)
    assert all(abs(c / n - 0.25) < 0.03 for c in counts.values())


# --- episodes ------------------------------------------------------------------

def test_episode_step_cap():
    grid = load_map("S....\n.....\n....a", {"a": ("apple", "Kitchen")})
    bank = init_bank([P("F a")], grid)
    cfg = LearnerConfig(max_steps_per_episode=5)
    res = run_episode(grid, bank, P("F a"), BehaviorPolicy.UniformRandom, cfg, np.random.default_rng(0))
    assert res.steps <= 5 and res.episode_return == 0.0


def test_episode_return_is_discounted(row3):
    bank = init_bank([P("F a")], row3)
    bank.values[0, :, Action.Right] = 1.0
    cfg = LearnerConfig(epsilon=0.0, gamma=0.9)
    res = run_episode(row3, bank, P("F a"), BehaviorPolicy.EpsilonGreedyOnGivenTask, cfg, np.random.default_rng(0))
    assert (res.steps, res.satisfied_at) == (2, 2)
    assert res.episode_return == pytest.approx(0.81)


def test_uniform_policy_ignores_bank(grid7):
    cfg = LearnerConfig(max_steps_per_episode=40)
    tasks = [P("F (a & F b)")]
    b1, b2 = init_bank(tasks, grid7), init_bank(tasks, grid7)
    b2.values[:] = np.random.default_rng(5).random(b2.values.shape)
    b2.values[b2.true_row] = b2.values[b2.false_row] = 0
    r1 = run_episode(grid7, b1, tasks[0], BehaviorPolicy.UniformRandom, cfg, np.random.default_rng(9), record=True)
    r2 = run_episode(grid7, b2, tasks[0], BehaviorPolicy.UniformRandom, cfg, np.random.default_rng(9), record=True)
    assert r1.transitions == r2.transitions


def test_heatmap_counts_every_step(grid7):
    heat = env.new_heatmap(grid7)
    bank = init_bank([P("F f")], grid7)
    res = run_episode(grid7, bank, P("F f"), BehaviorPolicy.UniformRandom, LearnerConfig(max_steps_per_episode=30), np.random.default_rng(3), heat)
    assert heat.sum() == res.steps
    assert heat[0, 0] >= 1


# --- evaluation ------------------------------------------------------------

def test_evaluate_does_not_touch_bank(grid7):
    bank = init_bank([P("F (a & F b)")], grid7)
    bank.values[:] = np.random.default_rng(0).random(bank.values.shape)
    before = bank.values.copy()
    evaluate(bank, P("F (a & F b)"), grid7, LearnerConfig())
    assert np.array_equal(before, bank.values)


def test_evaluate_untrained_fails(grid7):
    res = evaluate(init_bank([P("F f")], grid7), P("F f"), grid7, LearnerConfig())
    assert not res.success and res.discounted_return == 0.0


def test_optimal_steps(row3, grid5):
    assert optimal_steps(P("F a"), row3) == 2
    assert optimal_steps(P("F a"), grid5) == 4
    assert optimal_steps(P("F (a & F b)"), grid5) == 4 + 4
    with pytest.raises(InfeasibleTaskError):
        optimal_steps(P("F zz"), grid5)


def test_normalized_return(row3):
    assert normalized_return(0.81, P("F a"), row3, 0.9) == pytest.approx(1.0)
    assert normalized_return(0.0, P("F a"), row3, 0.9) == 0.0
    with pytest.raises(InfeasibleTaskError):
        normalized_return(0.5, P("F q"), row3, 0.9)


def test_training_reaches_optimum(grid5):
    cfg = LearnerConfig(episodes=200, eval_period=50, max_steps_per_episode=100)
    task = P("F (a & F b)")
    bank, curves, heat, steps = train(grid5, task, [P("F c")], BehaviorPolicy.EpsilonGreedyOnGivenTask, cfg, np.random.default_rng(0))
    assert curves.episodes == [50, 100, 150, 200]
    assert curves.given_norm_return[-1] == pytest.approx(1.0)
    assert heat.sum() == steps


@given(st.integers(0, 2**31))
@settings(max_examples=10)
def test_values_bounded_by_distance(grid5, seed):
    task = P("F (a & F b)")
    cfg = LearnerConfig(episodes=30, max_steps_per_episode=60, eval_period=30)
    bank, *_ = train(grid5, task, [], BehaviorPolicy.UniformRandom, cfg, np.random.default_rng(seed))
    for f in bank.keys():
        for cell in grid5.cells:
            for a in Action:
                nxt = env.step(grid5, env.EnvState(cell), a).agent_cell
                d = 1 + (0 if ltl.progress(f, env.label(grid5, env.EnvState(nxt))) == ltl.TRUE
                         else _steps_from(grid5, nxt, ltl.progress(f, env.label(grid5, env.EnvState(nxt)))))
                assert bank.q(f, cell, a) <= cfg.gamma ** (d - 1) + 1e-12


def _steps_from(grid, cell, f):
    return optimal_steps(f, dataclasses.replace(grid, start_cell=cell))


def test_rewards_agree_with_direct_semantics(grid7):
    task = P("F (a & F (c & F e))")
    bank = init_bank([task], grid7)
    res = run_episode(grid7, bank, task, BehaviorPolicy.UniformRandom, LearnerConfig(max_steps_per_episode=400), np.random.default_rng(4), record=True)
    trace = [t.next_label for t in res.transitions]
    ok, idx = ltl.satisfies(trace, task)
    assert ok == (res.satisfied_at is not None)
    if ok:
        assert idx + 1 == res.satisfied_at


def test_qbank_json_round_trip(grid7):
    bank = init_bank([P("F (a & F b)"), P("F c")], grid7)
    bank.values[: len(bank)] = np.random.default_rng(0).random((len(bank), len(grid7.cells), 4))
    again = QBank.from_json(json.loads(bank.dumps()), grid7)
    assert again.keys() == bank.keys()
    assert np.array_equal(again.values, bank.values)
