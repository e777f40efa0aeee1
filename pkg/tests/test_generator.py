import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from auxtasks import ltl
from auxtasks.embeddings import EMBEDDING_DIM, EmbeddingStore, default_fixture_path, kmeans
from auxtasks.generator import (
    SelectionState,
    TemplateNode,
    build_template,
    generate_auxiliary_tasks,
    sample_random_tasks,
    select_object,
    ucb_score,
)

FOOD_PREP = "F (C & F (P & F (I & F (F & F (H & F Y)))))"


def unit(*coords):
    v = np.zeros(EMBEDDING_DIM)
    v[: len(coords)] = coords
    return v


@pytest.fixture(scope="module")
def homegrid_store():
    return EmbeddingStore.load(default_fixture_path())


# --- templates ---------------------------------------------------------------

def test_template_nodes(homegrid_store):
    tpl = build_template(ltl.parse("F (C & F F)"), homegrid_store)
    kinds = [d["kind"] for _, d in tpl.graph.nodes(data=True)]
    assert kinds.count("embedding") == 2
    assert len(tpl.operator_nodes) == 3
    assert [n.proposition for n in tpl.nodes] == ["C", "F"]
    assert np.array_equal(tpl.nodes[0].vector, homegrid_store.vector("C"))


def test_template_missing_embedding(homegrid_store):
    with pytest.raises(KeyError, match="zz"):
        build_template(ltl.parse("F zz"), homegrid_store)


# --- UCB selection -------------------------------------------------------------

def test_ucb_hand_example():
    a = ucb_score(0.9, 10, 11, 0.5)
    b = ucb_score(0.7, 1, 11, 0.5)
    assert a == pytest.approx(0.9 + 0.5 * math.sqrt(math.log(11) / 10), abs=1e-12)
    assert a == pytest.approx(1.145, abs=1e-3)
    assert b == pytest.approx(1.474, abs=1e-3)
    assert b > a


def test_unvisited_candidate_has_infinite_bonus():
    assert ucb_score(-1.0, 0, 5, 0.1) == math.inf
    assert ucb_score(0.3, 0, 5, 0.0) == 0.3


def _node_and_store(sims):
    store = EmbeddingStore.from_vectors(
        {f"o{i}": unit(s, math.sqrt(1 - s * s)) for i, s in enumerate(sims)}
    )
    return TemplateNode(0, "src", unit(1.0)), store


def test_select_hand_example():
    node, store = _node_and_store([0.9, 0.7])
    state = SelectionState(c=0.5, total_trials=11, counts={"o0": 10, "o1": 1})
    assert select_object(node, ["o0", "o1"], state, store) == "o1"
    assert state.counts == {"o0": 10, "o1": 2}
    assert state.total_trials == 12


@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=8, unique=True), st.integers(1, 50))
def test_c_zero_is_cosine_argmax(sims, trials):
    node, store = _node_and_store(sims)
    counts = {f"o{i}": i for i in range(len(sims))}
    state = SelectionState(c=0.0, total_trials=trials, counts=dict(counts))
    got = select_object(node, list(store.propositions), state, store)
    assert got == f"o{int(np.argmax(sims))}"


def test_c_zero_repeats_the_same_choice():
    node, store = _node_and_store([0.2, 0.8, 0.5])
    state = SelectionState(c=0.0)
    picks = {select_object(node, ["o0", "o1", "o2"], state, store) for _ in range(10)}
    assert picks == {"o1"}
    assert state.total_trials == 11


def test_positive_c_visits_every_candidate_first():
    node, store = _node_and_store([0.2, 0.8, 0.5])
    state = SelectionState(c=0.5)
    picks = [select_object(node, ["o0", "o1", "o2"], state, store) for _ in range(3)]
    assert sorted(picks) == ["o0", "o1", "o2"]


def test_selection_errors():
    node, store = _node_and_store([0.5])
    with pytest.raises(ValueError):
        select_object(node, [], SelectionState(), store)
    with pytest.raises(ValueError):
        SelectionState(c=-0.1)


# --- generation ------------------------------------------------------------

def test_food_prep_generation(homegrid_store):
    given_task = ltl.parse(FOOD_PREP)
    model = kmeans(homegrid_store, 4, seed=0)
    out = generate_auxiliary_tasks(build_template(given_task, homegrid_store), model, homegrid_store, 20, SelectionState(), seed=0)
    assert len(out.tasks) == 20 and not out.shortfall
    canon = {ltl.canonicalize(t) for t in out.tasks}
    assert len(canon) == 20
    assert ltl.canonicalize(given_task) not in canon
    skeleton = ltl.to_string(given_task)
    for t, prov in zip(out.tasks, out.provenance):
        assert len(ltl.propositions(t)) == 6
        # same operators in the same places
        names = [chosen for _, (_, chosen) in sorted(prov.items())]
        assert ltl.substitute_atoms(t, list("CPIFHY")) == given_task
        assert ltl.substitute_atoms(given_task, names) == t
    assert skeleton == FOOD_PREP


def test_generation_is_deterministic(homegrid_store):
    tpl = build_template(ltl.parse(FOOD_PREP), homegrid_store)
    model = kmeans(homegrid_store, 4, seed=0)
    a = generate_auxiliary_tasks(tpl, model, homegrid_store, 20, SelectionState(), seed=7)
    b = generate_auxiliary_tasks(tpl, model, homegrid_store, 20, SelectionState(), seed=7)
    assert a.tasks == b.tasks


def test_single_swap_with_c_zero():
    store = EmbeddingStore.from_vectors({"a": unit(1.0), "b": unit(0.9, 0.1)})
    model = kmeans(store, 1, seed=0)
    tpl = build_template(ltl.parse("F a"), store)
    out = generate_auxiliary_tasks(tpl, model, store, 1, SelectionState(c=0.0))
    assert out.tasks == [ltl.parse("F b")]


def test_singleton_pools_give_shortfall(caplog):
    store = EmbeddingStore.from_vectors({"a": unit(1.0)})
    model = kmeans(store, 1, seed=0)
    out = generate_auxiliary_tasks(build_template(ltl.parse("F a"), store), model, store, 3, SelectionState())
    assert out.tasks == [] and out.shortfall
    assert "0 of 3" in caplog.text


def test_x_must_be_positive(homegrid_store):
    model = kmeans(homegrid_store, 4, seed=0)
    with pytest.raises(ValueError):
        generate_auxiliary_tasks(build_template(ltl.parse("F C"), homegrid_store), model, homegrid_store, 0, SelectionState())


def test_sidecar_records_substitutions(homegrid_store):
    model = kmeans(homegrid_store, 4, seed=0)
    out = generate_auxiliary_tasks(build_template(ltl.parse("F (C & F F)"), homegrid_store), model, homegrid_store, 2, SelectionState())
    side = out.sidecar(seed=3)
    assert side["seed"] == 3 and len(side["tasks"]) == 2
    assert all({v["source"] for v in sub.values()} == {"C", "F"} for sub in side["substitutions"])
    assert out.lines().count("\n") == 2


# --- random tasks --------------------------------------------------------------

def test_random_tasks():
    out = sample_random_tasks("abcdefg", 3, 10, seed=1)
    assert len(out.tasks) == len(set(out.tasks)) == 10
    for t in out.tasks:
        props = ltl.propositions(t)
        assert len(props) == 3 and props <= set("abcdefg")
    assert sample_random_tasks("abcdefg", 3, 10, seed=1).tasks == out.tasks


def test_random_tasks_errors():
    with pytest.raises(ValueError, match="insufficient"):
        sample_random_tasks("ab", 3, 1, seed=0)
    with pytest.raises(ValueError, match="insufficient"):
        sample_random_tasks("ab", 2, 3, seed=0)
