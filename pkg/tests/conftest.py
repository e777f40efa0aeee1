import random

import pytest
from hypothesis import settings, strategies as st

from auxtasks import ltl
from auxtasks.env import load_map

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

ATOMS = ("a", "b", "c")


def co_safe(atoms=ATOMS, max_depth=4):
    """Hypothesis strategy for co-safe formulas: negation only on atoms, no G."""
    leaves = st.one_of(
        st.sampled_from([ltl.Atom(p) for p in atoms]),
        st.sampled_from([ltl.Not(ltl.Atom(p)) for p in atoms]),
        st.just(ltl.TRUE),
    )

    def extend(children):
        return st.one_of(
            st.builds(ltl.Eventually, children),
            st.builds(ltl.Next, children),
            st.builds(ltl.And, children, children),
            st.builds(ltl.Or, children, children),
            st.builds(ltl.Until, children, children),
        )

    return st.recursive(leaves, extend, max_leaves=2 ** max_depth)


def random_co_safe(rng: random.Random, atoms=ATOMS, depth=4) -> ltl.Formula:
    """Seeded sampler over the same bounded grammar (depth counts operator levels)."""
    if depth == 0 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.1:
            return ltl.TRUE
        p = ltl.Atom(rng.choice(atoms))
        return ltl.Not(p) if r < 0.3 else p
    op = rng.choice(["F", "X", "&", "|", "U"])
    if op == "F":
        return ltl.Eventually(random_co_safe(rng, atoms, depth - 1))
    if op == "X":
        return ltl.Next(random_co_safe(rng, atoms, depth - 1))
    kind = {"&": ltl.And, "|": ltl.Or, "U": ltl.Until}[op]
    return kind(random_co_safe(rng, atoms, depth - 1), random_co_safe(rng, atoms, depth - 1))


def depth(f: ltl.Formula) -> int:
    kids = [getattr(f, n) for n in ("child", "left", "right") if hasattr(f, n)]
    return 1 + max(map(depth, kids)) if kids else 0


def progression_index(f: ltl.Formula, trace):
    """First index at which iterated progression reaches true, else None."""
    g = ltl.canonicalize(f)
    for i, sigma in enumerate(trace):
        g = ltl.progress(g, sigma)
        if g == ltl.TRUE:
            return i
        if g == ltl.FALSE:
            return None
    return None


LINE_MAP = "S.a"


@pytest.fixture(scope="session")
def line_map():
    return load_map(LINE_MAP, {"a": ("apple", "Kitchen")})


@pytest.fixture(scope="session")
def grid5():
    text = "\n".join([
        "S....",
        ".XX..",
        "..a..",
        ".X.X.",
        "b...c",
    ])
    return load_map(text, {"a": ("apple", "Kitchen"), "b": ("bed", "Bedroom"), "c": ("cup", "Kitchen")})


SEVEN = "\n".join([
    "S..a...",
    ".......",
    "..X.X..",
    "b.....c",
    "..X.X..",
    ".......",
    "d..e..f",
])


@pytest.fixture(scope="session")
def grid7():
    legend = {
        "a": ("apple", "Kitchen"), "b": ("bed", "Bedroom"), "c": ("cup", "Kitchen"),
        "d": ("desk", "Bedroom"), "e": ("egg", "Kitchen"), "f": ("fork", "Kitchen"),
    }
    return load_map(SEVEN, legend)
