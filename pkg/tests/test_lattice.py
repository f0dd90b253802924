import itertools

import pytest
from hypothesis import given, strategies as st

from seccloud.lattice import (
    Lattice, LatticeError, OwnershipConflict, SecEnv, all_categories, category_join, category_leq, env_join,
    env_leq, env_leq_bound,
)

DIAMOND = Lattice.from_hasse(["bot", "a", "b", "top"], [("bot", "a"), ("bot", "b"), ("a", "top"), ("b", "top")])
LH = Lattice.chain("L", "H")
LMH = Lattice.chain("L", "M", "H")


def brute_join(lat: Lattice, a: str, b: str) -> str:
    ubs = [c for c in lat.elements if lat.leq(a, c) and lat.leq(b, c)]
    (least,) = [c for c in ubs if all(lat.leq(c, d) for d in ubs)]
    return least


def test_diamond_join_and_order():
    assert DIAMOND.join("a", "b") == "top"
    assert DIAMOND.join("bot", "a") == "a"
    assert not DIAMOND.leq("a", "b") and not DIAMOND.leq("b", "a")
    assert DIAMOND.bottom == "bot" and DIAMOND.top == "top"
    assert DIAMOND.height == 2


def test_chain_height_and_bounds():
    assert LH.height == 1 and LMH.height == 2
    assert LMH.bottom == "L" and LMH.top == "H"
    assert LMH.leq("L", "H") and LMH.lt("M", "H") and not LMH.lt("H", "H")


@pytest.mark.parametrize("lat", [DIAMOND, LH, LMH])
def test_join_matches_brute_force(lat):
    for a, b in itertools.product(lat.elements, repeat=2):
        assert lat.join(a, b) == brute_join(lat, a, b)


def test_rejects_cycle():
    with pytest.raises(LatticeError):
        Lattice.from_hasse(["a", "b"], [("a", "b"), ("b", "a")])


def test_rejects_missing_join():
    # two maximal elements: no top
    with pytest.raises(LatticeError):
        Lattice.from_hasse(["bot", "a", "b"], [("bot", "a"), ("bot", "b")])


def test_rejects_ambiguous_join():
    # a, b both below c and d, which are incomparable: no least upper bound
    covers = [("bot", "a"), ("bot", "b"), ("a", "c"), ("b", "c"), ("a", "d"), ("b", "d"), ("c", "top"), ("d", "top")]
    with pytest.raises(LatticeError):
        Lattice.from_hasse([], covers)


def test_foreign_label():
    with pytest.raises(LatticeError):
        LH.leq("L", "X")


def test_categories():
    assert category_leq({"a"}, {"a", "b"}) and not category_leq({"a", "c"}, {"a", "b"})
    assert category_join({"a"}, {"b"}) == frozenset({"a", "b"})
    cats = all_categories({"b", "a"})
    assert cats == [frozenset(), frozenset({"a"}), frozenset({"b"}), frozenset({"a", "b"})]


def env(lat, xs, ls=None, ic=None, hc=None, owners=None):
    ls = ls or {}
    return SecEnv(lat, xs, ls, owners or {l: "i" for l in ls}, hc or {"h": frozenset()}, ic or {"i": frozenset()})


def test_env_join_and_leq():
    e1 = env(LMH, {"x": "L", "y": "H"}, {"l": "M"})
    e2 = env(LMH, {"x": "M", "y": "L"}, {"l": "L"})
    j = env_join(e1, e2)
    assert dict(j.var_labels) == {"x": "M", "y": "H"} and dict(j.line_labels) == {"l": "M"}
    assert env_leq(e1, j) and env_leq(e2, j) and not env_leq(e1, e2)


def test_env_join_ownership_conflict():
    e1 = env(LH, {}, {"l": "L"}, owners={"l": "i"}, ic={"i": set(), "j": set()})
    e2 = env(LH, {}, {"l": "L"}, owners={"l": "j"}, ic={"i": set(), "j": set()})
    with pytest.raises(OwnershipConflict):
        env_join(e1, e2)


def test_env_domain_mismatch():
    with pytest.raises(LatticeError):
        env_leq(env(LH, {"x": "L"}), env(LH, {"y": "L"}))


def test_env_leq_bound():
    e = env(LMH, {"x": "M"}, {"l": "L"}, ic={"i": {"a"}})
    assert env_leq_bound(e, ("M", {"a"}, set()))
    assert not env_leq_bound(e, ("L", {"a"}, set()))
    assert not env_leq_bound(e, ("H", set(), set()))


def test_unlabelled_lookup():
    with pytest.raises(LatticeError):
        env(LH, {}).var("nope")


labels = st.sampled_from(DIAMOND.elements)
envs = st.builds(
    lambda x, y, l, ci, ch: env(DIAMOND, {"x": x, "y": y}, {"l": l}, ic={"i": ci}, hc={"h": ch}),
    labels, labels, labels, st.sets(st.sampled_from("pq")), st.sets(st.sampled_from("pq")),
)


@given(envs, envs, envs)
def test_env_join_is_least_upper_bound(a, b, c):
    j = env_join(a, b)
    assert env_leq(a, j) and env_leq(b, j)
    if env_leq(a, c) and env_leq(b, c):
        assert env_leq(j, c)


@given(envs, envs)
def test_env_join_commutes(a, b):
    assert env_join(a, b) == env_join(b, a)


@given(labels, labels, labels)
def test_lattice_order_transitive(a, b, c):
    if DIAMOND.leq(a, b) and DIAMOND.leq(b, c):
        assert DIAMOND.leq(a, c)


def accepted_orders(elements):
    pairs = [(a, b) for a in elements for b in elements if a != b]
    found = set()
    for mask in range(1 << len(pairs)):
        covers = [p for i, p in enumerate(pairs) if mask >> i & 1]
        try:
            lat = Lattice.from_hasse(elements, covers)
        except LatticeError:
            continue
        found.add(lat.order)
    return found


def test_validation_exhaustive_three_points():
    # the only lattice shape on three elements is the chain, with 3! labelings
    assert len(accepted_orders(["a", "b", "c"])) == 6


def test_validation_exhaustive_four_points():
    # chains (4! labelings) and diamonds (4 * 3 choices of bottom and top)
    assert len(accepted_orders(["a", "b", "c", "d"])) == 24 + 12


@given(st.sets(st.sampled_from("pqr")), st.sets(st.sampled_from("pqr")))
def test_categories_form_powerset_lattice(a, b):
    cats = all_categories("pqr")
    assert len(cats) == 2 ** 3
    j = category_join(a, b)
    assert j in cats and category_leq(a, j) and category_leq(b, j)
    assert all(j <= c for c in cats if a <= c and b <= c)
