import math

import pytest
from hypothesis import given, settings, strategies as st

from seccloud.semantics import (
    DEADLOCK, FAULT, FUEL, TERMINATED, Configuration, Context, Fault, Machine, comm_cost, enumerate_runs, eval_expr,
    fnv1a32, intern_string, run, step,
)
from seccloud.syntax import parse_model, parse_process

from helpers import load


def net(body: str, extra: str = "", labels: str = "", pages: str = ""):
    text = f"host h {{ vm i pages {{ {pages} }} {{ {body} }} }}\n{extra}\nlabel {{ {labels} }}"
    return parse_model(text)


def machine(body, extra="", labels="", pages=""):
    n, env, cfg = net(body, extra, labels, pages)
    return Machine(n, env, cfg)


def test_fnv1a_reference_values():
    # published FNV-1a 32-bit test vectors
    assert fnv1a32("") == 0x811C9DC5
    assert fnv1a32("a") == 0xE40C292C
    assert fnv1a32("foobar") == 0xBF9CF968
    assert intern_string("a") == fnv1a32("a")


@pytest.mark.parametrize("v,expected", [(0, 1), (1, 2), (3, 4), (4, 1), (-5, 2)])
def test_valuemod_cost(v, expected):
    assert comm_cost(("valuemod", 4), v) == expected


def test_constant_cost():
    assert comm_cost(("constant", 6), 123) == 6


def test_eval_arithmetic_and_division_fault():
    g = Configuration.make({"x": 7}, {}, "i", "h")
    assert eval_expr(g, parse_process("y := x / 2 - 1 * 3").expr) == 0
    with pytest.raises(Fault):
        eval_expr(g, parse_process("y := x / 0").expr)


def test_keygen_draws_from_offset():
    n, env, cfg = net("a := keyGen(); b := keyGen()", labels="a: H; b: H")
    m = Machine(n, env, cfg)
    final = m.run(m.initial_configs(key_offset=3)).runs[0].final
    assert final.sigma == {"a": 3, "b": 0}


def test_par_network_two_vectors_same_finals():
    m = machine("x := 1 || y := 2", labels="x: L; y: L")
    vectors = m.enumerate_runs(m.initial_configs())
    assert len(vectors) == 2
    assert len({tuple(r.final.store for r in v.runs) for v in vectors}) == 1


def test_two_two_step_components_interleave():
    m = machine("x := 1; x := 2 || y := 1; y := 2", labels="x: L; y: L")
    assert len(m.enumerate_runs(m.initial_configs())) == math.comb(4, 2)


def test_sleep_three_ticks():
    m = machine("sleep(3)")
    r = m.run(m.initial_configs()).runs[0]
    assert r.durations == (1, 1, 1) and r.total_time == 3


def test_sleep_zero_is_instant():
    m = machine("sleep(0)")
    assert m.run(m.initial_configs()).runs[0].total_time == 0


def test_stop_flushes_owned_pages_in_every_run():
    m = machine("x := 1; stop || y := 2", extra="cache { pg = 7 }", labels="x: L; y: L; pg: L", pages="pg")
    vectors = m.enumerate_runs(m.initial_configs())
    assert len(vectors) == 3
    for v in vectors:
        assert v.runs[0].final.delta == {"pg": None}
        assert v.runs[1].final.delta == {"pg": None}


def test_send_then_receive():
    m = machine("c ! 5; c ? x", extra="channel c -> lc owner i", labels="x: L; lc: L")
    r = m.run(m.initial_configs()).runs[0]
    assert r.final.sigma == {"x": 5} and r.final.delta == {"lc": 5}
    assert r.durations == (comm_cost(("valuemod", 4), 5), 0)


def test_receive_on_empty_line_deadlocks():
    m = machine("c ? x", extra="channel c -> lc owner i", labels="x: L; lc: L")
    assert m.run(m.initial_configs()).runs[0].status == DEADLOCK


def test_timed_comm_success_pads_to_deadline():
    m = machine("timed(5) { c ! 2 || c ? x } then { y := x }",
                extra="channel c -> lc owner i", labels="x: L; y: L; lc: L")
    r = m.run(m.initial_configs()).runs[0]
    assert r.status == TERMINATED and r.durations[0] == 5 and r.total_time == 5
    assert r.final.sigma == {"x": 2, "y": 2} and r.final.delta == {"lc": None}


def test_timed_comm_failure_stops():
    n, env, cfg = net("timed(5) { c ! 2 || c ? x } then { y := 9 }",
                      extra="channel c -> lc owner i\nconfig { cost = constant:6 }", labels="x: L; y: L; lc: L")
    m = Machine(n, env, cfg)
    r = m.run(m.initial_configs()).runs[0]
    assert r.durations == (5, 0) and r.final.sigma == {"x": 0, "y": 0}
    assert [s.event.kind for s in r.steps] == ["timed-comm", "stop"]


def test_fuel_exhaustion():
    n, env, cfg = net("while (true) { skip }", extra="config { fuel = 7 }")
    m = Machine(n, env, cfg)
    r = m.run(m.initial_configs()).runs[0]
    assert r.status == FUEL and len(r.steps) == 7


def test_division_by_zero_faults():
    m = machine("x := 1 / 0", labels="x: L")
    r = m.run(m.initial_configs()).runs[0]
    assert r.status == FAULT and "zero" in r.fault


def test_move_to_higher_category_faults():
    text = """categories { a }
host h { vm i cat { } pages { } { moveP(j) } vm j cat { a } pages { } { skip } }"""
    n, env, cfg = parse_model(text)
    m = Machine(n, env, cfg)
    runs = m.run(m.initial_configs()).runs
    assert runs[0].status == FAULT


def test_moves_corpus_changes_owner_and_host():
    n, env, cfg = load("moves.scl")
    m = Machine(n, env, cfg)
    vectors = m.enumerate_runs(m.initial_configs())
    for v in vectors:
        g = v.runs[0].final
        assert (g.owner, g.host, g.sigma["b"]) == ("i2", "h2", 2)
    assert len({v.runs[1].final.host for v in vectors}) == 1


def test_loop_counts_down():
    m = machine("n := 0; while (n < 3) { n := n + 1 }", labels="n: L")
    r = m.run(m.initial_configs()).runs[0]
    assert r.final.sigma == {"n": 3}
    assert sum(s.event.kind == "loop-unfold" for s in r.steps) == 4


def test_step_is_deterministic_and_ordered():
    g = Configuration.make({"x": 0}, {}, "i", "h")
    n, env, _ = net("x := 1 || x := 2", labels="x: L")
    ctx = Context({}, frozenset(), env)
    p = parse_process("{ x := 1 || x := 2 }")
    first = [r.config.sigma for r in step(p, g, ctx)]
    assert first == [{"x": 1}, {"x": 2}] == [r.config.sigma for r in step(p, g, ctx)]


@pytest.mark.parametrize("name", ["example2.scl", "example4.scl", "moves.scl", "race.scl"])
def test_deterministic_run_is_enumerated(name):
    n, env, cfg = load(name)
    cfg = cfg.with_overrides(fuel=min(cfg.fuel, 8))
    m = Machine(n, env, cfg)
    init = m.initial_configs()
    a, b = m.run(init), m.run(init)
    assert a == b
    assert a.dedup_key() in {v.dedup_key() for v in m.enumerate_runs(init)}


def test_module_level_helpers():
    n, env, cfg = net("x := 1 || y := 2", labels="x: L; y: L")
    assert len(enumerate_runs(n, env)) == 2
    assert [r.final.sigma for r in run(n, env).runs] == [{"y": 2}, {"x": 1}]


bodies = st.lists(
    st.sampled_from(["x := x + 1", "sleep(1)", "sleep(2)", "c ! x", "skip", "x := read(c)"]), min_size=1, max_size=3,
)


@given(bodies, bodies)
@settings(max_examples=40, deadline=None)
def test_time_accounting_and_stop_flush(left, right):
    n, env, cfg = net(f"{'; '.join(left)}; stop || {'; '.join(right)}",
                      extra="channel c -> lc owner i\ncache { pg = 7 }\nconfig { cost = valuemod:3 }",
                      labels="x: L; lc: L; pg: L", pages="pg")
    m = Machine(n, env, cfg)
    for v in m.enumerate_runs(m.initial_configs()):
        for k, r in enumerate(v.runs):
            assert r.total_time == sum(dt for j, _, dt in v.events if j == k)
            assert r.status == TERMINATED
        assert v.runs[0].final.delta["pg"] is None


@pytest.mark.parametrize("name", ["example2.scl", "example4.scl", "moves.scl", "race.scl"])
def test_every_scheduler_run_is_enumerated(name):
    n, env, cfg = load(name)
    m = Machine(n, env, cfg.with_overrides(fuel=min(cfg.fuel, 8)))
    init = m.initial_configs()
    keys = {v.dedup_key() for v in m.enumerate_runs(init)}
    for scheduler in ("roundrobin", "lowest"):
        assert m.run(init, scheduler).dedup_key() in keys


def test_cache_writes_stay_in_footprint():
    n, env, cfg = load("example3.scl")
    m = Machine(n, env, cfg.with_overrides(fuel=6))
    allowed = [set(c.pages) | {n.channel_lines[a] for a in ("key", "msg")} for c in m.components]
    for v in m.enumerate_runs(m.initial_configs()):
        for k, r in enumerate(v.runs):
            for st_ in r.steps:
                changed = {l for l, x in st_.config_after.cache if st_.config_before.delta.get(l) != x}
                assert changed <= allowed[k]


def test_timed_comm_duration_is_constant():
    for cost in ("valuemod:4", "constant:2", "constant:9"):
        n, env, cfg = net("a := keyGen(); timed(5) { c ! a || c ? x } then { skip } || c ? y",
                          extra=f"channel c -> lc owner i\nconfig {{ cost = {cost} }}", labels="a: H; x: H; y: H; lc: H")
        m = Machine(n, env, cfg)
        for offset in range(4):
            for v in m.enumerate_runs(m.initial_configs(key_offset=offset)):
                assert {dt for _, e, dt in v.events if e.kind == "timed-comm"} == {5}
