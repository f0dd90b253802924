import random

import pytest
from hypothesis import given, settings, strategies as st

from seccloud.flowcheck import ProgramGenerator, random_env
from seccloud.lattice import Lattice, SecEnv, env_leq
from seccloud.syntax import parse_model
from seccloud.syntax import parse_process as parse_raw
from seccloud.syntax.parser import resolve_process
from seccloud.syntax.ast import Assign, Recv, walk
from seccloud.typesystem import (
    Counter, Scope, SecurityTypeError, conform, fixpoint_bound, loop_fixpoint, replay, resolve_path, type_of_expr,
    typecheck, typecheck_network,
)

from helpers import load

LH = Lattice.chain("L", "H")
LMH = Lattice.chain("L", "M", "H")
SCOPE = Scope(frozenset({"a", "b", "c"}), frozenset({"pg"}), {"ch": "lc"}, "i", "h")


def parse_process(src):
    return resolve_process(parse_raw(src), {"ch": "lc"}, {"pg", "lc"})


def env(lat=LH, **labels):
    lines = {k: v for k, v in labels.items() if k in ("pg", "lc")}
    vars_ = {k: v for k, v in labels.items() if k not in lines}
    return SecEnv(lat, vars_, lines, {l: "i" for l in lines}, {"h": frozenset()}, {"i": frozenset()})


def check(src, e, counter=None, scope=SCOPE):
    return typecheck(counter or Counter(e.lattice.bottom), e, parse_process(src), scope)


def test_expression_types():
    e = env(LMH, a="M", b="L", lc="H", pg="L")
    assert type_of_expr(e, parse_process("a := a + b").expr) == "M"
    assert type_of_expr(e, parse_process("a := 3").expr) == "L"
    assert type_of_expr(e, parse_process("a := keyGen()").expr) == "H"
    assert type_of_expr(e, parse_process("a := read(ch)").expr, {"ch": "lc"}) == "H"


def test_assignment_takes_label_of_expression():
    out = check("a := b", env(a="L", b="H", pg="L", lc="L")).env_after
    assert out.var("a") == "H" and out.var("b") == "H"


def test_assignment_can_lower_a_label():
    out = check("a := 1", env(a="H", b="L", pg="L", lc="L")).env_after
    assert out.var("a") == "L"


def test_branch_raises_assigned_variables():
    res = check("if (b > 0) { a := 1 } else { a := 0 }", env(a="L", b="H", pg="L", lc="L"))
    assert res.env_after.var("a") == "H"
    with pytest.raises(SecurityTypeError) as exc:
        conform(res.env_after, {"a": "L"}, ["a"], res.provenance)
    assert exc.value.rule == "TBRANCH" and exc.value.path == "/"
    assert exc.value.identifiers == ("a",) and (exc.value.expected, exc.value.actual) == ("L", "H")


def test_send_and_receive_labels():
    out = check("ch ! b; ch ? a", env(a="L", b="H", pg="L", lc="L")).env_after
    assert out.line("lc") == "H" and out.var("a") == "H"


def test_stop_and_skip_need_bottom_counter():
    e = env(a="L", b="H", pg="H", lc="L")
    assert check("stop", e).env_after.line("pg") == "L"
    for src, rule in (("if (b > 0) { skip } else { a := 1 }", "TSKIP"), ("if (b > 0) { stop } else { a := 1 }", "TSTOP")):
        with pytest.raises(SecurityTypeError) as exc:
            check(src, e)
        assert exc.value.rule == rule and exc.value.path == "/0"
    permissive = Scope(SCOPE.variables, SCOPE.pages, SCOPE.channels, "i", "h", permissive_tstop=True)
    assert check("if (b > 0) { skip } else { a := 1 }", e, scope=permissive).env_after.var("a") == "H"


def test_sleep_is_typable_anywhere():
    e = env(a="L", b="H", pg="L", lc="L")
    assert check("if (b > 0) { sleep(2) } else { sleep(0) }", e).env_after == e


def test_loop_fixpoint_ripples():
    # a label moves one variable per iteration: c <- b <- a
    e = env(a="H", b="L", c="L", pg="L", lc="L")
    out, iterations = loop_fixpoint(Counter("L"), e, parse_process("while (true) { skip }").cond,
                                    parse_process("c := b; b := a"), SCOPE)
    assert (out.var("b"), out.var("c")) == ("H", "H")
    assert iterations == 3
    assert fixpoint_bound(e) == 5 * LH.height + 1


def test_loop_guard_raises_body():
    out = check("while (b < 2) { a := 1; b := b + 1 }", env(a="L", b="H", pg="L", lc="L")).env_after
    assert out.var("a") == "H"


def test_parallel_joins_branches():
    out = check("{ a := b || c := 1 }", env(a="L", b="H", c="H", pg="L", lc="L")).env_after
    assert (out.var("a"), out.var("c")) == ("H", "H")


def test_derivation_replays_to_result():
    e = env(LMH, a="H", b="L", c="M", pg="L", lc="L")
    res = check("a := b; while (c < 2) { c := c + 1; b := read(ch) }; { ch ! a || stop }", e)
    assert replay(res.derivation, e) == res.env_after
    assert set(res.derivation.rules()) >= {"TSEQ", "TASS", "TLOOP", "TPAR", "TSEND", "TSTOP"}


def test_resolve_path():
    p = parse_process("a := 1; if (b > 0) { skip } else { c := 2 }")
    assert resolve_path(p, "/1/1") == Assign("c", parse_process("c := 2").expr)


def test_network_example2_rejects_at_branch():
    n, e, cfg = load("example2.scl")
    t = typecheck_network(n, e, dict(cfg.signature))
    (err,) = t.errors
    assert (err.rule, err.path, err.identifiers, err.expected, err.actual) == ("TBRANCH", "/1/0", ("y",), "L", "H")
    assert not t.ok and t.env_after is None


def test_network_example4_conformance():
    n, e, cfg = load("example4.scl")
    (err,) = typecheck_network(n, e, dict(cfg.signature)).errors
    assert err.identifiers == ("z",) and (err.expected, err.actual) == ("L", "H")


@pytest.mark.parametrize("name", ["example1.scl", "example3.scl", "moves.scl", "race.scl", "strong_timing.scl",
                                  "trivial_skip.scl"])
def test_network_accepts(name):
    n, e, cfg = load(name)
    assert typecheck_network(n, e, dict(cfg.signature), cfg.permissive_tstop).ok


def test_move_process_transfers_pages():
    n, e, cfg = load("moves.scl")
    out = typecheck_network(n, e).env_after
    assert out.line_owner["pg1"] == "i2"


def test_unused_signature_entry_is_checked_against_initial_label():
    n, e, cfg = parse_model("host h { vm i pages { } { a := 1 } }\nlabel { a: L; b: H }\nfinal { b: L }")
    (err,) = typecheck_network(n, e, dict(cfg.signature)).errors
    assert err.rule == "TSUB" and err.identifiers == ("b",)


# -- properties over generated programs -------------------------------------------


def generated(seed: int, lattice: Lattice):
    rng = random.Random(seed)
    variables = ["a", "b", "c"]
    e = random_env(rng, lattice, variables, ["pg", "lc"])
    prog = ProgramGenerator(rng, variables, "ch", "lc", max_depth=3).process()
    return rng, e, prog


def raise_env(rng: random.Random, e: SecEnv) -> SecEnv:
    lat = e.lattice
    up = lambda t: rng.choice([u for u in lat.elements if lat.leq(t, u)])  # noqa: E731
    return e.replace(var_labels={x: up(t) for x, t in e.var_labels.items()},
                     line_labels={l: up(t) for l, t in e.line_labels.items()})


def try_type(counter, e, prog):
    try:
        return typecheck(counter, e, prog, SCOPE).env_after
    except SecurityTypeError:
        return None


seeds = st.integers(0, 10**6)
lattices = st.sampled_from([LH, LMH])


@given(seeds, lattices)
@settings(max_examples=150, deadline=None)
def test_monotone_in_environment(seed, lattice):
    rng, e1, prog = generated(seed, lattice)
    e2 = raise_env(rng, e1)
    assert env_leq(e1, e2)
    t1, t2 = try_type(Counter(lattice.bottom), e1, prog), try_type(Counter(lattice.bottom), e2, prog)
    if t1 is not None and t2 is not None:
        assert env_leq(t1, t2)


@given(seeds, lattices)
@settings(max_examples=150, deadline=None)
def test_counter_monotone(seed, lattice):
    rng, e, prog = generated(seed, lattice)
    lo, hi = sorted(rng.sample(lattice.elements, 2), key=lambda t: lattice.elements.index(t))
    t_hi = try_type(Counter(hi), e, prog)
    if t_hi is not None:
        t_lo = try_type(Counter(lo), e, prog)
        assert t_lo is not None and env_leq(t_lo, t_hi)


@given(seeds, lattices)
@settings(max_examples=150, deadline=None)
def test_no_write_below_counter(seed, lattice):
    rng, e, prog = generated(seed, lattice)
    counter = Counter(rng.choice(lattice.elements))
    out = try_type(counter, e, prog)
    if out is None:
        return
    written = {n.var for n in walk(prog) if isinstance(n, (Assign, Recv))}
    assert all(lattice.leq(counter.level, out.var(x)) for x in written)


@given(seeds, lattices)
@settings(max_examples=150, deadline=None)
def test_replay_and_fixpoint_bound(seed, lattice):
    _, e, prog = generated(seed, lattice)
    try:
        res = typecheck(Counter(lattice.bottom), e, prog, SCOPE)
    except SecurityTypeError:
        return
    assert replay(res.derivation, e) == res.env_after
    for _, iterations, bound in res.loop_iterations:
        assert iterations <= bound == fixpoint_bound(e)


@given(seeds, lattices)
@settings(max_examples=100, deadline=None)
def test_signature_below_counter_rejects_writes(seed, lattice):
    rng, e, prog = generated(seed, lattice)
    counter = Counter(lattice.top)
    res = None
    try:
        res = typecheck(counter, e, prog, SCOPE)
    except SecurityTypeError:
        return
    written = {n.var for n in walk(prog) if isinstance(n, (Assign, Recv))}
    for x in written:
        with pytest.raises(SecurityTypeError):
            conform(res.env_after, {x: lattice.bottom}, [x], res.provenance)
