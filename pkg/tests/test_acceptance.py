"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import io
import itertools
import json
import math
import random
import time

import pytest

from seccloud.cli import EXIT_INSECURE, main
from seccloud.config import parse_cost
from seccloud.flowcheck import (
    InputSpace, Observer, ObservationLevel, ProgramGenerator, check_cache_flow_secure, check_semantic_security,
    random_env, soundness_harness,
)
from seccloud.lattice import Lattice, env_leq
from seccloud.semantics import Machine
from seccloud.syntax import normalize, parse_model, rebuild
from seccloud.syntax.ast import Host, Instance, Network, Par
from seccloud.typesystem import Counter, Scope, SecurityTypeError, fixpoint_bound, typecheck, typecheck_network

from helpers import CORPUS, GOLDEN, corpus_files, load


@pytest.fixture
def verdict_line(capsys):
    def emit(criterion: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail

    return emit


def cli(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], stdout=out, stderr=io.StringIO())
    return code, [json.loads(line) for line in out.getvalue().splitlines()]


def test_c01_example1_leak_detected(verdict_line):
    start = time.perf_counter()
    code, recs = cli("check", CORPUS / "example1.scl", "--cost", "valuemod:4", "--domain", "keyGen=0,1,2,3",
                     "--fuel", "200", "--mode", "weak", "--obs", "L,*,*")
    elapsed = time.perf_counter() - start
    verdict = next(r for r in recs if r["record"] == "verdict")
    t1, t2 = verdict["witness"]["totals"]
    ok = code == EXIT_INSECURE and t1 != t2 and elapsed < 30
    verdict_line(1, ok, f"exit {code}, witness totals {t1} vs {t2}, {elapsed:.2f}s")


def test_c02_example3_timing_closed(verdict_line):
    start = time.perf_counter()
    n, env, cfg = load("example3.scl")
    obs = ObservationLevel.resolve(cfg.obs, env, cfg.universe)
    space = InputSpace.from_config(n, env, cfg, obs.level)
    machine = Machine(n, env, cfg)
    observer = Observer(env, obs, n.instance_hosts())
    # independent pass: every run of each component from each scenario, compared pairwise
    scenarios = space.scenarios()
    inits = [machine.initial_configs(s.as_dict(), s.key_offset) for s in scenarios]
    outcomes = [machine.outcomes(init) for init in inits]
    pairs = unequal = 0
    for k in range(len(machine.components)):
        for i, j in itertools.product(range(len(scenarios)), repeat=2):
            if not observer.equiv(inits[i][k], inits[j][k]):
                continue
            for a, b in itertools.product(outcomes[i], outcomes[j]):
                pairs += 1
                unequal += a[k][1] != b[k][1]
    v = check_cache_flow_secure(n, env, obs, "weak", space, None, cfg)
    elapsed = time.perf_counter() - start
    involves_z = v.witness is not None and "z" in v.witness.differing and v.witness.reasons == ("config",)
    ok = unequal == 0 and pairs > 0 and v.stats["timing_violations"] == 0 and v.secure is False and involves_z \
        and elapsed < 30
    verdict_line(2, ok, f"{pairs} low-equivalent run pairs, {unequal} with unequal totals; "
                        f"config witness on {list(v.witness.differing) if v.witness else None}; {elapsed:.2f}s")


def test_c03_example2_implicit_flow(verdict_line):
    n, env, cfg = load("example2.scl")
    typing = typecheck_network(n, env, dict(cfg.signature))
    err = typing.errors[0] if typing.errors else None
    type_ok = err is not None and err.rule == "TBRANCH" and err.identifiers == ("y",) \
        and (err.expected, err.actual) == ("L", "H")
    m = Machine(n, env, cfg)
    idx = next(k for k, c in enumerate(m.components) if c.fingerprint in err.component)
    v = check_semantic_security(n, idx, env, env, Counter("L"), InputSpace((("lpwd", (0, 1)),)), config=cfg)
    xs = sorted(r.final.sigma["x"] for r in v.witness.runs) if v.witness else []
    ok = type_ok and v.secure is False and xs == [0, 1]
    verdict_line(3, ok, f"type error {err.rule if err else None} at {err.path if err else None} on "
                        f"{list(err.identifiers) if err else None}; semantic {v.status} with x in {xs}")


def test_c04_example4_conditional_security(verdict_line):
    n, env, cfg = load("example4.scl")
    typing = typecheck_network(n, env, dict(cfg.signature))
    err = typing.errors[0] if typing.errors else None
    conform_fails = err is not None and err.identifiers == ("z",) and (err.actual, err.expected) == ("H", "L")
    env_after = env.replace(var_labels={**env.var_labels, **dict(cfg.signature)})
    statuses = {}
    for cost in ("constant:6", "constant:2"):
        c = cfg.with_overrides(cost=parse_cost(cost))
        m = Machine(n, env, c)
        idx = next(k for k, comp in enumerate(m.components) if comp.instance == "i2")
        v = check_semantic_security(n, idx, env, env_after, Counter("L"), InputSpace(key_offsets=(0, 1, 2, 3)),
                                    config=c)
        statuses[cost] = v.status
    ok = conform_fails and statuses == {"constant:6": "secure", "constant:2": "insecure"}
    verdict_line(4, ok, f"conformance z: {err.actual if err else None} vs declared "
                        f"{err.expected if err else None}; semantic {statuses}")


def test_c05_soundness_at_desk_scale(verdict_line):
    start = time.perf_counter()
    rep = soundness_harness(500, seed=1, var_values=(0, 1))
    elapsed = time.perf_counter() - start
    ok = rep.programs >= 500 and not rep.violations and not rep.comm_violations and elapsed < 300
    verdict_line(5, ok, f"{rep.programs} programs, {rep.accepted} accepted, {len(rep.violations)} violations; "
                        f"{rep.comm_accepted}/{rep.comm_pairs} comm pairs accepted, {len(rep.comm_violations)} "
                        f"violations; {elapsed:.1f}s")


LATTICES = (Lattice.chain("L", "H"), Lattice.chain("L", "M", "H"))
SCOPE = Scope(frozenset({"a", "b", "c"}), frozenset({"pg"}), {"ch": "lc"}, "i", "h")


def test_c06_monotonicity(verdict_line):
    rng = random.Random(6)
    cases = failures = 0
    while cases < 300:
        lat = LATTICES[cases % 2]
        e1 = random_env(rng, lat, ["a", "b", "c"], ["pg", "lc"])
        up = lambda t: rng.choice([u for u in lat.elements if lat.leq(t, u)])  # noqa: E731
        e2 = e1.replace(var_labels={x: up(t) for x, t in e1.var_labels.items()},
                        line_labels={l: up(t) for l, t in e1.line_labels.items()})
        prog = ProgramGenerator(rng, ["a", "b", "c"]).process()
        try:
            t1 = typecheck(Counter(lat.bottom), e1, prog, SCOPE).env_after
            t2 = typecheck(Counter(lat.bottom), e2, prog, SCOPE).env_after
        except SecurityTypeError:
            continue
        cases += 1
        failures += not env_leq(t1, t2)
    verdict_line(6, failures == 0 and cases >= 200, f"{cases} comparable pairs, {failures} failures")


def test_c07_fixpoint_bound(verdict_line):
    rng = random.Random(7)
    loops = worst = over = 0
    for n in range(600):
        lat = LATTICES[n % 2]
        env = random_env(rng, lat, ["a", "b", "c"], ["pg", "lc"])
        prog = ProgramGenerator(rng, ["a", "b", "c"], max_depth=4).process()
        try:
            res = typecheck(Counter(lat.bottom), env, prog, SCOPE)
        except SecurityTypeError:
            continue
        for _, iterations, bound in res.loop_iterations:
            assert bound == fixpoint_bound(env)
            loops += 1
            worst = max(worst, iterations)
            over += iterations > bound
    verdict_line(7, loops > 0 and over == 0, f"{loops} loop fixpoints, max {worst} iterations, {over} over the bound")


def shuffle_par(rng, leaves):
    items = list(leaves)
    rng.shuffle(items)
    while len(items) > 1:
        i = rng.randrange(len(items) - 1)
        items[i:i + 2] = [Par(items[i], items[i + 1])]
    return items[0]


def test_c08_structural_equivalence(verdict_line):
    rng = random.Random(8)
    mismatches = 0
    trials = 1000
    sources = [normalize(load(p.name)[0]) for p in corpus_files()]
    for t in range(trials):
        comps = sources[t % len(sources)]
        groups = {}
        for c in comps:
            groups.setdefault((c.host, c.instance, c.pages), []).append(c.process)
        blocks = []
        for (h, i, pages), procs in groups.items():
            # split each instance into a random number of repeated blocks
            rng.shuffle(procs)
            cut = rng.randint(1, len(procs))
            for part in (procs[:cut], procs[cut:]):
                if part:
                    blocks.append(Host(h, (Instance(i, shuffle_par(rng, part), pages),)))
        rng.shuffle(blocks)
        mismatches += normalize(Network(tuple(blocks))) != comps
    idempotent = all(normalize(rebuild(c)) == c for c in sources)
    verdict_line(8, mismatches == 0 and idempotent,
                 f"{trials} reassociations, {mismatches} mismatches; idempotent on corpus: {idempotent}")


def micro(body, labels="", extra="", pages=""):
    n, env, cfg = parse_model(f"host h {{ vm i pages {{ {pages} }} {{ {body} }} }}\n{extra}\nlabel {{ {labels} }}")
    m = Machine(n, env, cfg)
    return m, m.initial_configs()


def test_c09_semantics_micro_oracles(verdict_line):
    m, init = micro("x := 1 || y := 2", "x: L; y: L")
    par = m.enumerate_runs(init)
    same_final = len({tuple(r.final for r in v.runs) for v in par}) == 1
    m, init = micro("x := 1; x := 2 || y := 1; y := 2", "x: L; y: L")
    interleavings = len(m.enumerate_runs(init))
    m, init = micro("sleep(3)")
    ticks = m.run(init).runs[0].total_time
    m, init = micro("x := 1; stop || y := 2", "x: L; y: L; pg: L", "cache { pg = 7 }", "pg")
    flushed = all(r.final.delta["pg"] is None for v in m.enumerate_runs(init) for r in v.runs)
    ok = len(par) == 2 and same_final and interleavings == math.comb(4, 2) and ticks == 3 and flushed
    verdict_line(9, ok, f"par vectors {len(par)} (same finals {same_final}), interleavings {interleavings}, "
                        f"sleep(3) ticks {ticks}, stop flushes pages {flushed}")


def test_c10_golden_reports(verdict_line):
    diffs = []
    for path in corpus_files():
        a = io.StringIO()
        b = io.StringIO()
        main(["check", str(path)], stdout=a, stderr=io.StringIO())
        main(["check", str(path)], stdout=b, stderr=io.StringIO())
        if a.getvalue() != b.getvalue() or a.getvalue() != (GOLDEN / f"{path.stem}.jsonl").read_text():
            diffs.append(path.stem)
    verdict_line(10, not diffs, f"{len(corpus_files())} corpus reports, differing: {diffs or 'none'}")
