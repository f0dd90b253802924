"""Bounded exhaustive checking of cache flow security and semantic flow security.

Configurations are compared through an observer ``(t, ω_I, ω_H)``: a variable or line is visible
when its label flows to ``t`` and the categories of the instance and host holding it are within
``ω_I`` and ``ω_H``.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .config import FULL, AnalysisConfig
from .lattice import Lattice, SecEnv, all_categories
from .semantics import (
    FUEL, TERMINATED, BoundExceeded, Configuration, Machine, TimedRun, component_label,
)
from .syntax.ast import (
    Assign, BinOp, Branch, Call, ChanRef, Cmp, Host, Instance, Lit, Loop, Network, Not, Par,
    Process, Recv, Send, Seq, Skip, Sleep, Stop, TimedComm, TrueB, Var, And, expr_vars,
)
from .typesystem import Counter, Scope, SecurityTypeError, typecheck, typecheck_network

NOT_COMPARABLE = "not-comparable"
BOUND_EXCEEDED = "bound-exceeded"


# -- observation ------------------------------------------------------------


@dataclass(frozen=True)
class ObservationLevel:
    level: str
    inst_cat: frozenset[str]
    host_cat: frozenset[str]

    @classmethod
    def resolve(cls, obs, env: SecEnv, universe: Iterable[str] = ()) -> "ObservationLevel":
        """From a config triple where ``None`` categories mean every atom and a ``None`` level means ⊥."""
        if isinstance(obs, ObservationLevel):
            return obs
        level, ic, hc = obs
        universe = frozenset(universe) | _env_atoms(env)
        return cls(level or env.lattice.bottom, universe if ic is FULL else frozenset(ic),
                   universe if hc is FULL else frozenset(hc))

    def as_list(self) -> list:
        return [self.level, sorted(self.inst_cat), sorted(self.host_cat)]


def _env_atoms(env: SecEnv) -> frozenset[str]:
    return frozenset().union(*env.host_cat.values(), *env.inst_cat.values())


class Observer:
    """Computes what an observer at ``obs`` sees of a configuration."""

    def __init__(self, env: SecEnv, obs: ObservationLevel, inst_hosts: Mapping[str, str] | None = None,
                 symmetric: bool = False):
        self.env = env
        self.obs = obs
        self.inst_hosts = dict(inst_hosts or {})
        self.symmetric = symmetric
        self._cache: dict = {}

    def _sees_place(self, inst: str, host: str) -> bool:
        return (self.env.inst_cat.get(inst, frozenset()) <= self.obs.inst_cat
                and self.env.host_cat.get(host, frozenset()) <= self.obs.host_cat)

    def visible(self, g: Configuration) -> tuple[tuple[str, ...], tuple[str, ...]]:
        """Names of the variables and lines of ``g`` the observer compares."""
        lat, env = self.env.lattice, self.env
        here = self._sees_place(g.owner, g.host)
        vars_ = tuple(x for x, _ in g.store if here and lat.leq(env.var(x), self.obs.level))
        lines = []
        for l, _ in g.cache:
            owner = env.line_owner.get(l, g.owner)
            host = g.host if owner == g.owner else self.inst_hosts.get(owner, g.host)
            if lat.leq(env.line(l), self.obs.level) and self._sees_place(owner, host):
                lines.append(l)
        return vars_, tuple(lines)

    def projection(self, g: Configuration) -> tuple:
        key = g
        hit = self._cache.get(key)
        if hit is None:
            vars_, lines = self.visible(g)
            sigma, delta = g.sigma, g.delta
            hit = (g.owner, g.host, tuple((x, sigma[x]) for x in vars_), tuple((l, delta[l]) for l in lines))
            self._cache[key] = hit
        return hit

    def equiv(self, g1: Configuration, g2: Configuration) -> bool:
        if g1.owner == g2.owner and g1.host == g2.host:
            return self.projection(g1) == self.projection(g2)
        return config_equiv(g1, g2, self.env, self.obs, self.inst_hosts, self.symmetric)

    def differing(self, g1: Configuration, g2: Configuration) -> list[str]:
        vars_, lines = self.visible(g1)
        s1, s2, d1, d2 = g1.sigma, g2.sigma, g1.delta, g2.delta
        out = [x for x in vars_ if s1.get(x) != s2.get(x)]
        out += [l for l in lines if d1.get(l) != d2.get(l)]
        if g1.owner != g2.owner:
            out.append("owner")
        if g1.host != g2.host:
            out.append("host")
        return out


def config_equiv(g1: Configuration, g2: Configuration, env: SecEnv, obs, inst_hosts: Mapping[str, str] | None = None,
                 symmetric: bool = False) -> bool:
    """Γ1 =_{Ξ,(t,ω_I,ω_H)} Γ2: observable variables and lines agree, and Γ1's instance and host
    categories are below Γ2's (both ways when ``symmetric``)."""
    obs = ObservationLevel.resolve(obs, env)
    lat = env.lattice
    cat_i = lambda i: env.inst_cat.get(i, frozenset())  # noqa: E731
    cat_h = lambda h: env.host_cat.get(h, frozenset())  # noqa: E731
    if not (cat_i(g1.owner) <= cat_i(g2.owner) and cat_h(g1.host) <= cat_h(g2.host)):
        return False
    if symmetric and not (cat_i(g2.owner) <= cat_i(g1.owner) and cat_h(g2.host) <= cat_h(g1.host)):
        return False
    s1, s2, d1, d2 = g1.sigma, g2.sigma, g1.delta, g2.delta
    if s1.keys() != s2.keys() or d1.keys() != d2.keys():
        return False
    here = cat_i(g1.owner) <= obs.inst_cat and cat_h(g1.host) <= obs.host_cat
    if here:
        for x, v in s1.items():
            if lat.leq(env.var(x), obs.level) and s2[x] != v:
                return False
    hosts = dict(inst_hosts or {})
    for l, v in d1.items():
        owner = env.line_owner.get(l, g1.owner)
        host = g1.host if owner == g1.owner else hosts.get(owner, g1.host)
        if lat.leq(env.line(l), obs.level) and cat_i(owner) <= obs.inst_cat and cat_h(host) <= obs.host_cat:
            if d2[l] != v:
                return False
    return True


def strong_bisimilar(r1: TimedRun, r2: TimedRun, env: SecEnv, obs, observer: Observer | None = None):
    """Stepwise equivalence with equal step durations; ``NOT_COMPARABLE`` for unequal lengths."""
    if len(r1.steps) != len(r2.steps):
        return NOT_COMPARABLE
    return _first_strong_violation(r1, r2, observer or Observer(env, ObservationLevel.resolve(obs, env))) is None


def _first_strong_violation(r1: TimedRun, r2: TimedRun, observer: Observer) -> Optional[int]:
    c1, c2 = r1.configs, r2.configs
    for j in range(len(c1)):
        if not observer.equiv(c1[j], c2[j]):
            return j
        if j < len(r1.steps) and r1.steps[j].duration != r2.steps[j].duration:
            return j
    return None


def weak_bisimilar(r1: TimedRun, r2: TimedRun, env: SecEnv, obs, observer: Observer | None = None) -> bool:
    """Equivalent final configurations and equal total time."""
    observer = observer or Observer(env, ObservationLevel.resolve(obs, env))
    return r1.total_time == r2.total_time and observer.equiv(r1.final, r2.final)


# -- inputs -------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One choice of initial inputs: variable/line values and the keyGen starting offset."""

    values: tuple[tuple[str, Optional[int]], ...]
    key_offset: int = 0

    def as_dict(self) -> dict:
        return dict(self.values)

    def to_record(self) -> dict:
        rec: dict = {k: v for k, v in self.values}
        if self.key_offset:
            rec["keyGen"] = self.key_offset
        return rec


@dataclass(frozen=True)
class InputSpace:
    """Finite domains for chosen variables and lines; everything else is fixed."""

    domains: tuple[tuple[str, tuple[Optional[int], ...]], ...] = ()
    fixed: tuple[tuple[str, Optional[int]], ...] = ()
    key_offsets: tuple[int, ...] = (0,)

    def __post_init__(self):
        for name, vals in self.domains:
            if not vals:
                raise ValueError(f"empty input domain for {name!r}")

    def scenarios(self, limit: int | None = None) -> list[Scenario]:
        names = [n for n, _ in self.domains]
        out = []
        for combo in itertools.product(*(vals for _, vals in self.domains)):
            for k in self.key_offsets:
                out.append(Scenario(tuple(sorted(list(self.fixed) + list(zip(names, combo)))), k))
                if limit is not None and len(out) > limit:
                    raise BoundExceeded(f"more than {limit} input scenarios")
        return out

    @classmethod
    def exhaustive(cls, variables: Iterable[str], lines: Iterable[str], var_values=(0, 1),
                   line_values=(None, 0, 1)) -> "InputSpace":
        doms = [(x, tuple(var_values)) for x in sorted(variables)]
        doms += [(l, tuple(line_values)) for l in sorted(lines)]
        return cls(tuple(doms))

    @classmethod
    def from_config(cls, network: Network, env: SecEnv, config: AnalysisConfig, obs_level: str | None = None,
                    default_high=(0, 1, 2, 3)) -> "InputSpace":
        """Declared domains, plus ``default_high`` for high variables that may be read before written."""
        from .syntax.normalize import normalize

        comps = normalize(network)
        channels = network.channel_lines
        declared = {}
        keygen = None
        for name, vals in config.domains:
            if name == "keyGen":
                keygen = vals
                continue
            declared[channels.get(name, name)] = tuple(vals)
        level = obs_level or (config.obs[0] or env.lattice.bottom)
        for c in comps:
            for x in sorted(reads_before_writes(c.process)):
                if x in declared or x not in env.var_labels:
                    continue
                if not env.lattice.leq(env.var(x), level):
                    declared[x] = tuple(default_high)
        offsets = (0,)
        if any(_uses_keygen(c.process) for c in comps):
            dom = keygen or (0, 1, 2, 3)
            offsets = tuple(range(len(dom)))
        return cls(tuple(sorted(declared.items())), (), offsets)


def _uses_keygen(p) -> bool:
    from .syntax.ast import uses_keygen

    return uses_keygen(p)


def reads_before_writes(p: Process) -> set[str]:
    """Variables some execution of ``p`` may read before writing them."""

    def go(p, defined: frozenset) -> tuple[set, frozenset]:
        match p:
            case Assign(x, e):
                return expr_vars(e) - defined, defined | {x}
            case Send(_, e):
                return expr_vars(e) - defined, defined
            case Recv(_, x):
                return set(), defined | {x}
            case Seq(a, b):
                r1, d1 = go(a, defined)
                r2, d2 = go(b, d1)
                return r1 | r2, d2
            case Branch(t, c, f):
                r1, d1 = go(t, defined)
                r2, d2 = go(f, defined)
                return (expr_vars(c) - defined) | r1 | r2, d1 & d2
            case Loop(c, body):
                r, _ = go(body, defined)
                return (expr_vars(c) - defined) | r, defined
            case Par(a, b):
                r1, _ = go(a, defined)
                r2, _ = go(b, defined)
                return r1 | r2, defined
            case TimedComm(_, s, r, cont):
                r0 = expr_vars(s.expr) - defined
                r1, _ = go(cont, defined | {r.var})
                return r0 | r1, defined
        return set(), defined

    return go(p, frozenset())[0]


# -- verdicts -----------------------------------------------------------------


@dataclass
class Witness:
    component: str
    index: int
    reasons: tuple[str, ...]
    scenarios: tuple[Scenario, Scenario]
    initial: tuple[Configuration, Configuration]
    runs: tuple[TimedRun, TimedRun]
    schedules: tuple[tuple, tuple]
    differing: tuple[str, ...] = ()
    step: Optional[int] = None
    level: Optional[ObservationLevel] = None

    @property
    def totals(self) -> tuple[int, int]:
        return self.runs[0].total_time, self.runs[1].total_time


@dataclass
class Verdict:
    secure: object  # True, False or BOUND_EXCEEDED
    mode: str
    witness: Optional[Witness] = None
    stats: dict = field(default_factory=dict)
    message: str = ""

    @property
    def status(self) -> str:
        if self.secure is True:
            return "secure"
        if self.secure is False:
            return "insecure"
        return BOUND_EXCEEDED


def _inst_hosts(network: Network) -> dict[str, str]:
    return network.instance_hosts()


def check_cache_flow_secure(n: Network, env: SecEnv, obs=None, mode: str | None = None,
                            inputs: InputSpace | None = None, fuel: int | None = None,
                            config: AnalysisConfig | None = None) -> Verdict:
    """Every pair of runs of each component from low-equivalent initial configurations must be
    bisimilar (weak: equal final low view and total time; strong: stepwise, equal durations)."""
    config = config or AnalysisConfig()
    if fuel is not None:
        config = config.with_overrides(fuel=fuel)
    mode = mode or config.mode
    obs = ObservationLevel.resolve(obs if obs is not None else config.obs, env, config.universe)
    if inputs is None:
        inputs = InputSpace.from_config(n, env, config, obs.level)
    machine = Machine(n, env, config)
    observer = Observer(env, obs, _inst_hosts(n), config.symmetric_equiv)
    stats = {"scenarios": 0, "outcomes": 0, "pairs": 0, "timing_violations": 0, "config_violations": 0,
             "length_violations": 0}
    try:
        scenarios = inputs.scenarios(config.max_runs)
        stats["scenarios"] = len(scenarios)
        inits = [machine.initial_configs(s.as_dict(), s.key_offset) for s in scenarios]
        per_comp = _collect(machine, inits, mode, config, stats)
    except BoundExceeded as exc:
        return Verdict(BOUND_EXCEEDED, mode, None, stats, str(exc))

    witness = None
    for k, comp in enumerate(machine.components):
        for i, j in itertools.product(range(len(scenarios)), repeat=2):
            if not observer.equiv(inits[i][k], inits[j][k]):
                continue
            for (run1, s1), (run2, s2) in itertools.product(per_comp[k][i], per_comp[k][j]):
                stats["pairs"] += 1
                reasons, step_at = _compare(run1, run2, mode, observer, stats)
                if reasons and witness is None:
                    witness = Witness(
                        component_label(comp), k, tuple(reasons), (scenarios[i], scenarios[j]),
                        (inits[i][k], inits[j][k]), (run1, run2), (s1, s2),
                        tuple(observer.differing(run1.final, run2.final)) if step_at is None
                        else tuple(observer.differing(run1.configs[step_at], run2.configs[step_at])),
                        step_at, obs,
                    )
    return Verdict(witness is None, mode, witness, stats)


def _collect(machine: Machine, inits, mode, config, stats) -> list[list[list[tuple[TimedRun, tuple]]]]:
    """Per component, per scenario: the distinct runs with a schedule that produces each."""
    n = len(machine.components)
    per_comp: list[list[list]] = [[[] for _ in inits] for _ in range(n)]
    for si, init in enumerate(inits):
        if mode == "weak":
            found = machine.outcomes(init)
            seen: list[dict] = [{} for _ in range(n)]
            for key, sched in found.items():
                for k in range(n):
                    if key[k] not in seen[k]:
                        seen[k][key[k]] = sched
            for k in range(n):
                for sched in seen[k].values():
                    per_comp[k][si].append((machine.replay(init, sched).runs[k], sched))
        else:
            vectors = machine.enumerate_runs(init)
            seen = [{} for _ in range(n)]
            for vec in vectors:
                for k, r in enumerate(vec.runs):
                    key = (r.configs, r.durations, tuple(s.event for s in r.steps), r.status)
                    if key not in seen[k]:
                        seen[k][key] = (r, vec.schedule)
            for k in range(n):
                per_comp[k][si].extend(seen[k].values())
        stats["outcomes"] += sum(len(per_comp[k][si]) for k in range(n))
    return per_comp


def _compare(r1: TimedRun, r2: TimedRun, mode: str, observer: Observer, stats: dict):
    reasons = []
    if mode == "weak":
        if r1.total_time != r2.total_time:
            reasons.append("timing")
            stats["timing_violations"] += 1
        if not observer.equiv(r1.final, r2.final):
            reasons.append("config")
            stats["config_violations"] += 1
        return reasons, None
    if len(r1.steps) != len(r2.steps):
        stats["length_violations"] += 1
        return ["length"], None
    j = _first_strong_violation(r1, r2, observer)
    if j is None:
        return [], None
    if not observer.equiv(r1.configs[j], r2.configs[j]):
        reasons.append("config")
        stats["config_violations"] += 1
    else:
        reasons.append("timing")
        stats["timing_violations"] += 1
    return reasons, j


def replay_witness(n: Network, env: SecEnv, config: AnalysisConfig, w: Witness) -> tuple[TimedRun, TimedRun]:
    """Re-run both sides of a witness from its scenarios and schedules."""
    m = Machine(n, env, config)
    runs = []
    for s, sched in zip(w.scenarios, w.schedules):
        runs.append(m.replay(m.initial_configs(s.as_dict(), s.key_offset), sched).runs[w.index])
    return runs[0], runs[1]


# -- semantic flow security -----------------------------------------------------


def observation_levels(env: SecEnv, universe: Iterable[str] = ()) -> list[ObservationLevel]:
    cats = all_categories(frozenset(universe) | _env_atoms(env))
    return [ObservationLevel(t, o, o2) for t in env.lattice.elements for o in cats for o2 in cats]


def check_semantic_security(n: Network, index: int, env_before: SecEnv, env_after: SecEnv, counter: Counter,
                            inputs: InputSpace, fuel: int | None = None, config: AnalysisConfig | None = None,
                            levels: list[ObservationLevel] | None = None) -> Verdict:
    """Semantic flow security of component ``index`` (run inside its network).

    (i) identifiers whose final label is strictly below the counter level are never changed;
    (ii) for every observer, initial configurations equivalent under ``env_before`` end in
    configurations equivalent under ``env_after``. Only terminating runs count.
    """
    config = config or AnalysisConfig()
    if fuel is not None:
        config = config.with_overrides(fuel=fuel)
    machine = Machine(n, env_before, config)
    comp = machine.components[index]
    label = component_label(comp)
    stats = {"scenarios": 0, "terminating": 0, "pairs": 0, "levels": 0}
    try:
        scenarios = inputs.scenarios(config.max_runs)
        stats["scenarios"] = len(scenarios)
        inits, finals = [], []
        for s in scenarios:
            init = machine.initial_configs(s.as_dict(), s.key_offset)
            outs: dict = {}
            for key, sched in machine.outcomes(init).items():
                final, _, status = key[index]
                if status == FUEL:
                    raise BoundExceeded(f"component {label} does not terminate within fuel {config.fuel}")
                if status == TERMINATED and final not in outs:
                    outs[final] = sched
            inits.append(init)
            finals.append(list(outs.items()))
            stats["terminating"] += len(outs)
    except BoundExceeded as exc:
        return Verdict(BOUND_EXCEEDED, "semantic", None, stats, str(exc))

    lat = env_after.lattice
    # clause (i): labels strictly below the counter must stay put
    low = [x for x, t in env_after.var_labels.items() if lat.lt(t, counter.level)]
    low_lines = [l for l, t in env_after.line_labels.items() if lat.lt(t, counter.level)]
    for si, s in enumerate(scenarios):
        g0 = inits[si][index]
        for final, sched in finals[si]:
            changed = [x for x in low if x in g0.sigma and g0.sigma[x] != final.sigma.get(x)]
            changed += [l for l in low_lines if l in g0.delta and g0.delta[l] != final.delta.get(l)]
            if changed:
                run = machine.replay(inits[si], sched).runs[index]
                w = Witness(label, index, ("write-below-counter",), (s, s), (g0, g0), (run, run),
                            (sched, sched), tuple(changed))
                return Verdict(False, "semantic", w, stats)

    # clause (ii)
    universe = config.universe
    levels = levels or observation_levels(env_before, universe)
    hosts = _inst_hosts(n)
    for obs in levels:
        stats["levels"] += 1
        before = Observer(env_before, obs, hosts, config.symmetric_equiv)
        after = Observer(env_after, obs, hosts, config.symmetric_equiv)
        for i, j in itertools.product(range(len(scenarios)), repeat=2):
            if not before.equiv(inits[i][index], inits[j][index]):
                continue
            for (f1, s1), (f2, s2) in itertools.product(finals[i], finals[j]):
                stats["pairs"] += 1
                if not after.equiv(f1, f2):
                    r1 = machine.replay(inits[i], s1).runs[index]
                    r2 = machine.replay(inits[j], s2).runs[index]
                    w = Witness(label, index, ("config",), (scenarios[i], scenarios[j]),
                                (inits[i][index], inits[j][index]), (r1, r2), (s1, s2),
                                tuple(after.differing(f1, f2)), None, obs)
                    return Verdict(False, "semantic", w, stats)
    return Verdict(True, "semantic", None, stats)


# -- soundness harness ----------------------------------------------------------

_LATTICES = {2: ("L", "H"), 3: ("L", "M", "H")}


class ProgramGenerator:
    """Random small programs over a fixed vocabulary, for cross-checking typing against semantics."""

    def __init__(self, rng: random.Random, variables: list[str], channel: str = "ch", line: str = "lc",
                 max_depth: int = 3, timed: bool = True):
        self.rng = rng
        self.vars = variables
        self.channel = channel
        self.line = line
        self.max_depth = max_depth
        self.timed = timed

    def expr(self, depth: int = 0, allowed=None):
        rng = self.rng
        pool = allowed if allowed is not None else self.vars
        r = rng.random()
        if depth >= 2 or r < 0.35:
            return Lit(rng.randint(0, 2)) if rng.random() < 0.4 else Var(rng.choice(pool))
        if r < 0.45:
            return Call("read", (ChanRef(self.channel),))
        return BinOp(rng.choice("+-*"), self.expr(depth + 1, allowed), self.expr(depth + 1, allowed))

    def boolean(self, depth: int = 0):
        rng = self.rng
        r = rng.random()
        if depth < 1 and r < 0.15:
            return Not(self.boolean(depth + 1))
        if depth < 1 and r < 0.25:
            return And(self.boolean(depth + 1), self.boolean(depth + 1))
        if r < 0.28:
            return TrueB()
        return Cmp(rng.choice((">", ">=", "<", "<=", "==")), self.expr(1), self.expr(1))

    def process(self, depth: int = 0, writable=None) -> Process:
        rng = self.rng
        writable = writable if writable is not None else self.vars
        if not writable:
            return Sleep(1)
        r = rng.random()
        if depth >= self.max_depth:
            r = rng.random() * 0.55
        if r < 0.22:
            return Assign(rng.choice(writable), self.expr())
        if r < 0.27:
            return Skip()
        if r < 0.31:
            return Sleep(rng.randint(0, 2))
        if r < 0.38:
            return Send(self.channel, self.expr())
        if r < 0.44:
            return Recv(self.channel, rng.choice(writable))
        if r < 0.47:
            return Stop()
        if r < 0.55:
            if self.timed:
                return TimedComm(5, Send(self.channel, self.expr()), Recv(self.channel, rng.choice(writable)),
                                 self.process(depth + 1, writable))
            return Assign(rng.choice(writable), self.expr())
        if r < 0.75:
            return Seq(self.process(depth + 1, writable), self.process(depth + 1, writable))
        if r < 0.90:
            return Branch(self.process(depth + 1, writable), self.boolean(), self.process(depth + 1, writable))
        v = rng.choice(writable)
        rest = [x for x in writable if x != v]
        body = self.process(depth + 1, rest) if rest else Sleep(0)
        return Loop(Cmp("<", Var(v), Lit(2)), Seq(body, Assign(v, BinOp("+", Var(v), Lit(1)))))


def _single_network(p: Process, page: str, channel: str, line: str) -> Network:
    return Network((Host("h", (Instance("i", p, frozenset({page})),)),), ((channel, line),), ((line, "i"),))


@dataclass
class SoundnessReport:
    programs: int = 0
    accepted: int = 0
    rejected: int = 0
    bound_exceeded: int = 0
    violations: list = field(default_factory=list)
    fixpoint_checks: int = 0
    fixpoint_max_ratio: float = 0.0
    comm_pairs: int = 0
    comm_accepted: int = 0
    comm_violations: list = field(default_factory=list)
    seconds: float = 0.0

    def to_record(self) -> dict:
        return {
            "programs": self.programs,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "bound_exceeded": self.bound_exceeded,
            "violations": len(self.violations),
            "fixpoint_checks": self.fixpoint_checks,
            "comm_pairs": self.comm_pairs,
            "comm_accepted": self.comm_accepted,
            "comm_violations": len(self.comm_violations),
        }


def random_env(rng: random.Random, lattice: Lattice, variables, lines, owner="i", hosts=("h",), insts=("i",)) -> SecEnv:
    return SecEnv(
        lattice,
        {x: rng.choice(lattice.elements) for x in variables},
        {l: rng.choice(lattice.elements) for l in lines},
        {l: owner for l in lines},
        {h: frozenset() for h in hosts},
        {i: frozenset() for i in insts},
    )


def soundness_harness(corpus_size: int = 500, seed: int = 0, max_depth: int = 3, fuel: int = 200,
                      comm_pairs: int = 50, var_values=(0, 1)) -> SoundnessReport:
    """Cross-check the type checker against the semantic oracles on random programs.

    Every accepted program must satisfy semantic flow security for its computed result environment;
    every accepted pair of straight-line communicating components must be weak cache flow secure at
    the bottom observer.
    """
    started = time.perf_counter()
    rng = random.Random(seed)
    report = SoundnessReport()
    cfg = AnalysisConfig(cost=("valuemod", 4), fuel=fuel)
    page, channel, line = "pg", "ch", "lc"
    for n in range(corpus_size):
        lattice = Lattice.chain(*_LATTICES[2 if n % 2 == 0 else 3])
        variables = ["a", "b", "c"][: 2 + (n % 3 == 2)]
        env = random_env(rng, lattice, variables, [page, line])
        gen = ProgramGenerator(rng, variables, channel, line, max_depth)
        prog = gen.process()
        counter = Counter(lattice.bottom if rng.random() < 0.6 else rng.choice(lattice.elements))
        report.programs += 1
        scope = Scope(frozenset(variables), frozenset({page}), {channel: line}, "i", "h")
        try:
            res = typecheck(counter, env, prog, scope)
        except SecurityTypeError:
            report.rejected += 1
            continue
        report.accepted += 1
        for _, iters, bound in res.loop_iterations:
            report.fixpoint_checks += 1
            report.fixpoint_max_ratio = max(report.fixpoint_max_ratio, iters / bound)
        net = _single_network(prog, page, channel, line)
        space = InputSpace.exhaustive(variables, [page, line], var_values)
        verdict = check_semantic_security(net, 0, env, res.env_after, counter, space, config=cfg)
        if verdict.secure is BOUND_EXCEEDED:
            report.bound_exceeded += 1
        elif verdict.secure is False:
            report.violations.append((prog, env, counter, verdict))

    for n in range(comm_pairs):
        lattice = Lattice.chain(*_LATTICES[2 if n % 2 == 0 else 3])
        net, env = random_comm_network(rng, lattice)
        report.comm_pairs += 1
        typing = typecheck_network(net, env, {**env.var_labels, **env.line_labels})
        if not typing.ok:
            continue
        report.comm_accepted += 1
        variables = sorted(env.var_labels)
        space = InputSpace.exhaustive(variables, [line], var_values)
        verdict = check_cache_flow_secure(net, env, (lattice.bottom, FULL, FULL), "weak", space, config=cfg)
        if verdict.secure is False:
            report.comm_violations.append((net, env, verdict))
    report.seconds = time.perf_counter() - started
    return report


def random_comm_network(rng: random.Random, lattice: Lattice) -> tuple[Network, SecEnv]:
    """Two straight-line components on separate instances using padded communication, assignments and sleeps."""
    bodies = []
    all_vars = []
    for prefix in ("a", "b"):
        vs = [f"{prefix}1", f"{prefix}2"]
        all_vars += vs
        stmts = []
        for _ in range(rng.randint(1, 4)):
            r = rng.random()
            if r < 0.4:
                e = Var(rng.choice(vs)) if rng.random() < 0.6 else BinOp("+", Var(rng.choice(vs)), Lit(rng.randint(0, 3)))
                stmts.append(Assign(rng.choice(vs), e))
            elif r < 0.6:
                stmts.append(Sleep(rng.randint(1, 2)))
            else:
                stmts.append(("timed", Var(rng.choice(vs)), rng.choice(vs)))
        proc: Process = Skip()
        for s in reversed(stmts):
            if isinstance(s, tuple):
                proc = TimedComm(5, Send("ch", s[1]), Recv("ch", s[2]), proc)
            else:
                proc = Seq(s, proc)
        bodies.append(proc)
    net = Network(
        (Host("h", (Instance("i1", bodies[0]), Instance("i2", bodies[1]))),),
        (("ch", "lc"),), (("lc", "i1"),),
    )
    env = random_env(rng, lattice, all_vars, ["lc"], owner="i1", insts=("i1", "i2"))
    return net, env
