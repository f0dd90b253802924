"""Timed small-step interpreter, deterministic scheduling and exhaustive run enumeration."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional

from .config import AnalysisConfig
from .lattice import SecEnv
from .syntax.ast import (
    And, Assign, BinOp, Branch, Call, ChanRef, Cmp, Component, LineRef, Lit, Loop, MoveI, MoveP,
    Network, Not, Par, Process, Recv, Send, Seq, Skip, Sleep, Stop, StrLit, TimedComm, TrueB, Var,
    expr_lines, process_exprs, process_channels, process_vars, uses_keygen,
)
from .syntax.normalize import normalize
from .syntax.printer import format_bool, format_expr, format_process

EVENT_KINDS = (
    "assign", "stop", "skip", "sleep-tick", "moveP", "moveI", "branch", "send", "recv",
    "timed-comm", "loop-unfold",
)

# component outcomes; only the first is a successful, final run
TERMINATED, DEADLOCK, FAULT, FUEL = "terminated", "deadlock", "fault", "fuel"


class Fault(Exception):
    """A run-level error (division by zero, forbidden move): the component stops in a fault state."""


class BoundExceeded(Exception):
    def __init__(self, message: str, explored: int = 0):
        super().__init__(message)
        self.explored = explored


def fnv1a32(text: str) -> int:
    h = 0x811C9DC5
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x01000193) & 0xFFFFFFFF
    return h


def intern_string(text: str) -> int:
    return fnv1a32(text)


def comm_cost(cost: tuple[str, int], value: int) -> int:
    kind, n = cost
    if kind == "constant":
        return n
    return 1 + abs(value) % n


@dataclass(frozen=True)
class Configuration:
    """Γ = (σ, δ, I, H) for one component; ``draws`` counts keyGen calls (offset by the chosen key)."""

    store: tuple[tuple[str, int], ...]
    cache: tuple[tuple[str, Optional[int]], ...]
    owner: str
    host: str
    draws: int = 0

    @classmethod
    def make(cls, store: Mapping[str, int], cache: Mapping[str, Optional[int]], owner: str, host: str,
             draws: int = 0) -> "Configuration":
        return cls(tuple(sorted(store.items())), tuple(sorted(cache.items())), owner, host, draws)

    @property
    def sigma(self) -> dict[str, int]:
        return dict(self.store)

    @property
    def delta(self) -> dict[str, Optional[int]]:
        return dict(self.cache)

    def var(self, x: str) -> int:
        for k, v in self.store:
            if k == x:
                return v
        raise Fault(f"variable {x!r} is not in the store")

    def line(self, l: str) -> Optional[int]:
        for k, v in self.cache:
            if k == l:
                return v
        raise Fault(f"cache line {l!r} is not visible to this component")

    def set_vars(self, **updates: int) -> "Configuration":
        return replace(self, store=tuple(sorted({**self.sigma, **updates}.items())))

    def set_lines(self, updates: Mapping[str, Optional[int]]) -> "Configuration":
        return replace(self, cache=tuple(sorted({**self.delta, **updates}.items())))


@dataclass(frozen=True)
class Event:
    kind: str
    subject: str
    channel: Optional[str] = None

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class StepResult:
    event: Event
    duration: int
    residual: Optional[Process]  # None: the process has terminated
    config: Configuration
    fault: Optional[str] = None


@dataclass(frozen=True)
class TimedStep:
    config_before: Configuration
    event: Event
    duration: int
    config_after: Optional[Configuration] = field(default=None, compare=False)


@dataclass(frozen=True)
class TimedRun:
    """A timed run of one component; ``status`` other than terminated marks a non-final run."""

    steps: tuple[TimedStep, ...]
    final: Configuration
    status: str = TERMINATED
    fault: Optional[str] = None

    @property
    def initial(self) -> Configuration:
        return self.steps[0].config_before if self.steps else self.final

    @property
    def total_time(self) -> int:
        return sum(s.duration for s in self.steps)

    @property
    def durations(self) -> tuple[int, ...]:
        return tuple(s.duration for s in self.steps)

    @property
    def configs(self) -> tuple[Configuration, ...]:
        """Γ_0 .. Γ_n: the configuration before every step followed by the final one."""
        return tuple(s.config_before for s in self.steps) + (self.final,)

    @property
    def is_final(self) -> bool:
        return self.status == TERMINATED


@dataclass(frozen=True)
class Context:
    """Static facts a component step needs besides its configuration."""

    channels: Mapping[str, str]
    pages: frozenset[str]
    env: SecEnv
    cost: tuple[str, int] = ("valuemod", 4)
    send_costs_time: bool = True
    keygen_domain: tuple[int, ...] = (0, 1, 2, 3)


# -- expressions ------------------------------------------------------------


def _div(a: int, b: int) -> int:
    if b == 0:
        raise Fault("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


class _Evaluator:
    def __init__(self, g: Configuration, ctx: Context | None):
        self.g = g
        self.ctx = ctx
        self.draws = g.draws

    def expr(self, e) -> int:
        match e:
            case Lit(v):
                return v
            case StrLit(text):
                return intern_string(text)
            case Var(x):
                return self.g.var(x)
            case BinOp(op, l, r):
                a, b = self.expr(l), self.expr(r)
                if op == "+":
                    return a + b
                if op == "-":
                    return a - b
                if op == "*":
                    return a * b
                return _div(a, b)
            case Call("keyGen", ()):
                dom = self.ctx.keygen_domain if self.ctx else (0, 1, 2, 3)
                v = dom[self.draws % len(dom)]
                self.draws += 1
                return v
            case Call("encrypt", (k, m)):
                return self.expr(k) ^ fnv1a32(str(self.expr(m)))
            case Call("decrypt", (k, c)):
                return self.expr(k) ^ self.expr(c)
            case Call("read", (ref,)):
                return 1 if self.g.line(self._line(ref)) is not None else -1
            case ChanRef() | LineRef():
                raise Fault("channel or cache line evaluated as a value")
        raise Fault(f"cannot evaluate {e!r}")

    def _line(self, ref) -> str:
        match ref:
            case ChanRef(a):
                if self.ctx is None:
                    raise Fault(f"no channel map to resolve {a!r}")
                return self.ctx.channels[a]
            case LineRef(l):
                return l
        raise Fault("read() expects a channel or cache line")

    def boolean(self, b) -> bool:
        match b:
            case TrueB():
                return True
            case Not(a):
                return not self.boolean(a)
            case And(l, r):
                return self.boolean(l) and self.boolean(r)
            case Cmp(op, l, r):
                a, c = self.expr(l), self.expr(r)
                return {">": a > c, ">=": a >= c, "<": a < c, "<=": a <= c, "==": a == c}[op]
        raise Fault(f"cannot evaluate {b!r}")


def eval_expr(g: Configuration, e, ctx: Context | None = None) -> int:
    """Integer value of ``e`` under Γ (keyGen draws are not committed)."""
    return _Evaluator(g, ctx).expr(e)


def eval_bool(g: Configuration, b, ctx: Context | None = None) -> bool:
    return _Evaluator(g, ctx).boolean(b)


# -- single steps -------------------------------------------------------------


def _faulted(kind: str, subject: str, g: Configuration, msg: str) -> StepResult:
    return StepResult(Event(kind, subject), 0, None, g, fault=msg)


def step(p: Process, g: Configuration, ctx: Context) -> list[StepResult]:
    """All enabled single steps of process ``p`` from Γ, in a deterministic order."""
    match p:
        case Assign(x, e):
            subject = f"{x} := {format_expr(e)}"
            ev = _Evaluator(g, ctx)
            try:
                v = ev.expr(e)
            except Fault as f:
                return [_faulted("assign", subject, g, str(f))]
            return [StepResult(Event("assign", subject), 0, None, replace(g.set_vars(**{x: v}), draws=ev.draws))]
        case Stop():
            flushed = {l: None for l in ctx.pages}
            return [StepResult(Event("stop", "stop"), 0, None, g.set_lines(flushed))]
        case Skip():
            return [StepResult(Event("skip", "skip"), 0, None, g)]
        case Sleep(n):
            rest = Sleep(n - 1) if n > 1 else None
            return [StepResult(Event("sleep-tick", f"sleep({n})"), 1 if n > 0 else 0, rest, g)]
        case MoveP(target):
            subject = f"moveP({target})"
            if not ctx.env.inst_cat[target] <= ctx.env.inst_cat[g.owner]:
                return [_faulted("moveP", subject, g, f"instance {target!r} has a higher category than {g.owner!r}")]
            return [StepResult(Event("moveP", subject), 0, None, replace(g, owner=target))]
        case MoveI(target):
            subject = f"moveI({target})"
            if not ctx.env.host_cat[target] <= ctx.env.host_cat[g.host]:
                return [_faulted("moveI", subject, g, f"host {target!r} has a higher category than {g.host!r}")]
            return [StepResult(Event("moveI", subject), 0, None, replace(g, host=target))]
        case Seq(first, second):
            out = []
            for r in step(first, g, ctx):
                if r.fault:
                    out.append(r)
                else:
                    out.append(replace(r, residual=second if r.residual is None else Seq(r.residual, second)))
            return out
        case Par(left, right):
            out = []
            for r in step(left, g, ctx):
                res = right if r.residual is None else Par(r.residual, right)
                out.append(r if r.fault else replace(r, residual=res))
            for r in step(right, g, ctx):
                res = left if r.residual is None else Par(left, r.residual)
                out.append(r if r.fault else replace(r, residual=res))
            return out
        case Branch(then, cond, orelse):
            subject = f"if ({format_bool(cond)})"
            try:
                taken = _Evaluator(g, ctx).boolean(cond)
            except Fault as f:
                return [_faulted("branch", subject, g, str(f))]
            return [StepResult(Event("branch", f"{subject} -> {'then' if taken else 'else'}"), 0,
                               then if taken else orelse, g)]
        case Loop(cond, body):
            subject = f"while ({format_bool(cond)})"
            try:
                taken = _Evaluator(g, ctx).boolean(cond)
            except Fault as f:
                return [_faulted("loop-unfold", subject, g, str(f))]
            residual = Seq(body, p) if taken else Skip()
            return [StepResult(Event("loop-unfold", f"{subject} -> {'body' if taken else 'exit'}"), 0, residual, g)]
        case Send(a, e):
            subject = f"{a} ! {format_expr(e)}"
            ev = _Evaluator(g, ctx)
            try:
                v = ev.expr(e)
            except Fault as f:
                return [_faulted("send", subject, g, str(f))]
            dt = comm_cost(ctx.cost, v) if ctx.send_costs_time else 0
            g2 = replace(g.set_lines({ctx.channels[a]: v}), draws=ev.draws)
            return [StepResult(Event("send", subject, a), dt, None, g2)]
        case Recv(a, x):
            v = g.line(ctx.channels[a])
            if v is None:
                return []  # blocked until something is sent
            return [StepResult(Event("recv", f"{a} ? {x}", a), 0, None, g.set_vars(**{x: v}))]
        case TimedComm():
            r = step_timed_comm(p, g, ctx)
            return [r]
    raise TypeError(f"not a process: {p!r}")


def step_timed_comm(node: TimedComm, g: Configuration, ctx: Context) -> StepResult:
    """Send-and-receive padded to exactly ``deadline`` ticks; a transfer that would not finish in time fails."""
    a, T = node.channel, node.deadline
    subject = f"timed({T}) {{ {format_process(node.send)} || {format_process(node.recv)} }}"
    ev = _Evaluator(g, ctx)
    try:
        v = ev.expr(node.send.expr)
    except Fault as f:
        return _faulted("timed-comm", subject, g, str(f))
    t = comm_cost(ctx.cost, v)
    if t < T:
        g2 = replace(g.set_vars(**{node.recv.var: v}).set_lines({ctx.channels[a]: None}), draws=ev.draws)
        return StepResult(Event("timed-comm", subject + " ok", a), T, node.cont, g2)
    return StepResult(Event("timed-comm", subject + " failed", a), T, Stop(), replace(g, draws=ev.draws))


# -- networks -----------------------------------------------------------------


def component_lines(c: Component, channels: Mapping[str, str]) -> list[str]:
    """Lines a component can observe: its instance pages, its channels' lines and lines it reads."""
    lines = set(c.pages) | {channels[a] for a in process_channels(c.process)}
    for e in process_exprs(c.process):
        lines |= expr_lines(e, dict(channels))
    return sorted(lines)


@dataclass(frozen=True)
class Local:
    """Per-component part of the network state."""

    process: Optional[Process]
    store: tuple[tuple[str, int], ...]
    owner: str
    host: str
    draws: int
    status: str  # running | terminated | fault | fuel | deadlock
    steps: int = 0
    elapsed: int = 0


@dataclass(frozen=True)
class NetState:
    locals: tuple[Local, ...]
    cache: tuple[tuple[str, Optional[int]], ...]


@dataclass(frozen=True)
class Move:
    """One scheduler choice: component ``k`` takes its ``choice``-th enabled step."""

    component: int
    choice: int
    result: StepResult


@dataclass(frozen=True)
class RunVector:
    """The outcome of one network execution: one timed run per component plus the global interleaving."""

    runs: tuple[TimedRun, ...]
    schedule: tuple[tuple[int, int], ...]  # (component, choice) in execution order
    events: tuple[tuple[int, Event, int], ...]  # (component, event, duration) in execution order

    def dedup_key(self):
        return (self.events, tuple(r.final for r in self.runs), tuple(r.status for r in self.runs))


class Machine:
    """Executes a normalized network under a fixed cost model and fuel."""

    def __init__(self, network: Network, env: SecEnv, config: AnalysisConfig | None = None):
        self.network = network
        self.env = env
        self.config = config or AnalysisConfig()
        self.components = normalize(network)
        self.channels = network.channel_lines
        self.all_lines = sorted(set(network.lines()))
        keygen = dict(self.config.domains).get("keyGen")
        keygen = tuple(v for v in keygen if v is not None) if keygen else (0, 1, 2, 3)
        self.contexts = [
            Context(self.channels, c.pages, env, self.config.cost, self.config.send_costs_time, keygen)
            for c in self.components
        ]
        self.views = [component_lines(c, self.channels) for c in self.components]
        self.variables = [sorted(process_vars(c.process)) for c in self.components]
        self.fuel = self.config.fuel

    # -- state construction -------------------------------------------------

    def initial_configs(self, values: Mapping[str, Optional[int]] | None = None, key_offset: int = 0) -> list[Configuration]:
        """Initial Γ per component: variables from ``values`` (default 0), lines from ``values``, then cache init, else ∅."""
        values = dict(values or {})
        cache_init = dict(self.config.cache_init)
        out = []
        for c, vars_, view in zip(self.components, self.variables, self.views):
            store = {x: values.get(x) if values.get(x) is not None else 0 for x in vars_}
            cache = {l: values[l] if l in values else cache_init.get(l) for l in view}
            out.append(Configuration.make(store, cache, c.instance, c.host, key_offset))
        return out

    def initial_state(self, init: list[Configuration]) -> NetState:
        if len(init) != len(self.components):
            raise ValueError(f"expected {len(self.components)} initial configurations, got {len(init)}")
        cache: dict[str, Optional[int]] = {l: None for l in self.all_lines}
        for g in init:
            for l, v in g.cache:
                if l in cache and v is not None:
                    cache[l] = v
        locals_ = tuple(
            Local(c.process, g.store, g.owner, g.host, g.draws, "running")
            for c, g in zip(self.components, init)
        )
        return NetState(locals_, tuple(sorted(cache.items())))

    def view(self, s: NetState, k: int) -> Configuration:
        loc = s.locals[k]
        cache = dict(s.cache)
        return Configuration(loc.store, tuple((l, cache[l]) for l in self.views[k]), loc.owner, loc.host, loc.draws)

    # -- transitions ----------------------------------------------------------

    def enabled(self, s: NetState, k: int) -> list[StepResult]:
        loc = s.locals[k]
        if loc.status != "running" or loc.process is None:
            return []
        if loc.steps >= self.fuel:
            return []
        return step(loc.process, self.view(s, k), self.contexts[k])

    def moves(self, s: NetState) -> list[Move]:
        return [Move(k, j, r) for k in range(len(s.locals)) for j, r in enumerate(self.enabled(s, k))]

    def apply(self, s: NetState, k: int, r: StepResult) -> NetState:
        loc = s.locals[k]
        g = r.config
        cache = dict(s.cache)
        cache.update(g.cache)
        if r.fault:
            status, process = FAULT, None
        elif r.residual is None:
            status, process = TERMINATED, None
        else:
            status, process = "running", r.residual
        new = replace(loc, process=process, store=g.store, owner=g.owner, host=g.host, draws=g.draws,
                      status=status, steps=loc.steps + 1, elapsed=loc.elapsed + r.duration)
        locals_ = list(s.locals)
        locals_[k] = new
        if r.event.kind == "moveI" and not r.fault:
            # the whole instance moves: every component it currently owns follows
            for j, other in enumerate(locals_):
                if j != k and other.owner == loc.owner:
                    locals_[j] = replace(other, host=g.host)
        return NetState(tuple(locals_), tuple(sorted(cache.items())))

    def settle(self, s: NetState) -> NetState:
        """Mark the components of a stuck state: out of fuel, or deadlocked when nobody ran out."""
        out_of_fuel = any(l.status == "running" and l.steps >= self.fuel for l in s.locals)
        locals_ = []
        for loc in s.locals:
            if loc.status == "running":
                if loc.steps >= self.fuel or out_of_fuel:
                    loc = replace(loc, status=FUEL)
                else:
                    loc = replace(loc, status=DEADLOCK)
            locals_.append(loc)
        return NetState(tuple(locals_), s.cache)

    # -- runs -------------------------------------------------------------------

    def replay(self, init: list[Configuration], schedule: Iterable[tuple[int, int]]) -> RunVector:
        """Re-execute a recorded schedule; the final state is settled if nothing is enabled."""
        s = self.initial_state(init)
        steps: list[list[TimedStep]] = [[] for _ in self.components]
        faults: list[Optional[str]] = [None] * len(self.components)
        events = []
        sched = []
        for k, j in schedule:
            options = self.enabled(s, k)
            if j >= len(options):
                raise ValueError(f"schedule entry ({k}, {j}) is not enabled")
            r = options[j]
            steps[k].append(TimedStep(self.view(s, k), r.event, r.duration, r.config))
            events.append((k, r.event, r.duration))
            sched.append((k, j))
            if r.fault:
                faults[k] = r.fault
            s = self.apply(s, k, r)
        if not self.moves(s):
            s = self.settle(s)
        return self._vector(s, steps, faults, sched, events)

    def _vector(self, s, steps, faults, sched, events) -> RunVector:
        runs = tuple(
            TimedRun(tuple(steps[k]), self.view(s, k), s.locals[k].status if s.locals[k].status != "running" else FUEL,
                     faults[k])
            for k in range(len(self.components))
        )
        return RunVector(runs, tuple(sched), tuple(events))

    def run(self, init: list[Configuration], scheduler: str | None = None) -> RunVector:
        """Deterministic execution: ``roundrobin`` cycles through enabled components; ``lowest`` always
        picks the lowest-index enabled one. Within a component the first enabled step is taken."""
        scheduler = scheduler or self.config.scheduler
        if scheduler == "exhaustive":
            scheduler = "roundrobin"
        s = self.initial_state(init)
        n = len(self.components)
        schedule = []
        pointer = 0
        while True:
            chosen = None
            for d in range(n):
                k = (pointer + d) % n if scheduler == "roundrobin" else d
                if self.enabled(s, k):
                    chosen = k
                    break
            if chosen is None:
                break
            r = self.enabled(s, chosen)[0]
            schedule.append((chosen, 0))
            s = self.apply(s, chosen, r)
            pointer = chosen + 1
        return self.replay(init, schedule)

    def enumerate_runs(self, init: list[Configuration], max_runs: int | None = None) -> list[RunVector]:
        """Every complete run vector over all scheduler choices, deduplicated, in discovery order."""
        max_runs = max_runs or self.config.max_runs
        seen: dict = {}
        explored = 0
        start = self.initial_state(init)
        # iterative DFS; each frame keeps the path so far
        stack = [(start, (), (), tuple(() for _ in self.components), (None,) * len(self.components))]
        while stack:
            s, sched, events, steps, faults = stack.pop()
            explored += 1
            moves = self.moves(s)
            if not moves:
                vec = self._vector(self.settle(s), [list(x) for x in steps], list(faults), sched, events)
                key = vec.dedup_key()
                if key not in seen:
                    seen[key] = vec
                    if len(seen) > max_runs:
                        raise BoundExceeded(f"more than {max_runs} distinct run vectors", explored)
                continue
            for m in reversed(moves):
                k, r = m.component, m.result
                st = list(steps)
                st[k] = st[k] + (TimedStep(self.view(s, k), r.event, r.duration, r.config),)
                fl = list(faults)
                if r.fault:
                    fl[k] = r.fault
                stack.append((self.apply(s, k, r), sched + ((k, m.choice),), events + ((k, r.event, r.duration),),
                              tuple(st), tuple(fl)))
            if explored > 50 * max_runs + 100000:
                raise BoundExceeded(f"explored more than {explored} scheduler states", explored)
        return list(seen.values())

    def outcomes(self, init: list[Configuration], max_states: int = 2_000_000) -> dict:
        """Distinct per-component end results over every schedule, via a visited-set search.

        Returns ``{(final config, total time, status) per component: first schedule reaching it}``.
        Much cheaper than ``enumerate_runs`` when only end states and totals matter.
        """
        start = self.initial_state(init)
        visited = {start}
        stack = [(start, ())]
        found: dict = {}
        while stack:
            s, sched = stack.pop()
            moves = self.moves(s)
            if not moves:
                end = self.settle(s)
                key = tuple((self.view(end, k), loc.elapsed, loc.status) for k, loc in enumerate(end.locals))
                found.setdefault(key, sched)
                continue
            for m in reversed(moves):
                nxt = self.apply(s, m.component, m.result)
                if nxt not in visited:
                    visited.add(nxt)
                    if len(visited) > max_states:
                        raise BoundExceeded(f"more than {max_states} reachable states", len(visited))
                    stack.append((nxt, sched + ((m.component, m.choice),)))
        return found


def run(n: Network, env: SecEnv, init: list[Configuration] | None = None, config: AnalysisConfig | None = None,
        scheduler: str | None = None) -> RunVector:
    m = Machine(n, env, config)
    return m.run(init if init is not None else m.initial_configs(), scheduler)


def enumerate_runs(n: Network, env: SecEnv, init: list[Configuration] | None = None,
                   config: AnalysisConfig | None = None) -> list[RunVector]:
    m = Machine(n, env, config)
    return m.enumerate_runs(init if init is not None else m.initial_configs())


def config_changes(before: Configuration, after: Configuration) -> tuple[dict, dict]:
    """Changed store and cache entries between two configurations."""
    s1, s2 = before.sigma, after.sigma
    d1, d2 = before.delta, after.delta
    return ({x: v for x, v in s2.items() if s1.get(x) != v}, {l: v for l, v in d2.items() if d1.get(l, v) != v or l not in d1})


def component_label(c: Component) -> str:
    return f"{c.host}:{c.instance}:{c.fingerprint}"


def uses_keygen_network(components: Iterable[Component]) -> bool:
    return any(uses_keygen(c.process) for c in components)
