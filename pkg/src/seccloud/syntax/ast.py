"""Abstract syntax of expressions, processes and networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = (">", ">=", "<", "<=", "==")
INTRINSICS = ("keyGen", "encrypt", "decrypt", "read")


# -- expressions ------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class ChanRef:
    """A channel used as a value; only legal as the argument of ``read``."""

    name: str


@dataclass(frozen=True)
class LineRef:
    name: str


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class StrLit:
    text: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in ARITH_OPS:
            raise ValueError(f"unknown arithmetic operator {self.op!r}")


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...] = ()

    def __post_init__(self):
        if self.name not in INTRINSICS:
            raise ValueError(f"unknown intrinsic {self.name!r}")


Expr = Union[Var, ChanRef, LineRef, Lit, StrLit, BinOp, Call]


@dataclass(frozen=True)
class TrueB:
    pass


@dataclass(frozen=True)
class Not:
    arg: "BoolExpr"


@dataclass(frozen=True)
class And:
    left: "BoolExpr"
    right: "BoolExpr"


@dataclass(frozen=True)
class Cmp:
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


BoolExpr = Union[TrueB, Not, And, Cmp]


# -- processes --------------------------------------------------------------


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Sleep:
    ticks: int

    def __post_init__(self):
        if self.ticks < 0:
            raise ValueError("sleep duration must be a natural number")


@dataclass(frozen=True)
class MoveP:
    instance: str


@dataclass(frozen=True)
class MoveI:
    host: str


@dataclass(frozen=True)
class Seq:
    first: "Process"
    second: "Process"


@dataclass(frozen=True)
class Branch:
    then: "Process"
    cond: BoolExpr
    orelse: "Process"


@dataclass(frozen=True)
class Loop:
    cond: BoolExpr
    body: "Process"


@dataclass(frozen=True)
class Send:
    channel: str
    expr: Expr


@dataclass(frozen=True)
class Recv:
    channel: str
    var: str


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


@dataclass(frozen=True)
class TimedComm:
    """Send and receive over one channel padded to exactly ``deadline`` ticks, then ``cont``."""

    deadline: int
    send: Send
    recv: Recv
    cont: "Process"

    def __post_init__(self):
        if self.send.channel != self.recv.channel:
            raise ValueError(
                f"timed communication mixes channels {self.send.channel!r} and {self.recv.channel!r}"
            )
        if self.deadline < 0:
            raise ValueError("deadline must be a natural number")

    @property
    def channel(self) -> str:
        return self.send.channel


Process = Union[Assign, Stop, Skip, Sleep, MoveP, MoveI, Seq, Branch, Loop, Send, Recv, Par, TimedComm]


def seq(*procs: Process) -> Process:
    """Right-nested sequential composition of one or more processes."""
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Seq(p, out)
    return out


def par(*procs: Process) -> Process:
    out = procs[-1]
    for p in reversed(procs[:-1]):
        out = Par(p, out)
    return out


def par_branches(p: Process) -> list[Process]:
    """Flatten a tree of ``Par`` nodes into its leaves, left to right."""
    if isinstance(p, Par):
        return par_branches(p.left) + par_branches(p.right)
    return [p]


# -- traversal helpers ------------------------------------------------------


def expr_vars(e: Expr | BoolExpr) -> set[str]:
    match e:
        case Var(name):
            return {name}
        case BinOp(_, l, r) | And(l, r) | Cmp(_, l, r):
            return expr_vars(l) | expr_vars(r)
        case Not(a):
            return expr_vars(a)
        case Call(_, args):
            return set().union(*(expr_vars(a) for a in args))
        case _:
            return set()


def expr_lines(e: Expr | BoolExpr, channels: dict[str, str]) -> set[str]:
    """Cache lines an expression refers to (through ``read``)."""
    match e:
        case ChanRef(name):
            return {channels[name]}
        case LineRef(name):
            return {name}
        case BinOp(_, l, r) | And(l, r) | Cmp(_, l, r):
            return expr_lines(l, channels) | expr_lines(r, channels)
        case Not(a):
            return expr_lines(a, channels)
        case Call(_, args):
            return set().union(*(expr_lines(a, channels) for a in args))
        case _:
            return set()


def children(p: Process) -> tuple[Process, ...]:
    match p:
        case Seq(a, b) | Par(a, b):
            return (a, b)
        case Branch(a, _, b):
            return (a, b)
        case Loop(_, body):
            return (body,)
        case TimedComm(_, s, r, cont):
            return (s, r, cont)
        case _:
            return ()


def walk(p: Process) -> Iterator[Process]:
    yield p
    for c in children(p):
        yield from walk(c)


def process_exprs(p: Process) -> Iterator[Expr | BoolExpr]:
    for node in walk(p):
        match node:
            case Assign(_, e) | Send(_, e):
                yield e
            case Branch(_, b, _) | Loop(b, _):
                yield b


def process_vars(p: Process) -> set[str]:
    out: set[str] = set()
    for node in walk(p):
        match node:
            case Assign(x, _) | Recv(_, x):
                out.add(x)
    for e in process_exprs(p):
        out |= expr_vars(e)
    return out


def process_channels(p: Process) -> set[str]:
    return {n.channel for n in walk(p) if isinstance(n, (Send, Recv, TimedComm))}


def uses_keygen(p: Process) -> bool:
    def has(e) -> bool:
        match e:
            case Call("keyGen", _):
                return True
            case Call(_, args):
                return any(has(a) for a in args)
            case BinOp(_, l, r) | And(l, r) | Cmp(_, l, r):
                return has(l) or has(r)
            case Not(a):
                return has(a)
        return False

    return any(has(e) for e in process_exprs(p))


# -- networks ---------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """``i:[[body]].pages``; a top-level ``Par`` in ``body`` means co-resident processes."""

    name: str
    body: Process
    pages: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Host:
    name: str
    instances: tuple[Instance, ...] = ()


@dataclass(frozen=True)
class Network:
    """A network of hosts. A host or instance name may repeat; repeats compose in parallel."""

    hosts: tuple[Host, ...]
    channels: tuple[tuple[str, str], ...] = ()  # channel -> cache line
    channel_owner: tuple[tuple[str, str], ...] = ()  # channel line -> owning instance

    @property
    def channel_lines(self) -> dict[str, str]:
        return dict(self.channels)

    def instance_pages(self) -> dict[str, frozenset[str]]:
        return {i.name: i.pages for h in self.hosts for i in h.instances}

    def instance_hosts(self) -> dict[str, str]:
        return {i.name: h.name for h in self.hosts for i in h.instances}

    def host_names(self) -> list[str]:
        out: list[str] = []
        for h in self.hosts:
            if h.name not in out:
                out.append(h.name)
        return out

    def lines(self) -> list[str]:
        pages = sorted(l for i in self.instance_pages().values() for l in i)
        return pages + sorted(set(self.channel_lines.values()) - set(pages))


@dataclass(frozen=True, order=True)
class Component:
    """One element of the parallel decomposition: ``host:instance:[[process]].pages``."""

    host: str
    instance: str
    fingerprint: str = field(repr=False)
    process: Process = field(compare=False)
    pages: frozenset[str] = field(compare=False, default=frozenset())

    def key(self) -> tuple:
        return (self.host, self.instance, self.fingerprint, tuple(sorted(self.pages)))
