"""Flow-sensitive security type checking: (τ, ω_I, ω_H) ⊢ Ξ {P} Ξ′.

The checker is algorithmic. It computes the least result environment and records a
derivation tree; declared final labels (a signature) are checked afterwards by
``conform``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .lattice import Category, LatticeError, OwnershipConflict, SecEnv, env_join
from .syntax.ast import (
    And, Assign, BinOp, Branch, Call, ChanRef, Cmp, Component, LineRef, Lit, Loop, MoveI, MoveP,
    Network, Not, Par, Process, Recv, Send, Seq, Skip, Sleep, Stop, StrLit, TimedComm, TrueB, Var,
    children, process_vars,
)
from .syntax.normalize import normalize
from .syntax.printer import format_process


@dataclass(frozen=True)
class Counter:
    level: str
    inst_cat: Category = frozenset()
    host_cat: Category = frozenset()

    @classmethod
    def bottom(cls, env: SecEnv) -> "Counter":
        return cls(env.lattice.bottom)

    def raised(self, env: SecEnv, label: str) -> "Counter":
        return Counter(env.lattice.join(self.level, label), self.inst_cat, self.host_cat)

    def is_bottom(self, env: SecEnv) -> bool:
        return self.level == env.lattice.bottom and not self.inst_cat and not self.host_cat

    def leq(self, other: "Counter", env: SecEnv) -> bool:
        return (env.lattice.leq(self.level, other.level) and self.inst_cat <= other.inst_cat
                and self.host_cat <= other.host_cat)


class SecurityTypeError(Exception):
    """A typing failure: the rule that failed, where, and which identifiers are involved."""

    def __init__(self, rule: str, path: str, message: str, identifiers: Iterable[str] = (),
                 expected: Optional[str] = None, actual: Optional[str] = None, component: Optional[str] = None):
        super().__init__(message)
        self.rule = rule
        self.path = path
        self.message = message
        self.identifiers = tuple(identifiers)
        self.expected = expected
        self.actual = actual
        self.component = component

    def to_record(self) -> dict:
        return {
            "rule": self.rule,
            "path": self.path,
            "component": self.component,
            "identifiers": list(self.identifiers),
            "expected": self.expected,
            "actual": self.actual,
            "message": self.message,
        }


# -- expressions --------------------------------------------------------------


def type_of_expr(env: SecEnv, e, channels: Mapping[str, str] | None = None) -> str:
    """Join of the labels an expression depends on; literals are ⊥.

    ``keyGen()`` types as the lattice top: it yields a fresh secret.
    ``read(l)`` types as the label of line ``l``.
    """
    lat = env.lattice
    match e:
        case Lit() | StrLit():
            return lat.bottom
        case Var(x):
            return env.var(x)
        case BinOp(_, l, r) | And(l, r) | Cmp(_, l, r):
            return lat.join(type_of_expr(env, l, channels), type_of_expr(env, r, channels))
        case Not(a):
            return type_of_expr(env, a, channels)
        case TrueB():
            return lat.bottom
        case Call("keyGen", _):
            return lat.top
        case Call("read", (ref,)):
            return env.line(_line_of(ref, channels))
        case Call(_, args):
            return lat.join_all(type_of_expr(env, a, channels) for a in args)
        case ChanRef() | LineRef():
            return env.line(_line_of(e, channels))
    raise LatticeError(f"cannot type {e!r}")


def _line_of(ref, channels) -> str:
    match ref:
        case ChanRef(a):
            if channels is None or a not in channels:
                raise LatticeError(f"channel {a!r} has no cache line")
            return channels[a]
        case LineRef(l):
            return l
    raise LatticeError("read() expects a channel or cache line")


# -- derivations --------------------------------------------------------------


@dataclass(frozen=True)
class Derivation:
    """One node of a typing derivation.

    ``updates`` are absolute assignments made by this node, as ``(kind, name, value)`` with kind
    one of var/line/owner/inst_cat/host_cat. Loop nodes keep one child per iteration.
    """

    rule: str
    path: str
    counter: Counter
    subject: str
    updates: tuple = ()
    children: tuple["Derivation", ...] = ()
    iterations: int = 0

    def to_record(self) -> dict:
        rec = {
            "rule": self.rule,
            "path": self.path,
            "counter": [self.counter.level, sorted(self.counter.inst_cat), sorted(self.counter.host_cat)],
            "subject": self.subject,
            "updates": [[k, n, sorted(v) if isinstance(v, frozenset) else v] for k, n, v in self.updates],
        }
        if self.rule == "TLOOP":
            rec["iterations"] = self.iterations
        rec["children"] = [c.to_record() for c in self.children]
        return rec

    def rules(self) -> list[str]:
        out = [self.rule]
        for c in self.children:
            out += c.rules()
        return out


def _apply(env: SecEnv, updates) -> SecEnv:
    for kind, name, value in updates:
        if kind == "var":
            env = env.with_var(name, value)
        elif kind == "line":
            env = env.with_line(name, value)
        elif kind == "owner":
            env = env.with_owner(name, value)
        elif kind == "inst_cat":
            env = env.with_inst_cat(name, value)
        elif kind == "host_cat":
            env = env.with_host_cat(name, value)
    return env


def merge_parallel(base: SecEnv, left: SecEnv, right: SecEnv) -> SecEnv:
    """Join the results of two parallel branches that both started from ``base``.

    Labels and categories are joined pointwise. A line moved by only one side takes that side's
    owner; moved differently by both sides is an ownership conflict.
    """
    owners = {}
    for l, o in base.line_owner.items():
        a, b = left.line_owner[l], right.line_owner[l]
        if a == b or b == o:
            owners[l] = a
        elif a == o:
            owners[l] = b
        else:
            raise OwnershipConflict(f"line {l!r} moved to both {a!r} and {b!r}")
    return env_join(left.replace(line_owner=owners), right.replace(line_owner=owners))


def replay(d: Derivation, env: SecEnv) -> SecEnv:
    """Recompute the result environment from a derivation tree."""
    match d.rule:
        case "TSEQ" | "TTIMED":
            for c in d.children:
                env = replay(c, env)
            return _apply(env, d.updates)
        case "TBRANCH":
            return env_join(replay(d.children[0], env), replay(d.children[1], env))
        case "TPAR":
            return merge_parallel(env, replay(d.children[0], env), replay(d.children[1], env))
        case "TLOOP":
            current = env
            for c in d.children:
                current = env_join(replay(c, current), env)
            return current
    return _apply(env, d.updates)


# -- checking -----------------------------------------------------------------


@dataclass(frozen=True)
class Prov:
    """Where an identifier's current label came from."""

    rule: str
    path: str
    implicit: Optional[tuple[str, str]] = None  # (rule, path) of the guard that raised the counter


@dataclass
class TypeResult:
    env_after: SecEnv
    derivation: Derivation
    provenance: dict[str, Prov] = field(default_factory=dict)
    loop_iterations: list[tuple[str, int, int]] = field(default_factory=list)  # (path, iterations, bound)


@dataclass(frozen=True)
class Scope:
    """What the checker needs to know about the component around the process."""

    variables: frozenset[str] = frozenset()
    pages: frozenset[str] = frozenset()
    channels: Mapping[str, str] = field(default_factory=dict)
    instance: Optional[str] = None
    host: Optional[str] = None
    # variables and pages of every component, keyed by instance, for instance moves
    members: Mapping[str, tuple[frozenset[str], frozenset[str]]] = field(default_factory=dict)
    permissive_tstop: bool = False


def _child_path(path: str, i: int) -> str:
    return f"{path.rstrip('/')}/{i}"


def resolve_path(p: Process, path: str) -> Process:
    """The sub-term of ``p`` at ``path`` (``/`` is the root; ``/1/0`` follows child indices)."""
    node = p
    for part in [x for x in path.split("/") if x]:
        node = children(node)[int(part)]
    return node


def _subject(p: Process) -> str:
    match p:
        case Seq():
            return ";"
        case Par():
            return "||"
        case Branch():
            return "if"
        case Loop():
            return "while"
        case TimedComm():
            return "timed"
    return format_process(p)


class _Checker:
    def __init__(self, scope: Scope, env0: SecEnv):
        self.scope = scope
        self.lat = env0.lattice
        self.loops: list[tuple[str, int, int]] = []
        self.bound = (len(env0.var_labels) + len(env0.line_labels)) * self.lat.height + 1

    def fail(self, rule, path, msg, ids=(), expected=None, actual=None):
        return SecurityTypeError(rule, path, msg, ids, expected, actual)

    def type_of(self, env, e, path):
        try:
            return type_of_expr(env, e, self.scope.channels)
        except LatticeError as exc:
            raise self.fail("TEXP", path, str(exc)) from None

    def check(self, counter: Counter, origin, env: SecEnv, p: Process, path: str, loc, prov):
        """Returns (env′, derivation, location′, provenance′)."""
        lat = self.lat
        node = lambda rule, updates=(), kids=(), it=0: Derivation(  # noqa: E731
            rule, path, counter, _subject(p), tuple(updates), tuple(kids), it)

        def raise_prov(rule, ids, explicit_label):
            implicit = origin if not lat.leq(counter.level, explicit_label) else None
            new = dict(prov)
            for x in ids:
                new[x] = Prov(rule, path, implicit)
            return new

        match p:
            case Assign(x, e):
                t = self.type_of(env, e, path)
                label = lat.join(counter.level, t)
                if x not in env.var_labels:
                    raise self.fail("TASS", path, f"variable {x!r} has no label", [x])
                ups = [("var", x, label)]
                return _apply(env, ups), node("TASS", ups), loc, raise_prov("TASS", [x], t)
            case Skip():
                if not counter.is_bottom(env) and not self.scope.permissive_tstop:
                    raise self.fail("TSKIP", path, "skip is only typable at the bottom counter",
                                    expected=lat.bottom, actual=counter.level)
                return env, node("TSKIP"), loc, prov
            case Sleep():
                return env, node("TSLEEP"), loc, prov
            case Stop():
                if not counter.is_bottom(env) and not self.scope.permissive_tstop:
                    raise self.fail("TSTOP", path, "stop is only typable at the bottom counter",
                                    expected=lat.bottom, actual=counter.level)
                ups = [("line", l, lat.bottom) for l in sorted(self.scope.pages)]
                new = dict(prov)
                for _, l, _ in ups:
                    new[l] = Prov("TSTOP", path)
                return _apply(env, ups), node("TSTOP", ups), loc, new
            case Send(a, w):
                line = self.scope.channels.get(a)
                if line is None:
                    raise self.fail("TSEND", path, f"channel {a!r} has no cache line", [a])
                t = self.type_of(env, w, path)
                ups = [("line", line, lat.join(counter.level, t))]
                return _apply(env, ups), node("TSEND", ups), loc, raise_prov("TSEND", [line], t)
            case Recv(a, x):
                line = self.scope.channels.get(a)
                if line is None:
                    raise self.fail("TRECV", path, f"channel {a!r} has no cache line", [a])
                if x not in env.var_labels:
                    raise self.fail("TRECV", path, f"variable {x!r} has no label", [x])
                t = env.line(line)
                ups = [("var", x, lat.join(counter.level, t))]
                return _apply(env, ups), node("TRECV", ups), loc, raise_prov("TRECV", [x], t)
            case Seq(a, b):
                env1, d1, loc1, prov1 = self.check(counter, origin, env, a, _child_path(path, 0), loc, prov)
                env2, d2, loc2, prov2 = self.check(counter, origin, env1, b, _child_path(path, 1), loc1, prov1)
                return env2, node("TSEQ", kids=(d1, d2)), loc2, prov2
            case Branch(then, cond, orelse):
                t = self.type_of(env, cond, path)
                inner = counter.raised(env, t)
                inner_origin = ("TBRANCH", path) if inner.level != counter.level else origin
                e1, d1, l1, p1 = self.check(inner, inner_origin, env, then, _child_path(path, 0), loc, prov)
                e2, d2, l2, p2 = self.check(inner, inner_origin, env, orelse, _child_path(path, 1), loc, prov)
                if l1 != l2:
                    raise self.fail("TBRANCH", path, "branches end at different locations")
                try:
                    out = env_join(e1, e2)
                except OwnershipConflict as exc:
                    raise self.fail("TBRANCH", path, f"branches disagree on ownership: {exc}") from None
                return out, node("TBRANCH", kids=(d1, d2)), l1, _join_prov(env, out, e1, p1, e2, p2, prov)
            case Loop(cond, body):
                return self.loop(counter, origin, env, cond, body, path, loc, prov)
            case Par(a, b):
                e1, d1, l1, p1 = self.check(counter, origin, env, a, _child_path(path, 0), loc, prov)
                e2, d2, l2, p2 = self.check(counter, origin, env, b, _child_path(path, 1), loc, prov)
                if l1 != l2:
                    raise self.fail("TPAR", path, "parallel branches end at different locations")
                try:
                    out = merge_parallel(env, e1, e2)
                except OwnershipConflict as exc:
                    raise self.fail("TPAR", path, str(exc)) from None
                return out, node("TPAR", kids=(d1, d2)), l1, _join_prov(env, out, e1, p1, e2, p2, prov)
            case TimedComm(_, send, recv, cont):
                e1, d1, loc, p1 = self.check(counter, origin, env, send, _child_path(path, 0), loc, prov)
                e2, d2, loc, p2 = self.check(counter, origin, e1, recv, _child_path(path, 1), loc, p1)
                e3, d3, loc, p3 = self.check(counter, origin, e2, cont, _child_path(path, 2), loc, p2)
                return e3, node("TTIMED", kids=(d1, d2, d3)), loc, p3
            case MoveP(target):
                return self.move_process(counter, env, target, path, loc, prov, node)
            case MoveI(target):
                return self.move_instance(counter, env, target, path, loc, prov, node)
        raise TypeError(f"not a process: {p!r}")

    def loop(self, counter, origin, env, cond, body, path, loc, prov):
        current, kids = env, []
        cur_prov = prov
        for i in range(1, self.bound + 1):
            t = self.type_of(current, cond, path)
            inner = counter.raised(current, t)
            inner_origin = ("TLOOP", path) if inner.level != counter.level else origin
            after, d, loc2, p2 = self.check(inner, inner_origin, current, body, _child_path(path, 0), loc, cur_prov)
            if loc2 != loc:
                raise self.fail("TLOOP", path, "loop body changes the location")
            try:
                nxt = env_join(after, env)
            except OwnershipConflict as exc:
                raise self.fail("TLOOP", path, f"loop body moves cache ownership: {exc}") from None
            kids.append(d)
            cur_prov = _join_prov(env, nxt, after, p2, env, prov, prov)
            if nxt == current:
                self.loops.append((path, i, self.bound))
                return current, Derivation("TLOOP", path, counter, "while", (), tuple(kids), i), loc, cur_prov
            current = nxt
        raise RuntimeError(f"loop fixpoint at {path} did not converge within {self.bound} iterations")

    def _source_instance(self, env, loc):
        pages = sorted(self.scope.pages)
        if pages:
            return env.line_owner[pages[0]]
        return loc[0]

    def move_process(self, counter, env, target, path, loc, prov, node):
        lat = self.lat
        if target not in env.inst_cat:
            raise self.fail("TMOVE", path, f"unknown instance {target!r}", [target])
        source = self._source_instance(env, loc)
        ups = [("var", x, lat.join(env.var(x), counter.level)) for x in sorted(self.scope.variables)]
        ups += [("line", l, lat.join(env.line(l), counter.level)) for l in sorted(self.scope.pages)]
        ups += [("owner", l, target) for l in sorted(self.scope.pages)]
        src_cat = env.inst_cat.get(source, frozenset()) if source else frozenset()
        ups.append(("inst_cat", target, src_cat | env.inst_cat[target] | counter.inst_cat))
        new = dict(prov)
        for kind, name, _ in ups:
            if kind in ("var", "line"):
                new[name] = Prov("TMOVE", path)
        return _apply(env, ups), node("TMOVE", ups), (target, loc[1]), new

    def move_instance(self, counter, env, target, path, loc, prov, node):
        lat = self.lat
        if target not in env.host_cat:
            raise self.fail("TMOVE", path, f"unknown host {target!r}", [target])
        inst = self._source_instance(env, loc)
        vars_, pages = set(self.scope.variables), set(self.scope.pages)
        if inst in self.scope.members:
            mv, mp = self.scope.members[inst]
            vars_ |= mv
            pages |= mp
        ups = [("var", x, lat.join(env.var(x), counter.level)) for x in sorted(vars_) if x in env.var_labels]
        ups += [("line", l, lat.join(env.line(l), counter.level)) for l in sorted(pages)]
        source_host = loc[1]
        if source_host is not None:
            ups.append(("host_cat", source_host,
                        env.host_cat[source_host] | env.host_cat[target] | counter.host_cat))
        new = dict(prov)
        for kind, name, _ in ups:
            if kind in ("var", "line"):
                new[name] = Prov("TMOVE", path)
        return _apply(env, ups), node("TMOVE", ups), (loc[0], target), new


def _join_prov(base, out, e1, p1, e2, p2, prov) -> dict:
    new = dict(prov)
    for kind in ("var_labels", "line_labels"):
        for x, label in getattr(out, kind).items():
            if label == getattr(base, kind)[x] and getattr(e1, kind)[x] == label and getattr(e2, kind)[x] == label:
                pick = p1.get(x) or p2.get(x) or prov.get(x)
            elif getattr(e1, kind)[x] == label:
                pick = p1.get(x)
            else:
                pick = p2.get(x)
            if pick is not None:
                new[x] = pick
    return new


def typecheck(counter: Counter, env: SecEnv, p: Process, scope: Scope | None = None) -> TypeResult:
    """Least Ξ′ with (counter) ⊢ Ξ {p} Ξ′, with its derivation. Raises SecurityTypeError."""
    if scope is None:
        scope = Scope(variables=frozenset(process_vars(p)))
    checker = _Checker(scope, env)
    loc = (scope.instance, scope.host)
    out, d, _, prov = checker.check(counter, None, env, p, "/", loc, {})
    return TypeResult(out, d, prov, checker.loops)


def loop_fixpoint(counter: Counter, env: SecEnv, guard, body: Process, scope: Scope | None = None) -> tuple[SecEnv, int]:
    """Least fixpoint of the loop typing; returns (environment, iterations used)."""
    res = typecheck(counter, env, Loop(guard, body), scope)
    return res.env_after, res.derivation.iterations


def fixpoint_bound(env: SecEnv) -> int:
    return (len(env.var_labels) + len(env.line_labels)) * env.lattice.height + 1


def conform(result_env: SecEnv, signature: Mapping[str, str], names: Iterable[str],
            provenance: Mapping[str, Prov] | None = None) -> None:
    """Check the computed labels of ``names`` against declared final labels (subsumption)."""
    lat = result_env.lattice
    provenance = provenance or {}
    for x in sorted(set(names) & set(signature)):
        actual = result_env.var_labels.get(x) or result_env.line_labels.get(x)
        declared = signature[x]
        if not lat.leq(actual, declared):
            prov = provenance.get(x)
            if prov is not None and prov.implicit is not None:
                rule, path = prov.implicit
                why = f"implicit flow from the guard at {path}"
            elif prov is not None:
                rule, path, why = prov.rule, prov.path, f"assigned at {prov.path}"
            else:
                rule, path, why = "TSUB", "/", "initial label"
            raise SecurityTypeError(
                rule, path, f"{x!r} raised to {actual} above its declared {declared} ({why})",
                [x], expected=declared, actual=actual,
            )


# -- networks -----------------------------------------------------------------


@dataclass
class ComponentResult:
    component: Component
    counter: Counter
    result: Optional[TypeResult]
    error: Optional[SecurityTypeError]


@dataclass
class NetworkTyping:
    components: list[ComponentResult]
    env_after: Optional[SecEnv]
    errors: list[SecurityTypeError]

    @property
    def ok(self) -> bool:
        return not self.errors


def component_scope(n: Network, c: Component, comps: list[Component], permissive: bool = False) -> Scope:
    members: dict[str, tuple[frozenset, frozenset]] = {}
    for o in comps:
        v, pg = members.get(o.instance, (frozenset(), frozenset()))
        members[o.instance] = (v | frozenset(process_vars(o.process)), pg | o.pages)
    return Scope(
        variables=frozenset(process_vars(c.process)),
        pages=c.pages,
        channels=n.channel_lines,
        instance=c.instance,
        host=c.host,
        members=members,
        permissive_tstop=permissive,
    )


def component_footprint(c: Component, channels: Mapping[str, str]) -> set[str]:
    from .semantics import component_lines

    return set(process_vars(c.process)) | set(component_lines(c, channels))


def typecheck_network(n: Network, env: SecEnv, signature: Mapping[str, str] | None = None,
                      permissive_tstop: bool = False) -> NetworkTyping:
    """Check every component at (⊥, β_i(instance), β_h(host)) from the shared Ξ and join the results."""
    signature = dict(signature or {})
    comps = normalize(n)
    results: list[ComponentResult] = []
    errors: list[SecurityTypeError] = []
    joined: Optional[SecEnv] = env
    touched: set[str] = set()
    for c in comps:
        counter = Counter(env.lattice.bottom, env.inst_cat.get(c.instance, frozenset()),
                          env.host_cat.get(c.host, frozenset()))
        label = f"{c.host}:{c.instance}:{c.fingerprint}"
        scope = component_scope(n, c, comps, permissive_tstop)
        try:
            res = typecheck(counter, env, c.process, scope)
            footprint = component_footprint(c, n.channel_lines)
            touched |= footprint
            conform(res.env_after, signature, footprint, res.provenance)
        except SecurityTypeError as err:
            err.component = label
            errors.append(err)
            results.append(ComponentResult(c, counter, None, err))
            continue
        except RuntimeError as err:
            e = SecurityTypeError("TLOOP", "/", f"internal error: {err}", component=label)
            errors.append(e)
            results.append(ComponentResult(c, counter, None, e))
            continue
        results.append(ComponentResult(c, counter, res, None))
        if joined is not None:
            try:
                joined = merge_parallel(env, joined, res.env_after)
            except OwnershipConflict as exc:
                e = SecurityTypeError("TPAR", "/", str(exc), component=label)
                errors.append(e)
                joined = None
    untouched = [x for x in signature if x not in touched]
    try:
        conform(env, signature, untouched)
    except SecurityTypeError as err:
        err.rule = "TSUB"
        errors.append(err)
    return NetworkTyping(results, joined if not errors else None, errors)
