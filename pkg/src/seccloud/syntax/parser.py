"""Recursive-descent parser for ``.scl`` model files.

A model file is a sequence of sections::

    lattice { L < M < H }
    categories { student staff }
    host h1 cat { student } {
      vm i1 pages { p1 } { P || Q }
    }
    channel key -> lkey owner i1
    label { x: H; lkey: H; p1: L }
    final { x: H }
    cache { lkey = 0 }
    config { cost = valuemod:4; fuel = 60; domain keyGen = 0,1,2,3 }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from ..config import AnalysisConfig, ConfigError, parse_cost, parse_domain, parse_obs
from ..lattice import Lattice, LatticeError, SecEnv
from .ast import (
    CMP_OPS, INTRINSICS, And, Assign, BinOp, Branch, Call, ChanRef, Cmp, Host, Instance, LineRef,
    Lit, Loop, MoveI, MoveP, Network, Not, Par, Recv, Send, Seq, Skip, Sleep, Stop, StrLit,
    TimedComm, TrueB, Var, walk,
)


class ModelError(ValueError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message, self.line, self.col = message, line, col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + message)


class ParseError(ModelError):
    pass


KEYWORDS = {"stop", "skip", "sleep", "moveP", "moveI", "if", "else", "while", "timed", "then", "true"}

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|\|\||&&|->|>=|<=|==|[{}()\[\];,:<>=!?+\-*/@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), line, m.start() - line_start + 1, m.start(), m.end()))
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1, pos, pos))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.first_use: dict[str, Token] = {}

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(f"{msg} (found {found})", tok.line, tok.col)

    def at(self, *texts: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text in texts

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            raise self.error(f"expected {what}")
        self.i += 1
        self.first_use.setdefault(t.text, t)
        return t.text

    def integer(self) -> int:
        t = self.tok
        if t.kind != "int":
            raise self.error("expected an integer")
        self.i += 1
        return int(t.text)

    def separators(self) -> None:
        while self.accept(";") or self.accept(","):
            pass

    # -- expressions --------------------------------------------------------

    def expr(self):
        e = self.term()
        while self.at("+", "-"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.at("*", "/"):
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.at("-") and self.peek().kind == "int":
            self.i += 1
            return Lit(-self.integer())
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "int":
            return Lit(self.integer())
        if t.kind == "string":
            self.i += 1
            return StrLit(json.loads(t.text))
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident" and t.text in INTRINSICS and self.peek().text == "(":
            self.i += 2
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
            self.expect(")")
            arity = {"keyGen": 0, "encrypt": 2, "decrypt": 2, "read": 1}[t.text]
            if len(args) != arity:
                raise ParseError(f"{t.text} takes {arity} argument(s), got {len(args)}", t.line, t.col)
            return Call(t.text, tuple(args))
        return Var(self.ident("expression"))

    def boolean(self):
        b = self.bnot()
        while self.accept("&&"):
            b = And(b, self.bnot())
        return b

    def bnot(self):
        if self.accept("!"):
            return Not(self.bnot())
        return self.batom()

    def batom(self):
        if self.accept("true"):
            return TrueB()
        if self.at("("):
            save = self.i
            try:
                return self.comparison()
            except ParseError:
                self.i = save
            self.expect("(")
            b = self.boolean()
            self.expect(")")
            return b
        return self.comparison()

    def comparison(self):
        left = self.expr()
        if not (self.tok.kind == "op" and self.tok.text in CMP_OPS):
            raise self.error("expected a comparison operator")
        op = self.tok.text
        self.i += 1
        return Cmp(op, left, self.expr())

    # -- processes ----------------------------------------------------------

    def process(self):
        branches = [self.seqp()]
        while self.accept("||"):
            branches.append(self.seqp())
        out = branches[-1]
        for p in reversed(branches[:-1]):
            out = Par(p, out)
        return out

    def seqp(self):
        stmts = [self.stmt()]
        while self.accept(";"):
            if self.at("}") or self.at("||") or self.tok.kind == "eof":
                break
            stmts.append(self.stmt())
        out = stmts[-1]
        for p in reversed(stmts[:-1]):
            out = Seq(p, out)
        return out

    def block(self):
        self.expect("{")
        p = self.process()
        self.expect("}")
        return p

    def stmt(self):
        t = self.tok
        if self.at("{"):
            return self.block()
        if t.kind != "ident":
            raise self.error("expected a process")
        word = t.text
        if word == "stop":
            self.i += 1
            return Stop()
        if word == "skip":
            self.i += 1
            return Skip()
        if word == "sleep":
            self.i += 1
            self.expect("(")
            n = self.integer()
            self.expect(")")
            return Sleep(n)
        if word in ("moveP", "moveI"):
            self.i += 1
            self.expect("(")
            target = self.ident("move target")
            self.expect(")")
            return MoveP(target) if word == "moveP" else MoveI(target)
        if word == "if":
            self.i += 1
            self.expect("(")
            b = self.boolean()
            self.expect(")")
            then = self.block()
            self.expect("else")
            return Branch(then, b, self.block())
        if word == "while":
            self.i += 1
            self.expect("(")
            b = self.boolean()
            self.expect(")")
            return Loop(b, self.block())
        if word == "timed":
            self.i += 1
            self.expect("(")
            deadline = self.integer()
            self.expect(")")
            self.expect("{")
            ch = self.ident("channel")
            self.expect("!")
            w = self.expr()
            self.expect("||")
            ch2_tok = self.tok
            ch2 = self.ident("channel")
            self.expect("?")
            x = self.ident("variable")
            self.expect("}")
            self.expect("then")
            cont = self.block()
            if ch != ch2:
                raise ParseError(f"timed communication mixes channels {ch!r} and {ch2!r}", ch2_tok.line, ch2_tok.col)
            return TimedComm(deadline, Send(ch, w), Recv(ch, x), cont)
        name = self.ident("process")
        if self.accept(":="):
            return Assign(name, self.expr())
        if self.accept("!"):
            return Send(name, self.expr())
        if self.accept("?"):
            return Recv(name, self.ident("variable"))
        raise self.error(f"expected ':=', '!' or '?' after {name!r}")

    # -- model sections -----------------------------------------------------

    def category(self) -> frozenset[str]:
        self.expect("{")
        atoms = []
        while not self.at("}"):
            atoms.append(self.ident("category atom"))
            self.separators()
        self.expect("}")
        return frozenset(atoms)

    def model(self) -> "_RawModel":
        raw = _RawModel()
        while self.tok.kind != "eof":
            t = self.tok
            word = self.ident("section keyword")
            if word == "lattice":
                self.lattice_section(raw, t)
            elif word == "categories":
                raw.universe_declared = True
                raw.universe |= self.category()
            elif word == "host":
                self.host_section(raw)
            elif word == "channel":
                ch_tok = self.tok
                ch = self.ident("channel name")
                self.expect("->")
                line = self.ident("cache line")
                self.expect("owner")
                owner_tok = self.tok
                owner = self.ident("instance")
                if ch in raw.channels:
                    raise ParseError(f"channel {ch!r} declared twice", ch_tok.line, ch_tok.col)
                raw.channels[ch] = line
                raw.channel_owner[line] = (owner, owner_tok)
                raw.positions[ch] = ch_tok
                self.separators()
            elif word in ("label", "final"):
                target = raw.labels if word == "label" else raw.signature
                self.expect("{")
                while not self.at("}"):
                    nt = self.tok
                    name = self.ident("identifier")
                    self.expect(":")
                    lt = self.tok
                    label = self.ident("label")
                    if name in target:
                        raise ParseError(f"{name!r} labelled twice", nt.line, nt.col)
                    target[name] = label
                    raw.positions.setdefault(name, nt)
                    raw.positions.setdefault("label:" + label, lt)
                    self.separators()
                self.expect("}")
            elif word == "cache":
                self.expect("{")
                while not self.at("}"):
                    nt = self.tok
                    name = self.ident("cache line")
                    self.expect("=")
                    neg = self.accept("-")
                    if self.tok.kind == "int":
                        value = self.integer() * (-1 if neg else 1)
                    elif self.accept("_"):
                        value = None
                    else:
                        raise self.error("expected an integer or '_'")
                    raw.cache_init[name] = value
                    raw.positions.setdefault(name, nt)
                    self.separators()
                self.expect("}")
            elif word == "config":
                self.config_section(raw)
            else:
                raise ParseError(f"unknown section {word!r}", t.line, t.col)
        return raw

    def lattice_section(self, raw: "_RawModel", t: Token) -> None:
        self.expect("{")
        while not self.at("}"):
            prev = self.ident("lattice element")
            raw.elements.append(prev)
            while self.accept("<"):
                nxt = self.ident("lattice element")
                raw.elements.append(nxt)
                raw.covers.append((prev, nxt))
                prev = nxt
            self.separators()
        self.expect("}")
        raw.lattice_tok = t

    def host_section(self, raw: "_RawModel") -> None:
        ht = self.tok
        host = self.ident("host name")
        cat = self.category() if self.accept("cat") else None
        if cat is not None:
            prev = raw.host_cat.get(host)
            if prev is not None and prev != cat:
                raise ParseError(f"host {host!r} declared with two categories", ht.line, ht.col)
            raw.host_cat[host] = cat
        raw.host_cat.setdefault(host, frozenset())
        self.expect("{")
        instances = []
        while not self.at("}"):
            self.expect("vm")
            it = self.tok
            name = self.ident("instance name")
            icat = self.category() if self.accept("cat") else None
            self.expect("pages")
            self.expect("{")
            pages = []
            while not self.at("}"):
                pt = self.tok
                pages.append(self.ident("cache line"))
                raw.positions.setdefault(pages[-1], pt)
                self.separators()
            self.expect("}")
            body = self.block()
            raw.instance_decls.append((host, name, frozenset(pages), icat, it))
            instances.append(Instance(name, body, frozenset(pages)))
        self.expect("}")
        raw.hosts.append(Host(host, tuple(instances)))
        raw.positions.setdefault(host, ht)

    def config_section(self, raw: "_RawModel") -> None:
        self.expect("{")
        while not self.at("}"):
            kt = self.tok
            key = self.ident("config key")
            arg = None
            if key == "domain":
                arg = self.ident("domain name")
            self.expect("=")
            start = self.tok
            end = start
            while not (self.at(";", "}") or self.tok.kind == "eof" or (self.tok.line != start.line)):
                end = self.tok
                self.i += 1
            if end is start and self.toks[self.i] is start:
                raise self.error(f"missing value for {key!r}")
            value = self.text[start.start:end.end]
            raw.config.append((key, arg, value, kt))
            self.separators()
        self.expect("}")


class _RawModel:
    def __init__(self):
        self.elements: list[str] = []
        self.covers: list[tuple[str, str]] = []
        self.lattice_tok: Optional[Token] = None
        self.universe: frozenset[str] = frozenset()
        self.universe_declared = False
        self.hosts: list[Host] = []
        self.host_cat: dict[str, frozenset[str]] = {}
        self.instance_decls: list = []
        self.channels: dict[str, str] = {}
        self.channel_owner: dict[str, tuple[str, Token]] = {}
        self.labels: dict[str, str] = {}
        self.signature: dict[str, str] = {}
        self.cache_init: dict[str, Optional[int]] = {}
        self.config: list = []
        self.positions: dict[str, Token] = {}


def _err(msg: str, tok: Token | None) -> ModelError:
    return ModelError(msg, tok.line if tok else None, tok.col if tok else None)


def _resolve_expr(e, channels, lines, in_read, pos):
    match e:
        case Var(name):
            if in_read:
                if name in channels:
                    return ChanRef(name)
                if name in lines:
                    return LineRef(name)
                raise _err(f"read() expects a channel or cache line, got {name!r}", pos.get(name))
            if name in channels:
                raise _err(f"channel {name!r} used as a value outside send/receive/read", pos.get(name))
            if name in lines:
                raise _err(f"cache line {name!r} used as a value outside read", pos.get(name))
            return e
        case BinOp(op, l, r):
            return BinOp(op, _resolve_expr(l, channels, lines, False, pos), _resolve_expr(r, channels, lines, False, pos))
        case Call(name, args):
            return Call(name, tuple(_resolve_expr(a, channels, lines, name == "read", pos) for a in args))
        case Lit() | StrLit():
            if in_read:
                raise ModelError("read() expects a channel or cache line")
            return e
    return e


def _resolve_bool(b, channels, lines, pos):
    match b:
        case Not(a):
            return Not(_resolve_bool(a, channels, lines, pos))
        case And(l, r):
            return And(_resolve_bool(l, channels, lines, pos), _resolve_bool(r, channels, lines, pos))
        case Cmp(op, l, r):
            return Cmp(op, _resolve_expr(l, channels, lines, False, pos), _resolve_expr(r, channels, lines, False, pos))
    return b


def resolve_process(p, channels, lines, pos=None):
    """Turn identifiers under ``read`` into channel/line references and reject misplaced ones."""
    pos = pos or {}
    rp = lambda q: resolve_process(q, channels, lines, pos)  # noqa: E731
    re_ = lambda e: _resolve_expr(e, channels, lines, False, pos)  # noqa: E731
    match p:
        case Assign(x, e):
            return Assign(x, re_(e))
        case Send(a, e):
            return Send(a, re_(e))
        case Seq(a, b):
            return Seq(rp(a), rp(b))
        case Par(a, b):
            return Par(rp(a), rp(b))
        case Branch(t, c, f):
            return Branch(rp(t), _resolve_bool(c, channels, lines, pos), rp(f))
        case Loop(c, body):
            return Loop(_resolve_bool(c, channels, lines, pos), rp(body))
        case TimedComm(T, s, r, cont):
            return TimedComm(T, Send(s.channel, re_(s.expr)), r, rp(cont))
    return p


def build_model(raw: _RawModel) -> tuple[Network, SecEnv, AnalysisConfig]:
    pos = raw.positions
    try:
        if raw.elements:
            lattice = Lattice.from_hasse(raw.elements, raw.covers)
        else:
            lattice = Lattice.chain("L", "H")
    except LatticeError as exc:
        raise _err(f"invalid lattice: {exc}", raw.lattice_tok) from None

    # instances: unique per host, consistent pages/categories on repeats
    inst_host: dict[str, str] = {}
    inst_pages: dict[str, frozenset[str]] = {}
    inst_cat: dict[str, frozenset[str]] = {}
    for host, name, pages, icat, tok in raw.instance_decls:
        if name in inst_host and inst_host[name] != host:
            raise _err(f"duplicate instance id {name!r} (on hosts {inst_host[name]!r} and {host!r})", tok)
        if name in inst_pages and inst_pages[name] != pages:
            raise _err(f"instance {name!r} repeated with different pages", tok)
        if icat is not None:
            if name in inst_cat and inst_cat[name] != icat:
                raise _err(f"instance {name!r} repeated with different categories", tok)
            inst_cat[name] = icat
        inst_host[name] = host
        inst_pages[name] = pages
        inst_cat.setdefault(name, frozenset())
    owner_of: dict[str, str] = {}
    for name, pages in inst_pages.items():
        for l in pages:
            if l in owner_of:
                raise _err(f"overlapping cache pages: {l!r} allocated to {owner_of[l]!r} and {name!r}", pos.get(l))
            owner_of[l] = name
    for ch, line in raw.channels.items():
        if line in owner_of:
            raise _err(f"channel line {line!r} of {ch!r} is already allocated", pos.get(ch))
        owner, otok = raw.channel_owner[line]
        if owner not in inst_host:
            raise _err(f"undeclared instance {owner!r} owning channel {ch!r}", otok)
        owner_of[line] = owner
    if len(set(raw.channels.values())) != len(raw.channels):
        raise ModelError("two channels share one cache line")
    lines = set(owner_of)
    channels = raw.channels

    universe = raw.universe
    used_atoms = set().union(*raw.host_cat.values(), *inst_cat.values())
    if raw.universe_declared:
        bad = used_atoms - universe
        if bad:
            raise ModelError(f"undeclared category atom(s): {', '.join(sorted(bad))}")
    else:
        universe = frozenset(used_atoms)

    hosts = []
    for h in raw.hosts:
        hosts.append(
            Host(h.name, tuple(Instance(i.name, resolve_process(i.body, channels, lines, pos), i.pages) for i in h.instances))
        )

    declared_hosts = set(raw.host_cat)
    used_vars: set[str] = set()
    for h in hosts:
        for inst in h.instances:
            for node in walk(inst.body):
                match node:
                    case Send(a, _) | Recv(a, _) if a not in channels:
                        raise _err(f"undeclared channel {a!r}", pos.get(a) or raw.positions.get(a))
                    case TimedComm() if node.channel not in channels:
                        raise _err(f"undeclared channel {node.channel!r}", pos.get(node.channel))
                    case MoveP(i) if i not in inst_host:
                        raise _err(f"undeclared instance {i!r}", pos.get(i))
                    case MoveI(t) if t not in declared_hosts:
                        raise _err(f"undeclared host {t!r}", pos.get(t))
            from .ast import process_vars

            used_vars |= process_vars(inst.body)

    for name, label in list(raw.labels.items()) + list(raw.signature.items()):
        if label not in lattice.elements:
            raise _err(f"unknown label {label!r} (lattice has {', '.join(lattice.elements)})", pos.get("label:" + label))
        if name in channels:
            raise _err(f"label channels through their cache line, not {name!r}", pos.get(name))
        if name in inst_host or name in declared_hosts:
            raise _err(f"{name!r} is an instance or host, not a labelled identifier", pos.get(name))
    for x in sorted(used_vars):
        if x in lines or x in channels:
            raise _err(f"{x!r} is a cache line or channel, not a variable", pos.get(x))
        if x not in raw.labels:
            raise _err(f"undeclared identifier {x!r} (variables need a label)", pos.get(x))
    for l in sorted(lines):
        if l not in raw.labels:
            raise _err(f"cache line {l!r} has no label", pos.get(l))
    for name in raw.signature:
        if name not in raw.labels:
            raise _err(f"final label for undeclared identifier {name!r}", pos.get(name))

    var_labels = {x: t for x, t in raw.labels.items() if x not in lines}
    env = SecEnv(
        lattice=lattice,
        var_labels=var_labels,
        line_labels={l: raw.labels[l] for l in lines},
        line_owner=owner_of,
        host_cat=dict(raw.host_cat),
        inst_cat=inst_cat,
    )

    for l in raw.cache_init:
        if l not in lines:
            raise _err(f"cache initialisation for unknown line {l!r}", pos.get(l))

    kw: dict = {}
    domains: dict = {}
    for key, arg, value, tok in raw.config:
        try:
            if key == "cost":
                kw["cost"] = parse_cost(value)
            elif key in ("send_cost", "permissive_tstop", "symmetric_equiv"):
                if value not in ("true", "false"):
                    raise ConfigError(f"{key} must be true or false")
                kw["send_costs_time" if key == "send_cost" else key] = value == "true"
            elif key in ("fuel", "max_runs"):
                kw[key] = int(value)
            elif key in ("scheduler", "mode"):
                kw[key] = value
            elif key == "obs":
                kw["obs"] = parse_obs(value)
            elif key == "domain":
                _, vals = parse_domain(f"{arg}={value}")
                domains[arg] = vals
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except (ConfigError, ValueError) as exc:
            raise _err(str(exc), tok) from None
    kw["domains"] = tuple(domains.items())
    kw["cache_init"] = tuple(sorted(raw.cache_init.items()))
    kw["signature"] = tuple(raw.signature.items())
    kw["universe"] = universe
    try:
        config = AnalysisConfig(**kw)
    except ConfigError as exc:
        raise ModelError(str(exc)) from None
    validate_config(config, env, channels, lines, used_vars)

    network = Network(tuple(hosts), tuple(sorted(channels.items())),
                      tuple(sorted((l, o) for l, (o, _) in raw.channel_owner.items())))
    return network, env, config


def validate_config(config: AnalysisConfig, env: SecEnv, channels, lines, variables) -> None:
    level, ic, hc = config.obs
    if level is not None and level not in env.lattice.elements:
        raise ModelError(f"observation level {level!r} is not in the lattice")
    for c in (ic, hc):
        if c is not None and not c <= config.universe:
            raise ModelError(f"observation category mentions unknown atoms: {', '.join(sorted(c - config.universe))}")
    for name, _ in config.domains:
        if name != "keyGen" and name not in channels and name not in lines and name not in env.var_labels:
            raise ModelError(f"domain for unknown identifier {name!r}")


def parse_model(text: str) -> tuple[Network, SecEnv, AnalysisConfig]:
    """Parse model text into (network, security environment, analysis configuration)."""
    p = _Parser(text)
    raw = p.model()
    for name, tok in p.first_use.items():
        raw.positions.setdefault(name, tok)
    return build_model(raw)


def parse_process(text: str):
    """Parse a bare process term (identifiers are left unresolved)."""
    p = _Parser(text)
    proc = p.process()
    if p.tok.kind != "eof":
        raise p.error("unexpected trailing input")
    return proc
