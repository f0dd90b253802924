"""Concrete-syntax rendering of expressions, processes and whole models."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

from .ast import (
    And, Assign, BinOp, Branch, Call, ChanRef, Cmp, Lit, LineRef, Loop, MoveI, MoveP, Network,
    Not, Par, Recv, Send, Seq, Skip, Sleep, Stop, StrLit, TimedComm, TrueB, Var,
)

if TYPE_CHECKING:
    from ..config import AnalysisConfig
    from ..lattice import SecEnv

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(e, prec: int = 0) -> str:
    match e:
        case Var(name) | ChanRef(name) | LineRef(name):
            return name
        case Lit(v):
            return str(v)
        case StrLit(text):
            return json.dumps(text)
        case Call(name, args):
            return f"{name}({', '.join(format_expr(a) for a in args)})"
        case BinOp(op, l, r):
            p = _PREC[op]
            # left-associative: the right operand needs parentheses at equal precedence
            s = f"{format_expr(l, p)} {op} {format_expr(r, p + 1)}"
            return f"({s})" if p < prec else s
    raise TypeError(f"not an expression: {e!r}")


def format_bool(b, prec: int = 0) -> str:
    match b:
        case TrueB():
            return "true"
        case Not(a):
            return f"!{format_bool(a, 3)}"
        case And(l, r):
            s = f"{format_bool(l, 1)} && {format_bool(r, 2)}"
            return f"({s})" if prec >= 2 else s
        case Cmp(op, l, r):
            s = f"{format_expr(l)} {op} {format_expr(r)}"
            return f"({s})" if prec >= 3 else s
    raise TypeError(f"not a boolean expression: {b!r}")


def _block(p, indent: int | None, level: int) -> str:
    if indent is None:
        return "{ " + format_process(p) + " }"
    inner = format_process(p, indent, level + 1)
    pad = " " * (indent * (level + 1))
    return "{\n" + pad + inner + "\n" + " " * (indent * level) + "}"


def format_process(p, indent: int | None = None, level: int = 0) -> str:
    """Render a process. With ``indent`` set, statements go one per line."""
    sep = "; " if indent is None else ";\n" + " " * (indent * level)
    match p:
        case Assign(x, e):
            return f"{x} := {format_expr(e)}"
        case Stop():
            return "stop"
        case Skip():
            return "skip"
        case Sleep(n):
            return f"sleep({n})"
        case MoveP(i):
            return f"moveP({i})"
        case MoveI(h):
            return f"moveI({h})"
        case Send(a, e):
            return f"{a} ! {format_expr(e)}"
        case Recv(a, x):
            return f"{a} ? {x}"
        case Seq(a, b):
            left = _block(a, indent, level) if isinstance(a, (Seq, Par)) else format_process(a, indent, level)
            right = _block(b, indent, level) if isinstance(b, Par) else format_process(b, indent, level)
            return left + sep + right
        case Par(a, b):
            left = _block(a, indent, level) if isinstance(a, Par) else format_process(a, indent, level)
            joiner = " || " if indent is None else "\n" + " " * (indent * level) + "|| "
            return left + joiner + format_process(b, indent, level)
        case Branch(t, c, f):
            return f"if ({format_bool(c)}) {_block(t, indent, level)} else {_block(f, indent, level)}"
        case Loop(c, body):
            return f"while ({format_bool(c)}) {_block(body, indent, level)}"
        case TimedComm(T, s, r, cont):
            head = f"timed({T}) {{ {format_process(s)} || {format_process(r)} }} then "
            return head + _block(cont, indent, level)
    raise TypeError(f"not a process: {p!r}")


def format_category(cat) -> str:
    return "{" + " ".join(sorted(cat)) + "}"


def pretty_print(n: Network, env: "SecEnv | None" = None, config: "AnalysisConfig | None" = None) -> str:
    """Render a network in its canonical (normalized) form, optionally as a full model file."""
    from .normalize import normalize

    comps = normalize(n)
    out: list[str] = []
    if env is not None:
        lat = env.lattice
        covers = sorted(
            (a, b) for (a, b) in lat.order
            if a != b and not any(lat.lt(a, c) and lat.lt(c, b) for c in lat.elements)
        )
        items = [f"{a} < {b}" for a, b in covers]
        isolated = [e for e in lat.elements if not any(e in pair for pair in covers)]
        out.append("lattice { " + "; ".join(isolated + items) + " }")
        atoms = sorted(set().union(*env.host_cat.values(), *env.inst_cat.values()))
        if config is not None:
            atoms = sorted(set(atoms) | set(config.universe))
        if atoms:
            out.append("categories { " + " ".join(atoms) + " }")
    by_host: dict[str, dict[str, list]] = {}
    for h in n.host_names():
        by_host[h] = {}
    for c in comps:
        by_host[c.host].setdefault(c.instance, []).append(c)
    for h, insts in by_host.items():
        hcat = ""
        if env is not None and env.host_cat.get(h):
            hcat = " cat " + format_category(env.host_cat[h])
        if not insts:
            out.append(f"host {h}{hcat} {{ }}")
            continue
        out.append(f"host {h}{hcat} {{")
        for i, cs in insts.items():
            icat = ""
            if env is not None and env.inst_cat.get(i):
                icat = " cat " + format_category(env.inst_cat[i])
            pages = " ".join(sorted(cs[0].pages))
            out.append(f"  vm {i}{icat} pages {{ {pages} }} {{" if pages else f"  vm {i}{icat} pages {{ }} {{")
            bodies = [format_process(c.process, 2, 2) for c in cs]
            out.append("    " + "\n  ||\n    ".join(bodies))
            out.append("  }")
        out.append("}")
    owners = dict(n.channel_owner)
    for ch, line in sorted(n.channels):
        out.append(f"channel {ch} -> {line} owner {owners[line]}")
    if env is not None:
        labels = [f"{x}: {t}" for x, t in env.var_labels.items()]
        labels += [f"{l}: {t}" for l, t in env.line_labels.items()]
        out.append("label { " + "; ".join(labels) + " }")
    if config is not None:
        out.extend(config.format_sections())
    return "\n".join(out) + "\n"
