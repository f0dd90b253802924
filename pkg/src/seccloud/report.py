"""Line-delimited JSON records for traces, typing results and verdicts, plus a plain-text rendering.

Every record starts with ``"v"`` (format version) and ``"record"`` (its kind); the remaining
fields appear in the fixed order written below. Cache lines holding ∅ are ``null``.
"""

from __future__ import annotations

import json
from typing import Iterable

from .semantics import Configuration, RunVector, TimedRun, config_changes
from .syntax.ast import Component

VERSION = 1


def dumps(rec: dict) -> str:
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False)


def record(kind: str, /, **fields) -> dict:
    return {"v": VERSION, "record": kind, **fields}


def config_record(g: Configuration) -> dict:
    return {"sigma": dict(g.store), "delta": dict(g.cache), "owner": g.owner, "host": g.host}


def model_record(path: str, components: list[Component]) -> dict:
    return record("model", file=path, components=[f"{c.host}:{c.instance}:{c.fingerprint}" for c in components])


def run_records(run: TimedRun, component: str) -> list[dict]:
    """Step records for one component's run followed by its summary."""
    out = []
    for i, st in enumerate(run.steps):
        sigma, delta = config_changes(st.config_before, st.config_after or st.config_before)
        out.append(record("step", component=component, index=i, kind=st.event.kind, subject=st.event.subject,
                          channel=st.event.channel, dt=st.duration, sigma=sigma, delta=delta))
    out.append(run_summary(run, component))
    return out


def run_summary(run: TimedRun, component: str) -> dict:
    return record("run", component=component, steps=len(run.steps), total_time=run.total_time, status=run.status,
                  fault=run.fault, initial=config_record(run.initial), final=config_record(run.final))


def vector_records(vec: RunVector, labels: list[str]) -> list[dict]:
    """Steps in global execution order, then one summary per component."""
    out = []
    pos = [0] * len(labels)
    for seq, (k, ev, dt) in enumerate(vec.events):
        st = vec.runs[k].steps[pos[k]]
        pos[k] += 1
        sigma, delta = config_changes(st.config_before, st.config_after or st.config_before)
        out.append(record("step", component=labels[k], index=seq, kind=ev.kind, subject=ev.subject,
                          channel=ev.channel, dt=dt, sigma=sigma, delta=delta))
    for k, r in enumerate(vec.runs):
        out.append(run_summary(r, labels[k]))
    return out


def type_error_record(err) -> dict:
    return record("type-error", **err.to_record())


def typing_records(typing, derivations: bool = False) -> list[dict]:
    out = []
    for cr in typing.components:
        label = f"{cr.component.host}:{cr.component.instance}:{cr.component.fingerprint}"
        counter = [cr.counter.level, sorted(cr.counter.inst_cat), sorted(cr.counter.host_cat)]
        if cr.error is not None:
            out.append(record("typing", component=label, counter=counter, status="error", rule=cr.error.rule))
            continue
        rec = record("typing", component=label, counter=counter, status="ok",
                     env_after=env_labels(cr.result.env_after),
                     loops=[[p, i, b] for p, i, b in cr.result.loop_iterations])
        if derivations:
            rec["derivation"] = cr.result.derivation.to_record()
        out.append(rec)
    for err in typing.errors:
        out.append(type_error_record(err))
    return out


def env_labels(env) -> dict:
    return {"vars": dict(env.var_labels), "lines": dict(env.line_labels), "owners": dict(env.line_owner)}


def witness_record(w) -> dict:
    return {
        "component": w.component,
        "reasons": list(w.reasons),
        "inputs": [s.to_record() for s in w.scenarios],
        "initial": [config_record(g) for g in w.initial],
        "totals": list(w.totals),
        "step": w.step,
        "differing": list(w.differing),
        "level": w.level.as_list() if w.level is not None else None,
        "schedules": [[list(x) for x in s] for s in w.schedules],
        "runs": [run_records(r, w.component) for r in w.runs],
    }


def verdict_record(v, obs=None) -> dict:
    return record("verdict", status=v.status, mode=v.mode, obs=obs.as_list() if obs is not None else None,
                  stats=v.stats, message=v.message or None,
                  witness=witness_record(v.witness) if v.witness is not None else None)


def result_record(command: str, code: int) -> dict:
    return record("result", command=command, exit=code)


# -- plain text ---------------------------------------------------------------


def _fmt_map(m: dict) -> str:
    return ", ".join(f"{k}={'_' if v is None else v}" for k, v in m.items()) or "-"


def pretty(records: Iterable[dict]) -> str:
    """Human-readable rendering of a record stream."""
    lines: list[str] = []
    for r in records:
        kind = r["record"]
        if kind == "model":
            lines.append(f"model {r['file']}: {len(r['components'])} component(s)")
            lines += [f"  [{i}] {c}" for i, c in enumerate(r["components"])]
        elif kind == "typing":
            extra = f" rule {r['rule']}" if r["status"] == "error" else ""
            lines.append(f"typing {r['component']} at ({r['counter'][0]}, {{{' '.join(r['counter'][1])}}}, "
                         f"{{{' '.join(r['counter'][2])}}}): {r['status']}{extra}")
        elif kind == "type-error":
            lines.append(f"type error [{r['rule']}] at {r['path']} in {r['component']}: {r['message']}")
        elif kind == "step":
            lines.append(f"  {r['index']:>4}  {r['component']:<28} {r['kind']:<12} dt={r['dt']:<3} "
                         f"{r['subject']:<40} {_fmt_map(r['sigma'])}; {_fmt_map(r['delta'])}")
        elif kind == "run":
            lines.append(f"  run {r['component']}: {r['steps']} step(s), total time {r['total_time']}, {r['status']}"
                         + (f" ({r['fault']})" if r["fault"] else ""))
            lines.append(f"    final store: {_fmt_map(r['final']['sigma'])}; cache: {_fmt_map(r['final']['delta'])}")
        elif kind == "verdict":
            lines.append(f"verdict: {r['status']} ({r['mode']}, observer {r['obs']})")
            lines.append("  " + ", ".join(f"{k}={v}" for k, v in r["stats"].items()))
            if r["message"]:
                lines.append(f"  {r['message']}")
            w = r["witness"]
            if w:
                lines.append(f"  witness in {w['component']}: {', '.join(w['reasons'])}")
                lines.append(f"    inputs: {w['inputs'][0]} vs {w['inputs'][1]}")
                lines.append(f"    total times: {w['totals'][0]} vs {w['totals'][1]}")
                if w["differing"]:
                    lines.append(f"    differing: {', '.join(w['differing'])}")
                for side, run in enumerate(w["runs"], 1):
                    lines.append(f"    run {side}:")
                    lines += ["  " + x for x in pretty(run).splitlines()]
        elif kind == "vectors":
            lines.append(f"{r['count']} run vector(s)")
        elif kind == "vector":
            lines.append(f"vector {r['index']}:")
        elif kind == "soundness":
            lines.append("soundness: " + ", ".join(f"{k}={v}" for k, v in r["report"].items()))
        elif kind == "result":
            lines.append(f"{r['command']}: exit {r['exit']}")
        else:
            lines.append(dumps(r))
    return "\n".join(lines) + "\n"
