"""Flatten a network into its canonical parallel decomposition."""

from __future__ import annotations

import hashlib

from .ast import Component, Host, Instance, Network, Process, par, par_branches
from .printer import format_process


def fingerprint(p: Process) -> str:
    return hashlib.sha256(format_process(p).encode()).hexdigest()[:16]


def normalize(n: Network) -> list[Component]:
    """One component per top-level process of every instance, sorted canonically.

    Host- and instance-level parallel composition is flattened regardless of nesting or
    order; parallel composition below a sequential or branching operator is left alone.
    """
    comps = []
    for h in n.hosts:
        for inst in h.instances:
            for p in par_branches(inst.body):
                comps.append(Component(h.name, inst.name, fingerprint(p), p, inst.pages))
    comps.sort(key=Component.key)
    return comps


def rebuild(components: list[Component], template: Network | None = None) -> Network:
    """Inverse of ``normalize`` up to structural equivalence: one host/instance block each."""
    hosts: dict[str, dict[str, list[Component]]] = {}
    if template is not None:
        for h in template.host_names():
            hosts[h] = {}
    for c in components:
        hosts.setdefault(c.host, {}).setdefault(c.instance, []).append(c)
    return Network(
        tuple(
            Host(h, tuple(Instance(i, par(*(c.process for c in cs)), cs[0].pages) for i, cs in insts.items()))
            for h, insts in hosts.items()
        ),
        template.channels if template else (),
        template.channel_owner if template else (),
    )
