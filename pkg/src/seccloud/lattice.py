"""Security lattices, category orders and the flow security environment."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain, combinations
from typing import Iterable, Mapping

Category = frozenset  # a category is a frozenset of atom names, ordered by inclusion


class LatticeError(ValueError):
    """Structural error: malformed lattice, foreign label, or domain mismatch."""


class OwnershipConflict(LatticeError):
    pass


@dataclass(frozen=True)
class Lattice:
    """A finite lattice given by its elements and the reflexive-transitive order."""

    elements: tuple[str, ...]
    order: frozenset[tuple[str, str]]
    bottom: str
    top: str
    _joins: Mapping[tuple[str, str], str] = field(compare=False, repr=False, default=None)

    @classmethod
    def from_hasse(cls, elements: Iterable[str], covers: Iterable[tuple[str, str]] = ()) -> "Lattice":
        """Build from a Hasse diagram; ``covers`` holds pairs ``(lo, hi)`` with lo below hi.

        Elements named only in ``covers`` are added. Raises LatticeError unless the closure
        is a partial order where every pair has a unique least upper bound.
        """
        covers = list(covers)
        elems: list[str] = []
        for e in chain(elements, (x for pair in covers for x in pair)):
            if e not in elems:
                elems.append(e)
        if not elems:
            raise LatticeError("lattice has no elements")
        leq = {(e, e) for e in elems} | set(covers)
        changed = True
        while changed:
            changed = False
            for a, b in list(leq):
                for c, d in list(leq):
                    if b == c and (a, d) not in leq:
                        leq.add((a, d))
                        changed = True
        for a, b in leq:
            if a != b and (b, a) in leq:
                raise LatticeError(f"order is not antisymmetric: {a} and {b} are mutually below")
        joins: dict[tuple[str, str], str] = {}
        for a in elems:
            for b in elems:
                ubs = [c for c in elems if (a, c) in leq and (b, c) in leq]
                least = [c for c in ubs if all((c, d) in leq for d in ubs)]
                if len(least) != 1:
                    raise LatticeError(f"{a} and {b} have no unique least upper bound")
                joins[a, b] = least[0]
        bottoms = [e for e in elems if all((e, x) in leq for x in elems)]
        tops = [e for e in elems if all((x, e) in leq for x in elems)]
        if len(bottoms) != 1 or len(tops) != 1:
            raise LatticeError("lattice needs a unique bottom and top")
        return cls(tuple(elems), frozenset(leq), bottoms[0], tops[0], joins)

    @classmethod
    def chain(cls, *names: str) -> "Lattice":
        return cls.from_hasse(names, zip(names, names[1:]))

    def _check(self, *labels: str) -> None:
        for a in labels:
            if a not in self.elements:
                raise LatticeError(f"{a!r} is not an element of lattice {self.elements}")

    def leq(self, a: str, b: str) -> bool:
        self._check(a, b)
        return (a, b) in self.order

    def lt(self, a: str, b: str) -> bool:
        return a != b and self.leq(a, b)

    def join(self, a: str, b: str) -> str:
        self._check(a, b)
        return self._joins[a, b]

    def join_all(self, labels: Iterable[str]) -> str:
        out = self.bottom
        for a in labels:
            out = self.join(out, a)
        return out

    @property
    def height(self) -> int:
        """Number of edges on the longest strictly ascending chain."""
        memo: dict[str, int] = {}

        def up(e: str) -> int:
            if e not in memo:
                memo[e] = max((1 + up(b) for (a, b) in self.order if a == e and b != e), default=0)
            return memo[e]

        return up(self.bottom)


def lattice_join(lattice: Lattice, a: str, b: str) -> str:
    return lattice.join(a, b)


def lattice_leq(lattice: Lattice, a: str, b: str) -> bool:
    return lattice.leq(a, b)


def category_leq(c1: Iterable[str], c2: Iterable[str]) -> bool:
    return frozenset(c1) <= frozenset(c2)


def category_join(c1: Iterable[str], c2: Iterable[str]) -> Category:
    return frozenset(c1) | frozenset(c2)


def all_categories(universe: Iterable[str]) -> list[Category]:
    """Every subset of ``universe``, smallest first, in a deterministic order."""
    atoms = sorted(set(universe))
    return [frozenset(c) for r in range(len(atoms) + 1) for c in combinations(atoms, r)]


def _frozen(m: Mapping) -> Mapping:
    return dict(sorted(m.items()))


@dataclass(frozen=True)
class SecEnv:
    """The flow security environment: variable and line labels, line owners, categories.

    Instances are treated as immutable; the ``with_*`` helpers return modified copies.
    """

    lattice: Lattice
    var_labels: Mapping[str, str]
    line_labels: Mapping[str, str]
    line_owner: Mapping[str, str]
    host_cat: Mapping[str, Category]
    inst_cat: Mapping[str, Category]

    def __post_init__(self):
        for name in ("var_labels", "line_labels", "line_owner"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("host_cat", "inst_cat"):
            object.__setattr__(self, name, {k: frozenset(v) for k, v in sorted(getattr(self, name).items())})
        for label in chain(self.var_labels.values(), self.line_labels.values()):
            self.lattice._check(label)

    def var(self, x: str) -> str:
        try:
            return self.var_labels[x]
        except KeyError:
            raise LatticeError(f"variable {x!r} has no label") from None

    def line(self, l: str) -> str:
        try:
            return self.line_labels[l]
        except KeyError:
            raise LatticeError(f"cache line {l!r} has no label") from None

    def replace(self, **changes) -> "SecEnv":
        fields = dict(
            lattice=self.lattice,
            var_labels=self.var_labels,
            line_labels=self.line_labels,
            line_owner=self.line_owner,
            host_cat=self.host_cat,
            inst_cat=self.inst_cat,
        )
        fields.update(changes)
        return SecEnv(**fields)

    def with_var(self, x: str, label: str) -> "SecEnv":
        return self.replace(var_labels={**self.var_labels, x: label})

    def with_line(self, l: str, label: str) -> "SecEnv":
        return self.replace(line_labels={**self.line_labels, l: label})

    def with_owner(self, l: str, inst: str) -> "SecEnv":
        return self.replace(line_owner={**self.line_owner, l: inst})

    def with_inst_cat(self, i: str, cat: Iterable[str]) -> "SecEnv":
        return self.replace(inst_cat={**self.inst_cat, i: frozenset(cat)})

    def with_host_cat(self, h: str, cat: Iterable[str]) -> "SecEnv":
        return self.replace(host_cat={**self.host_cat, h: frozenset(cat)})


def _same_domains(e1: SecEnv, e2: SecEnv) -> None:
    if e1.lattice != e2.lattice:
        raise LatticeError("environments use different lattices")
    for name in ("var_labels", "line_labels", "line_owner", "host_cat", "inst_cat"):
        if getattr(e1, name).keys() != getattr(e2, name).keys():
            raise LatticeError(f"environments differ in the domain of {name}")


def env_leq(e1: SecEnv, e2: SecEnv) -> bool:
    """Pointwise order on labels and categories. Line ownership does not take part."""
    _same_domains(e1, e2)
    lat = e1.lattice
    return (
        all(lat.leq(t, e2.var_labels[x]) for x, t in e1.var_labels.items())
        and all(lat.leq(t, e2.line_labels[l]) for l, t in e1.line_labels.items())
        and all(c <= e2.host_cat[h] for h, c in e1.host_cat.items())
        and all(c <= e2.inst_cat[i] for i, c in e1.inst_cat.items())
    )


def env_join(e1: SecEnv, e2: SecEnv) -> SecEnv:
    _same_domains(e1, e2)
    lat = e1.lattice
    for l, i in e1.line_owner.items():
        if e2.line_owner[l] != i:
            raise OwnershipConflict(f"line {l!r} owned by {i!r} and {e2.line_owner[l]!r}")
    return e1.replace(
        var_labels={x: lat.join(t, e2.var_labels[x]) for x, t in e1.var_labels.items()},
        line_labels={l: lat.join(t, e2.line_labels[l]) for l, t in e1.line_labels.items()},
        host_cat={h: c | e2.host_cat[h] for h, c in e1.host_cat.items()},
        inst_cat={i: c | e2.inst_cat[i] for i, c in e1.inst_cat.items()},
    )


def env_leq_bound(e: SecEnv, bound: tuple[str, Iterable[str], Iterable[str]]) -> bool:
    """``bound`` is ``(level, instance category, host category)``."""
    level, inst_bound, host_bound = bound
    inst_bound, host_bound = frozenset(inst_bound), frozenset(host_bound)
    lat = e.lattice
    return (
        all(lat.leq(t, level) for t in e.var_labels.values())
        and all(lat.leq(t, level) for t in e.line_labels.values())
        and all(c <= host_bound for c in e.host_cat.values())
        and all(c <= inst_bound for c in e.inst_cat.values())
    )
