"""Analysis configuration: cost model, scheduler, fuel, inputs and observer."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

FULL = None  # a category bound of ``None`` means the whole atom universe

SCHEDULERS = ("roundrobin", "lowest", "exhaustive")
MODES = ("weak", "strong")


class ConfigError(ValueError):
    pass


def parse_cost(text: str) -> tuple[str, int]:
    kind, _, arg = text.strip().partition(":")
    kind = kind.strip()
    if kind not in ("constant", "valuemod"):
        raise ConfigError(f"unknown cost model {text!r}; expected constant:<n> or valuemod:<k>")
    try:
        n = int(arg)
    except ValueError:
        raise ConfigError(f"cost model {text!r} needs an integer parameter") from None
    if kind == "constant" and n < 1:
        raise ConfigError("constant communication cost must be at least 1")
    if kind == "valuemod" and n < 1:
        raise ConfigError("valuemod modulus must be at least 1")
    return kind, n


def format_cost(cost: tuple[str, int]) -> str:
    return f"{cost[0]}:{cost[1]}"


def parse_value(text: str) -> Optional[int]:
    text = text.strip()
    if text in ("_", "empty"):
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r}; expected an integer or '_' for a flushed line") from None


def format_value(v: Optional[int]) -> str:
    return "_" if v is None else str(v)


def parse_domain(text: str) -> tuple[str, tuple[Optional[int], ...]]:
    name, eq, values = text.partition("=")
    if not eq or not name.strip():
        raise ConfigError(f"bad domain {text!r}; expected name=v1,v2,...")
    vals = tuple(parse_value(v) for v in values.split(",") if v.strip())
    if not vals:
        raise ConfigError(f"domain for {name.strip()!r} is empty")
    return name.strip(), vals


def _parse_cat(text: str):
    text = text.strip()
    if text == "*":
        return FULL
    if text in ("-", "{}"):
        return frozenset()
    if text.startswith("{") and text.endswith("}"):
        return frozenset(text[1:-1].replace(",", " ").split())
    return frozenset(a for a in text.split("+") if a)


def parse_obs(text: str) -> tuple[Optional[str], object, object]:
    """``level,instcat,hostcat`` where a category is ``*`` (all atoms), ``-`` or ``{a b}``/``a+b``."""
    parts = []
    depth = 0
    cur = ""
    for ch in text:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
        else:
            cur += ch
    parts.append(cur)
    if len(parts) != 3:
        raise ConfigError(f"bad observation triple {text!r}; expected level,instcat,hostcat")
    level = parts[0].strip() or None
    return level, _parse_cat(parts[1]), _parse_cat(parts[2])


def format_obs(obs) -> str:
    def cat(c):
        return "*" if c is FULL else ("{" + " ".join(sorted(c)) + "}")

    level, ic, hc = obs
    return f"{level or ''},{cat(ic)},{cat(hc)}"


@dataclass(frozen=True)
class AnalysisConfig:
    cost: tuple[str, int] = ("valuemod", 4)
    send_costs_time: bool = True  # bare sends are charged the communication cost, receives are free
    scheduler: str = "roundrobin"
    fuel: int = 100
    max_runs: int = 20000
    domains: tuple[tuple[str, tuple[Optional[int], ...]], ...] = ()
    cache_init: tuple[tuple[str, Optional[int]], ...] = ()
    obs: tuple = (None, FULL, FULL)
    mode: str = "weak"
    permissive_tstop: bool = False
    symmetric_equiv: bool = False
    signature: tuple[tuple[str, str], ...] = ()
    universe: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"unknown scheduler {self.scheduler!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.fuel < 1:
            raise ConfigError("fuel must be positive")

    def with_overrides(self, **kw) -> "AnalysisConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "domains" in kw:
            merged = dict(self.domains)
            merged.update(dict(kw["domains"]))
            kw["domains"] = tuple(merged.items())
        return replace(self, **kw)

    def format_sections(self) -> list[str]:
        out = []
        if self.signature:
            out.append("final { " + "; ".join(f"{k}: {v}" for k, v in self.signature) + " }")
        if self.cache_init:
            out.append("cache { " + "; ".join(f"{k} = {format_value(v)}" for k, v in self.cache_init) + " }")
        lines = [
            f"cost = {format_cost(self.cost)}",
            f"send_cost = {str(self.send_costs_time).lower()}",
            f"scheduler = {self.scheduler}",
            f"fuel = {self.fuel}",
            f"max_runs = {self.max_runs}",
            f"obs = {format_obs(self.obs)}",
            f"mode = {self.mode}",
            f"permissive_tstop = {str(self.permissive_tstop).lower()}",
            f"symmetric_equiv = {str(self.symmetric_equiv).lower()}",
        ]
        lines += [f"domain {k} = {','.join(format_value(v) for v in vs)}" for k, vs in self.domains]
        out.append("config {\n" + "".join(f"  {l}\n" for l in lines) + "}")
        return out
