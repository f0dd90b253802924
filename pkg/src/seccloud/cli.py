"""Command-line front end: check, run, typecheck, enumerate, soundness."""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional, Sequence, TextIO

from .config import ConfigError, parse_cost, parse_domain, parse_obs
from .flowcheck import BOUND_EXCEEDED, InputSpace, ObservationLevel, check_cache_flow_secure, soundness_harness
from .report import (
    dumps, model_record, pretty, record, result_record, typing_records, vector_records, verdict_record,
)
from .semantics import BoundExceeded, Machine, component_label
from .syntax.normalize import normalize
from .syntax.parser import ModelError, parse_model
from .typesystem import typecheck_network

EXIT_OK, EXIT_TYPE, EXIT_INSECURE, EXIT_BOUND, EXIT_MALFORMED = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("path", help="model file (.scl)")
    p.add_argument("--mode", choices=("strong", "weak"))
    p.add_argument("--obs", help="observer level,instcat,hostcat; '*' means every atom")
    p.add_argument("--cost", help="constant:<n> or valuemod:<k>")
    p.add_argument("--fuel", type=int, help="step budget per component")
    p.add_argument("--domain", action="append", default=[], metavar="NAME=V1,..",
                   help="input domain for a variable, cache line, channel or keyGen ('_' = empty line)")
    p.add_argument("--scheduler", choices=("roundrobin", "exhaustive", "lowest"))
    p.add_argument("--permissive-tstop", action="store_true", default=None,
                   help="type stop and skip at any counter")
    p.add_argument("--format", choices=("json", "pretty"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="seccloud", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("check", "type check, then decide cache flow security"),
        ("run", "execute under the deterministic scheduler and print traces"),
        ("typecheck", "type check only"),
        ("enumerate", "list every run vector over all schedules"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "typecheck":
            p.add_argument("--derivation", action="store_true", help="include derivation trees")
    s = sub.add_parser("soundness", help="cross-check typing against the semantic oracles on random programs")
    s.add_argument("--programs", type=int, default=500)
    s.add_argument("--pairs", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--depth", type=int, default=3)
    s.add_argument("--format", choices=("json", "pretty"), default="json")
    return parser


def load(args):
    with open(args.path, encoding="utf-8") as fh:
        text = fh.read()
    network, env, config = parse_model(text)
    overrides = {
        "mode": args.mode,
        "fuel": args.fuel,
        "scheduler": args.scheduler,
        "permissive_tstop": args.permissive_tstop,
    }
    if args.cost:
        overrides["cost"] = parse_cost(args.cost)
    if args.obs:
        overrides["obs"] = parse_obs(args.obs)
    if args.domain:
        overrides["domains"] = tuple(parse_domain(d) for d in args.domain)
    config = config.with_overrides(**overrides)
    from .syntax.parser import validate_config
    from .syntax.ast import process_vars

    variables = set().union(*(process_vars(c.process) for c in normalize(network))) if network.hosts else set()
    validate_config(config, env, network.channel_lines, set(network.lines()), variables)
    return network, env, config


def cmd_check(args) -> tuple[int, list[dict]]:
    network, env, config = load(args)
    comps = normalize(network)
    out = [model_record(os.path.basename(args.path), comps)]
    typing = typecheck_network(network, env, dict(config.signature), config.permissive_tstop)
    out += typing_records(typing)
    if not typing.ok:
        return EXIT_TYPE, out
    obs = ObservationLevel.resolve(config.obs, env, config.universe)
    verdict = check_cache_flow_secure(network, env, obs, config.mode, None, None, config)
    out.append(verdict_record(verdict, obs))
    if verdict.secure is True:
        return EXIT_OK, out
    if verdict.secure is BOUND_EXCEEDED:
        return EXIT_BOUND, out
    return EXIT_INSECURE, out


def _first_scenario(network, env, config):
    space = InputSpace.from_config(network, env, config)
    # only the first value of each domain
    return InputSpace(tuple((n, vals[:1]) for n, vals in space.domains), space.fixed, space.key_offsets[:1]).scenarios()[0]


def cmd_run(args) -> tuple[int, list[dict]]:
    network, env, config = load(args)
    machine = Machine(network, env, config)
    labels = [component_label(c) for c in machine.components]
    out = [model_record(os.path.basename(args.path), machine.components)]
    s = _first_scenario(network, env, config)
    init = machine.initial_configs(s.as_dict(), s.key_offset)
    out.append(record("inputs", values=s.to_record()))
    if config.scheduler == "exhaustive":
        return _emit_vectors(machine, init, labels, out)
    out += vector_records(machine.run(init), labels)
    return EXIT_OK, out


def _emit_vectors(machine, init, labels, out) -> tuple[int, list[dict]]:
    try:
        vectors = machine.enumerate_runs(init)
    except BoundExceeded as exc:
        out.append(record("vectors", count=None, message=str(exc)))
        return EXIT_BOUND, out
    out.append(record("vectors", count=len(vectors), message=None))
    for i, vec in enumerate(vectors):
        out.append(record("vector", index=i, schedule=[list(x) for x in vec.schedule]))
        out += vector_records(vec, labels)
    return EXIT_OK, out


def cmd_enumerate(args) -> tuple[int, list[dict]]:
    network, env, config = load(args)
    machine = Machine(network, env, config)
    labels = [component_label(c) for c in machine.components]
    out = [model_record(os.path.basename(args.path), machine.components)]
    s = _first_scenario(network, env, config)
    out.append(record("inputs", values=s.to_record()))
    return _emit_vectors(machine, machine.initial_configs(s.as_dict(), s.key_offset), labels, out)


def cmd_typecheck(args) -> tuple[int, list[dict]]:
    network, env, config = load(args)
    out = [model_record(os.path.basename(args.path), normalize(network))]
    typing = typecheck_network(network, env, dict(config.signature), config.permissive_tstop)
    out += typing_records(typing, derivations=args.derivation)
    return (EXIT_OK if typing.ok else EXIT_TYPE), out


def cmd_soundness(args) -> tuple[int, list[dict]]:
    rep = soundness_harness(args.programs, args.seed, args.depth, comm_pairs=args.pairs)
    code = EXIT_OK if not rep.violations and not rep.comm_violations else EXIT_INSECURE
    return code, [record("soundness", seed=args.seed, report=rep.to_record())]


COMMANDS = {
    "check": cmd_check,
    "run": cmd_run,
    "typecheck": cmd_typecheck,
    "enumerate": cmd_enumerate,
    "soundness": cmd_soundness,
}


def main(argv: Optional[Sequence[str]] = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"seccloud: {exc}", file=stderr)
        return EXIT_MALFORMED
    try:
        code, records = COMMANDS[args.command](args)
    except (ModelError, ConfigError, OSError, UnicodeDecodeError) as exc:
        code = EXIT_MALFORMED
        records = [record("error", message=str(exc))]
        print(f"seccloud: {exc}", file=stderr)
    records.append(result_record(args.command, code))
    if getattr(args, "format", "json") == "pretty":
        stdout.write(pretty(records))
    else:
        stdout.write("".join(dumps(r) + "\n" for r in records))
    return code


if __name__ == "__main__":
    sys.exit(main())
