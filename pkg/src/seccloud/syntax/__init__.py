"""Syntax of the process calculus: AST, parser, printer and normalizer."""

from .ast import *  # noqa: F401,F403
from .normalize import fingerprint, normalize, rebuild
from .parser import ModelError, ParseError, parse_model, parse_process
from .printer import format_bool, format_expr, format_process, pretty_print
