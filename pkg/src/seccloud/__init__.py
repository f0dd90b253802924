"""Timed process-calculus toolchain for cache flow security analysis of cloud models."""

__version__ = "0.1.0"
