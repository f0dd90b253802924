"""Shared paths and loaders for the test suite."""

from pathlib import Path

from seccloud.syntax import parse_model

CORPUS = Path(__file__).resolve().parents[1] / "src" / "seccloud" / "corpus"
GOLDEN = Path(__file__).resolve().parent / "golden"


def corpus_files() -> list[Path]:
    return sorted(CORPUS.glob("*.scl"))


def load(name: str):
    return parse_model((CORPUS / name).read_text())
