"""Rewrite tests/golden/<model>.jsonl from the current `check` output of every corpus model."""

import io
from pathlib import Path

from seccloud.cli import main

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "src" / "seccloud" / "corpus"
GOLDEN = ROOT / "tests" / "golden"


def report(path: Path) -> str:
    out = io.StringIO()
    main(["check", str(path)], stdout=out, stderr=io.StringIO())
    return out.getvalue()


if __name__ == "__main__":
    GOLDEN.mkdir(exist_ok=True)
    for path in sorted(CORPUS.glob("*.scl")):
        (GOLDEN / f"{path.stem}.jsonl").write_text(report(path))
        print(f"wrote {path.stem}.jsonl")
