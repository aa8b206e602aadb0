from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Callable, Iterable, Iterator, TypeVar

T = TypeVar("T")


def write_jsonl(path: str | Path, records: Iterable[dict]) -> int:
    """Write whole lines to a temp file, then rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    n = 0
    with tmp.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            n += 1
    os.replace(tmp, path)
    return n


def iter_jsonl(path: str | Path) -> Iterator[dict]:
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON line: {exc}") from exc


def read_jsonl(path: str | Path, parse: Callable[[dict], T] | None = None) -> list:
    return [parse(d) if parse else d for d in iter_jsonl(path)]


def merge_shards(shards: Iterable[str | Path], out: str | Path) -> int:
    return write_jsonl(out, (rec for shard in shards for rec in iter_jsonl(shard)))


def write_json(path: str | Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
