"""Canonical text encoding shared by hashing, persistence, and the wire.

One encoding everywhere: JSON with lexicographically sorted keys, no
insignificant whitespace, integers in plain decimal, digests as lowercase
hex strings, ASCII-only output. Two values serialize identically iff they
are equal, so the encoding is safe to hash and to diff byte-for-byte.
"""

import json
from typing import Any


def canon_dumps(value: Any) -> str:
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
        allow_nan=False,
    )


def canon_bytes(value: Any) -> bytes:
    return canon_dumps(value).encode("ascii")


def canon_loads(text: str | bytes) -> Any:
    return json.loads(text)


def read_journal(path) -> list:
    """Read an append-only journal: one canonical record per line."""
    records = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(canon_loads(line))
    return records


def append_journal(path, record: Any) -> None:
    """Append one record and flush; lines are never rewritten."""
    with open(path, "a", encoding="ascii") as fh:
        fh.write(canon_dumps(record) + "\n")
        fh.flush()
