"""Canonical text encoding of attack-model states.

Grammar (bit-exact)::

    T:<M|H|A>;O:<H/A chars, tip first>;C:<rows top-down, entries ',' separated, rows '|' separated>

e.g. ``T:H;O:A;C:1,0|0,2`` for d=2, f=2.  This is the only code the
simulator shares with the model builder.
"""
from __future__ import annotations

import re

ENCODING_VERSION = 1
KINDS = ("M", "H", "A")
OWNERS = ("H", "A")

_PATTERN = re.compile(r"^T:([MHA]);O:([HA]*);C:([0-9,|]+)$")


def encode_state(kind: str, owners, forks) -> str:
    rows = "|".join(",".join(str(int(x)) for x in row) for row in forks)
    return f"T:{kind};O:{''.join(owners)};C:{rows}"


def decode_state(text: str) -> tuple[str, tuple[str, ...], tuple[tuple[int, ...], ...]]:
    m = _PATTERN.match(text)
    if m is None:
        raise ValueError(f"malformed state encoding {text!r}")
    kind, owners, rows = m.groups()
    forks = tuple(tuple(int(x) for x in row.split(",")) for row in rows.split("|"))
    if len({len(r) for r in forks}) != 1:
        raise ValueError(f"ragged fork matrix in {text!r}")
    return kind, tuple(owners), forks
