"""Key files: packed bits plus a JSON sidecar describing them.

``name.key`` holds the bits packed MSB-first (the last byte zero padded);
``name.key.json`` records ``bit_length``, ``session_id``, ``seed``, ``party``
and ``stage``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_key(path: str | Path, bits, **meta) -> Path:
    path = Path(path)
    bits = np.asarray(bits, dtype=np.uint8)
    path.write_bytes(np.packbits(bits).tobytes())
    record = {"bit_length": int(len(bits)), **meta}
    sidecar(path).write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return path


def read_key(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    raw = path.read_bytes()
    side = sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        n = int(meta["bit_length"])
    else:
        meta = {}
        n = 8 * len(raw)
    if n > 8 * len(raw):
        raise ValueError(f"{path}: sidecar claims {n} bits but file holds {8 * len(raw)}")
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[:n]
    return bits, meta


def hexdump(bits, width: int = 16) -> str:
    data = np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
    lines = []
    for off in range(0, len(data), width):
        chunk = data[off : off + width]
        lines.append(f"{off:08x}  {chunk.hex(' ')}")
    return "\n".join(lines)
