import enum
import json
from pathlib import Path
from typing import Any

import numpy as np


class SeedScope(enum.IntEnum):
    """Namespaces under the root seed, so no two consumers share a stream."""
    stream = 1
    split = 2
    baseline = 3
    venn = 4
    validation = 5
    restart = 6
    batch = 7


def derive_seed(root: int, *path: int) -> int:
    """
    Deterministic 32-bit child seed for a (root, path...) address.

    Example:
        derive_seed(7, SeedScope.venn, step, k) -> seed for candidate k at step
    """
    if root < 0 or any(p < 0 for p in path):
        raise ValueError("seed components must be non-negative")
    state = np.random.SeedSequence([root, *map(int, path)]).generate_state(1, dtype=np.uint32)
    return int(state[0])


def dumps_json(payload: Any) -> str:
    """Stable JSON text: fixed indentation, key order as given, trailing newline."""
    return json.dumps(payload, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    # newline="" keeps "\n" on every platform
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path
