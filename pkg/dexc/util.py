# Copyright 2026 The dexc Authors
# SPDX-License-Identifier: Apache-2.0
#
import hashlib
import json
from typing import Any

import numpy as np

HASH_LENGTH = 16


def jsonable(value: Any) -> Any:
    """
    Convert numpy values and tuples into plain JSON types, recursively.
    """
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def canonical_json(value: Any) -> str:
    """Compact JSON with sorted keys; equal values give equal strings."""
    return json.dumps(jsonable(value), sort_keys=True, separators=(",", ":"))


def config_hash(value: Any) -> str:
    """First 16 hex digits of the SHA-256 of `canonical_json(value)`."""
    digest = hashlib.sha256(canonical_json(value).encode("utf-8"))
    return digest.hexdigest()[:HASH_LENGTH]


def rng_streams(seed: int, count: int) -> list[np.random.Generator]:
    """
    Independent generators derived from one seed.

    Stream `i` depends only on (`seed`, `i`), so adding streams never shifts
    the ones already in use.
    """
    return [np.random.default_rng([seed, index]) for index in range(count)]


def rng_state(rng: np.random.Generator) -> dict[str, Any]:
    return jsonable(rng.bit_generator.state)


def restore_rng(state: dict[str, Any]) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng
