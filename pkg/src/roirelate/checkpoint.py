"""Parameter checkpoints: JSON manifest + little-endian float64 binary."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn.autodiff import Parameter
from .nn.rng import RNG_ALGORITHM

MANIFEST_NAME = "manifest.json"
BINARY_NAME = "params.bin"
SCHEMA = "roirelate-checkpoint-v1"


def save_checkpoint(
    params: dict[str, Parameter],
    directory: str | Path,
    seed: int,
    config_hash: str,
):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "schema": SCHEMA,
        "dtype": "<f8",
        "seed": seed,
        "config_hash": config_hash,
        "rng_algorithm": RNG_ALGORITHM,
        "total_bytes": offset,
        "params": entries,
    }
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    (directory / BINARY_NAME).write_bytes(b"".join(blobs))


def load_checkpoint(directory: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    if manifest.get("schema") != SCHEMA:
        raise ValueError(f"unexpected checkpoint schema {manifest.get('schema')!r}")
    raw = (directory / BINARY_NAME).read_bytes()
    if len(raw) != manifest["total_bytes"]:
        raise ValueError(
            f"checkpoint binary is {len(raw)} bytes, manifest says {manifest['total_bytes']}"
        )
    values = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            raw, dtype="<f8", count=count, offset=entry["offset"]
        ).reshape(shape)
        values[entry["name"]] = arr.astype(np.float64)
    return values, manifest
