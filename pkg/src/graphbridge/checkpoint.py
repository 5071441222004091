"""Versioned checkpoint container on top of numpy .npz archives.

Layout: a JSON metadata entry (format version, network configs, schedule,
quantization levels, RNG state, user extras) plus one array entry per
parameter and per Adam moment buffer.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .nn import ParameterStore

FORMAT_VERSION = 1


def save_checkpoint(path, stores: dict, meta: dict):
    """Write named ParameterStores and a JSON-serializable meta dict."""
    path = Path(path)
    payload = {}
    meta = dict(meta)
    meta["format_version"] = FORMAT_VERSION
    meta["stores"] = {}
    for store_name, store in stores.items():
        meta["stores"][store_name] = {
            "names": sorted(store.params),
            "step_count": store.step_count,
        }
        for k in store.params:
            payload[f"{store_name}/param/{k}"] = store.params[k]
            payload[f"{store_name}/adam_m/{k}"] = store.adam_m[k]
            payload[f"{store_name}/adam_v/{k}"] = store.adam_v[k]
    payload["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path):
    """Return (stores, meta); raises DataFormatError on version mismatch."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise DataFormatError(f"{path}: not a checkpoint (missing metadata)")
        meta = json.loads(bytes(data["__meta__"].tobytes()).decode())
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise DataFormatError(
                f"{path}: checkpoint format version {version} is not "
                f"supported (expected {FORMAT_VERSION})")
        stores = {}
        for store_name, info in meta["stores"].items():
            params = {k: data[f"{store_name}/param/{k}"] for k in info["names"]}
            store = ParameterStore(params)
            for k in info["names"]:
                store.adam_m[k] = np.asarray(data[f"{store_name}/adam_m/{k}"],
                                             dtype=np.float64)
                store.adam_v[k] = np.asarray(data[f"{store_name}/adam_v/{k}"],
                                             dtype=np.float64)
            store.step_count = info["step_count"]
            stores[store_name] = store
    return stores, meta
