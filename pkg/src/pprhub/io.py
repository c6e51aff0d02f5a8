"""Atomic CSV/JSON writers with provenance headers, and vector files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .ppr import PprVector


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def provenance(config: dict, command: str) -> dict:
    return {"library": "pprhub", "version": __version__, "command": command,
            "seed": config.get("seed"), "config_sha256": config_hash(config), "config": config}


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], prov: dict | None = None) -> None:
    """CSV with ``#``-prefixed provenance lines before the column header."""
    buf = io.StringIO()
    if prov is not None:
        buf.write(f"# pprhub {prov['version']} command={prov['command']}\n")
        buf.write(f"# config_sha256={prov['config_sha256']} seed={prov['seed']}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    _atomic_write(path, buf.getvalue())


def write_json(path, payload: dict, prov: dict | None = None) -> None:
    body = dict(payload)
    if prov is not None:
        body["provenance"] = prov
    _atomic_write(path, json.dumps(body, indent=2, sort_keys=True, default=_json_default) + "\n")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_vector(pr: PprVector, stem, raw_ids: np.ndarray | None = None, prov: dict | None = None) -> None:
    """Write ``<stem>.csv`` (node,value), ``<stem>.npy`` and ``<stem>.json``."""
    stem = Path(stem)
    ids = raw_ids if raw_ids is not None else np.arange(pr.values.size)
    nz = np.flatnonzero(pr.values)
    write_csv(stem.with_suffix(".csv"), ["node", "value"], zip(ids[nz].tolist(), pr.values[nz]), prov)
    tmp = stem.with_name(stem.name + ".npy.tmp")
    with open(tmp, "wb") as fh:
        np.save(fh, pr.values)
    os.replace(tmp, stem.with_suffix(".npy"))
    meta = {"owner": int(ids[pr.owner]), "alpha": pr.alpha, "iterations": pr.iterations,
            "residual": pr.residual, "n": int(pr.values.size), **pr.metadata}
    write_json(stem.with_suffix(".json"), meta, prov)


def load_vector(stem) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    return np.load(stem.with_suffix(".npy")), meta
