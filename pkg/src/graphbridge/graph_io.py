"""Graph file I/O: JSONL records and plain edge lists.

JSONL schema, one object per line:
    {"n": 5, "nodes": [0, 1, ...], "edges": [[i, j, label], ...], "dx": 2, "de": 3}
with i < j; dx/de are optional and inferred from labels when absent.

Edge-list blocks start with a header "n=<int> dx=<int> de=<int>" followed by
one "i j label" line per edge; blocks are separated by blank lines.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .graphs import AttributedGraph


def save_graphs(graphs, path, format: str = "jsonl"):
    path = Path(path)
    if format == "jsonl":
        _save_jsonl(graphs, path)
    elif format == "edgelist":
        _save_edgelist(graphs, path)
    else:
        raise DataFormatError(f"unknown graph format '{format}'")


def load_graphs(path, format: str = "jsonl"):
    path = Path(path)
    if format == "jsonl":
        return _load_jsonl(path)
    if format == "edgelist":
        return _load_edgelist(path)
    raise DataFormatError(f"unknown graph format '{format}'")


def _edge_triples(g: AttributedGraph):
    ii, jj = np.nonzero(np.triu(g.edge_types, k=1))
    return [[int(i), int(j), int(g.edge_types[i, j])] for i, j in zip(ii, jj)]


def _save_jsonl(graphs, path: Path):
    with path.open("w") as fh:
        for g in graphs:
            record = {
                "n": g.n,
                "nodes": [int(v) for v in g.node_types],
                "edges": _edge_triples(g),
                "dx": g.dx,
                "de": g.de,
            }
            fh.write(json.dumps(record) + "\n")


def _graph_from_record(record, where):
    try:
        n = int(record["n"])
        nodes = np.asarray(record["nodes"], dtype=np.int64)
        edges = record["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: bad record ({exc})")
    if nodes.shape != (n,):
        raise DataFormatError(f"{where}: expected {n} node labels, got {nodes.shape}")
    edge_types = np.zeros((n, n), dtype=np.int64)
    max_label = 0
    for triple in edges:
        if len(triple) != 3:
            raise DataFormatError(f"{where}: edge entry {triple} is not [i, j, label]")
        i, j, label = (int(v) for v in triple)
        if not (0 <= i < j < n):
            raise DataFormatError(f"{where}: edge ({i}, {j}) out of range for n={n}")
        if label <= 0:
            raise DataFormatError(f"{where}: edge label must be positive, got {label}")
        edge_types[i, j] = edge_types[j, i] = label
        max_label = max(max_label, label)
    dx = int(record.get("dx", int(nodes.max(initial=0)) + 1))
    de = int(record.get("de", max_label + 1))
    if np.any(nodes >= dx):
        raise DataFormatError(f"{where}: node label >= dx={dx}")
    if max_label >= de:
        raise DataFormatError(f"{where}: edge label {max_label} >= de={de}")
    try:
        return AttributedGraph(nodes, edge_types, dx=dx, de=max(de, 2))
    except Exception as exc:
        raise DataFormatError(f"{where}: {exc}")


def _load_jsonl(path: Path):
    graphs = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})")
            graphs.append(_graph_from_record(record, f"{path}:{lineno}"))
    return graphs


def _save_edgelist(graphs, path: Path):
    with path.open("w") as fh:
        for k, g in enumerate(graphs):
            if k:
                fh.write("\n")
            fh.write(f"n={g.n} dx={g.dx} de={g.de}\n")
            for i, j, label in _edge_triples(g):
                fh.write(f"{i} {j} {label}\n")


def _parse_header(line, where):
    fields = {}
    for token in line.split():
        if "=" not in token:
            raise DataFormatError(f"{where}: bad header token '{token}'")
        key, value = token.split("=", 1)
        try:
            fields[key] = int(value)
        except ValueError:
            raise DataFormatError(f"{where}: non-integer header value '{value}'")
    for key in ("n", "dx", "de"):
        if key not in fields:
            raise DataFormatError(f"{where}: header missing '{key}'")
    return fields


def _load_edgelist(path: Path):
    graphs = []
    header = None
    edge_types = None
    start_line = 0

    def finish():
        nonlocal header, edge_types
        if header is not None:
            graphs.append(AttributedGraph(
                np.zeros(header["n"], dtype=np.int64), edge_types,
                dx=header["dx"], de=header["de"]))
        header, edge_types = None, None

    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                finish()
                continue
            if line.startswith("n="):
                finish()
                header = _parse_header(line, f"{path}:{lineno}")
                edge_types = np.zeros((header["n"], header["n"]), dtype=np.int64)
                start_line = lineno
                continue
            if header is None:
                raise DataFormatError(f"{path}:{lineno}: edge line before header")
            parts = line.split()
            if len(parts) != 3:
                raise DataFormatError(f"{path}:{lineno}: expected 'i j label'")
            try:
                i, j, label = (int(p) for p in parts)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer edge entry")
            n, de = header["n"], header["de"]
            if not (0 <= i < n and 0 <= j < n and i != j):
                raise DataFormatError(f"{path}:{lineno}: edge ({i}, {j}) out of range")
            if not (0 < label < de):
                raise DataFormatError(
                    f"{path}:{lineno}: edge label {label} outside (0, {de}) "
                    f"for graph at line {start_line}")
            edge_types[i, j] = edge_types[j, i] = label
    finish()
    return graphs
