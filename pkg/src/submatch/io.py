"""File formats: TUDataset directories and the line-delimited pair format.

Pair file layout
----------------
One JSON object per line::

    {"data": G, "query": Q, "mappings": [[...], ...], "truncated": false}

where each graph record ``G`` / ``Q`` is::

    {"num_nodes": n, "edges": [[i, j], ...], "feature_kind": "categorical",
     "features": [...] | [[...], ...] | null, "edge_labels": [...] | null}

Edges are 0-based with ``i < j``; ``edge_labels`` is aligned with ``edges``.
The matching matrix is never stored; readers derive it from ``mappings``.
The first mapping is the reference mapping of the pair.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .graph import CATEGORICAL, NUMERICAL, GraphError, LabeledGraph, MatchPair

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class DataFormatError(ValueError):
    """Malformed input file."""


def _find_prefix(directory: Path) -> str:
    hits = sorted(directory.glob("*_A.txt"))
    if not hits:
        raise DataFormatError(f"{directory}: no '<DS>_A.txt' edge file found")
    if len(hits) > 1:
        raise DataFormatError(f"{directory}: several '*_A.txt' files, cannot pick a dataset")
    return hits[0].name[: -len("_A.txt")]


def _read_rows(path: Path, kind=float) -> list[list]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([kind(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise DataFormatError(f"{path.name}:{lineno}: {exc}") from None
    return rows


def load_tudataset(directory: PathLike) -> list[LabeledGraph]:
    """Read a TUDataset-format directory into 0-based ``LabeledGraph`` objects.

    Parameters
    ----------
    directory : path
        Folder with ``DS_A.txt`` and ``DS_graph_indicator.txt`` and optionally
        ``DS_node_labels.txt``, ``DS_node_attributes.txt`` and
        ``DS_edge_labels.txt``.

    Returns
    -------
    graphs : list of LabeledGraph
        One graph per graph id, in ascending id order.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"{directory} is not a directory")
    ds = _find_prefix(directory)

    def path(suffix):
        return directory / f"{ds}_{suffix}.txt"

    if not path("graph_indicator").exists():
        raise DataFormatError(f"missing mandatory file {path('graph_indicator').name}")

    indicator = [r[0] for r in _read_rows(path("graph_indicator"), int)]
    n_total = len(indicator)
    edges_raw = _read_rows(path("A"), int)

    graph_ids = sorted(set(indicator))
    gid_index = {g: k for k, g in enumerate(graph_ids)}
    node_graph = np.array([gid_index[g] for g in indicator], dtype=np.int64)
    # local index of every global node inside its graph
    local = np.zeros(n_total, dtype=np.int64)
    sizes = np.zeros(len(graph_ids), dtype=np.int64)
    for v, g in enumerate(node_graph):
        local[v] = sizes[g]
        sizes[g] += 1

    edge_labels_raw = None
    if path("edge_labels").exists():
        edge_labels_raw = [r[0] for r in _read_rows(path("edge_labels"), int)]
        if len(edge_labels_raw) != len(edges_raw):
            raise DataFormatError("edge label count does not match the edge list")

    per_graph_edges: list[dict] = [dict() for _ in graph_ids]
    n_loops = 0
    for k, row in enumerate(edges_raw):
        if len(row) != 2:
            raise DataFormatError(f"{path('A').name}:{k + 1}: expected two node ids")
        a, b = row
        if not (1 <= a <= n_total and 1 <= b <= n_total):
            raise DataFormatError(
                f"{path('A').name}:{k + 1}: node id outside 1..{n_total}")
        a, b = a - 1, b - 1
        if node_graph[a] != node_graph[b]:
            raise DataFormatError(f"{path('A').name}:{k + 1}: edge joins two different graphs")
        if a == b:
            n_loops += 1
            continue
        key = (min(local[a], local[b]), max(local[a], local[b]))
        store = per_graph_edges[node_graph[a]]
        if key not in store:
            store[key] = None if edge_labels_raw is None else edge_labels_raw[k]
    if n_loops:
        logger.warning("%s: dropped %d self-loop entries", ds, n_loops)

    labels_file, attrs_file = path("node_labels"), path("node_attributes")
    kind, feats = None, None
    if attrs_file.exists():
        if labels_file.exists():
            logger.warning("%s: both node labels and attributes present; using attributes", ds)
        rows = _read_rows(attrs_file, float)
        if len(rows) != n_total:
            raise DataFormatError("node attribute count does not match the graph indicator")
        if len({len(r) for r in rows}) > 1:
            raise DataFormatError("ragged node attribute rows")
        kind, feats = NUMERICAL, np.asarray(rows, dtype=np.float64).reshape(n_total, -1)
    elif labels_file.exists():
        rows = _read_rows(labels_file, int)
        if len(rows) != n_total or any(len(r) != 1 for r in rows):
            raise DataFormatError("node label count does not match the graph indicator")
        kind, feats = CATEGORICAL, np.asarray([r[0] for r in rows], dtype=np.int64)

    graphs = []
    for g in range(len(graph_ids)):
        members = np.flatnonzero(node_graph == g)
        store = per_graph_edges[g]
        elab = None if edge_labels_raw is None else dict(store)
        gf = None if feats is None else feats[members]
        graphs.append(LabeledGraph(int(sizes[g]), list(store), gf, kind, elab))
    return graphs


def _graph_record(g: LabeledGraph) -> dict:
    feats = None if g.node_features is None else g.node_features.tolist()
    elab = None
    if g.edge_labels is not None:
        elab = [g.edge_labels[e] for e in g.edges]
    return {
        "num_nodes": g.num_nodes,
        "edges": [list(e) for e in g.edges],
        "feature_kind": g.feature_kind,
        "features": feats,
        "edge_labels": elab,
    }


def _graph_from_record(rec: dict) -> LabeledGraph:
    edges = [tuple(e) for e in rec["edges"]]
    elab = None
    if rec.get("edge_labels") is not None:
        elab = dict(zip(edges, rec["edge_labels"]))
    return LabeledGraph(rec["num_nodes"], edges, rec.get("features"), rec["feature_kind"], elab)


def pair_to_json(pair: MatchPair) -> str:
    rec = {
        "data": _graph_record(pair.data_graph),
        "query": _graph_record(pair.query_graph),
        "mappings": [list(m) for m in pair.mappings],
        "truncated": pair.truncated,
    }
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def pair_from_json(text: str) -> MatchPair:
    rec = json.loads(text)
    return MatchPair(
        _graph_from_record(rec["data"]),
        _graph_from_record(rec["query"]),
        rec["mappings"],
        rec.get("truncated", False),
    )


def write_pairs(path: PathLike, pairs: Iterable[MatchPair]) -> None:
    with open(path, "w") as fh:
        for pair in pairs:
            fh.write(pair_to_json(pair))
            fh.write("\n")


def read_pairs(path: PathLike) -> list[MatchPair]:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                pairs.append(pair_from_json(line))
            except (json.JSONDecodeError, KeyError, TypeError, GraphError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return pairs
