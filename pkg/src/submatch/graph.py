"""Graph data model: labeled graphs, mappings, matching matrices and pairs."""

from __future__ import annotations

from collections import deque
from typing import Iterable, Optional, Sequence

import numpy as np

CATEGORICAL = "categorical"
NUMERICAL = "numerical"
NONE = "none"
FEATURE_KINDS = (CATEGORICAL, NUMERICAL, NONE)


class GraphError(ValueError):
    """Raised when a graph, mapping or pair violates its invariants."""


def _canonical_edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


class LabeledGraph:
    """Undirected simple graph with optional node features and edge labels.

    Parameters
    ----------
    num_nodes : int
        Number of nodes; nodes are ``0 .. num_nodes - 1``.
    edges : iterable of (int, int)
        Unordered node pairs. Duplicates in either orientation are rejected.
    node_features : array-like or None
        Integer label per node (categorical), a ``(num_nodes, f)`` real
        matrix (numerical) or None.
    feature_kind : {"categorical", "numerical", "none"}, optional
        Inferred from ``node_features`` when omitted.
    edge_labels : dict mapping edge -> int, optional
        Keys may be given in either orientation.
    """

    __slots__ = ("num_nodes", "edges", "node_features", "feature_kind", "edge_labels", "_adj")

    def __init__(
        self,
        num_nodes: int,
        edges: Iterable[Sequence[int]] = (),
        node_features=None,
        feature_kind: Optional[str] = None,
        edge_labels: Optional[dict] = None,
    ):
        num_nodes = int(num_nodes)
        if num_nodes < 0:
            raise GraphError("num_nodes must be non-negative")
        canon: list[tuple[int, int]] = []
        seen: set[tuple[int, int]] = set()
        for e in edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            if not (0 <= i < num_nodes and 0 <= j < num_nodes):
                raise GraphError(f"edge ({i}, {j}) out of range for {num_nodes} nodes")
            key = _canonical_edge(i, j)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        canon.sort()

        if feature_kind is None:
            if node_features is None:
                feature_kind = NONE
            else:
                arr = np.asarray(node_features)
                feature_kind = NUMERICAL if arr.ndim == 2 else CATEGORICAL
        if feature_kind not in FEATURE_KINDS:
            raise GraphError(f"unknown feature kind {feature_kind!r}")

        feats = None
        if feature_kind == CATEGORICAL:
            feats = np.asarray(node_features)
            if feats.shape != (num_nodes,):
                raise GraphError("categorical features need one label per node")
            if feats.size and not np.issubdtype(feats.dtype, np.integer):
                if not np.all(np.equal(np.mod(feats, 1), 0)):
                    raise GraphError("categorical labels must be integers")
            feats = feats.astype(np.int64)
        elif feature_kind == NUMERICAL:
            feats = np.asarray(node_features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != num_nodes:
                raise GraphError("numerical features must be a (num_nodes, dim) matrix")
        elif node_features is not None:
            raise GraphError("feature kind 'none' takes no node features")
        if feats is not None:
            feats.setflags(write=False)

        labels = None
        if edge_labels is not None:
            labels = {}
            for (i, j), lab in edge_labels.items():
                key = _canonical_edge(int(i), int(j))
                if key not in seen:
                    raise GraphError(f"edge label for missing edge {key}")
                labels[key] = int(lab)
            if len(labels) != len(seen):
                raise GraphError("edge labels must cover every edge")

        adj: list[set[int]] = [set() for _ in range(num_nodes)]
        for i, j in canon:
            adj[i].add(j)
            adj[j].add(i)

        object.__setattr__(self, "num_nodes", num_nodes)
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "feature_kind", feature_kind)
        object.__setattr__(self, "edge_labels", labels)
        object.__setattr__(self, "_adj", tuple(frozenset(a) for a in adj))

    def __reduce__(self):
        return (LabeledGraph, (self.num_nodes, self.edges, self.node_features, self.feature_kind,
                               self.edge_labels))

    def __setattr__(self, name, value):
        raise AttributeError("LabeledGraph is immutable")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> frozenset[int]:
        return self._adj[i]

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adj[i]

    def edge_label(self, i: int, j: int) -> Optional[int]:
        if self.edge_labels is None:
            return None
        return self.edge_labels[_canonical_edge(i, j)]

    def feature_key(self, i: int):
        """Hashable node feature used for exact equality tests."""
        if self.feature_kind == CATEGORICAL:
            return int(self.node_features[i])
        if self.feature_kind == NUMERICAL:
            return tuple(self.node_features[i].tolist())
        return None

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=bool)
        if self.edges:
            idx = np.asarray(self.edges)
            a[idx[:, 0], idx[:, 1]] = True
            a[idx[:, 1], idx[:, 0]] = True
        return a

    def is_connected(self) -> bool:
        if self.num_nodes == 0:
            return True
        return len(self.component_of(0)) == self.num_nodes

    def component_of(self, start: int) -> set[int]:
        seen = {start}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in self._adj[u]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def components(self) -> list[set[int]]:
        left = set(range(self.num_nodes))
        comps = []
        while left:
            comp = self.component_of(min(left))
            comps.append(comp)
            left -= comp
        return comps

    def subgraph(self, nodes: Sequence[int]) -> "LabeledGraph":
        """Induced subgraph; node ``k`` of the result is ``nodes[k]``."""
        index = {int(v): k for k, v in enumerate(nodes)}
        if len(index) != len(nodes):
            raise GraphError("subgraph nodes must be distinct")
        edges = []
        labels = {} if self.edge_labels is not None else None
        for (i, j) in self.edges:
            if i in index and j in index:
                edges.append((index[i], index[j]))
                if labels is not None:
                    labels[(index[i], index[j])] = self.edge_labels[(i, j)]
        feats = None
        if self.node_features is not None:
            feats = self.node_features[np.asarray(nodes, dtype=np.int64)]
        return LabeledGraph(len(nodes), edges, feats, self.feature_kind, labels)

    def permute(self, perm: Sequence[int]) -> "LabeledGraph":
        """Relabel nodes so that old node ``i`` becomes ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.num_nodes)):
            raise GraphError("perm must be a permutation of the node indices")
        edges = [(int(perm[i]), int(perm[j])) for i, j in self.edges]
        labels = None
        if self.edge_labels is not None:
            labels = {(int(perm[i]), int(perm[j])): lab for (i, j), lab in self.edge_labels.items()}
        feats = None
        if self.node_features is not None:
            feats = np.empty_like(self.node_features)
            feats[perm] = self.node_features
        return LabeledGraph(self.num_nodes, edges, feats, self.feature_kind, labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledGraph):
            return NotImplemented
        if (self.num_nodes, self.edges, self.feature_kind, self.edge_labels) != (
            other.num_nodes, other.edges, other.feature_kind, other.edge_labels
        ):
            return False
        if self.node_features is None:
            return other.node_features is None
        return np.array_equal(self.node_features, other.node_features)

    __hash__ = None

    def __repr__(self) -> str:
        return (f"LabeledGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, "
                f"feature_kind={self.feature_kind!r})")


def check_mapping(mapping: Sequence[int], n_query: int, n_data: int) -> tuple[int, ...]:
    """Validate an assignment ``query node -> data node`` and return it as a tuple."""
    m = tuple(int(x) for x in mapping)
    if len(m) != n_query:
        raise GraphError(f"mapping has length {len(m)}, expected {n_query}")
    if any(x < 0 or x >= n_data for x in m):
        raise GraphError(f"mapping {m} references a node outside the data graph")
    if len(set(m)) != len(m):
        raise GraphError(f"mapping {m} is not injective")
    return m


def matching_matrix(mappings: Iterable[Sequence[int]], n_query: int, n_data: int) -> np.ndarray:
    """Union indicator of a set of mappings: entry (i, j) is 1 iff some mapping sends i to j."""
    mat = np.zeros((n_query, n_data), dtype=np.int8)
    rows = np.arange(n_query)
    for m in mappings:
        mat[rows, np.asarray(m, dtype=np.int64)] = 1
    return mat


class MatchPair:
    """A data graph, a query graph and the known matches of the query in the data graph.

    ``mappings[0]`` is the reference mapping (the extraction mapping for
    generated pairs). ``truncated`` records that the mapping set was capped
    and therefore the matrix may miss matched columns.
    """

    __slots__ = ("data_graph", "query_graph", "mappings", "truncated")

    def __init__(self, data_graph, query_graph, mappings, truncated=False):
        if data_graph.feature_kind != query_graph.feature_kind:
            raise GraphError("data and query graphs have different feature kinds")
        if query_graph.num_nodes < 1:
            raise GraphError("query graph must have at least one node")
        maps = tuple(check_mapping(m, query_graph.num_nodes, data_graph.num_nodes) for m in mappings)
        if not maps:
            raise GraphError("a pair needs at least one mapping")
        if len(set(maps)) != len(maps):
            raise GraphError("duplicate mapping in pair")
        object.__setattr__(self, "data_graph", data_graph)
        object.__setattr__(self, "query_graph", query_graph)
        object.__setattr__(self, "mappings", maps)
        object.__setattr__(self, "truncated", bool(truncated))

    @property
    def matrix(self) -> np.ndarray:
        return matching_matrix(self.mappings, self.query_graph.num_nodes, self.data_graph.num_nodes)

    @property
    def reference_mapping(self) -> tuple[int, ...]:
        return self.mappings[0]

    def __reduce__(self):
        return (MatchPair, (self.data_graph, self.query_graph, self.mappings, self.truncated))

    def __setattr__(self, name, value):
        raise AttributeError("MatchPair is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatchPair):
            return NotImplemented
        return (self.data_graph == other.data_graph and self.query_graph == other.query_graph
                and self.mappings == other.mappings and self.truncated == other.truncated)

    __hash__ = None


def label_vocabulary(graphs: Iterable[LabeledGraph]) -> dict[int, int]:
    """Sorted label -> column index map over all categorical graphs."""
    labels: set[int] = set()
    for g in graphs:
        if g.feature_kind == CATEGORICAL:
            labels.update(int(x) for x in g.node_features)
    return {lab: k for k, lab in enumerate(sorted(labels))}


def encode_features(g: LabeledGraph, vocabulary: Optional[dict[int, int]] = None) -> np.ndarray:
    """Model input matrix for a graph.

    Categorical labels become one-hot rows over ``vocabulary``, numerical
    rows are copied and featureless graphs get one constant column of ones.
    """
    if g.feature_kind == CATEGORICAL:
        if vocabulary is None:
            raise GraphError("categorical graphs need a label vocabulary")
        out = np.zeros((g.num_nodes, len(vocabulary)), dtype=np.float64)
        for i, lab in enumerate(g.node_features):
            col = vocabulary.get(int(lab))
            if col is None:
                raise GraphError(f"label {int(lab)} is not in the vocabulary")
            out[i, col] = 1.0
        return out
    if g.feature_kind == NUMERICAL:
        return np.array(g.node_features, dtype=np.float64)
    return np.ones((g.num_nodes, 1), dtype=np.float64)
