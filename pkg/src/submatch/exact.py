"""Exact (induced) subgraph isomorphism by backtracking search.

The search follows the VF2 recipe: query nodes are matched one at a time in
a connected order, and each partial assignment is kept feasible, i.e. every
pair of already matched query nodes agrees with its image on adjacency,
non-adjacency (induced semantics) and edge label.

Candidate pruning uses node-feature equality and the degree bound
``deg_G(m(u)) >= deg_Q(u)``. The bound is sound because the neighbours of
``u`` are mapped injectively onto neighbours of ``m(u)``.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from .graph import LabeledGraph

MODES = ("all", "first", "exists")


@dataclass
class SearchStats:
    """Counters for one search."""

    states: int = 0
    wall_time: float = 0.0
    complete: bool = True
    truncated: bool = False
    timed_out: bool = False


@dataclass
class MatchResult:
    mappings: list[tuple[int, ...]] = field(default_factory=list)
    stats: SearchStats = field(default_factory=SearchStats)
    found: bool = False


class _Stop(Exception):
    pass


def matching_order(query: LabeledGraph) -> list[int]:
    """Connected expansion order of the query nodes.

    Starts at the highest-degree node (lowest index on ties) and repeatedly
    takes the frontier node with the most already-ordered neighbours, then
    the highest degree, then the lowest index. A disconnected query restarts
    from the best unvisited node.
    """
    n = query.num_nodes
    order: list[int] = []
    placed = [False] * n
    links = [0] * n
    while len(order) < n:
        frontier = [u for u in range(n) if not placed[u] and links[u] > 0]
        pool = frontier or [u for u in range(n) if not placed[u]]
        u = min(pool, key=lambda x: (-links[x], -query.degree(x), x))
        placed[u] = True
        order.append(u)
        for w in query.neighbors(u):
            links[w] += 1
    return order


def enumerate_mappings(
    data: LabeledGraph,
    query: LabeledGraph,
    mode: str = "all",
    limit: Optional[int] = None,
    deadline: Optional[float] = None,
    induced: bool = True,
) -> MatchResult:
    """Find matches of ``query`` inside ``data``.

    Parameters
    ----------
    data, query : LabeledGraph
    mode : {"all", "first", "exists"}
        ``first`` stops after one mapping; ``exists`` also stops after one
        but returns no mapping, only ``result.stats`` and ``found``.
    limit : int, optional
        Stop after this many mappings and flag the result as truncated.
    deadline : float, optional
        Wall-clock budget in seconds. On expiry the partial result is
        returned with ``stats.timed_out`` set.
    induced : bool, default=True
        Require that query non-edges map to data non-edges.

    Returns
    -------
    MatchResult
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if query.num_nodes < 1:
        raise ValueError("query graph must have at least one node")
    if query.feature_kind != data.feature_kind:
        raise ValueError("data and query graphs have different feature kinds")

    stats = SearchStats()
    found: list[tuple[int, ...]] = []
    start = time.perf_counter()
    stop_at = None if deadline is None else start + deadline
    cap = 1 if mode in ("first", "exists") else limit

    order = matching_order(query)
    nq = query.num_nodes
    # for each position: already-ordered query neighbours and non-neighbours
    earlier_nbrs = []
    earlier_non = []
    for k, u in enumerate(order):
        before = order[:k]
        earlier_nbrs.append([w for w in before if query.has_edge(u, w)])
        earlier_non.append([w for w in before if not query.has_edge(u, w)])
    qfeat = [query.feature_key(u) for u in range(nq)]
    qdeg = [query.degree(u) for u in range(nq)]
    gfeat = [data.feature_key(v) for v in range(data.num_nodes)]
    gdeg = [data.degree(v) for v in range(data.num_nodes)]
    gadj = [data.neighbors(v) for v in range(data.num_nodes)]
    labeled = query.edge_labels is not None or data.edge_labels is not None

    assign = [-1] * nq
    used = [False] * data.num_nodes

    def candidates(k: int):
        u = order[k]
        nbrs = earlier_nbrs[k]
        if nbrs:
            anchor = min(nbrs, key=lambda w: gdeg[assign[w]])
            pool = sorted(gadj[assign[anchor]])
        else:
            pool = range(data.num_nodes)
        for v in pool:
            if used[v] or gfeat[v] != qfeat[u] or gdeg[v] < qdeg[u]:
                continue
            adj_v = gadj[v]
            ok = True
            for w in nbrs:
                if assign[w] not in adj_v:
                    ok = False
                    break
                if labeled and query.edge_label(u, w) != data.edge_label(v, assign[w]):
                    ok = False
                    break
            if ok and induced:
                for w in earlier_non[k]:
                    if assign[w] in adj_v:
                        ok = False
                        break
            if ok:
                yield v

    def extend(k: int):
        stats.states += 1
        if stop_at is not None and (stats.states & 63) == 0 and time.perf_counter() > stop_at:
            stats.timed_out = True
            raise _Stop
        if k == nq:
            found.append(tuple(assign))
            if cap is not None and len(found) >= cap:
                if mode == "all":
                    stats.truncated = True
                raise _Stop
            return
        u = order[k]
        for v in candidates(k):
            assign[u] = v
            used[v] = True
            extend(k + 1)
            used[v] = False
        assign[u] = -1

    try:
        extend(0)
    except _Stop:
        pass
    stats.wall_time = time.perf_counter() - start
    stats.complete = not (stats.timed_out or stats.truncated) and mode == "all"
    return MatchResult([] if mode == "exists" else found, stats, bool(found))


def is_match(data: LabeledGraph, query: LabeledGraph, mapping, induced: bool = True) -> bool:
    """Check one assignment against the matching conditions."""
    m = tuple(mapping)
    if len(m) != query.num_nodes or len(set(m)) != len(m):
        return False
    if any(not 0 <= v < data.num_nodes for v in m):
        return False
    for u in range(query.num_nodes):
        if query.feature_key(u) != data.feature_key(m[u]):
            return False
    for a, b in itertools.combinations(range(query.num_nodes), 2):
        qe = query.has_edge(a, b)
        ge = data.has_edge(m[a], m[b])
        if qe and not ge:
            return False
        if induced and ge and not qe:
            return False
        if qe and query.edge_label(a, b) != data.edge_label(m[a], m[b]):
            return False
    return True


def brute_force_mappings(data: LabeledGraph, query: LabeledGraph, induced: bool = True,
                         max_nodes: int = 10) -> list[tuple[int, ...]]:
    """Every valid mapping, found by testing all injections; sorted."""
    if data.num_nodes > max_nodes:
        raise ValueError(f"brute force is limited to {max_nodes} data nodes")
    if query.num_nodes > data.num_nodes:
        return []
    if math.perm(data.num_nodes, query.num_nodes) > 4_000_000:
        raise ValueError("too many injections for brute force")
    out = [m for m in itertools.permutations(range(data.num_nodes), query.num_nodes)
           if is_match(data, query, m, induced)]
    return sorted(out)
