"""Build (data graph, query graph, ground truth) pairs from a graph corpus."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .exact import enumerate_mappings
from .graph import LabeledGraph, MatchPair

logger = logging.getLogger(__name__)

DEFAULT_MAPPING_CAP = 1000


@dataclass
class GenConfig:
    """Pair generation settings.

    ``query_size_range`` is inclusive. Every sample draws its randomness from
    its own stream seeded by ``(seed, sample index)``.
    """

    query_size_range: tuple[int, int] = (5, 8)
    num_samples: int = 100
    seed: int = 0
    mapping_cap: Optional[int] = DEFAULT_MAPPING_CAP

    def __post_init__(self):
        lo, hi = self.query_size_range
        self.query_size_range = (int(lo), int(hi))
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid query size range {self.query_size_range}")
        if self.num_samples < 1:
            raise ValueError("num_samples must be at least 1")
        if self.mapping_cap is not None and self.mapping_cap < 1:
            raise ValueError("mapping_cap must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticParams:
    """Erdos-Renyi style corpus with uniformly drawn categorical labels.

    ``num_labels = 0`` produces featureless graphs.
    """

    num_graphs: int = 100
    num_nodes: tuple[int, int] = (15, 25)
    edge_prob: float = 0.3
    num_labels: int = 4

    def to_dict(self) -> dict:
        return asdict(self)


def sample_connected_subgraph(g: LabeledGraph, size: int, rng: np.random.Generator):
    """Grow a random connected node set and return its induced subgraph.

    The start node is uniform over nodes whose component holds at least
    ``size`` nodes; each further node is uniform over the current frontier.

    Returns
    -------
    query : LabeledGraph
        Induced subgraph; query node ``k`` is data node ``extraction[k]``.
    extraction : tuple of int
    """
    if not 1 <= size <= g.num_nodes:
        raise ValueError(f"size must be in 1..{g.num_nodes}, got {size}")
    starts = sorted(v for comp in g.components() if len(comp) >= size for v in comp)
    if not starts:
        raise ValueError(f"no connected component with {size} nodes")
    chosen = [starts[int(rng.integers(len(starts)))]]
    in_set = {chosen[0]}
    frontier = set(g.neighbors(chosen[0]))
    while len(chosen) < size:
        options = sorted(frontier)
        v = options[int(rng.integers(len(options)))]
        chosen.append(v)
        in_set.add(v)
        frontier.discard(v)
        frontier.update(w for w in g.neighbors(v) if w not in in_set)
    return g.subgraph(chosen), tuple(chosen)


def eligible_graphs(corpus: Sequence[LabeledGraph], size: int) -> list[int]:
    """Indices of corpus graphs with a connected component of at least ``size`` nodes."""
    return [k for k, g in enumerate(corpus)
            if g.num_nodes >= size and max(len(c) for c in g.components()) >= size]


def _make_pair(cfg: GenConfig, corpus, pool, index: int) -> MatchPair:
    rng = np.random.default_rng([cfg.seed, index])
    g = corpus[pool[int(rng.integers(len(pool)))]]
    lo, hi = cfg.query_size_range
    size = int(rng.integers(lo, hi + 1))
    query, extraction = sample_connected_subgraph(g, size, rng)
    res = enumerate_mappings(g, query, mode="all", limit=cfg.mapping_cap)
    others = sorted(m for m in res.mappings if m != extraction)
    if res.stats.truncated and len(others) >= cfg.mapping_cap:
        others = others[: cfg.mapping_cap - 1]
    return MatchPair(g, query, [extraction] + others, truncated=res.stats.truncated)


def generate_pairs(cfg: GenConfig, corpus: Sequence[LabeledGraph], n_jobs: int = 1,
                   offset: int = 0) -> list[MatchPair]:
    """Sample ``cfg.num_samples`` pairs from ``corpus``.

    Graphs too small for the largest query size are skipped with a warning.
    The reference (first) mapping of each pair is the extraction mapping.
    ``offset`` shifts the sample indices used to seed the per-sample streams.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    pool = eligible_graphs(corpus, cfg.query_size_range[1])
    skipped = len(corpus) - len(pool)
    if skipped:
        logger.warning("skipped %d of %d corpus graphs smaller than the query size range",
                       skipped, len(corpus))
    if not pool:
        raise ValueError("no corpus graph is large enough for the query size range")
    indices = range(offset, offset + cfg.num_samples)
    if n_jobs == 1:
        return [_make_pair(cfg, corpus, pool, i) for i in indices]
    return Parallel(n_jobs=n_jobs)(delayed(_make_pair)(cfg, corpus, pool, i) for i in indices)


def generate_synthetic_corpus(params: SyntheticParams, rng: np.random.Generator,
                              max_rejections: int = 1000) -> list[LabeledGraph]:
    """Draw connected random graphs, resampling disconnected draws."""
    lo, hi = params.num_nodes
    if lo < 1 or hi < lo:
        raise ValueError(f"invalid node count range {params.num_nodes}")
    if not 0.0 <= params.edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    graphs = []
    for _ in range(params.num_graphs):
        n = int(rng.integers(lo, hi + 1))
        iu, ju = np.triu_indices(n, k=1)
        for _attempt in range(max_rejections):
            keep = rng.random(iu.size) < params.edge_prob
            labels = rng.integers(params.num_labels, size=n) if params.num_labels > 0 else None
            g = LabeledGraph(n, zip(iu[keep].tolist(), ju[keep].tolist()), labels)
            if g.is_connected():
                break
        else:
            raise ValueError(
                f"{max_rejections} consecutive disconnected draws for n={n}, "
                f"p={params.edge_prob}; use a higher edge probability")
        graphs.append(g)
    return graphs
