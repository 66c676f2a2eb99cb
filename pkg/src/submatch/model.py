"""Adaptive edge-deleting network for subgraph matching.

Shapes used throughout (``n`` nodes, ``d`` hidden width, ``K`` heads and
``d' = d / K`` per-head width):

* node embeddings ``H``: ``(n, d)``
* per-head projections ``W``: ``(K, d, d')``
* attention query vectors: ``(K, 2 d')``
* attention tables: ``(K, n, n)`` with zeros outside the adjacency
* predicted matching matrix: ``(|Q|, |G|)``, rows sum to one

Layer ``t`` maps ``H^(t)`` to ``H^(t+1)``; ``H^(1)`` is a shared linear
projection of the encoded node features. From layer 2 on, each layer first
propagates data-graph embeddings into the query graph and the query side
then attends over that cross information instead of its own embeddings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .graph import MatchPair, encode_features
from .numerics import ParamStore, Tensor
from .numerics import ops

POOLINGS = ("mean", "sum", "max")
SIMILARITIES = ("cosine", "euclidean")


@dataclass
class ModelConfig:
    """Architecture and loss weights.

    ``tau_init`` is the initial cross-propagation temperature, kept in
    (0, 1) through a sigmoid of an unconstrained scalar.
    """

    input_dim: int = 1
    n_layers: int = 3
    n_heads: int = 4
    hidden_dim: int = 32
    lambda1: float = 0.5
    lambda2: float = 0.2
    pooling: str = "mean"
    similarity: str = "cosine"
    tau_init: float = 0.5
    shared_tau: bool = False
    cross_propagation: bool = True
    head_reduce: str = "mean"
    slope: float = 0.2

    def __post_init__(self):
        if self.n_layers < 2:
            raise ValueError("n_layers must be at least 2")
        if self.n_heads < 1 or self.hidden_dim % self.n_heads:
            raise ValueError("n_heads must divide hidden_dim")
        if not (0.0 <= self.lambda1 <= 1.0 and 0.0 <= self.lambda2 <= 1.0):
            raise ValueError("lambda1 and lambda2 must lie in [0, 1]")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.similarity not in SIMILARITIES:
            raise ValueError(f"similarity must be one of {SIMILARITIES}")
        if not 0.0 < self.tau_init < 1.0:
            raise ValueError("tau_init must lie in (0, 1)")
        if self.head_reduce not in ("mean", "sum"):
            raise ValueError("head_reduce must be 'mean' or 'sum'")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def tau_name(cfg: ModelConfig, t: int) -> str:
    return "tau.rho" if cfg.shared_tau else f"tau{t}.rho"


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Fresh parameters; identical seeds give identical values."""
    rng = np.random.default_rng(seed)
    d, K, dh = cfg.hidden_dim, cfg.n_heads, cfg.head_dim
    store = ParamStore()
    store.add("input.w", _glorot(rng, (cfg.input_dim, d), cfg.input_dim, d))
    for t in range(1, cfg.n_layers + 1):
        p = f"layer{t}."
        store.add(p + "w", _glorot(rng, (K, d, dh), d, dh))
        store.add(p + "q.w1", _glorot(rng, (K, d, 2 * dh), d, 2 * dh))
        store.add(p + "q.b1", np.zeros((K, 1, 2 * dh)))
        store.add(p + "q.w2", _glorot(rng, (K, 2 * dh, 2 * dh), 2 * dh, 2 * dh))
        store.add(p + "q.b2", np.zeros((K, 1, 2 * dh)))
        if t == 1:
            store.add(p + "a", _glorot(rng, (K, 2 * dh), 1, 2 * dh))
        store.add(p + "mlp.w1", _glorot(rng, (d, d), d, d))
        store.add(p + "mlp.b1", np.zeros((1, d)))
        store.add(p + "mlp.w2", _glorot(rng, (d, d), d, d))
        store.add(p + "mlp.b2", np.zeros((1, d)))
    rho = np.log(cfg.tau_init / (1.0 - cfg.tau_init))
    if cfg.shared_tau:
        store.add("tau.rho", np.full((1, 1), rho))
    else:
        for t in range(2, cfg.n_layers + 2):
            store.add(f"tau{t}.rho", np.full((1, 1), rho))
    return store


# ---------------------------------------------------------------------------
# pair preprocessing
# ---------------------------------------------------------------------------

@dataclass
class NeighborPartition:
    """Keep/delete split of the neighbourhoods of matched data nodes.

    ``keep[v, j]`` is 1 when edge (v, j) mirrors a query edge under the
    reference mapping; ``delete[v, j]`` is 1 for the other neighbours of a
    matched ``v``. ``matched`` flags the matched data nodes.
    """

    keep: np.ndarray
    delete: np.ndarray
    matched: np.ndarray

    def keep_sets(self) -> dict[int, set[int]]:
        return {int(v): set(np.flatnonzero(self.keep[v]).tolist()) for v in np.flatnonzero(self.matched)}

    def delete_sets(self) -> dict[int, set[int]]:
        return {int(v): set(np.flatnonzero(self.delete[v]).tolist()) for v in np.flatnonzero(self.matched)}


def neighbor_partition(pair: MatchPair, mapping=None) -> NeighborPartition:
    """Split each matched data node's neighbours into mirrored and extra edges."""
    g, q = pair.data_graph, pair.query_graph
    m = pair.reference_mapping if mapping is None else tuple(mapping)
    n = g.num_nodes
    keep = np.zeros((n, n))
    delete = np.zeros((n, n))
    matched = np.zeros(n, dtype=bool)
    for u in range(q.num_nodes):
        v = m[u]
        matched[v] = True
        mirrored = {m[ju] for ju in q.neighbors(u) if g.has_edge(v, m[ju])}
        for j in g.neighbors(v):
            if j in mirrored:
                keep[v, j] = 1.0
            else:
                delete[v, j] = 1.0
    return NeighborPartition(keep, delete, matched)


@dataclass
class PairInputs:
    """Everything the forward pass and the losses need for one pair."""

    xq: np.ndarray
    xg: np.ndarray
    adj_q: np.ndarray
    adj_g: np.ndarray
    matrix: Optional[np.ndarray] = None
    partition: Optional[NeighborPartition] = None

    @property
    def n_query(self) -> int:
        return self.xq.shape[0]

    @property
    def n_data(self) -> int:
        return self.xg.shape[0]


def prepare_graphs(data_graph, query_graph, vocabulary=None, noise_std: float = 0.0,
                   rng: Optional[np.random.Generator] = None) -> PairInputs:
    """Encoded features and adjacency of a (data, query) pair, without targets."""
    xq = encode_features(query_graph, vocabulary)
    xg = encode_features(data_graph, vocabulary)
    if noise_std > 0.0:
        rng = rng if rng is not None else np.random.default_rng(0)
        xg = xg + rng.normal(0.0, noise_std, size=xg.shape)
        xq = xq + rng.normal(0.0, noise_std, size=xq.shape)
    return PairInputs(xq=xq, xg=xg, adj_q=query_graph.adjacency_matrix(), adj_g=data_graph.adjacency_matrix())


def prepare_pair(pair: MatchPair, vocabulary=None, with_targets: bool = True,
                 noise_std: float = 0.0, rng: Optional[np.random.Generator] = None) -> PairInputs:
    inputs = prepare_graphs(pair.data_graph, pair.query_graph, vocabulary, noise_std, rng)
    if with_targets:
        inputs.matrix = pair.matrix.astype(np.float64)
        inputs.partition = neighbor_partition(pair)
    return inputs


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def similarity_matrix(hq: Tensor, hg: Tensor, kind: str = "cosine") -> Tensor:
    if kind == "cosine":
        return ops.cosine_similarity_matrix(hq, hg)
    # negative squared distance
    sq = ops.sum(ops.mul(hq, hq), axis=-1, keepdims=True)
    sg = ops.sum(ops.mul(hg, hg), axis=-1, keepdims=True)
    cross = ops.matmul(hq, ops.transpose(hg))
    return ops.sub(ops.scale(cross, 2.0), ops.add(sq, ops.transpose(sg)))


def cross_propagate(hq: Tensor, hg: Tensor, tau, similarity: str = "cosine"):
    """Soft assignment of query nodes to data nodes and the propagated features.

    Returns ``(m_hat, n_q)`` with ``m_hat[i] = softmax_j(s(hq_i, hg_j) / tau)``
    and ``n_q = m_hat @ hg``. Information flows from the data graph to the
    query graph only.
    """
    sim = similarity_matrix(hq, hg, similarity)
    m_hat = ops.row_softmax_masked(sim, None, temperature=tau)
    return m_hat, ops.matmul(m_hat, hg)


def pool(h: Tensor, how: str = "mean") -> Tensor:
    if how == "mean":
        return ops.mean(h, axis=0, keepdims=True)
    if how == "sum":
        return ops.sum(h, axis=0, keepdims=True)
    return ops.max(h, axis=0, keepdims=True)


def sample_query(hq: Tensor, params: ParamStore, t: int, cfg: ModelConfig) -> Tensor:
    """Per-head attention query vectors ``(K, 2 d')`` computed from the pooled query graph."""
    p = f"layer{t}.q."
    pooled = pool(hq, cfg.pooling)  # (1, d), broadcast over heads
    hidden = ops.leaky_relu(ops.add(ops.matmul(pooled, params[p + "w1"]), params[p + "b1"]), cfg.slope)
    out = ops.add(ops.matmul(hidden, params[p + "w2"]), params[p + "b2"])
    return ops.reshape(out, (cfg.n_heads, 2 * cfg.head_dim))


def attention_coefficients(src: Tensor, q: Tensor, w: Tensor, adj: np.ndarray, slope: float = 0.2):
    """Masked attention over graph neighbourhoods, all heads at once.

    ``e[k, i, j] = LeakyReLU(q_k . [src_i W_k || src_j W_k])`` for neighbours
    ``j`` of ``i``; ``alpha`` is its row softmax over the neighbourhood.
    Isolated nodes get an all-zero row. Self-loops are not added.

    Returns
    -------
    alpha : Tensor, shape (K, n, n)
    projected : Tensor, shape (K, n, d')
        ``src W_k`` per head, reused as messages.
    """
    projected = ops.matmul(src, w)  # (n, d) @ (K, d, d') -> (K, n, d')
    K, dh = w.shape[0], w.shape[2]
    q3 = ops.reshape(q, (K, 2 * dh, 1))
    s_self = ops.matmul(projected, q3[:, :dh, :])  # (K, n, 1)
    s_nbr = ops.matmul(projected, q3[:, dh:, :])  # (K, n, 1)
    logits = ops.leaky_relu(ops.add(s_self, ops.transpose(s_nbr, (0, 2, 1))), slope)
    alpha = ops.row_softmax_masked(logits, adj, empty_rows="zero")
    return alpha, projected


def aggregate(alpha: Tensor, messages: Tensor, slope: float = 0.2) -> Tensor:
    """Attention-weighted neighbour sum per head, activated and concatenated to ``(n, K d')``."""
    agg = ops.leaky_relu(ops.matmul(alpha, messages), slope)  # (K, n, d')
    K, n, dh = agg.shape
    return ops.reshape(ops.transpose(agg, (1, 0, 2)), (n, K * dh))


def layer_mlp(x: Tensor, params: ParamStore, t: int, slope: float = 0.2) -> Tensor:
    p = f"layer{t}.mlp."
    return ops.mlp_apply(x, [(params[p + "w1"], params[p + "b1"]),
                             (params[p + "w2"], params[p + "b2"])], slope)


@dataclass
class LayerTrace:
    """Per-layer intermediate values of one forward pass (keys are layer numbers)."""

    h_q: dict = field(default_factory=dict)
    h_g: dict = field(default_factory=dict)
    m_hat: dict = field(default_factory=dict)
    alpha_g: dict = field(default_factory=dict)
    alpha_q: dict = field(default_factory=dict)


def layer_forward(hq: Tensor, hg: Tensor, inputs: PairInputs, params: ParamStore, t: int,
                  cfg: ModelConfig, trace: LayerTrace):
    """One network layer; returns ``(H_Q^(t+1), H_G^(t+1))``."""
    w = params[f"layer{t}.w"]
    q = sample_query(hq, params, t, cfg)
    alpha_g, msg_g = attention_coefficients(hg, q, w, inputs.adj_g, cfg.slope)
    if t == 1:
        alpha_q, msg_q = attention_coefficients(hq, params["layer1.a"], w, inputs.adj_q, cfg.slope)
    else:
        m_hat, n_q = cross_propagate(hq, hg, ops.sigmoid(params[tau_name(cfg, t)]), cfg.similarity)
        trace.m_hat[t] = m_hat
        src_q = n_q if cfg.cross_propagation else hq
        alpha_q, msg_q = attention_coefficients(src_q, q, w, inputs.adj_q, cfg.slope)
    trace.alpha_g[t] = alpha_g
    trace.alpha_q[t] = alpha_q
    hg_next = ops.add(layer_mlp(aggregate(alpha_g, msg_g, cfg.slope), params, t, cfg.slope), hg)
    hq_next = ops.add(layer_mlp(aggregate(alpha_q, msg_q, cfg.slope), params, t, cfg.slope), hq)
    return hq_next, hg_next


def model_forward(inputs: PairInputs, params: ParamStore, cfg: ModelConfig):
    """Full forward pass; returns the final predicted matrix and the trace.

    The final matrix is produced by one more cross propagation on the
    output embeddings of the last layer, i.e. it is ``trace.m_hat[T + 1]``.
    """
    trace = LayerTrace()
    w_in = params["input.w"]
    hq = ops.matmul(inputs.xq, w_in)
    hg = ops.matmul(inputs.xg, w_in)
    T = cfg.n_layers
    for t in range(1, T + 1):
        trace.h_q[t], trace.h_g[t] = hq, hg
        hq, hg = layer_forward(hq, hg, inputs, params, t, cfg, trace)
    trace.h_q[T + 1], trace.h_g[T + 1] = hq, hg
    m_final, _ = cross_propagate(hq, hg, ops.sigmoid(params[tau_name(cfg, T + 1)]), cfg.similarity)
    trace.m_hat[T + 1] = m_final
    return m_final, trace


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_matching(m_hat: Tensor, matrix: np.ndarray) -> Tensor:
    """Mean over query rows of ``|(matched mass - unmatched mass) - 1|``."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if not matrix.any(axis=1).all():
        raise ValueError("every row of the matching matrix needs a matched column")
    signs = 2.0 * matrix - 1.0
    v = ops.sum(ops.mul(m_hat, signs), axis=1)
    return ops.mean(ops.absolute(ops.sub(v, 1.0)))


def _head_reduce(x: Tensor, how: str) -> Tensor:
    return ops.mean(x, axis=0) if how == "mean" else ops.sum(x, axis=0)


def loss_delete(alpha_g: Tensor, partition: NeighborPartition, n_query: int,
                head_reduce: str = "mean") -> Tensor:
    """Penalty on attention mass that matched data nodes put on extra edges.

    For every matched node ``v`` with at least one neighbour,
    ``Y_v = keep mass - delete mass`` (reduced over heads) and the loss is
    ``sum_v |Y_v - 1| / |Q|``.
    """
    signs = partition.keep - partition.delete
    y = _head_reduce(ops.sum(ops.mul(alpha_g, signs), axis=-1), head_reduce)  # (n,)
    has_nbrs = (partition.keep + partition.delete).any(axis=1)
    weight = (partition.matched & has_nbrs).astype(np.float64) / float(n_query)
    return ops.sum(ops.mul(ops.absolute(ops.sub(y, 1.0)), weight))


def delete_mass(alpha_g: Tensor, partition: NeighborPartition) -> float:
    """Mean attention mass on delete-edges over matched nodes with neighbours and heads."""
    mass = (alpha_g.data * partition.delete).sum(axis=-1)  # (K, n)
    has_nbrs = (partition.keep + partition.delete).any(axis=1)
    rows = partition.matched & has_nbrs
    if not rows.any():
        return 0.0
    return float(mass[:, rows].mean())


def combine_losses(l_de: dict, l_m: dict, lambda1: float, lambda2: float, n_layers: int) -> Tensor:
    """Layer losses ``lambda1 L_DE(t) + (1 - lambda1) L_M(t + 1)``, weighted ``lambda2`` for
    ``t < T`` and ``1 - lambda2`` for the last layer."""
    total = None
    for t in range(1, n_layers + 1):
        layer = ops.add(ops.scale(l_de[t], lambda1), ops.scale(l_m[t + 1], 1.0 - lambda1))
        w = lambda2 if t < n_layers else 1.0 - lambda2
        term = ops.scale(layer, w)
        total = term if total is None else ops.add(total, term)
    return total


@dataclass
class LossBreakdown:
    total: Tensor
    l_de: dict
    l_m: dict

    def as_floats(self) -> dict:
        out = {"total": self.total.item()}
        out.update({f"l_de{t}": v.item() for t, v in self.l_de.items()})
        out.update({f"l_m{t}": v.item() for t, v in self.l_m.items()})
        return out


def loss_total(trace: LayerTrace, inputs: PairInputs, cfg: ModelConfig,
               lambda1: Optional[float] = None) -> LossBreakdown:
    """Weighted sum of the per-layer losses for one pair.

    ``lambda1`` overrides ``cfg.lambda1`` (used to switch off edge deletion
    while still monitoring its loss).
    """
    lam1 = cfg.lambda1 if lambda1 is None else lambda1
    T = cfg.n_layers
    l_de = {t: loss_delete(trace.alpha_g[t], inputs.partition, inputs.n_query, cfg.head_reduce)
            for t in range(1, T + 1)}
    l_m = {t: loss_matching(trace.m_hat[t], inputs.matrix) for t in range(2, T + 2)}
    return LossBreakdown(combine_losses(l_de, l_m, lam1, cfg.lambda2, T), l_de, l_m)


def extract_top1(m_hat) -> np.ndarray:
    """Column of the largest entry in each row (lowest index on ties)."""
    data = m_hat.data if isinstance(m_hat, Tensor) else np.asarray(m_hat)
    return np.argmax(data, axis=1)
