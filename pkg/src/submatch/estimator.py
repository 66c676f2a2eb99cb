"""scikit-learn style front ends for the learned and the exact matcher.

Samples are graph pairs. ``fit`` takes a sequence of :class:`MatchPair`
(ground truth included); ``predict`` accepts either ``MatchPair`` objects
or ``(data_graph, query_graph)`` tuples and returns, per pair, one data
node index for every query node.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exact import enumerate_mappings
from .graph import LabeledGraph, MatchPair, matching_matrix
from .harness import TrainConfig, TrainedModel, evaluate, f1_score, train
from .model import ModelConfig, extract_top1, prepare_graphs


def check_pair_list(X, require_targets: bool = False) -> list:
    """Validate a batch of graph pairs.

    Parameters
    ----------
    X : sequence of MatchPair or (LabeledGraph, LabeledGraph)
        Pairs ordered as (data graph, query graph).
    require_targets : bool, default=False
        Reject bare tuples, which carry no ground-truth mappings.

    Returns
    -------
    pairs : list
        ``MatchPair`` objects and ``(data, query)`` tuples, in input order.
    """
    if isinstance(X, (MatchPair, tuple)) and not isinstance(X, list):
        if isinstance(X, MatchPair) or (len(X) == 2 and isinstance(X[0], LabeledGraph)):
            raise TypeError("expected a sequence of pairs, got a single pair")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of pairs, got {type(X).__name__}") from None
    if not items:
        raise ValueError("found an empty sequence of pairs")
    out = []
    for k, item in enumerate(items):
        if isinstance(item, MatchPair):
            out.append(item)
        elif (isinstance(item, tuple) and len(item) == 2
              and all(isinstance(g, LabeledGraph) for g in item)):
            if require_targets:
                raise ValueError(f"pair {k} has no ground-truth mappings")
            out.append(item)
        else:
            raise TypeError(f"pair {k}: expected MatchPair or (data, query) tuple, got {type(item).__name__}")
    return out


def _graphs(item) -> tuple[LabeledGraph, LabeledGraph]:
    if isinstance(item, MatchPair):
        return item.data_graph, item.query_graph
    return item


class AEDNetMatcher(BaseEstimator):
    """Learned subgraph matcher with adaptive edge deletion.

    Parameters
    ----------
    n_layers : int, default=3
        Number of attention layers.
    n_heads : int, default=4
        Attention heads per layer; must divide ``hidden_dim``.
    hidden_dim : int, default=32
        Node embedding width.
    lambda1 : float, default=0.5
        Weight of the edge-deleting loss against the matching loss.
    lambda2 : float, default=0.2
        Weight of the inner layers against the last one.
    tau_init : float, default=0.5
        Initial matching temperature, in (0, 1).
    cross_propagation : bool, default=True
        Let the query graph attend over propagated data-graph features.
    edge_deleting : bool, default=True
        Train with the edge-deleting loss. With False it is only logged.
    epochs : int, default=100
        Training epochs; the epoch with the best validation F1 is kept.
    lr : float, default=0.001
        Adam step size.
    patience : int or None, default=None
        Stop after this many epochs without validation improvement.
    random_state : int, default=0
        Seed for initialisation and shuffling.

    Attributes
    ----------
    model_ : TrainedModel
        Selected parameters with their configuration and label vocabulary.
    history_ : list of EpochLog
        One record per epoch.
    best_epoch_ : int
        Epoch whose parameters were kept.

    Examples
    --------
    >>> est = AEDNetMatcher(epochs=5).fit(train_pairs, validation=val_pairs)  # doctest: +SKIP
    >>> est.score(test_pairs)  # doctest: +SKIP
    """

    def __init__(self, n_layers: int = 3, n_heads: int = 4, hidden_dim: int = 32,
                 lambda1: float = 0.5, lambda2: float = 0.2, tau_init: float = 0.5,
                 cross_propagation: bool = True, edge_deleting: bool = True,
                 epochs: int = 100, lr: float = 0.001, patience: Optional[int] = None,
                 random_state: int = 0):
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.hidden_dim = hidden_dim
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.tau_init = tau_init
        self.cross_propagation = cross_propagation
        self.edge_deleting = edge_deleting
        self.epochs = epochs
        self.lr = lr
        self.patience = patience
        self.random_state = random_state

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model_cfg = ModelConfig(n_layers=self.n_layers, n_heads=self.n_heads, hidden_dim=self.hidden_dim,
                                lambda1=self.lambda1, lambda2=self.lambda2, tau_init=self.tau_init)
        train_cfg = TrainConfig(epochs=self.epochs, lr=self.lr, seed=self.random_state,
                                no_cross=not self.cross_propagation, no_delete=not self.edge_deleting,
                                patience=self.patience)
        return model_cfg, train_cfg

    def fit(self, X, y=None, validation=None):
        """Train on pairs with known mappings.

        Parameters
        ----------
        X : sequence of MatchPair
        y : ignored
            Targets travel inside each pair.
        validation : sequence of MatchPair, optional
            Used for checkpoint selection; without it the epoch with the
            lowest training loss is kept.

        Returns
        -------
        self : AEDNetMatcher
        """
        pairs = check_pair_list(X, require_targets=True)
        val = check_pair_list(validation, require_targets=True) if validation is not None else []
        model_cfg, train_cfg = self._configs()
        result = train(pairs, val, model_cfg, train_cfg)
        self.model_ = result.model
        self.history_ = result.log
        self.best_epoch_ = result.best_epoch
        return self

    def predict_proba(self, X) -> list[np.ndarray]:
        """Soft assignment matrices, one ``(|Q|, |G|)`` array per pair with rows summing to 1."""
        check_is_fitted(self, "model_")
        out = []
        for item in check_pair_list(X):
            data, query = _graphs(item)
            if data.feature_kind != self.model_.feature_kind:
                raise ValueError(f"model was trained on {self.model_.feature_kind} features, "
                                 f"got {data.feature_kind}")
            out.append(self.model_.predict_matrix(prepare_graphs(data, query, self.model_.vocabulary)))
        return out

    def predict(self, X) -> list[np.ndarray]:
        """Most likely data node for every query node (not forced to be injective)."""
        return [extract_top1(m) for m in self.predict_proba(X)]

    def score(self, X, y=None) -> float:
        """Mean top-1 F1 over pairs with known mappings."""
        check_is_fitted(self, "model_")
        return evaluate(check_pair_list(X, require_targets=True), self.model_).f1

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        self.model_.save(path, meta={"best_epoch": self.best_epoch_})

    @classmethod
    def from_checkpoint(cls, path) -> "AEDNetMatcher":
        model = TrainedModel.load(path)
        cfg = model.config
        est = cls(n_layers=cfg.n_layers, n_heads=cfg.n_heads, hidden_dim=cfg.hidden_dim,
                  lambda1=cfg.lambda1, lambda2=cfg.lambda2, tau_init=cfg.tau_init,
                  cross_propagation=cfg.cross_propagation)
        est.model_ = model
        est.history_ = []
        est.best_epoch_ = 0
        return est


class ExactMatcher(BaseEstimator):
    """Backtracking enumeration of induced subgraph isomorphisms.

    Parameters
    ----------
    mode : {"all", "first", "exists"}, default="all"
    limit : int or None, default=None
        Stop after this many mappings.
    deadline : float or None, default=None
        Per-pair time budget in seconds.
    induced : bool, default=True
        Require query non-edges to map to data non-edges.

    Notes
    -----
    ``fit`` only validates parameters; there is nothing to learn.
    """

    def __init__(self, mode: str = "all", limit: Optional[int] = None,
                 deadline: Optional[float] = None, induced: bool = True):
        self.mode = mode
        self.limit = limit
        self.deadline = deadline
        self.induced = induced

    def fit(self, X=None, y=None):
        if self.mode not in ("all", "first", "exists"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.limit is not None and self.limit < 1:
            raise ValueError("limit must be positive")
        self.fitted_ = True
        return self

    def _run(self, X):
        if not hasattr(self, "fitted_"):
            self.fit()
        return [enumerate_mappings(*_graphs(item), mode=self.mode, limit=self.limit,
                                   deadline=self.deadline, induced=self.induced)
                for item in check_pair_list(X)]

    def search(self, X) -> list:
        """Full :class:`MatchResult` per pair, with search statistics."""
        return self._run(X)

    def predict(self, X) -> list[list[tuple]]:
        """Mappings per pair (empty in ``exists`` mode)."""
        return [r.mappings for r in self._run(X)]

    def transform(self, X) -> list[np.ndarray]:
        """Matching matrix per pair; all zeros when nothing matches."""
        out = []
        for item, res in zip(check_pair_list(X), self._run(X)):
            data, query = _graphs(item)
            if res.mappings:
                out.append(matching_matrix(res.mappings, query.num_nodes, data.num_nodes))
            else:
                out.append(np.zeros((query.num_nodes, data.num_nodes), dtype=np.int8))
        return out

    def score(self, X, y=None) -> float:
        """Mean top-1 F1 of the first found mapping against each pair's ground truth."""
        pairs = check_pair_list(X, require_targets=True)
        scores = []
        for pair, res in zip(pairs, self._run(pairs)):
            if res.mappings:
                scores.append(f1_score(np.asarray(res.mappings[0]), pair.matrix)[2])
            else:
                scores.append(0.0)
        return float(np.mean(scores))
