"""Training loop, evaluation, runtime benchmark and ablation protocol."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exact import enumerate_mappings
from .graph import MatchPair, label_vocabulary
from .model import (
    ModelConfig,
    PairInputs,
    delete_mass,
    extract_top1,
    init_params,
    loss_total,
    model_forward,
    prepare_pair,
)
from .numerics import NonFiniteError, ParamStore, adam_step, load_checkpoint, no_grad, save_checkpoint

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------

@dataclass
class TrainedModel:
    """Parameters plus everything needed to run them on new pairs."""

    params: ParamStore
    config: ModelConfig
    vocabulary: Optional[dict]
    feature_kind: str

    def header(self) -> dict:
        vocab = None if self.vocabulary is None else sorted(self.vocabulary.items())
        return {"model": self.config.to_dict(), "vocabulary": vocab, "feature_kind": self.feature_kind}

    def save(self, path, meta: Optional[dict] = None) -> None:
        save_checkpoint(path, self.params, self.header(), meta)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        store, header, _ = load_checkpoint(path)
        vocab = header.get("vocabulary")
        vocab = None if vocab is None else {int(k): int(v) for k, v in vocab}
        return cls(store, ModelConfig.from_dict(header["model"]), vocab, header["feature_kind"])

    def predict_matrix(self, inputs: PairInputs) -> np.ndarray:
        with no_grad():
            m_hat, _ = model_forward(inputs, self.params, self.config)
        return m_hat.data


def input_dim_for(pairs: Sequence[MatchPair], vocabulary: Optional[dict]) -> int:
    kind = pairs[0].data_graph.feature_kind
    if kind == "categorical":
        return len(vocabulary)
    if kind == "numerical":
        return pairs[0].data_graph.node_features.shape[1]
    return 1


def check_pairs(pairs: Sequence[MatchPair], name: str = "pairs") -> None:
    if not pairs:
        raise ValueError(f"{name} is empty")
    kinds = {p.data_graph.feature_kind for p in pairs}
    if len(kinds) != 1:
        raise ValueError(f"{name} mixes feature kinds {sorted(kinds)}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def f1_score(prediction: Sequence[int], matrix: np.ndarray) -> tuple[float, float, float]:
    """Precision, recall and F1 of top-1 node predictions against a matching matrix.

    Each query row contributes one predicted pair and one required match,
    so precision and recall share the denominator ``|Q|``.
    """
    matrix = np.asarray(matrix)
    prediction = np.asarray(prediction, dtype=np.int64)
    if prediction.shape != (matrix.shape[0],):
        raise ValueError(f"expected {matrix.shape[0]} predictions, got {prediction.shape}")
    correct = int(matrix[np.arange(matrix.shape[0]), prediction].sum())
    n = matrix.shape[0]
    p = r = correct / n
    # harmonic mean on integer counts, so it rounds exactly like p and r
    f1 = 0.0 if correct == 0 else (2 * correct * correct) / (n * correct + n * correct)
    return p, r, f1


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.001
    seed: int = 0
    checkpoint_dir: Optional[str] = None
    no_cross: bool = False
    no_delete: bool = False
    patience: Optional[int] = None
    include_truncated: bool = False
    train_noise_std: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_l_de: float
    val_f1: float
    wall_time: float

    def key(self) -> tuple:
        """Everything except the wall time (which is not reproducible)."""
        return (self.epoch, self.train_loss, self.train_l_de, self.val_f1)


@dataclass
class TrainResult:
    model: TrainedModel
    best_epoch: int
    best_val_f1: float
    log: list[EpochLog] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    steps: int = 0

    @property
    def best_checkpoint(self) -> Optional[str]:
        if not self.checkpoints:
            return None
        return self.checkpoints[self.best_epoch - 1]


def effective_model_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> ModelConfig:
    if train_cfg.no_cross:
        model_cfg = replace(model_cfg, cross_propagation=False)
    return model_cfg


def train(pairs_train: Sequence[MatchPair], pairs_val: Sequence[MatchPair], model_cfg: ModelConfig,
          train_cfg: TrainConfig, vocabulary: Optional[dict] = None, log_path=None,
          callback=None) -> TrainResult:
    """Per-pair Adam training; keeps the parameters with the best validation F1.

    ``model_cfg.input_dim`` is overwritten from the data. With
    ``train_cfg.no_delete`` the edge-deleting loss is still computed and
    logged but carries zero weight.
    """
    check_pairs(pairs_train, "pairs_train")
    if not train_cfg.include_truncated:
        kept = [p for p in pairs_train if not p.truncated]
        if len(kept) < len(pairs_train):
            logger.warning("excluding %d truncated training pairs", len(pairs_train) - len(kept))
        pairs_train = kept
        check_pairs(pairs_train, "untruncated pairs_train")
    kind = pairs_train[0].data_graph.feature_kind
    if kind == "categorical" and vocabulary is None:
        vocabulary = label_vocabulary([g for p in list(pairs_train) + list(pairs_val)
                                       for g in (p.data_graph, p.query_graph)])
    cfg = replace(effective_model_config(model_cfg, train_cfg),
                  input_dim=input_dim_for(pairs_train, vocabulary))
    lam1 = 0.0 if train_cfg.no_delete else cfg.lambda1

    seeds = np.random.SeedSequence(train_cfg.seed).spawn(3)
    init_seed = int(seeds[0].generate_state(1)[0])
    params = init_params(cfg, init_seed)
    shuffle_rng = np.random.default_rng(seeds[1])
    noise_seed = seeds[2]

    train_inputs = [prepare_pair(p, vocabulary) for p in pairs_train]
    val_inputs = [prepare_pair(p, vocabulary, with_targets=False) for p in pairs_val]
    val_mats = [p.matrix for p in pairs_val]

    model = TrainedModel(params, cfg, vocabulary, kind)
    best = (-1.0, 0, params.copy())
    result = TrainResult(model=model, best_epoch=0, best_val_f1=-1.0)
    ckpt_dir = Path(train_cfg.checkpoint_dir) if train_cfg.checkpoint_dir else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_fh = open(log_path, "w") if log_path is not None else None
    stale = 0
    try:
        for epoch in range(1, train_cfg.epochs + 1):
            start = time.perf_counter()
            order = shuffle_rng.permutation(len(train_inputs))
            losses, l_des = [], []
            for idx in order:
                inputs = train_inputs[idx]
                if train_cfg.train_noise_std > 0:
                    rng = np.random.default_rng([int(noise_seed.generate_state(1)[0]), epoch, int(idx)])
                    inputs = prepare_pair(pairs_train[idx], vocabulary, noise_std=train_cfg.train_noise_std,
                                          rng=rng)
                params.zero_grad()
                try:
                    _, trace = model_forward(inputs, params, cfg)
                    losses_t = loss_total(trace, inputs, cfg, lambda1=lam1)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"epoch {epoch}, training pair {idx}: {exc}") from None
                losses_t.total.backward()
                adam_step(params, lr=train_cfg.lr)
                result.steps += 1
                losses.append(losses_t.total.item())
                l_des.append(float(np.mean([v.item() for v in losses_t.l_de.values()])))
            val_f1 = mean_f1(model, val_inputs, val_mats) if val_inputs else float("nan")
            entry = EpochLog(epoch, float(np.mean(losses)), float(np.mean(l_des)), val_f1,
                             time.perf_counter() - start)
            result.log.append(entry)
            if log_fh is not None:
                log_fh.write(json.dumps(asdict(entry)) + "\n")
                log_fh.flush()
            if ckpt_dir is not None:
                path = ckpt_dir / f"epoch_{epoch:04d}.json"
                model.save(path, meta={"epoch": epoch, "val_f1": val_f1, "train_loss": entry.train_loss})
                result.checkpoints.append(str(path))
            score = val_f1 if val_inputs else -entry.train_loss
            if score > best[0]:
                best = (score, epoch, params.copy())
                stale = 0
            else:
                stale += 1
            logger.info("epoch %d loss %.5f l_de %.5f val_f1 %.4f", epoch, entry.train_loss,
                        entry.train_l_de, val_f1)
            if callback is not None:
                callback(entry)
            if train_cfg.patience is not None and stale >= train_cfg.patience:
                break
    finally:
        if log_fh is not None:
            log_fh.close()
    result.best_epoch = best[1]
    result.best_val_f1 = best[0] if val_inputs else float("nan")
    result.model = TrainedModel(best[2], cfg, vocabulary, kind)
    return result


def mean_f1(model: TrainedModel, inputs: Sequence[PairInputs], matrices) -> float:
    scores = []
    for inp, mat in zip(inputs, matrices):
        pred = extract_top1(model.predict_matrix(inp))
        scores.append(f1_score(pred, mat)[2])
    return float(np.mean(scores))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class PairScore:
    index: int
    n_query: int
    n_data: int
    ratio: float
    precision: float
    recall: float
    f1: float
    seconds: float


@dataclass
class EvalReport:
    rows: list[PairScore]
    noise_std: float = 0.0
    buckets: Optional[dict] = None

    @property
    def precision(self) -> float:
        return float(np.mean([r.precision for r in self.rows]))

    @property
    def recall(self) -> float:
        return float(np.mean([r.recall for r in self.rows]))

    @property
    def f1(self) -> float:
        return float(np.mean([r.f1 for r in self.rows]))

    def summary(self) -> dict:
        out = {"pairs": len(self.rows), "precision": self.precision, "recall": self.recall,
               "f1": self.f1, "noise_std": self.noise_std,
               "mean_seconds": float(np.mean([r.seconds for r in self.rows]))}
        if self.buckets is not None:
            out["buckets"] = self.buckets
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "n_query", "n_data", "ratio", "precision", "recall", "f1", "seconds"])
        for r in self.rows:
            w.writerow([r.index, r.n_query, r.n_data, f"{r.ratio:.4f}", f"{r.precision:.6f}",
                        f"{r.recall:.6f}", f"{r.f1:.6f}", f"{r.seconds:.6f}"])
        w.writerow(["mean", "", "", "", f"{self.precision:.6f}", f"{self.recall:.6f}",
                    f"{self.f1:.6f}", ""])
        return buf.getvalue()


def ratio_buckets(rows: Sequence[PairScore], width: float = 0.1) -> dict:
    """Group pairs by ``|Q| / |G|`` into half-open buckets of the given width."""
    groups: dict[int, list[float]] = {}
    for r in rows:
        k = int(np.floor(r.ratio / width + 1e-9))
        groups.setdefault(k, []).append(r.f1)
    return {f"[{k * width:.1f},{(k + 1) * width:.1f})": {"count": len(v), "f1": float(np.mean(v))}
            for k, v in sorted(groups.items())}


def evaluate(pairs: Sequence[MatchPair], model, noise_std: float = 0.0, by_ratio: bool = False,
             seed: int = 0, n_jobs: int = 1) -> EvalReport:
    """Score a trained model on pairs with top-1 extraction.

    ``model`` is a ``TrainedModel`` or a checkpoint path. Gaussian noise of
    standard deviation ``noise_std`` is added to the encoded features of
    both graphs (numerical features only).
    """
    if not isinstance(model, TrainedModel):
        model = TrainedModel.load(model)
    check_pairs(pairs)
    kind = pairs[0].data_graph.feature_kind
    if kind != model.feature_kind:
        raise ValueError(f"model was trained on {model.feature_kind} features, pairs have {kind}")
    if input_dim_for(pairs, model.vocabulary) != model.config.input_dim:
        raise ValueError("pair feature dimension does not match the model")
    if noise_std > 0 and kind != "numerical":
        raise ValueError("feature noise only applies to numerical features")

    def score(idx: int) -> PairScore:
        pair = pairs[idx]
        rng = np.random.default_rng([seed, idx])
        inp = prepare_pair(pair, model.vocabulary, with_targets=False, noise_std=noise_std, rng=rng)
        start = time.perf_counter()
        pred = extract_top1(model.predict_matrix(inp))
        elapsed = time.perf_counter() - start
        p, r, f = f1_score(pred, pair.matrix)
        nq, ng = pair.query_graph.num_nodes, pair.data_graph.num_nodes
        return PairScore(idx, nq, ng, nq / ng, p, r, f, elapsed)

    if n_jobs == 1:
        rows = [score(i) for i in range(len(pairs))]
    else:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(score)(i) for i in range(len(pairs)))
    return EvalReport(rows, noise_std, ratio_buckets(rows) if by_ratio else None)


# ---------------------------------------------------------------------------
# runtime benchmark
# ---------------------------------------------------------------------------

MATCHERS = ("exact-all", "exact-first", "model")


@dataclass
class BenchRow:
    index: int
    n_data: int
    n_edges: int
    n_query: int
    matcher: str
    seconds: float
    states: Optional[int] = None
    mappings: Optional[int] = None
    complete: Optional[bool] = None


def bench_runtime(pairs: Sequence[MatchPair], model: Optional[TrainedModel] = None,
                  matchers: Sequence[str] = MATCHERS, deadline: Optional[float] = None,
                  repeats: int = 1) -> list[BenchRow]:
    """Wall time per pair for each matcher (best of ``repeats`` runs)."""
    rows = []
    for idx, pair in enumerate(pairs):
        g, q = pair.data_graph, pair.query_graph
        for name in matchers:
            best, extra = float("inf"), {}
            for _ in range(repeats):
                if name == "model":
                    if model is None:
                        raise ValueError("the model matcher needs a trained model")
                    inp = prepare_pair(pair, model.vocabulary, with_targets=False)
                    start = time.perf_counter()
                    extract_top1(model.predict_matrix(inp))
                    elapsed = time.perf_counter() - start
                else:
                    res = enumerate_mappings(g, q, mode=name.split("-")[1], deadline=deadline)
                    elapsed = res.stats.wall_time
                    extra = {"states": res.stats.states, "mappings": len(res.mappings),
                             "complete": not res.stats.timed_out}
                best = min(best, elapsed)
            rows.append(BenchRow(idx, g.num_nodes, g.num_edges, q.num_nodes, name, best, **extra))
    return rows


def bench_summary(rows: Sequence[BenchRow], key: str = "n_data") -> list[dict]:
    """Mean and median seconds per (size, matcher)."""
    groups: dict[tuple, list[BenchRow]] = {}
    for r in rows:
        groups.setdefault((getattr(r, key), r.matcher), []).append(r)
    out = []
    for (size, name), rs in sorted(groups.items()):
        secs = [r.seconds for r in rs]
        out.append({key: size, "matcher": name, "pairs": len(rs), "mean": float(np.mean(secs)),
                    "median": float(statistics.median(secs)),
                    "edges": float(np.mean([r.n_edges for r in rs])),
                    "complete": all(r.complete is not False for r in rs)})
    return out


def format_table(records: Sequence[dict]) -> str:
    if not records:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

ABLATIONS = (("full", {}), ("w/o C", {"no_cross": True}), ("w/o D", {"no_delete": True}))


@dataclass
class AblationRow:
    variant: str
    test_f1: float
    train_f1: float
    best_val_f1: float
    best_epoch: int
    final_l_de: float
    result: TrainResult = field(repr=False)


def run_ablation(pairs_train, pairs_val, pairs_test, model_cfg: ModelConfig, train_cfg: TrainConfig,
                 variants=ABLATIONS, checkpoint_root=None) -> list[AblationRow]:
    """Train the full model and both ablations with identical seeds and score them on the same test pairs."""
    rows = []
    for name, flags in variants:
        tc = replace(train_cfg, **flags)
        if checkpoint_root is not None:
            tc = replace(tc, checkpoint_dir=os.path.join(checkpoint_root, name.replace("/", "").replace(" ", "_")))
        res = train(pairs_train, pairs_val, model_cfg, tc)
        rows.append(AblationRow(
            variant=name,
            test_f1=evaluate(pairs_test, res.model).f1,
            train_f1=evaluate(pairs_train, res.model).f1,
            best_val_f1=res.best_val_f1,
            best_epoch=res.best_epoch,
            final_l_de=res.log[-1].train_l_de,
            result=res,
        ))
    return rows
