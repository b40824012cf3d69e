"""Training loop, evaluation metrics and checkpoint handling."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from grouprep import autodiff as ad
from grouprep.data import Sample
from grouprep.matrixnet import (
    FixedRepBaseline,
    MatrixNetModel,
    MLPBaseline,
    RelationLossConfig,
    _Model,
    default_block_config,
    default_head,
    model_from_config,
    relation_loss,
    relational_error,
)
from grouprep.perm import order_class_set
from grouprep.words import Braid, Family, parse_family

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    family: str = "B3"
    task: str = "regression"
    model: str = "matrixnet"  # matrixnet | mlp | fixed_rep
    variant: str = "NL"
    matrix_dim: int | None = None
    channels: int | None = None
    block_hidden: int | None = None
    block_activation: str | None = None
    head_hidden: tuple[int, ...] | None = None
    head_activation: str | None = None
    mlp_hidden: int = 128
    mlp_activation: str = "relu"
    max_len: int = 0
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-4
    relation_loss: bool = True
    relation_every: int = 10
    relation_weight: float = 1.0
    seed: int = 0
    checkpoint: str | None = None
    history: str | None = None
    eval_every: int = 1
    out_dim: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")
        if self.head_hidden is not None:
            self.head_hidden = tuple(int(h) for h in self.head_hidden)

    @property
    def family_obj(self) -> Family:
        return parse_family(self.family)


@dataclass
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    avg_entry_accuracy: float | None = None
    relational_error: float | None = None
    wall_clock: float = 0.0

    COLUMNS = ("epoch", "split", "loss", "accuracy", "avg_entry_accuracy",
               "relational_error", "wall_clock")


def build_model(cfg: TrainConfig, out_dim: int) -> _Model:
    fam = cfg.family_obj
    if cfg.model == "matrixnet":
        block = default_block_config(fam, cfg.variant)
        if cfg.matrix_dim is not None:
            block.matrix_dim = cfg.matrix_dim
        if cfg.channels is not None:
            block.channels = cfg.channels
        if cfg.block_hidden is not None:
            block.hidden_dim = cfg.block_hidden
        if cfg.block_activation is not None:
            block.activation = cfg.block_activation
        hh, ha = default_head(fam)
        return MatrixNetModel(fam, block, cfg.task, out_dim,
                              cfg.head_hidden or hh, cfg.head_activation or ha, cfg.seed)
    if cfg.model == "mlp":
        if cfg.max_len < 1:
            raise ValueError("the MLP baseline needs max_len")
        return MLPBaseline(fam, cfg.max_len, cfg.task, out_dim, cfg.mlp_hidden,
                           activation=cfg.mlp_activation, seed=cfg.seed)
    if cfg.model == "fixed_rep":
        return FixedRepBaseline(fam, cfg.task, out_dim, cfg.mlp_hidden, cfg.mlp_activation, cfg.seed)
    raise ValueError(f"unknown model {cfg.model!r}")


def output_dim(cfg: TrainConfig) -> int:
    if cfg.out_dim is not None:
        return cfg.out_dim
    fam = cfg.family_obj
    if cfg.task == "classification":
        return len(order_class_set(fam))
    if isinstance(fam, Braid):
        return fam.n
    raise ValueError(f"cannot infer output size for {fam.name}")


# -- metrics -----------------------------------------------------------------------


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Nearest integer; exact halves go away from zero (1.5 -> 2, -1.5 -> -2)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def regression_metrics(pred: np.ndarray, target: np.ndarray) -> tuple[float, float, float]:
    """(MSE, exact-vector accuracy, mean per-entry rounded accuracy)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.size == 0:
        return 0.0, 1.0, 1.0
    hits = round_half_away(pred) == target
    return float(((pred - target) ** 2).mean()), float(hits.all(axis=1).mean()), float(hits.mean())


def classification_metrics(logits: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(mean cross-entropy, argmax accuracy)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.size == 0:
        return 0.0, 1.0
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean()), float((z.argmax(axis=1) == y).mean())


def labels_array(samples: Sequence[Sample], task: str) -> np.ndarray:
    if task == "classification":
        return np.array([s.label for s in samples], dtype=np.int64)
    return np.array([s.label for s in samples], dtype=np.float64).reshape(len(samples), -1)


def predict(model: _Model, samples: Sequence[Sample], chunk: int = 2048) -> np.ndarray:
    words = [s.word for s in samples]
    if not words:
        return np.zeros((0, model.out_dim))
    outs = [model.forward_words(words[k : k + chunk]) for k in range(0, len(words), chunk)]
    return np.concatenate(outs, axis=0)


def evaluate(model: _Model, samples: Sequence[Sample], split: str = "test", epoch: int = 0) -> MetricsRecord:
    t0 = time.perf_counter()
    if samples and samples[0].task != model.task:
        raise ValueError(f"dataset task {samples[0].task} does not match model task {model.task}")
    pred = predict(model, samples)
    y = labels_array(samples, model.task)
    rel = None
    if isinstance(model, MatrixNetModel) and isinstance(model.family, Braid) and model.family.n >= 3:
        rel = relational_error(model)
    if model.task == "classification":
        loss, acc = classification_metrics(pred, y)
        return MetricsRecord(epoch, split, loss, acc, None, rel, time.perf_counter() - t0)
    loss, acc, avg = regression_metrics(pred, y)
    return MetricsRecord(epoch, split, loss, acc, avg, rel, time.perf_counter() - t0)


def write_history(history: Sequence[MetricsRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MetricsRecord.COLUMNS)
        for r in history:
            w.writerow(["" if getattr(r, c) is None else getattr(r, c) for c in MetricsRecord.COLUMNS])


def read_history(path: str | Path) -> list[MetricsRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            def opt(k):
                return None if row[k] == "" else float(row[k])
            out.append(MetricsRecord(int(row["epoch"]), row["split"], float(row["loss"]),
                                     float(row["accuracy"]), opt("avg_entry_accuracy"),
                                     opt("relational_error"), float(row["wall_clock"])))
    return out


# -- checkpoints ------------------------------------------------------------------


def save_model(model: _Model, path: str | Path, extra: dict | None = None) -> None:
    meta = {"model": model.config()}
    if extra:
        meta.update(extra)
    ad.save_checkpoint(path, model.params, meta)


def load_model(path: str | Path) -> _Model:
    values, meta = ad.load_checkpoint(path)
    model = model_from_config(meta["model"])
    model.load_values(values)
    return model


# -- training -----------------------------------------------------------------------


@dataclass
class TrainResult:
    model: _Model
    history: list[MetricsRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")


def _batch_loss(model: _Model, enc: np.ndarray, y: np.ndarray, rel_cfg: RelationLossConfig | None):
    if isinstance(model, MatrixNetModel):
        mats = model.symbol_matrices()
        out = model.head(model.represent_encoded(enc, mats))
    else:
        mats = None
        out = model.forward_encoded(enc)
    if model.task == "classification":
        loss = ad.softmax_cross_entropy(out, y)
    else:
        loss = ad.mse(out, y)
    if rel_cfg is not None:
        loss = ad.add(loss, ad.scale(relation_loss(model, rel_cfg, mats), rel_cfg.weight))
    return loss


def _param_norms(model: _Model) -> dict[str, float]:
    return {k: float(np.linalg.norm(p.value)) for k, p in model.params.items()}


def train(cfg: TrainConfig, train_set: Sequence[Sample], val_set: Sequence[Sample] = (),
          model: _Model | None = None) -> TrainResult:
    """Mini-batch Adam; keeps the parameters with the lowest validation loss."""
    if not train_set:
        raise ValueError("empty training set")
    if train_set[0].task != cfg.task:
        raise ValueError(f"config task {cfg.task} does not match dataset task {train_set[0].task}")
    model = model or build_model(cfg, output_dim(cfg))
    rng = np.random.default_rng(cfg.seed)
    enc = model.encode([s.word for s in train_set])
    y = labels_array(train_set, cfg.task)
    opt = ad.AdamState(model.params, lr=cfg.lr)
    rel_cfg = None
    if cfg.relation_loss and isinstance(model, MatrixNetModel):
        rel_cfg = RelationLossConfig.for_family(model.family, apply_every=cfg.relation_every,
                                                weight=cfg.relation_weight)
        if not rel_cfg.relations:
            rel_cfg = None
    result = TrainResult(model)
    best: dict[str, np.ndarray] | None = None
    n = len(train_set)
    batch_no = 0
    t_start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_no += 1
            use_rel = rel_cfg if (rel_cfg and batch_no % rel_cfg.apply_every == 0) else None
            try:
                with ad.Tape() as tape:
                    loss = _batch_loss(model, enc[idx], y[idx], use_rel)
                    tape.backward(loss)
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(
                    f"epoch {epoch} batch {batch_no}: {exc}; parameter norms {_param_norms(model)}"
                ) from None
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise TrainingDiverged(
                    f"epoch {epoch} batch {batch_no}: loss {lv}; parameter norms {_param_norms(model)}"
                )
            total += lv * len(idx)
            seen += len(idx)
            ad.adam_step(model.params, {k: p.grad for k, p in model.params.items()}, opt)
            for p in model.params.values():
                p.zero_grad()
        if epoch % cfg.eval_every and epoch != cfg.epochs:
            continue
        elapsed = time.perf_counter() - t_start
        tr = evaluate(model, train_set, "train", epoch)
        tr.wall_clock = elapsed
        result.history.append(tr)
        score = tr.loss
        if val_set:
            va = evaluate(model, val_set, "val", epoch)
            va.wall_clock = elapsed
            result.history.append(va)
            score = va.loss
        log.info("epoch %d batch-loss %.5g train %.5g acc %.4f%s", epoch, total / seen, tr.loss,
                 tr.accuracy if tr.avg_entry_accuracy is None else tr.avg_entry_accuracy,
                 f" val {score:.5g}" if val_set else "")
        if score < result.best_val_loss:
            result.best_val_loss = score
            result.best_epoch = epoch
            best = {k: p.value.copy() for k, p in model.params.items()}
    if best is not None:
        model.load_values(best)
    if cfg.checkpoint:
        save_model(model, cfg.checkpoint, {"train_config": _jsonable(asdict(cfg)),
                                           "best_epoch": result.best_epoch})
    if cfg.history:
        write_history(result.history, cfg.history)
    return result


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def config_from_dict(d: dict) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**d)
