"""Deterministic training loop: Adam, dropout, run logging, overfit gap.

Randomness (initialization, per-epoch shuffling, dropout masks) comes
from named Philox streams spawned from the config seed, so a (config,
seed, data) triple fully determines every draw and two identical runs
produce bit-identical RunLogs. The optimizer steps once per training
document (gradient accumulation optional); dropout is applied to the
mixed embeddings only, just before the head, in training mode only.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .data import Corpus, LabelSet, PAIR_TASK, SENTENCE_TASK
from .documents import Document
from .encoder import EncoderGrad, EncoderParams, Variant, encode, encode_backward
from .errors import ConfigError, DimensionMismatch, TrainingDiverged
from .heads import HeadGrad, HeadParams, cross_entropy, head_backward, head_forward, predict
from .metrics import confusion, macro_prf, micro_f1
from .scorer import ScorerParams

RNG_NAME = "philox"

DEFAULT_LR = {SENTENCE_TASK: 5e-5, PAIR_TASK: 5e-4}


@dataclass
class TrainConfig:
    task: str = SENTENCE_TASK
    variant: Variant = Variant.FULL
    learning_rate: float | None = None  # per-task default when None
    epochs: int = 100
    dropout_rate: float = 0.5
    seed: int = 0
    hidden_size: int = 256
    head_hidden: tuple[int, ...] = ()
    grad_accum: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    @property
    def resolved_lr(self) -> float:
        return DEFAULT_LR[self.task] if self.learning_rate is None else self.learning_rate

    def validate(self) -> None:
        if self.task not in DEFAULT_LR:
            raise ConfigError(f"unknown task {self.task!r}")
        # lr 0 is allowed: a zero-step run must reproduce its initialization
        if self.resolved_lr < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.resolved_lr}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.hidden_size < 1:
            raise ConfigError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.grad_accum < 1:
            raise ConfigError(f"grad_accum must be >= 1, got {self.grad_accum}")

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "variant": self.variant.value,
            "learning_rate": self.resolved_lr,
            "epochs": self.epochs,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
            "hidden_size": self.hidden_size,
            "head_hidden": list(self.head_hidden),
            "grad_accum": self.grad_accum,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
        }


@dataclass
class ModelParams:
    """Everything learnable: the two scorers plus the task head."""

    encoder: EncoderParams
    head: HeadParams

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def all_tensors(self) -> list[tuple[str, np.ndarray]]:
        out = [(f"local.{n}", t) for n, t in self.encoder.local_scorer.tensors()]
        out += [(f"global.{n}", t) for n, t in self.encoder.global_scorer.tensors()]
        out += [(f"head.{n}", t) for n, t in self.head.tensors()]
        return out

    def learnable_tensors(self, variant: Variant) -> list[tuple[str, np.ndarray]]:
        """Tensors actually trained under a variant; pooled stages drop out."""
        out = []
        if variant.has_local_attention:
            out += [(f"local.{n}", t) for n, t in self.encoder.local_scorer.tensors()]
        if variant.has_global_shift:
            out += [(f"global.{n}", t) for n, t in self.encoder.global_scorer.tensors()]
        out += [(f"head.{n}", t) for n, t in self.head.tensors()]
        return out


def count_parameters(model: ModelParams, variant: Variant) -> int:
    return sum(t.size for _, t in model.learnable_tensors(variant))


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def _init_scorer(rng: np.random.Generator, dim: int, hidden: int) -> ScorerParams:
    return ScorerParams(
        w1=_glorot(rng, (hidden, dim), dim, hidden),
        b1=np.zeros(hidden),
        w2=_glorot(rng, (hidden,), hidden, 1),
        b2=np.zeros(()),
    )


def init_params(
    dim: int, num_classes: int, cfg: TrainConfig, rng: np.random.Generator
) -> ModelParams:
    """Uniform [-a, a] weights with a = sqrt(6 / (fan_in + fan_out)), zero biases.

    Both scorers and the head are always drawn, in a fixed order, so the
    initial state for a given seed is identical across variants.
    """
    local = _init_scorer(rng, dim, cfg.hidden_size)
    globl = _init_scorer(rng, dim, cfg.hidden_size)
    input_dim = dim if cfg.task == SENTENCE_TASK else 2 * dim
    head = HeadParams.zeros(input_dim, num_classes, cfg.head_hidden)
    for w in head.weights:
        w[...] = _glorot(rng, w.shape, w.shape[1], w.shape[0])
    return ModelParams(encoder=EncoderParams(local, globl), head=head)


@dataclass
class AdamState:
    """First/second-moment accumulators mirroring a fixed tensor list."""

    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, tensors: list[np.ndarray]) -> "AdamState":
        return cls(step=0, m=[np.zeros_like(t) for t in tensors], v=[np.zeros_like(t) for t in tensors])


def adam_step(
    tensors: list[np.ndarray], grads: list[np.ndarray], state: AdamState, cfg: TrainConfig
) -> None:
    """One in-place Adam update with bias correction."""
    if len(tensors) != len(grads) or len(tensors) != len(state.m):
        raise DimensionMismatch("adam_step tensor/grad/state counts differ")
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    lr = cfg.resolved_lr
    for t, g, m, v in zip(tensors, grads, state.m, state.v):
        if t.shape != g.shape:
            raise DimensionMismatch(f"adam_step shape mismatch: {t.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)


def dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability rate, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(
    v: np.ndarray, rate: float, rng: np.random.Generator, training: bool
) -> np.ndarray:
    """Apply inverted dropout in training mode; identity otherwise."""
    if not training or rate == 0.0:
        return v
    return v * dropout_mask(v.shape, rate, rng)


def labeled_items(doc: Document, labels: LabelSet) -> list[tuple]:
    """Scored positions of one document: (k, label) or (i, j, label)."""
    entries = labels.by_doc[doc.doc_id]
    if labels.task == SENTENCE_TASK:
        return [(k, lab) for k, lab in enumerate(entries) if lab >= 0]
    return [(i, j, lab) for i, j, lab in entries if lab >= 0]


def _head_input(mixed: np.ndarray, item: tuple, task: str) -> np.ndarray:
    if task == SENTENCE_TASK:
        return mixed[item[0]]
    return np.concatenate([mixed[item[0]], mixed[item[1]]])


def document_loss(
    doc: Document,
    model: ModelParams,
    variant: Variant,
    labels: LabelSet,
    mask: np.ndarray | None = None,
) -> tuple[float, EncoderGrad, HeadGrad] | None:
    """Mean cross-entropy over a document's labeled items, with gradients.

    mask, when given, is the inverted-dropout multiplier applied to the
    mixed embeddings before the head. Returns None when the document has
    no labeled items.
    """
    items = labeled_items(doc, labels)
    if not items:
        return None
    result = encode(doc, model.encoder, variant)
    mixed = result.mixed if mask is None else result.mixed * mask
    head_grad = HeadGrad.zeros_like(model.head)
    d_mixed = np.zeros_like(mixed)
    total = 0.0
    scale = 1.0 / len(items)
    for item in items:
        x = _head_input(mixed, item, labels.task)
        logits, cache = head_forward(model.head, x)
        loss, d_logits = cross_entropy(logits, item[-1])
        total += loss
        d_x = head_backward(model.head, cache, scale * d_logits, head_grad)
        if labels.task == SENTENCE_TASK:
            d_mixed[item[0]] += d_x
        else:
            d = doc.dim
            d_mixed[item[0]] += d_x[:d]
            d_mixed[item[1]] += d_x[d:]
    if mask is not None:
        d_mixed *= mask
    enc_grad = encode_backward(doc, model.encoder, variant, d_mixed)
    return total * scale, enc_grad, head_grad


def evaluate(
    docs: list[Document], labels: LabelSet, model: ModelParams, variant: Variant
) -> dict:
    """Loss and macro/micro metrics over a document list (no dropout)."""
    losses = []
    golds: list[int] = []
    preds: list[int] = []
    for doc in docs:
        items = labeled_items(doc, labels)
        if not items:
            continue
        result = encode(doc, model.encoder, variant)
        doc_loss = 0.0
        for item in items:
            logits, _ = head_forward(model.head, _head_input(result.mixed, item, labels.task))
            loss, _ = cross_entropy(logits, item[-1])
            doc_loss += loss
            golds.append(item[-1])
            preds.append(predict(logits))
        losses.append(doc_loss / len(items))
    if not losses:
        raise ConfigError("no labeled items to evaluate")
    cm = confusion(golds, preds, labels.num_classes)
    p, r, f1 = macro_prf(cm)
    return {
        "loss": float(np.mean(losses)),
        "macro_p": p,
        "macro_r": r,
        "macro_f1": f1,
        "micro_f1": micro_f1(cm),
    }


def _collect_grads(
    enc_grad: EncoderGrad, head_grad: HeadGrad, variant: Variant
) -> list[np.ndarray]:
    # order must mirror ModelParams.learnable_tensors
    out = []
    if variant.has_local_attention:
        out += [t for _, t in enc_grad.local_scorer.tensors()]
    if variant.has_global_shift:
        out += [t for _, t in enc_grad.global_scorer.tensors()]
    out += [t for _, t in head_grad.tensors()]
    return out


@dataclass
class RunLog:
    """Per-epoch training record plus final test metrics; JSON-stable."""

    config: dict
    learnable_parameters: int
    epochs: list[dict] = field(default_factory=list)
    best_val_epoch: int = 0
    test: dict = field(default_factory=dict)
    test_final: dict = field(default_factory=dict)
    schema_version: int = 1
    rng: str = RNG_NAME

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "rng": self.rng,
            "config": self.config,
            "learnable_parameters": self.learnable_parameters,
            "epochs": self.epochs,
            "best_val_epoch": self.best_val_epoch,
            "test": self.test,
            "test_final": self.test_final,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def overfit_gap(log: RunLog) -> list[tuple[int, float]]:
    """Per-epoch (epoch, val_loss - train_loss) series."""
    if not log.epochs:
        raise ConfigError("empty run log")
    return [(rec["epoch"], rec["val_loss"] - rec["train_loss"]) for rec in log.epochs]


@dataclass
class TrainData:
    train: Corpus
    val: Corpus
    test: Corpus
    labels: LabelSet

    def validate(self) -> None:
        for name, corpus in (("train", self.train), ("val", self.val), ("test", self.test)):
            if not corpus.docs:
                raise ConfigError(f"{name} split is empty")
            self.labels.validate_against(corpus)
            if corpus.dim != self.train.dim:
                raise ConfigError(
                    f"{name} split dim {corpus.dim} != train dim {self.train.dim}"
                )


@dataclass
class TrainResult:
    best: ModelParams
    final: ModelParams
    log: RunLog


def train(data: TrainData, cfg: TrainConfig) -> TrainResult:
    """Run the full training protocol and return models plus the RunLog.

    Per epoch: shuffled pass over training documents with one Adam step
    per document (or per grad_accum documents), then a full validation
    pass. The best checkpoint is the lowest validation loss (earliest
    epoch on ties); test metrics are reported for both the best and the
    final parameters.
    """
    cfg.validate()
    data.validate()
    dim = data.train.dim
    init_rng, shuffle_rng, drop_rng = (
        np.random.Generator(np.random.Philox(s))
        for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )
    model = init_params(dim, data.labels.num_classes, cfg, init_rng)
    learnable = model.learnable_tensors(cfg.variant)
    tensors = [t for _, t in learnable]
    state = AdamState.zeros_like(tensors)
    log = RunLog(
        config=cfg.to_dict(),
        learnable_parameters=count_parameters(model, cfg.variant),
    )

    best_val = np.inf
    best_model = model.copy()
    accum: list[np.ndarray] | None = None
    accum_count = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_losses = []
        for di in shuffle_rng.permutation(len(data.train.docs)):
            doc = data.train.docs[di]
            if not labeled_items(doc, data.labels):
                continue
            mask = None
            if cfg.dropout_rate > 0.0:
                mask = dropout_mask((doc.num_sentences, dim), cfg.dropout_rate, drop_rng)
            out = document_loss(doc, model, cfg.variant, data.labels, mask)
            loss, enc_grad, head_grad = out
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite training loss at epoch {epoch}, document {doc.doc_id!r}"
                )
            epoch_losses.append(loss)
            grads = _collect_grads(enc_grad, head_grad, cfg.variant)
            if accum is None:
                accum = [g.copy() for g in grads]
            else:
                for a, g in zip(accum, grads):
                    a += g
            accum_count += 1
            if accum_count == cfg.grad_accum:
                if cfg.grad_accum > 1:
                    for a in accum:
                        a /= accum_count
                adam_step(tensors, accum, state, cfg)
                accum, accum_count = None, 0
        if accum is not None:
            # leftover partial accumulation at epoch end
            for a in accum:
                a /= accum_count
            adam_step(tensors, accum, state, cfg)
            accum, accum_count = None, 0
        if not epoch_losses:
            raise ConfigError("training split has no labeled items")
        val = evaluate(data.val.docs, data.labels, model, cfg.variant)
        log.epochs.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(epoch_losses)),
                "val_loss": val["loss"],
                "val_macro_f1": val["macro_f1"],
                "val_micro_f1": val["micro_f1"],
            }
        )
        if val["loss"] < best_val:
            best_val = val["loss"]
            best_model = model.copy()
            log.best_val_epoch = epoch

    for key, m in (("test", best_model), ("test_final", model)):
        res = evaluate(data.test.docs, data.labels, m, cfg.variant)
        setattr(
            log,
            key,
            {k: res[k] for k in ("macro_p", "macro_r", "macro_f1", "micro_f1")},
        )
    return TrainResult(best=best_model, final=model, log=log)
