"""Whole-model gradient checking against finite differences.

The analytic path under test is the float64 encoder/head backward. The
oracle is a central difference (f(t+eps) - f(t-eps)) / (2 eps) per
learnable coordinate. Coordinates whose true derivative is at or below
double-precision differencing noise (notably the scorer output biases,
which are mathematically dead through the softmax) are re-evaluated
with an independent extended-precision forward pass written directly in
mpmath, so the oracle stays accurate instead of reporting its own
rounding noise.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from mpmath import mp, mpf

from .data import LabelSet, PAIR_TASK, SENTENCE_TASK
from .documents import Document
from .encoder import Variant
from .errors import ConfigError
from .scorer import relative_error
from .training import ModelParams, TrainConfig, document_loss, init_params, labeled_items

MP_DPS = 40
# float64 FD results above this fraction of the tolerance get the
# extended-precision recheck
RECHECK_FRACTION = 0.1


def _mp_scorer(scorer, x) -> mpf:
    w1, b1, w2, b2 = scorer
    s = b2
    for wi, bi, vi in zip(w1, b1, w2):
        z = bi
        for wij, xj in zip(wi, x):
            z += wij * xj
        s += vi * mp.tanh(z)
    return s


def _mp_softmax(scores):
    top = max(scores)
    exps = [mp.exp(s - top) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def _mp_vecsum(weights, vectors, dim):
    out = [mpf(0)] * dim
    for w, v in zip(weights, vectors):
        for j in range(dim):
            out[j] += w * v[j]
    return out


def _to_mp(a: np.ndarray):
    if a.ndim == 0:
        return mpf(float(a))
    if a.ndim == 1:
        return [mpf(float(v)) for v in a]
    return [[mpf(float(v)) for v in row] for row in a]


def mp_model_loss(
    doc: Document, model: ModelParams, variant: Variant, labels: LabelSet
) -> mpf:
    """Mean cross-entropy of a document, evaluated entirely in mpmath.

    Independent of the numpy forward: plain Python loops over mpf
    scalars, mirroring the documented semantics of encode and the head.
    Returns the full-precision mpf; rounding it to float64 would put
    back exactly the differencing noise this oracle exists to avoid.
    """
    with mp.workdps(MP_DPS):
        dim = doc.dim
        sents = [[_to_mp(tok) for tok in s] for s in doc.sentences]
        all_toks = [t for s in sents for t in s]
        local_scorer = tuple(_to_mp(t) for _, t in model.encoder.local_scorer.tensors())
        global_scorer = tuple(_to_mp(t) for _, t in model.encoder.global_scorer.tensors())

        if variant.has_local_attention:
            local = []
            for s in sents:
                weights = _mp_softmax([_mp_scorer(local_scorer, t) for t in s])
                local.append(_mp_vecsum(weights, s, dim))
        else:
            local = [
                [sum(t[j] for t in s) / len(s) for j in range(dim)] for s in sents
            ]

        mixed = []
        for k in range(len(sents)):
            if variant.has_global_shift:
                diffs = [[t[j] - local[k][j] for j in range(dim)] for t in all_toks]
                weights = _mp_softmax([_mp_scorer(global_scorer, u) for u in diffs])
                shift = _mp_vecsum(weights, all_toks, dim)
            else:
                shift = [mpf(0)] * dim
            mixed.append([local[k][j] + shift[j] for j in range(dim)])

        head_w = [_to_mp(w) for w in model.head.weights]
        head_b = [_to_mp(b) for b in model.head.biases]

        def head_logits(x):
            h = x
            last = len(head_w) - 1
            for li, (w, b) in enumerate(zip(head_w, head_b)):
                h = [sum(wi[j] * h[j] for j in range(len(h))) + bi for wi, bi in zip(w, b)]
                if li < last:
                    h = [mp.tanh(v) for v in h]
            return h

        total = mpf(0)
        items = labeled_items(doc, labels)
        for item in items:
            if labels.task == SENTENCE_TASK:
                x = mixed[item[0]]
            else:
                x = mixed[item[0]] + mixed[item[1]]
            logits = head_logits(x)
            top = max(logits)
            log_z = top + mp.log(sum(mp.exp(v - top) for v in logits))
            total += log_z - logits[item[-1]]
        return total / len(items)


@dataclass
class CheckReport:
    trials: int
    max_rel_err: float
    worst_coord: str
    failures: int
    recheck_count: int
    elapsed_s: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


def check_instance(
    doc: Document,
    model: ModelParams,
    variant: Variant,
    labels: LabelSet,
    eps: float,
    tol: float,
    grad_scale: float = 1.0,
) -> tuple[float, str, int]:
    """Max relative error over all learnable coordinates of one instance.

    Returns (max_rel_err, worst coordinate, extended-precision recheck
    count). grad_scale multiplies the analytic gradients; it exists so
    the checker itself can be shown to catch wrong gradients.
    """
    out = document_loss(doc, model, variant, labels)
    if out is None:
        raise ConfigError("gradcheck instance has no labeled items")
    _, enc_grad, head_grad = out
    analytic: list[tuple[str, np.ndarray]] = []
    if variant.has_local_attention:
        analytic += [(f"local.{n}", t) for n, t in enc_grad.local_scorer.tensors()]
    if variant.has_global_shift:
        analytic += [(f"global.{n}", t) for n, t in enc_grad.global_scorer.tensors()]
    analytic += [(f"head.{n}", t) for n, t in head_grad.tensors()]

    def f64_loss() -> float:
        return document_loss(doc, model, variant, labels)[0]

    worst = 0.0
    worst_name = ""
    rechecks = 0
    learnable = model.learnable_tensors(variant)
    for (name, tensor), (_, grad) in zip(learnable, analytic):
        flat_t = tensor.reshape(-1)
        flat_g = grad.reshape(-1)
        for i in range(flat_t.size):
            a = grad_scale * flat_g[i]
            orig = flat_t[i]
            flat_t[i] = orig + eps
            f_plus = f64_loss()
            flat_t[i] = orig - eps
            f_minus = f64_loss()
            flat_t[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = relative_error(a, numeric)
            if err > tol * RECHECK_FRACTION:
                # double precision cannot resolve derivatives this small;
                # redo the two evaluations with the mpmath forward
                rechecks += 1
                flat_t[i] = orig + eps
                mp_plus = mp_model_loss(doc, model, variant, labels)
                flat_t[i] = orig - eps
                mp_minus = mp_model_loss(doc, model, variant, labels)
                flat_t[i] = orig
                with mp.workdps(MP_DPS):
                    numeric = float((mp_plus - mp_minus) / (2.0 * eps))
                err = relative_error(a, numeric)
            if err > worst:
                worst = err
                worst_name = f"{name}[{i}]"
    return worst, worst_name, rechecks


def random_instance(
    rng: np.random.Generator, variant: Variant, task: str
) -> tuple[Document, ModelParams, LabelSet]:
    """A small random document, params and labels for one check."""
    n = int(rng.integers(1, 4))
    dim = int(rng.integers(2, 9))
    hidden = int(rng.integers(1, 5))
    classes = int(rng.integers(2, 5))
    sentences = [
        rng.uniform(-1.0, 1.0, size=(int(rng.integers(1, 5)), dim)) for _ in range(n)
    ]
    doc = Document(doc_id="gradcheck", sentences=sentences)
    cfg = TrainConfig(task=task, hidden_size=hidden, variant=variant)
    model = init_params(dim, classes, cfg, rng)
    for _, t in model.all_tensors():
        t[...] = rng.uniform(-1.0, 1.0, size=t.shape)
    if task == SENTENCE_TASK:
        entries = [int(rng.integers(0, classes)) for _ in range(n)]
    else:
        pairs = [(k, k + 1) for k in range(n - 1)] if n > 1 else [(0, 0)]
        entries = [(i, j, int(rng.integers(0, classes))) for i, j in pairs]
    labels = LabelSet(task=task, num_classes=classes, by_doc={"gradcheck": entries})
    return doc, model, labels


def run_gradcheck(
    trials: int,
    eps: float = 1e-6,
    tol: float = 1e-5,
    seed: int = 0,
    grad_scale: float = 1.0,
) -> CheckReport:
    """Random instances cycling all four variants and both heads."""
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    combos = [(v, t) for v in Variant for t in (SENTENCE_TASK, PAIR_TASK)]
    started = time.perf_counter()
    worst = 0.0
    worst_name = ""
    failures = 0
    rechecks = 0
    for trial in range(trials):
        variant, task = combos[trial % len(combos)]
        doc, model, labels = random_instance(rng, variant, task)
        err, name, rc = check_instance(doc, model, variant, labels, eps, tol, grad_scale)
        rechecks += rc
        if err > worst:
            worst = err
            worst_name = f"trial {trial} ({variant.value}/{task}) {name}"
        if err > tol:
            failures += 1
    return CheckReport(
        trials=trials,
        max_rel_err=worst,
        worst_coord=worst_name,
        failures=failures,
        recheck_count=rechecks,
        elapsed_s=time.perf_counter() - started,
    )
