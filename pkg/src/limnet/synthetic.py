"""Planted-structure synthetic corpus generator.

Each document draws a hidden topic z. Its first sentence is an
indicator whose tokens sit near the topic centroid; every other
sentence is a content sentence whose tokens sit near a per-sentence
cluster centroid, and whose label is (cluster + topic) mod num_classes.
Indicator sentences carry the unscored label -1.

Because the topic is invisible from a content sentence's own tokens,
any predictor that ignores cross-sentence context is capped at the
enumerable local Bayes bound (0.5 for two topics); a predictor that can
read the indicator sentence can recover the label deterministically.
Cluster and topic centroids are mutually orthogonal unit vectors
derived reproducibly from the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus, LabelSet, SENTENCE_TASK
from .documents import Document
from .errors import ConfigError


@dataclass
class SyntheticConfig:
    dim: int = 16
    docs_per_split: tuple[int, int, int] = (200, 50, 50)
    sentences_per_doc: tuple[int, int] = (4, 8)
    tokens_per_sentence: tuple[int, int] = (3, 6)
    noise_sigma: float = 0.1
    clusters: int = 2
    topics: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.dim < self.clusters + self.topics:
            raise ConfigError(
                f"dim {self.dim} too small to host {self.clusters} cluster + "
                f"{self.topics} topic orthogonal centroids"
            )
        if min(self.clusters, self.topics) < 1:
            raise ConfigError("clusters and topics must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if any(v < 1 for v in self.docs_per_split):
            raise ConfigError(f"docs_per_split entries must be >= 1, got {self.docs_per_split}")
        lo, hi = self.sentences_per_doc
        if lo < 2 or hi < lo:
            raise ConfigError(
                f"sentences_per_doc must be an increasing range with min >= 2 "
                f"(indicator plus content), got {self.sentences_per_doc}"
            )
        lo, hi = self.tokens_per_sentence
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad tokens_per_sentence range {self.tokens_per_sentence}")

    @property
    def num_classes(self) -> int:
        return self.clusters


def centroids(cfg: SyntheticConfig) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal cluster and topic centroids, derived from the seed.

    Returned as (clusters x dim, topics x dim); values are canonicalized
    to float32 precision to match what embedding files carry.
    """
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    rng = np.random.Generator(np.random.Philox(ss.spawn(2)[0]))
    basis = np.linalg.qr(rng.standard_normal((cfg.dim, cfg.clusters + cfg.topics)))[0]
    basis = basis.astype(np.float32).astype(np.float64)
    return basis[:, : cfg.clusters].T.copy(), basis[:, cfg.clusters :].T.copy()


def gen_synthetic(cfg: SyntheticConfig) -> tuple[Corpus, LabelSet]:
    """Generate the full corpus (all splits together) plus its labels."""
    cfg.validate()
    cluster_mu, topic_mu = centroids(cfg)
    ss = np.random.SeedSequence(cfg.seed)
    rng = np.random.Generator(np.random.Philox(ss.spawn(2)[1]))
    s_lo, s_hi = cfg.sentences_per_doc
    t_lo, t_hi = cfg.tokens_per_sentence
    docs = []
    labels = LabelSet(task=SENTENCE_TASK, num_classes=cfg.num_classes)
    for idx in range(sum(cfg.docs_per_split)):
        topic = int(rng.integers(cfg.topics))
        n_sents = int(rng.integers(s_lo, s_hi + 1))
        sentences = []
        doc_labels = []
        for s in range(n_sents):
            n_toks = int(rng.integers(t_lo, t_hi + 1))
            if s == 0:
                center = topic_mu[topic]
                doc_labels.append(-1)
            else:
                cluster = int(rng.integers(cfg.clusters))
                center = cluster_mu[cluster]
                doc_labels.append((cluster + topic) % cfg.num_classes)
            toks = center + cfg.noise_sigma * rng.standard_normal((n_toks, cfg.dim))
            # canonicalize to the file format's precision
            sentences.append(toks.astype(np.float32).astype(np.float64))
        doc_id = f"doc-{idx:04d}"
        docs.append(Document(doc_id=doc_id, sentences=sentences))
        labels.by_doc[doc_id] = doc_labels
    return Corpus(dim=cfg.dim, docs=docs), labels


def split_fractions(cfg: SyntheticConfig) -> tuple[float, float, float]:
    total = sum(cfg.docs_per_split)
    return tuple(c / total for c in cfg.docs_per_split)


def local_bayes_bound(clusters: int, topics: int) -> float:
    """Best possible content-sentence accuracy for a context-free predictor.

    Brute-force enumeration of the label posterior given only a content
    sentence's own cluster: the topic is uniform and independent of the
    tokens, so P(label = y | cluster c) counts the topics mapping to y.
    """
    num_classes = clusters
    best = 0.0
    for c in range(clusters):
        hits = np.zeros(num_classes)
        for z in range(topics):
            hits[(c + z) % num_classes] += 1.0
        best += hits.max() / topics
    return best / clusters


def whole_document_bayes_predict(
    doc: Document, cluster_mu: np.ndarray, topic_mu: np.ndarray, num_classes: int
) -> list[int]:
    """Nearest-centroid oracle that reads the indicator sentence.

    Infers the topic from sentence 0 and each content sentence's cluster
    from its token mean; with zero noise it is exact by construction.
    Returns -1 for the indicator position.
    """
    ind_mean = doc.sentences[0].mean(axis=0)
    topic = int(np.argmin(((topic_mu - ind_mean) ** 2).sum(axis=1)))
    preds = [-1]
    for sent in doc.sentences[1:]:
        mean = sent.mean(axis=0)
        cluster = int(np.argmin(((cluster_mu - mean) ** 2).sum(axis=1)))
        preds.append((cluster + topic) % num_classes)
    return preds
