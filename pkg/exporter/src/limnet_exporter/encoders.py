"""Frozen text encoders.

Two families: a dependency-free hashed random-projection encoder that is
deterministic across machines (useful for tests and plumbing), and a
transformers-backed encoder that runs any local or hub model
inference-only. Neither ever updates a weight.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

SUBWORD_PASSTHROUGH = "subword-passthrough"
WORD_MEAN = "word-mean"
POOLING_MODES = (SUBWORD_PASSTHROUGH, WORD_MEAN)

_HASH_ID = re.compile(r"^hash-(\d+)$")


class HashedProjectionEncoder:
    """Maps each whitespace word to a fixed pseudorandom unit-scale vector.

    The vector is derived from a BLAKE2 digest of the word, so identical
    inputs give identical embeddings in any process on any platform.
    Words are their own tokens; both pooling modes coincide.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"hash encoder dim must be >= 1, got {dim}")
        self.dim = dim
        self.model_id = f"hash-{dim}"
        self.max_tokens: int | None = None

    def _word_vector(self, word: str) -> np.ndarray:
        digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
        seed = int.from_bytes(digest, "little")
        rng = np.random.Generator(np.random.Philox(key=seed))
        return (rng.standard_normal(self.dim) / np.sqrt(self.dim)).astype(np.float32)

    def encode(self, sentences: list[str], pooling: str) -> list[np.ndarray]:
        if pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {pooling!r}")
        out = []
        for sentence in sentences:
            words = sentence.split()
            if not words:
                out.append(np.zeros((0, self.dim), dtype=np.float32))
                continue
            out.append(np.stack([self._word_vector(w) for w in words]))
        return out


class TransformersEncoder:
    """Inference-only wrapper around a transformers encoder.

    Documents are packed into chunks of whole sentences that fit the
    model window (one chunk = whole-document context when it fits); no
    special tokens are inserted and chunks never overlap. A single
    sentence longer than the window is truncated to it.
    """

    def __init__(self, model_id: str):
        import torch
        from transformers import AutoModel, AutoTokenizer

        self._torch = torch
        self.model_id = model_id
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.dim = int(self.model.config.hidden_size)
        window = getattr(self.tokenizer, "model_max_length", None)
        # some tokenizers report a sentinel for "unlimited"
        self.max_tokens = int(window) if window and window < 100_000 else None

    def _tokenize(self, sentence: str):
        words = sentence.split()
        if not words:
            return [], []
        enc = self.tokenizer(words, is_split_into_words=True, add_special_tokens=False)
        return enc["input_ids"], enc.word_ids()

    def encode(self, sentences: list[str], pooling: str) -> list[np.ndarray]:
        if pooling not in POOLING_MODES:
            raise ValueError(f"unknown pooling mode {pooling!r}")
        torch = self._torch
        tokenized = [self._tokenize(s) for s in sentences]
        if self.max_tokens is not None:
            tokenized = [
                (ids[: self.max_tokens], words[: self.max_tokens]) for ids, words in tokenized
            ]

        # greedy chunks of whole sentences
        chunks: list[list[int]] = []
        current: list[int] = []
        used = 0
        for idx, (ids, _) in enumerate(tokenized):
            n = len(ids)
            if current and self.max_tokens is not None and used + n > self.max_tokens:
                chunks.append(current)
                current, used = [], 0
            current.append(idx)
            used += n
        if current:
            chunks.append(current)

        out: list[np.ndarray | None] = [None] * len(sentences)
        for chunk in chunks:
            flat = [tid for idx in chunk for tid in tokenized[idx][0]]
            if not flat:
                for idx in chunk:
                    out[idx] = np.zeros((0, self.dim), dtype=np.float32)
                continue
            with torch.no_grad():
                ids = torch.tensor([flat], dtype=torch.long)
                hidden = self.model(input_ids=ids).last_hidden_state[0]
            hidden = hidden.to(torch.float32).cpu().numpy()
            offset = 0
            for idx in chunk:
                ids_i, word_ids = tokenized[idx]
                vectors = hidden[offset : offset + len(ids_i)]
                offset += len(ids_i)
                if len(ids_i) == 0:
                    out[idx] = np.zeros((0, self.dim), dtype=np.float32)
                elif pooling == SUBWORD_PASSTHROUGH:
                    out[idx] = vectors.astype(np.float32)
                else:
                    groups: dict[int, list[int]] = {}
                    for pos, wid in enumerate(word_ids):
                        groups.setdefault(wid, []).append(pos)
                    means = [
                        vectors[positions].mean(axis=0)
                        for _, positions in sorted(groups.items())
                    ]
                    out[idx] = np.stack(means).astype(np.float32)
        return out  # type: ignore[return-value]


def build_encoder(model_id: str):
    """hash-<dim> gives the offline encoder; anything else goes through
    transformers (hub id or local directory)."""
    match = _HASH_ID.match(model_id)
    if match:
        return HashedProjectionEncoder(int(match.group(1)))
    return TransformersEncoder(model_id)
