"""Documents of frozen token embeddings, grouped by sentence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NumericalError


@dataclass
class Document:
    """One document: an id plus per-sentence token embedding matrices.

    sentences[i] has shape (l_i, dim) with l_i >= 1. Token embeddings are
    inputs only; nothing in this package ever writes a gradient into them.
    """

    doc_id: str
    sentences: list[np.ndarray]
    _stacked: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def dim(self) -> int:
        return self.sentences[0].shape[1]

    @property
    def sentence_lengths(self) -> list[int]:
        return [s.shape[0] for s in self.sentences]

    def all_tokens(self) -> np.ndarray:
        """All token embeddings stacked in document order, shape (N, dim).

        Cached; the stack is reused across encoder calls.
        """
        if self._stacked is None:
            self._stacked = np.concatenate(self.sentences, axis=0)
        return self._stacked

    def validate(self) -> None:
        if not self.sentences:
            raise DimensionMismatch(f"document {self.doc_id!r} has no sentences")
        dim = None
        for i, s in enumerate(self.sentences):
            if s.ndim != 2 or s.shape[0] < 1:
                raise DimensionMismatch(
                    f"document {self.doc_id!r} sentence {i} must be a non-empty (tokens, dim) matrix"
                )
            if dim is None:
                dim = s.shape[1]
            elif s.shape[1] != dim:
                raise DimensionMismatch(
                    f"document {self.doc_id!r} sentence {i} has dim {s.shape[1]}, expected {dim}"
                )
            if not np.all(np.isfinite(s)):
                raise NumericalError(
                    f"document {self.doc_id!r} sentence {i} contains non-finite embeddings"
                )
