"""Byte-exact embedding interchange format, label files, and splitting.

Embedding file layout (all integers u32 little-endian, floats 32-bit LE
IEEE-754):

    magic "LIMD" | version=1 | dim | doc_count
    per document: id_len | id (UTF-8) | sent_count
    per sentence: tok_count | tok_count * dim floats

Counts must be nonzero and the file length must be exactly consistent
with them. In memory, token embeddings are held as float64; writing
casts to float32, so a read-write cycle is bit-identical.

Label files are JSON-lines. The first line is a header
{"task": "sentence"|"pair", "num_classes": C}; each following line is
{"doc_id": ..., "labels": [...]} for the sentence task or
{"doc_id": ..., "pairs": [[i, j, label], ...]} for the pair task.
A label of -1 marks an unscored position.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .documents import Document
from .errors import ConfigError, FormatError

MAGIC = b"LIMD"
FORMAT_VERSION = 1


@dataclass
class Corpus:
    dim: int
    docs: list[Document]

    def validate(self) -> None:
        if not self.docs:
            raise FormatError("corpus has no documents")
        seen = set()
        for doc in self.docs:
            doc.validate()
            if doc.dim != self.dim:
                raise FormatError(
                    f"document {doc.doc_id!r} has dim {doc.dim}, corpus declares {self.dim}"
                )
            if doc.doc_id in seen:
                raise FormatError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)


def write_embeddings(corpus: Corpus) -> bytes:
    """Serialize a corpus; write/read round-trips are bit-identical."""
    corpus.validate()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<III", FORMAT_VERSION, corpus.dim, len(corpus.docs))
    for doc in corpus.docs:
        ident = doc.doc_id.encode("utf-8")
        out += struct.pack("<I", len(ident))
        out += ident
        out += struct.pack("<I", doc.num_sentences)
        for sent in doc.sentences:
            out += struct.pack("<I", sent.shape[0])
            out += sent.astype("<f4").tobytes()
    return bytes(out)


class _ByteReader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"truncated file at offset {self.offset}: "
                f"needed {n} bytes for {what}, {len(self.data) - self.offset} remain"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_embeddings(data: bytes) -> Corpus:
    """Parse and validate serialized embeddings, reporting byte offsets."""
    r = _ByteReader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0")
    version_offset = r.offset
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset {version_offset}")
    dim_offset = r.offset
    dim = r.u32("dim")
    if dim == 0:
        raise FormatError(f"zero embedding dim at offset {dim_offset}")
    count_offset = r.offset
    doc_count = r.u32("doc count")
    if doc_count == 0:
        raise FormatError(f"zero document count at offset {count_offset}")
    docs = []
    for _ in range(doc_count):
        id_len = r.u32("doc id length")
        try:
            doc_id = r.take(id_len, "doc id").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"doc id is not valid UTF-8 at offset {r.offset - id_len}") from exc
        sc_offset = r.offset
        sent_count = r.u32("sentence count")
        if sent_count == 0:
            raise FormatError(f"zero sentence count at offset {sc_offset}")
        sentences = []
        for _ in range(sent_count):
            tc_offset = r.offset
            tok_count = r.u32("token count")
            if tok_count == 0:
                raise FormatError(f"zero token count at offset {tc_offset}")
            raw = r.take(4 * tok_count * dim, "token embeddings")
            mat = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(tok_count, dim)
            sentences.append(mat)
        docs.append(Document(doc_id=doc_id, sentences=sentences))
    if r.offset != len(data):
        raise FormatError(
            f"trailing {len(data) - r.offset} bytes after declared content at offset {r.offset}"
        )
    corpus = Corpus(dim=dim, docs=docs)
    corpus.validate()
    return corpus


def save_embeddings(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_bytes(write_embeddings(corpus))


def load_embeddings(path: str | Path) -> Corpus:
    return read_embeddings(Path(path).read_bytes())


SENTENCE_TASK = "sentence"
PAIR_TASK = "pair"


@dataclass
class LabelSet:
    """Labels for one task over a set of documents, keyed by doc_id.

    For the sentence task, by_doc maps to one int per sentence. For the
    pair task it maps to [i, j, label] triples over sentence indices.
    """

    task: str
    num_classes: int
    by_doc: dict[str, list] = field(default_factory=dict)

    def validate(self) -> None:
        if self.task not in (SENTENCE_TASK, PAIR_TASK):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        for doc_id, entries in self.by_doc.items():
            if self.task == SENTENCE_TASK:
                for lab in entries:
                    if not isinstance(lab, int) or not -1 <= lab < self.num_classes:
                        raise ConfigError(
                            f"doc {doc_id!r}: label {lab!r} outside [-1, {self.num_classes})"
                        )
            else:
                for trip in entries:
                    if len(trip) != 3:
                        raise ConfigError(f"doc {doc_id!r}: pair entry {trip!r} is not [i, j, label]")
                    i, j, lab = trip
                    if i < 0 or j < 0:
                        raise ConfigError(f"doc {doc_id!r}: negative sentence index in {trip!r}")
                    if not -1 <= lab < self.num_classes:
                        raise ConfigError(
                            f"doc {doc_id!r}: label {lab} outside [-1, {self.num_classes})"
                        )

    def validate_against(self, corpus: Corpus) -> None:
        """Check doc ids and indices line up with an embedding corpus."""
        self.validate()
        for doc in corpus.docs:
            if doc.doc_id not in self.by_doc:
                raise ConfigError(f"no labels for document {doc.doc_id!r}")
            entries = self.by_doc[doc.doc_id]
            if self.task == SENTENCE_TASK:
                if len(entries) != doc.num_sentences:
                    raise ConfigError(
                        f"doc {doc.doc_id!r}: {len(entries)} labels for {doc.num_sentences} sentences"
                    )
            else:
                for i, j, _ in entries:
                    if i >= doc.num_sentences or j >= doc.num_sentences:
                        raise ConfigError(
                            f"doc {doc.doc_id!r}: pair ({i}, {j}) outside {doc.num_sentences} sentences"
                        )


def write_labels(labels: LabelSet) -> str:
    labels.validate()
    lines = [json.dumps({"task": labels.task, "num_classes": labels.num_classes}, sort_keys=True)]
    for doc_id in labels.by_doc:
        key = "labels" if labels.task == SENTENCE_TASK else "pairs"
        lines.append(json.dumps({"doc_id": doc_id, key: labels.by_doc[doc_id]}, sort_keys=True))
    return "\n".join(lines) + "\n"


def read_labels(text: str) -> LabelSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConfigError("empty label file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ConfigError(f"label file header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict) or "task" not in header or "num_classes" not in header:
        raise ConfigError('label file header must be {"task": ..., "num_classes": ...}')
    task = header["task"]
    if task not in (SENTENCE_TASK, PAIR_TASK):
        raise ConfigError(f"unknown task {task!r} in label file header")
    labels = LabelSet(task=task, num_classes=int(header["num_classes"]))
    key = "labels" if task == SENTENCE_TASK else "pairs"
    for n, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"label file line {n} is not valid JSON: {exc}") from exc
        if "doc_id" not in rec or key not in rec:
            raise ConfigError(f'label file line {n} must carry "doc_id" and "{key}"')
        if rec["doc_id"] in labels.by_doc:
            raise ConfigError(f"duplicate labels for document {rec['doc_id']!r} at line {n}")
        entries = rec[key]
        if task == PAIR_TASK:
            entries = [tuple(int(v) for v in trip) for trip in entries]
        labels.by_doc[rec["doc_id"]] = entries
    labels.validate()
    return labels


def save_labels(labels: LabelSet, path: str | Path) -> None:
    Path(path).write_text(write_labels(labels), encoding="utf-8")


def load_labels(path: str | Path) -> LabelSet:
    return read_labels(Path(path).read_text(encoding="utf-8"))


def split(corpus: Corpus, fractions: tuple[float, float, float], seed: int) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic document-level train/val/test partition.

    Validation and test sizes are floors of their fractions; the
    remainder goes to train, so counts are predictable. Any empty split
    is an error.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"need three positive split fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must sum to 1, got {sum(fractions)}")
    n = len(corpus.docs)
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) == 0:
        raise ConfigError(
            f"split of {n} documents by {fractions} leaves an empty split "
            f"({n_train}/{n_val}/{n_test})"
        )
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(n)
    picks = [order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]]
    return tuple(
        Corpus(dim=corpus.dim, docs=[corpus.docs[i] for i in sorted(part)]) for part in picks
    )
