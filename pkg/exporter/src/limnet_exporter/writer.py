"""Standalone LIMD writer.

The byte format is the contract with the consuming trainer, so this
writer is implemented here from the format definition rather than
imported: magic "LIMD", u32 LE version=1, dim, doc count; per document
u32 id length + UTF-8 id + u32 sentence count; per sentence u32 token
count followed by token-count x dim float32 LE values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"LIMD"
VERSION = 1


@dataclass
class ExportDocument:
    doc_id: str
    sentences: list[np.ndarray]  # each (tokens, dim) float32


def write_limd(docs: list[ExportDocument], dim: int) -> bytes:
    if not docs:
        raise ValueError("nothing to write: no documents")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<III", VERSION, dim, len(docs))
    for doc in docs:
        if not doc.sentences:
            raise ValueError(f"document {doc.doc_id!r} has no sentences")
        ident = doc.doc_id.encode("utf-8")
        out += struct.pack("<I", len(ident))
        out += ident
        out += struct.pack("<I", len(doc.sentences))
        for sent in doc.sentences:
            if sent.ndim != 2 or sent.shape[0] < 1 or sent.shape[1] != dim:
                raise ValueError(
                    f"document {doc.doc_id!r}: sentence matrix {sent.shape} "
                    f"does not match dim {dim}"
                )
            out += struct.pack("<I", sent.shape[0])
            out += np.ascontiguousarray(sent, dtype="<f4").tobytes()
    return bytes(out)
