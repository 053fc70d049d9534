"""Export pipeline: JSON-lines text in, LIMD plus manifest out."""

from __future__ import annotations

import json
import sys
from pathlib import Path

from . import __version__
from .writer import ExportDocument, write_limd


class ExportError(Exception):
    pass


def load_texts(path: str | Path) -> list[tuple[str, list[str]]]:
    """Parse the input format: one {"doc_id", "sentences"} object per line."""
    docs = []
    seen = set()
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExportError(f"line {n}: not valid JSON: {exc}") from exc
        if "doc_id" not in rec or "sentences" not in rec:
            raise ExportError(f'line {n}: need "doc_id" and "sentences"')
        doc_id = str(rec["doc_id"])
        if doc_id in seen:
            raise ExportError(f"line {n}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        sentences = rec["sentences"]
        if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
            raise ExportError(f"line {n}: sentences must be a list of strings")
        if not sentences:
            raise ExportError(f"line {n}: document {doc_id!r} has no sentences")
        docs.append((doc_id, sentences))
    if not docs:
        raise ExportError(f"no documents in {path}")
    return docs


def export(
    texts_path: str | Path,
    encoder,
    out_path: str | Path,
    pooling: str,
    strict: bool = False,
) -> dict:
    """Encode every document and write the LIMD file plus its manifest.

    Sentences that tokenize to nothing are dropped with a warning, or
    rejected under --strict; a document losing all its sentences follows
    the same rule. Ordering of surviving documents and sentences is
    preserved. Returns the manifest dict.
    """
    texts = load_texts(texts_path)
    out_docs = []
    for doc_id, sentences in texts:
        mats = encoder.encode(sentences, pooling)
        kept = []
        for i, mat in enumerate(mats):
            if mat.shape[0] == 0:
                if strict:
                    raise ExportError(
                        f"document {doc_id!r} sentence {i} is empty after tokenization"
                    )
                print(
                    f"warning: dropping empty sentence {i} of document {doc_id!r}",
                    file=sys.stderr,
                )
                continue
            kept.append(mat)
        if not kept:
            if strict:
                raise ExportError(f"document {doc_id!r} has no usable sentences")
            print(f"warning: dropping empty document {doc_id!r}", file=sys.stderr)
            continue
        out_docs.append(ExportDocument(doc_id=doc_id, sentences=kept))
    if not out_docs:
        raise ExportError("no documents survived tokenization")

    out_path = Path(out_path)
    out_path.write_bytes(write_limd(out_docs, encoder.dim))
    manifest = {
        "model": encoder.model_id,
        "dim": encoder.dim,
        "pooling": pooling,
        "truncation": {
            "policy": "sentence-chunks",
            "max_tokens": encoder.max_tokens,
        },
        "tool_version": __version__,
        "documents": len(out_docs),
    }
    manifest_path = out_path.with_name(out_path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return manifest
