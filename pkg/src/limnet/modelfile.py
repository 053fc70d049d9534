"""Trained-model persistence, same binary style as the embedding format.

Layout (integers u32 LE unless noted):

    magic "LIMP" | version=1 | task u8 | variant u8 | dim | hidden |
    num_classes | hidden_layer_count | hidden widths... |
    tensors as float64 LE in fixed order: local w1,b1,w2,b2,
    global w1,b1,w2,b2, then head (w,b) per layer.

float64 tensors make save/load round-trips exact, so evaluating a
loaded model reproduces the in-memory results bit for bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .data import PAIR_TASK, SENTENCE_TASK, _ByteReader
from .encoder import EncoderParams, Variant
from .errors import FormatError
from .heads import HeadParams
from .scorer import ScorerParams
from .training import ModelParams

MAGIC = b"LIMP"
MODEL_VERSION = 1

_TASK_CODES = {SENTENCE_TASK: 0, PAIR_TASK: 1}
_VARIANT_CODES = {v: i for i, v in enumerate(Variant)}


def write_model(model: ModelParams, variant: Variant, task: str) -> bytes:
    out = bytearray()
    out += MAGIC
    dim = model.encoder.dim
    hidden = model.encoder.local_scorer.hidden_size
    out += struct.pack(
        "<IBBIII",
        MODEL_VERSION,
        _TASK_CODES[task],
        _VARIANT_CODES[variant],
        dim,
        hidden,
        model.head.num_classes,
    )
    widths = model.head.hidden_widths
    out += struct.pack("<I", len(widths))
    for w in widths:
        out += struct.pack("<I", w)
    for _, t in model.all_tensors():
        out += np.ascontiguousarray(t, dtype="<f8").tobytes()
    return bytes(out)


def read_model(data: bytes) -> tuple[ModelParams, Variant, str]:
    r = _ByteReader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0")
    version = r.u32("version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    task_code, variant_code = struct.unpack("<BB", r.take(2, "task/variant"))
    tasks = {v: k for k, v in _TASK_CODES.items()}
    variants = {v: k for k, v in _VARIANT_CODES.items()}
    if task_code not in tasks or variant_code not in variants:
        raise FormatError(f"unknown task/variant codes ({task_code}, {variant_code})")
    task = tasks[task_code]
    variant = variants[variant_code]
    dim = r.u32("dim")
    hidden = r.u32("hidden size")
    num_classes = r.u32("class count")
    if min(dim, hidden) < 1 or num_classes < 2:
        raise FormatError(f"bad model dims (dim={dim}, hidden={hidden}, classes={num_classes})")
    widths = tuple(r.u32("head width") for _ in range(r.u32("head hidden layer count")))

    def tensor(shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = r.take(8 * count, "model tensor")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    def scorer() -> ScorerParams:
        return ScorerParams(
            w1=tensor((hidden, dim)), b1=tensor((hidden,)), w2=tensor((hidden,)), b2=tensor(())
        )

    local, globl = scorer(), scorer()
    input_dim = dim if task == SENTENCE_TASK else 2 * dim
    sizes = [input_dim, *widths, num_classes]
    weights, biases = [], []
    for i, o in zip(sizes, sizes[1:]):
        # written interleaved per layer: weight then bias
        weights.append(tensor((o, i)))
        biases.append(tensor((o,)))
    head = HeadParams(weights=weights, biases=biases)
    if r.offset != len(data):
        raise FormatError(
            f"trailing {len(data) - r.offset} bytes after declared content at offset {r.offset}"
        )
    model = ModelParams(encoder=EncoderParams(local, globl), head=head)
    model.encoder.validate()
    model.head.validate()
    return model, variant, task


def save_model(model: ModelParams, variant: Variant, task: str, path: str | Path) -> None:
    Path(path).write_bytes(write_model(model, variant, task))


def load_model(path: str | Path) -> tuple[ModelParams, Variant, str]:
    return read_model(Path(path).read_bytes())
