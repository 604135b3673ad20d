"""Binary checkpoint format.

Layout (all integers little-endian uint64, all tensors little-endian float64
in C order)::

    offset  size  content
    0       8     magic  b"KGECKPT1"
    8       16    model kind, ASCII, NUL-padded
    24      8     n_ent
    32      8     n_rel
    40      8     d
    48      8     d_r
    56      ...   parameter tensors in the model's declaration order
                  (shapes follow from kind and the four sizes)
    ...     8     byte length L_e of the entity label block
    ...     L_e   entity labels, UTF-8, joined by "\\n", in index order
    ...     8     byte length L_r of the relation label block
    ...     L_r   relation labels, same encoding

The label blocks let evaluation map test files onto the model's indices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import MODEL_KINDS, Model

__all__ = ["MAGIC", "Checkpoint", "save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"KGECKPT1"
_HEADER = struct.Struct("<8s16s4Q")
_LEN = struct.Struct("<Q")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: Model
    ent_dict: dict[str, int]
    rel_dict: dict[str, int]


def _labels_block(labels, count: int, kind: str) -> bytes:
    labels = list(labels) if labels is not None else [f"{kind[0]}{i}" for i in range(count)]
    if len(labels) != count:
        raise CheckpointError(f"expected {count} {kind} labels, got {len(labels)}")
    data = "\n".join(labels).encode("utf-8")
    return _LEN.pack(len(data)) + data


def dumps(model: Model, ent_labels=None, rel_labels=None) -> bytes:
    parts = [_HEADER.pack(MAGIC, model.kind.encode("ascii"), model.n_ent, model.n_rel, model.d, model.d_r)]
    for name, _, _ in model.layout:
        parts.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    parts.append(_labels_block(ent_labels, model.n_ent, "entity"))
    parts.append(_labels_block(rel_labels, model.n_rel, "relation"))
    return b"".join(parts)


def save_checkpoint(path, model: Model, ent_labels=None, rel_labels=None) -> None:
    Path(path).write_bytes(dumps(model, ent_labels, rel_labels))


def _read_labels(buf: memoryview, offset: int, count: int):
    if offset + _LEN.size > len(buf):
        raise CheckpointError("truncated checkpoint")
    (length,) = _LEN.unpack_from(buf, offset)
    offset += _LEN.size
    block = bytes(buf[offset : offset + length])
    if len(block) != length:
        raise CheckpointError("truncated checkpoint")
    labels = block.decode("utf-8").split("\n") if count else []
    if len(labels) != count:
        raise CheckpointError("label count does not match the header")
    return {label: i for i, label in enumerate(labels)}, offset + length


def loads(data: bytes) -> Checkpoint:
    buf = memoryview(data)
    if len(buf) < _HEADER.size:
        raise CheckpointError("truncated checkpoint")
    magic, kind, n_ent, n_rel, d, d_r = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    kind = kind.rstrip(b"\0").decode("ascii")
    if kind not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {kind!r}")
    model = MODEL_KINDS[kind].__new__(MODEL_KINDS[kind])
    model.n_ent, model.n_rel, model.d, model.d_r = n_ent, n_rel, d, d_r
    offset = _HEADER.size
    model.params = {}
    for name, shape in model.param_shapes().items():
        count = int(np.prod(shape))
        if offset + 8 * count > len(buf):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
        model.params[name] = arr.astype(np.float64).reshape(shape)
        offset += 8 * count
    ent_dict, offset = _read_labels(buf, offset, n_ent)
    rel_dict, offset = _read_labels(buf, offset, n_rel)
    if offset != len(buf):
        raise CheckpointError("trailing bytes after checkpoint")
    return Checkpoint(model, ent_dict, rel_dict)


def load_checkpoint(path) -> Checkpoint:
    return loads(Path(path).read_bytes())
