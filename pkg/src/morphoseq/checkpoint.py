"""Binary checkpoint: magic line, text header, raw little-endian float64 blob.

::

    MORPHOSEQ-CKPT\\n
    version=1\\n
    mode=charmorph\\n
    config={...json...}\\n
    vocab_size=N\\n
    vocab=<KIND>\\t<text>\\n        (N lines, index order)
    tensor=<name>\\t<r>,<c>\\n      (one per parameter, blob order)
    blob_bytes=<n>\\n
    \\n
    <blob: row-major '<f8' values of every tensor, concatenated>
"""

from __future__ import annotations

import io
import json
import os
import tempfile

import numpy as np

from .seq2seq import ModelConfig, param_shapes
from .tokenizer import Kind, Token, Vocabulary

MAGIC = b"MORPHOSEQ-CKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def dumps(params, config: ModelConfig, vocab: Vocabulary) -> bytes:
    lines = [
        f"version={VERSION}",
        f"mode={vocab.mode.value}",
        "config=" + json.dumps(config.to_dict(), sort_keys=True),
        f"vocab_size={len(vocab)}",
    ]
    lines += [f"vocab={t.kind.name}\t{t.text}" for t in vocab.itos]
    blob = io.BytesIO()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        lines.append(f"tensor={name}\t{','.join(map(str, arr.shape))}")
        blob.write(arr.tobytes(order="C"))
    data = blob.getvalue()
    lines.append(f"blob_bytes={len(data)}")
    header = ("\n".join(lines) + "\n\n").encode("utf-8")
    return MAGIC + header + data


def save_checkpoint(params, config: ModelConfig, vocab: Vocabulary, sink) -> None:
    """Write to a binary stream, or atomically to a path."""
    payload = dumps(params, config, vocab)
    if hasattr(sink, "write"):
        sink.write(payload)
        return
    directory = os.path.dirname(os.path.abspath(sink))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, sink)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def loads(data: bytes, vocab: Vocabulary | None = None):
    """Parse checkpoint bytes into ``(params, config, vocab)``.

    If ``vocab`` is given, the stored vocabulary must match it exactly.
    """
    if not data.startswith(MAGIC):
        if MAGIC.startswith(data):
            raise CheckpointTruncatedError("file ends inside the magic string")
        raise CheckpointError("not a morphoseq checkpoint (bad magic)")
    end = data.find(b"\n\n", len(MAGIC))
    if end < 0:
        raise CheckpointTruncatedError("header is not terminated")
    try:
        header = data[len(MAGIC):end].decode("utf-8").split("\n")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"header is not UTF-8: {exc}") from None
    blob = data[end + 2:]

    fields: dict[str, list[str]] = {}
    for line in header:
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed header line {line!r}")
        fields.setdefault(key, []).append(value)

    def one(key):
        try:
            (value,) = fields[key]
        except (KeyError, ValueError):
            raise CheckpointError(f"header needs exactly one {key!r} entry") from None
        return value

    version = one("version")
    if version != str(VERSION):
        raise CheckpointVersionError(f"checkpoint version {version}, expected {VERSION}")
    try:
        config = ModelConfig(**json.loads(one("config")))
        tokens = []
        for item in fields.get("vocab", []):
            kind, _, text = item.partition("\t")
            tokens.append(Token(Kind[kind], text))
        stored_vocab = Vocabulary(one("mode"), tokens)
        vocab_size = int(one("vocab_size"))
        blob_bytes = int(one("blob_bytes"))
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"bad header: {exc}") from None
    if len(stored_vocab) != vocab_size:
        raise CheckpointShapeError(
            f"header lists {len(stored_vocab)} vocabulary entries but vocab_size={vocab_size}")
    if len(blob) < blob_bytes:
        raise CheckpointTruncatedError(f"parameter blob has {len(blob)} of {blob_bytes} bytes")
    if len(blob) > blob_bytes:
        raise CheckpointError("trailing bytes after parameter blob")

    expected = param_shapes(vocab_size, config.embed_dim, config.hidden_dim)
    params = {}
    offset = 0
    for item in fields.get("tensor", []):
        name, _, shape_txt = item.partition("\t")
        shape = tuple(int(x) for x in shape_txt.split(",") if x)
        if expected.get(name) != shape:
            raise CheckpointShapeError(
                f"tensor {name} has shape {shape}, expected {expected.get(name)}")
        n = int(np.prod(shape)) * 8
        if offset + n > len(blob):
            raise CheckpointTruncatedError(f"blob ends inside tensor {name}")
        params[name] = np.frombuffer(blob, dtype="<f8", count=n // 8,
                                     offset=offset).reshape(shape).astype(np.float64)
        offset += n
    if set(params) != set(expected):
        raise CheckpointShapeError(f"missing tensors: {sorted(set(expected) - set(params))}")
    if offset != blob_bytes:
        raise CheckpointError("blob size disagrees with declared tensors")
    if vocab is not None:
        if len(vocab) != vocab_size:
            raise CheckpointShapeError(
                f"checkpoint vocabulary has {vocab_size} entries, expected {len(vocab)}")
        if vocab != stored_vocab:
            raise CheckpointError("checkpoint vocabulary differs from the expected one")
    return params, config, stored_vocab


def load_checkpoint(source, vocab: Vocabulary | None = None):
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    return loads(data, vocab)
