"""Graph documents (JSON) and GFIW tensor bundles.

GFIW layout, all integers little-endian::

    b"GFIW"  u16 version  u32 entry_count
    entry_count x { u16 id_len, id (UTF-8), u8 dtype_code, u8 rank,
                    rank x u32 extent, raw little-endian element bytes }
    u32 CRC32 of every preceding byte

Dtype codes: 1=f32, 2=f64, 3=i64, 4=bool (one byte per element, 0 or 1).
The same container stores model weights and input feed bundles.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import Graph, GraphError, Node, OpKind, validate
from .tensor import DType, Tensor

MAGIC = b"GFIW"
VERSION = 1
DOC_FORMAT = "graphfi-graph"

DTYPE_CODES = {DType.F32: 1, DType.F64: 2, DType.I64: 3, DType.Bool: 4}
_CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


class ModelFormatError(ValueError):
    pass


# ------------------------------------------------------------------ bundles


def encode_bundle(tensors: Mapping[str, Tensor]) -> bytes:
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, t in tensors.items():
        raw_id = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_id)))
        parts.append(raw_id)
        parts.append(struct.pack("<BB", DTYPE_CODES[t.dtype], t.rank))
        parts.append(struct.pack(f"<{t.rank}I", *t.shape))
        parts.append(t.array.astype(t.dtype.numpy, copy=False).tobytes(order="C"))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_bundle(data: bytes) -> dict[str, Tensor]:
    if len(data) < 14 or data[:4] != MAGIC:
        raise ModelFormatError("not a GFIW bundle (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("checksum mismatch")
    version, count = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported GFIW version {version}")
    off = 10
    out: dict[str, Tensor] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", body, off)
            off += 2
            name = body[off:off + n].decode("utf-8")
            off += n
            code, rank = struct.unpack_from("<BB", body, off)
            off += 2
            if code not in _CODE_DTYPES:
                raise ModelFormatError(f"entry {name!r}: unknown dtype code {code} at offset {off - 2}")
            dt = _CODE_DTYPES[code]
            shape = struct.unpack_from(f"<{rank}I", body, off)
            off += 4 * rank
            nbytes = int(np.prod(shape, dtype=np.int64)) * dt.numpy.itemsize
            if off + nbytes > len(body):
                raise ModelFormatError(f"entry {name!r}: truncated element data at offset {off}")
            arr = np.frombuffer(body, dtype=dt.numpy, count=nbytes // dt.numpy.itemsize, offset=off)
            if dt is DType.Bool and arr.view(np.uint8).max(initial=0) > 1:
                raise ModelFormatError(f"entry {name!r}: bool bytes must be 0 or 1")
            off += nbytes
            if name in out:
                raise ModelFormatError(f"duplicate entry {name!r}")
            out[name] = Tensor.wrap(arr.reshape(shape).copy())
    except struct.error as e:
        raise ModelFormatError(f"truncated bundle at offset {off}: {e}") from e
    if off != len(body):
        raise ModelFormatError(f"{len(body) - off} trailing bytes after last entry")
    return out


def _atomic_write(path, data: bytes | str):
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_bundle(tensors: Mapping[str, Tensor], path) -> None:
    _atomic_write(path, encode_bundle(tensors))


def load_bundle(path) -> dict[str, Tensor]:
    return decode_bundle(Path(path).read_bytes())


# ------------------------------------------------------------------- graphs


def graph_to_doc(g: Graph) -> dict:
    nodes = []
    for n in g.nodes.values():
        attrs = dict(n.attrs)
        if n.kind is OpKind.Const:
            c = g.constants[n.id]
            attrs = {"shape": list(c.shape), "dtype": c.dtype.value}
        nodes.append({"id": n.id, "op": n.kind.value, "inputs": list(n.inputs),
                      "attrs": attrs, "injectable": n.injectable})
    return {"format": DOC_FORMAT, "version": VERSION, "name": g.name,
            "nodes": nodes, "outputs": list(g.outputs)}


def graph_from_doc(doc: dict, weights: Mapping[str, Tensor]) -> Graph:
    if not isinstance(doc, dict) or doc.get("format") != DOC_FORMAT:
        raise ModelFormatError(f"graph document must have format {DOC_FORMAT!r}")
    nodes = []
    for i, raw in enumerate(doc.get("nodes", [])):
        try:
            nodes.append(Node(raw["id"], OpKind.parse(raw["op"]), raw.get("inputs", []),
                              raw.get("attrs", {}), bool(raw.get("injectable", True))))
        except (KeyError, ValueError, TypeError) as e:
            raise ModelFormatError(f"node #{i}: {e}") from e
    const_ids = [n.id for n in nodes if n.kind is OpKind.Const]
    missing = [c for c in const_ids if c not in weights]
    extra = [w for w in weights if w not in const_ids]
    if missing:
        raise ModelFormatError(f"missing weight entries: {missing}")
    if extra:
        raise ModelFormatError(f"weight entries without a Const node: {extra}")
    by_id = {n.id: n for n in nodes}
    for c in const_ids:
        a, t = by_id[c].attrs, weights[c]
        if "shape" in a and tuple(a["shape"]) != t.shape:
            raise ModelFormatError(f"{c}: document shape {list(a['shape'])} != stored {list(t.shape)}")
        if "dtype" in a and a["dtype"] != t.dtype.value:
            raise ModelFormatError(f"{c}: document dtype {a['dtype']} != stored {t.dtype.value}")
    g = Graph(nodes, doc.get("outputs", []), {c: weights[c] for c in const_ids},
              name=doc.get("name", "graph"))
    diags = validate(g)
    if diags:
        raise GraphError("; ".join(diags))
    return g


def load_model(graph_path, weights_path) -> Graph:
    text = Path(graph_path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{graph_path}: parse error at line {e.lineno} column {e.colno}: {e.msg}") from e
    return graph_from_doc(doc, load_bundle(weights_path))


def save_model(g: Graph, graph_path, weights_path) -> None:
    diags = validate(g)
    if diags:
        raise GraphError("; ".join(diags))
    consts = {nid: g.constants[nid] for nid in g.nodes if g.nodes[nid].kind is OpKind.Const}
    _atomic_write(weights_path, encode_bundle(consts))
    _atomic_write(graph_path, json.dumps(graph_to_doc(g), indent=1) + "\n")
