"""Operator kernels and static shape rules.

Float reductions (MatMul, Conv2D, Mean, Softmax, Sigmoid) accumulate in
float64 and round once to the input dtype, so results do not depend on the
BLAS build's summation order at float32 precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import DType


class OpKind(str, enum.Enum):
    Const = "Const"
    Placeholder = "Placeholder"
    Add = "Add"
    Sub = "Sub"
    Mul = "Mul"
    MatMul = "MatMul"
    BiasAdd = "BiasAdd"
    Conv2D = "Conv2D"
    MaxPool = "MaxPool"
    ReLU = "ReLU"
    Sigmoid = "Sigmoid"
    Softmax = "Softmax"
    Mean = "Mean"
    Reshape = "Reshape"
    ArgMax = "ArgMax"
    Equal = "Equal"

    @classmethod
    def parse(cls, name: str) -> "OpKind":
        key = name.strip().lower()
        for k in cls:
            if k.value.lower() == key:
                return k
        raise ValueError(f"unknown operator kind {name!r}")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class OpSpec:
    arity: int
    attrs: dict  # attr name -> required?
    infer: Callable  # (input (shape, dtype) list, attrs) -> (shape, dtype)
    compute: Callable | None  # (input arrays, attrs) -> array


# ---------------------------------------------------------------- shape rules


def broadcast_shape(a: tuple, b: tuple) -> tuple:
    """Elementwise broadcast: equal ranks (size-1 extents stretch) or scalar vs tensor."""
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    if len(a) != len(b):
        raise ShapeError(f"cannot broadcast {list(a)} with {list(b)}: ranks differ")
    out = []
    for x, y in zip(a, b):
        if x == y or y == 1:
            out.append(x)
        elif x == 1:
            out.append(y)
        else:
            raise ShapeError(f"cannot broadcast {list(a)} with {list(b)}")
    return tuple(out)


def _same_dtype(ins, name):
    dts = {d for _, d in ins}
    if len(dts) != 1:
        raise ShapeError(f"{name} inputs have mixed dtypes {sorted(d.name for d in dts)}")
    return ins[0][1]


def _infer_elementwise(ins, attrs):
    dt = _same_dtype(ins, "elementwise op")
    if dt is DType.Bool:
        raise ShapeError("arithmetic on Bool tensors is unsupported")
    return broadcast_shape(ins[0][0], ins[1][0]), dt


def _infer_float_unary(ins, attrs):
    (shape, dt), = ins
    if not dt.is_float:
        raise ShapeError(f"expected a float input, got {dt.name}")
    return shape, dt


def _infer_matmul(ins, attrs):
    (a, da), (b, db) = ins
    _same_dtype(ins, "MatMul")
    if len(a) != 2 or len(b) != 2:
        raise ShapeError(f"MatMul needs rank-2 operands, got {list(a)} x {list(b)}")
    if a[1] != b[0]:
        raise ShapeError(f"MatMul inner dimensions differ: {list(a)} x {list(b)}")
    return (a[0], b[1]), da


def _infer_bias_add(ins, attrs):
    (x, dt), (b, _) = ins
    _same_dtype(ins, "BiasAdd")
    if len(b) != 1 or len(x) < 1 or x[-1] != b[0]:
        raise ShapeError(f"BiasAdd bias {list(b)} does not match last axis of {list(x)}")
    return x, dt


def _pair(v, name):
    if isinstance(v, int):
        return (v, v)
    v = tuple(int(i) for i in v)
    if len(v) != 2 or min(v) < 1:
        raise ShapeError(f"{name} must be a positive int or pair, got {v}")
    return v


def _padding(attrs):
    p = str(attrs.get("padding", "VALID")).upper()
    if p not in ("VALID", "SAME"):
        raise ShapeError(f"padding must be VALID or SAME, got {p!r}")
    return p


def conv_out_extent(n: int, k: int, s: int, padding: str) -> int:
    if padding == "SAME":
        return -(-n // s)
    if n < k:
        raise ShapeError(f"window {k} larger than input extent {n} under VALID padding")
    return (n - k) // s + 1


def _same_pads(n: int, k: int, s: int) -> tuple[int, int]:
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return total // 2, total - total // 2


def _infer_conv(ins, attrs):
    (x, dt), (w, _) = ins
    _same_dtype(ins, "Conv2D")
    if not dt.is_float:
        raise ShapeError("Conv2D needs float inputs")
    if len(x) != 4 or len(w) != 4:
        raise ShapeError(f"Conv2D expects NHWC input and HWIO kernel, got {list(x)} and {list(w)}")
    if x[3] != w[2]:
        raise ShapeError(f"Conv2D channel mismatch: input {x[3]} vs kernel {w[2]}")
    sh, sw = _pair(attrs.get("strides", 1), "strides")
    p = _padding(attrs)
    return (x[0], conv_out_extent(x[1], w[0], sh, p), conv_out_extent(x[2], w[1], sw, p), w[3]), dt


def _infer_pool(ins, attrs):
    (x, dt), = ins
    if not dt.is_float:
        raise ShapeError("MaxPool needs a float input")
    if len(x) != 4:
        raise ShapeError(f"MaxPool expects NHWC input, got {list(x)}")
    kh, kw = _pair(attrs["window"], "window")
    sh, sw = _pair(attrs.get("strides", attrs["window"]), "strides")
    p = _padding(attrs)
    return (x[0], conv_out_extent(x[1], kh, sh, p), conv_out_extent(x[2], kw, sw, p), x[3]), dt


def _axis(attrs, rank):
    ax = int(attrs.get("axis", -1))
    if not -rank <= ax < rank:
        raise ShapeError(f"axis {ax} out of range for rank {rank}")
    return ax % rank


def _infer_softmax(ins, attrs):
    shape, dt = _infer_float_unary(ins, attrs)
    if len(shape) < 1:
        raise ShapeError("Softmax needs rank >= 1")
    return shape, dt


def _infer_mean(ins, attrs):
    (x, dt), = ins
    if not dt.is_float:
        raise ShapeError("Mean needs a float input")
    if len(x) < 1:
        raise ShapeError("Mean needs rank >= 1")
    ax = _axis(attrs, len(x))
    return x[:ax] + x[ax + 1:], dt


def _infer_argmax(ins, attrs):
    (x, dt), = ins
    if dt is DType.Bool or len(x) < 1:
        raise ShapeError("ArgMax needs a numeric input of rank >= 1")
    ax = _axis(attrs, len(x))
    if x[ax] == 0:
        raise ShapeError("ArgMax over an empty axis")
    return x[:ax] + x[ax + 1:], DType.I64


def _infer_equal(ins, attrs):
    _same_dtype(ins, "Equal")
    return broadcast_shape(ins[0][0], ins[1][0]), DType.Bool


def reshape_target(src: tuple, target) -> tuple:
    target = [int(t) for t in target]
    size = math.prod(src)
    if target.count(-1) > 1:
        raise ShapeError("Reshape target may contain at most one -1")
    if -1 in target:
        known = math.prod(t for t in target if t != -1)
        if known == 0 or size % known:
            raise ShapeError(f"cannot reshape {list(src)} into {target}")
        target[target.index(-1)] = size // known
    if any(t < 0 for t in target) or math.prod(target) != size:
        raise ShapeError(f"cannot reshape {list(src)} into {target}")
    return tuple(target)


def _infer_reshape(ins, attrs):
    (x, dt), = ins
    return reshape_target(x, attrs["shape"]), dt


# -------------------------------------------------------------------- kernels


def _f64(a):
    return a.astype(np.float64, copy=False)


def _matmul(ins, attrs):
    a, b = ins
    if a.dtype.kind == "f":
        return (_f64(a) @ _f64(b)).astype(a.dtype)
    return a @ b


def _im2col(x, kh, kw, sh, sw, padding, fill):
    n, h, w, c = x.shape
    if padding == "SAME":
        pt, pb = _same_pads(h, kh, sh)
        pl, pr = _same_pads(w, kw, sw)
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=fill)
    oh = conv_out_extent(h, kh, sh, padding)
    ow = conv_out_extent(w, kw, sw, padding)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    # win: n, H', W', c, kh, kw
    return win[:, : (oh - 1) * sh + 1 : sh, : (ow - 1) * sw + 1 : sw]


def _conv2d(ins, attrs):
    x, w = ins
    sh, sw = _pair(attrs.get("strides", 1), "strides")
    kh, kw, _, _ = w.shape
    cols = _im2col(_f64(x), kh, kw, sh, sw, _padding(attrs), 0.0)
    out = np.einsum("nhwcij,ijco->nhwo", cols, _f64(w), optimize=False)
    return out.astype(x.dtype)


def _maxpool(ins, attrs):
    x, = ins
    kh, kw = _pair(attrs["window"], "window")
    sh, sw = _pair(attrs.get("strides", attrs["window"]), "strides")
    cols = _im2col(x, kh, kw, sh, sw, _padding(attrs), -np.inf)
    return cols.max(axis=(4, 5))


def _sigmoid(ins, attrs):
    x, = ins
    return (1.0 / (1.0 + np.exp(-_f64(x)))).astype(x.dtype)


def _softmax(ins, attrs):
    x, = ins
    z = _f64(x)
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    return (z / z.sum(axis=-1, keepdims=True)).astype(x.dtype)


def _mean(ins, attrs):
    x, = ins
    return np.asarray(_f64(x).mean(axis=_axis(attrs, x.ndim))).astype(x.dtype)


def _argmax(ins, attrs):
    x, = ins
    # np.argmax returns the first maximal index, which is the tie-break we want
    return np.asarray(np.argmax(x, axis=_axis(attrs, x.ndim)), dtype=np.int64)


def _reshape(ins, attrs):
    x, = ins
    return x.reshape(reshape_target(x.shape, attrs["shape"]))


OPS: dict[OpKind, OpSpec] = {
    OpKind.Const: OpSpec(0, {}, None, None),
    OpKind.Placeholder: OpSpec(0, {"shape": True, "dtype": False}, None, None),
    OpKind.Add: OpSpec(2, {}, _infer_elementwise, lambda i, a: np.add(i[0], i[1])),
    OpKind.Sub: OpSpec(2, {}, _infer_elementwise, lambda i, a: np.subtract(i[0], i[1])),
    OpKind.Mul: OpSpec(2, {}, _infer_elementwise, lambda i, a: np.multiply(i[0], i[1])),
    OpKind.MatMul: OpSpec(2, {}, _infer_matmul, _matmul),
    OpKind.BiasAdd: OpSpec(2, {}, _infer_bias_add, lambda i, a: np.add(i[0], i[1])),
    OpKind.Conv2D: OpSpec(2, {"strides": False, "padding": False}, _infer_conv, _conv2d),
    OpKind.MaxPool: OpSpec(1, {"window": True, "strides": False, "padding": False}, _infer_pool, _maxpool),
    OpKind.ReLU: OpSpec(1, {}, _infer_float_unary, lambda i, a: np.maximum(i[0], i[0].dtype.type(0))),
    OpKind.Sigmoid: OpSpec(1, {}, _infer_float_unary, _sigmoid),
    OpKind.Softmax: OpSpec(1, {}, _infer_softmax, _softmax),
    OpKind.Mean: OpSpec(1, {"axis": True}, _infer_mean, _mean),
    OpKind.Reshape: OpSpec(1, {"shape": True}, _infer_reshape, _reshape),
    OpKind.ArgMax: OpSpec(1, {"axis": True}, _infer_argmax, _argmax),
    OpKind.Equal: OpSpec(2, {}, _infer_equal, lambda i, a: np.equal(i[0], i[1])),
}
