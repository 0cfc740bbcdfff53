"""Single-op graphs and naive reference kernels used as oracles."""

import itertools
import math

import numpy as np

from graphfi.graph import Graph, Node, execute
from graphfi.ops import OpKind
from graphfi.tensor import DType, Tensor


def single_op(kind, arrays, attrs=None, injectable=True):
    nodes, feeds = [], {}
    for i, a in enumerate(arrays):
        t = Tensor(a)
        nodes.append(Node(f"in{i}", OpKind.Placeholder, attrs={"shape": list(t.shape), "dtype": t.dtype.value}))
        feeds[f"in{i}"] = t
    nodes.append(Node("op", kind, [f"in{i}" for i in range(len(arrays))], attrs or {}, injectable=injectable))
    return Graph(nodes, ["op"]), feeds


def run_op(kind, arrays, attrs=None):
    g, feeds = single_op(kind, arrays, attrs)
    return execute(g, feeds)[0][0]


# ---- reference kernels: explicit loops, float64 math

def ref_elementwise(fn, a, b):
    shape = tuple(max(x, y) for x, y in itertools.zip_longest(a.shape, b.shape, fillvalue=1)) \
        if a.ndim and b.ndim else (a.shape or b.shape)
    out = np.empty(shape, dtype=np.result_type(a, b))
    for idx in np.ndindex(*shape):
        ia = tuple(0 if a.shape[k] == 1 else idx[k] for k in range(a.ndim)) if a.ndim else ()
        ib = tuple(0 if b.shape[k] == 1 else idx[k] for k in range(b.ndim)) if b.ndim else ()
        out[idx] = fn(a[ia].item(), b[ib].item())
    return out


def ref_matmul(a, b):
    n, k = a.shape
    m = b.shape[1]
    out = np.empty((n, m), dtype=a.dtype)
    for i in range(n):
        for j in range(m):
            out[i, j] = math.fsum(float(a[i, t]) * float(b[t, j]) for t in range(k)) \
                if a.dtype.kind == "f" else sum(int(a[i, t]) * int(b[t, j]) for t in range(k))
    return out


def _same_pad(n, k, s):
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return total // 2, out


def ref_conv2d(x, w, stride, padding):
    n, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    if padding == "SAME":
        pt, oh = _same_pad(h, kh, stride)
        pl, ow = _same_pad(wd, kw, stride)
    else:
        pt = pl = 0
        oh, ow = (h - kh) // stride + 1, (wd - kw) // stride + 1
    out = np.zeros((n, oh, ow, co), dtype=x.dtype)
    for b, i, j, o in np.ndindex(n, oh, ow, co):
        acc = []
        for di, dj, ci in np.ndindex(kh, kw, c):
            r, q = i * stride + di - pt, j * stride + dj - pl
            if 0 <= r < h and 0 <= q < wd:
                acc.append(float(x[b, r, q, ci]) * float(w[di, dj, ci, o]))
        out[b, i, j, o] = math.fsum(acc)
    return out


def ref_maxpool(x, k, stride, padding):
    n, h, wd, c = x.shape
    if padding == "SAME":
        pt, oh = _same_pad(h, k, stride)
        pl, ow = _same_pad(wd, k, stride)
    else:
        pt = pl = 0
        oh, ow = (h - k) // stride + 1, (wd - k) // stride + 1
    out = np.empty((n, oh, ow, c), dtype=x.dtype)
    for b, i, j, ch in np.ndindex(n, oh, ow, c):
        best = -math.inf
        for di, dj in np.ndindex(k, k):
            r, q = i * stride + di - pt, j * stride + dj - pl
            if 0 <= r < h and 0 <= q < wd:
                best = max(best, float(x[b, r, q, ch]))
        out[b, i, j, ch] = best
    return out


def ref_softmax(x):
    out = np.empty_like(x)
    for idx in np.ndindex(*x.shape[:-1]):
        row = [float(v) for v in x[idx]]
        m = max(row)
        e = [math.exp(v - m) for v in row]
        s = math.fsum(e)
        out[idx] = [v / s for v in e]
    return out


def ref_mean(x, axis):
    axis %= x.ndim
    shape = x.shape[:axis] + x.shape[axis + 1:]
    out = np.empty(shape, dtype=x.dtype)
    for idx in np.ndindex(*shape):
        vals = [float(x[idx[:axis] + (k,) + idx[axis:]]) for k in range(x.shape[axis])]
        out[idx] = math.fsum(vals) / len(vals)
    return out


def ref_argmax(x, axis):
    axis %= x.ndim
    shape = x.shape[:axis] + x.shape[axis + 1:]
    out = np.empty(shape, dtype=np.int64)
    for idx in np.ndindex(*shape):
        best, arg = None, 0
        for k in range(x.shape[axis]):
            v = x[idx[:axis] + (k,) + idx[axis:]]
            if best is None or v > best:
                best, arg = v, k
        out[idx] = arg
    return out
