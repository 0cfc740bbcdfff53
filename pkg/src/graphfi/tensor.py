"""Immutable tensors and bit-exact element corruption primitives."""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np


class DType(enum.Enum):
    F32 = "f32"
    F64 = "f64"
    I64 = "i64"
    Bool = "bool"

    @property
    def numpy(self) -> np.dtype:
        return _NUMPY[self]

    @property
    def bits(self) -> int:
        """Bit width used for corruption (Bool has a single logical bit)."""
        return _BITS[self]

    @property
    def is_float(self) -> bool:
        return self in (DType.F32, DType.F64)

    @classmethod
    def from_numpy(cls, dt) -> "DType":
        try:
            return _FROM_NUMPY[np.dtype(dt)]
        except KeyError:
            raise TypeError(f"unsupported numpy dtype {dt}") from None


_NUMPY = {
    DType.F32: np.dtype("<f4"),
    DType.F64: np.dtype("<f8"),
    DType.I64: np.dtype("<i8"),
    DType.Bool: np.dtype("bool"),
}
_FROM_NUMPY = {v: k for k, v in _NUMPY.items()}
_BITS = {DType.F32: 32, DType.F64: 64, DType.I64: 64, DType.Bool: 1}
_UINT = {DType.F32: np.dtype("<u4"), DType.F64: np.dtype("<u8"), DType.I64: np.dtype("<u8")}


class Tensor:
    """A typed, shaped, row-major array that cannot be mutated after construction."""

    __slots__ = ("_a",)

    def __init__(self, data, dtype: DType | None = None, shape: Sequence[int] | None = None):
        if isinstance(data, Tensor):
            data = data._a
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype.kind == "f":
                dtype = DType.F32 if arr.dtype == np.float32 else DType.F64
            elif arr.dtype.kind in "iu":
                dtype = DType.I64
            elif arr.dtype.kind == "b":
                dtype = DType.Bool
            else:
                raise TypeError(f"cannot infer dtype for {arr.dtype}")
        arr = np.array(data, dtype=dtype.numpy, copy=True, order="C")
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if any(s < 0 for s in shape):
                raise ValueError(f"negative extent in shape {shape}")
            if int(np.prod(shape, dtype=np.int64)) != arr.size:
                raise ValueError(f"shape {shape} does not match {arr.size} elements")
            arr = arr.reshape(shape)
        arr.flags.writeable = False
        self._a = arr

    @classmethod
    def wrap(cls, arr: np.ndarray) -> "Tensor":
        """Adopt ``arr`` without copying when it already has a supported dtype.

        The caller gives up ownership; the array is frozen in place.
        """
        t = object.__new__(cls)
        if arr.dtype not in _NUMPY.values() or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr, dtype=DType.from_numpy(arr.dtype).numpy)
        if arr.flags.writeable:
            arr.flags.writeable = False
        t._a = arr
        return t

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the underlying buffer."""
        return self._a

    @property
    def dtype(self) -> DType:
        return DType.from_numpy(self._a.dtype)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._a.shape

    @property
    def rank(self) -> int:
        return self._a.ndim

    @property
    def size(self) -> int:
        return self._a.size

    def flat(self) -> np.ndarray:
        return self._a.reshape(-1)

    def tolist(self):
        return self._a.tolist()

    def tolist_flat(self) -> list:
        return self.flat().tolist()

    def item(self, elem: int):
        return self.flat()[elem].item()

    def bits_view(self) -> np.ndarray:
        """Flat unsigned-integer view of the stored bit patterns."""
        if self.dtype is DType.Bool:
            return self.flat().view(np.uint8)
        return self.flat().view(_UINT[self.dtype])

    def bit_equal(self, other: "Tensor") -> bool:
        return (
            self.dtype is other.dtype
            and self.shape == other.shape
            and np.array_equal(self.bits_view(), other.bits_view())
        )

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.bit_equal(other)

    __hash__ = None

    def __repr__(self):
        return f"Tensor({self._a.tolist()!r}, dtype={self.dtype.name}, shape={list(self.shape)})"


def linear_index(coord: Sequence[int], shape: Sequence[int]) -> int:
    idx = 0
    for c, n in zip(coord, shape):
        if not 0 <= c < n:
            raise IndexError(f"coordinate {tuple(coord)} out of range for shape {tuple(shape)}")
        idx = idx * n + c
    return idx


def coordinate(index: int, shape: Sequence[int]) -> tuple[int, ...]:
    total = int(np.prod(shape, dtype=np.int64))
    if not 0 <= index < max(total, 0):
        raise IndexError(f"linear index {index} out of range for shape {tuple(shape)}")
    out = []
    for n in reversed(shape):
        index, r = divmod(index, n)
        out.append(r)
    return tuple(reversed(out))


def _check_elem(t: Tensor, elem: int):
    if not 0 <= elem < t.size:
        raise IndexError(f"element {elem} out of range for tensor of {t.size} elements")


def _check_bit(t: Tensor, bit: int):
    if not 0 <= bit < t.dtype.bits:
        raise IndexError(f"bit {bit} out of range for {t.dtype.name} ({t.dtype.bits} bits)")


def bit_flip_element(t: Tensor, elem: int, bit: int) -> Tensor:
    """Flip one stored bit of one element; every other element stays bit-identical."""
    _check_elem(t, elem)
    _check_bit(t, bit)
    raw = t.bits_view().copy()
    if t.dtype is DType.Bool:
        raw[elem] ^= 1
    else:
        raw[elem] ^= raw.dtype.type(1) << raw.dtype.type(bit)
    return Tensor.wrap(raw.view(t.dtype.numpy).reshape(t.shape))


def bit_flip_all(t: Tensor, bit_chooser) -> tuple[Tensor, list[int]]:
    """Flip one bit in every element.

    ``bit_chooser`` is either a sequence with one bit index per element or a
    ``numpy.random.Generator`` used to draw each element's bit uniformly.
    """
    width = t.dtype.bits
    if isinstance(bit_chooser, np.random.Generator):
        bits = bit_chooser.integers(0, width, size=t.size)
    else:
        bits = np.asarray(list(bit_chooser), dtype=np.int64)
        if bits.shape != (t.size,):
            raise ValueError(f"need {t.size} bit indices, got {bits.shape[0]}")
    if bits.size and (bits.min() < 0 or bits.max() >= width):
        raise IndexError(f"bit index out of range for {t.dtype.name}")
    raw = t.bits_view().copy()
    if t.dtype is DType.Bool:
        raw ^= 1
    else:
        raw ^= np.left_shift(np.ones_like(raw), bits.astype(raw.dtype))
    return Tensor.wrap(raw.view(t.dtype.numpy).reshape(t.shape)), [int(b) for b in bits]


def zero_like(t: Tensor) -> Tensor:
    return Tensor.wrap(np.zeros(t.shape, dtype=t.dtype.numpy))


def _need_float(t: Tensor, what: str):
    if not t.dtype.is_float:
        raise TypeError(f"{what} is unsupported for {t.dtype.name} tensors")


def rand_like(t: Tensor, rng: np.random.Generator) -> Tensor:
    """Replace every element with an independent draw from U[0, 1)."""
    _need_float(t, "rand_like")
    return Tensor.wrap(rng.random(t.shape, dtype=t.dtype.numpy.type))


def rand_element(t: Tensor, elem: int, rng: np.random.Generator) -> Tensor:
    _need_float(t, "rand_element")
    _check_elem(t, elem)
    out = t.flat().copy()
    out[elem] = rng.random(dtype=t.dtype.numpy.type)
    return Tensor.wrap(out.reshape(t.shape))
