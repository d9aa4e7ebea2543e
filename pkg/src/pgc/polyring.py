"""Truncated univariate polynomials over the reals.

Every query in this package is answered by evaluating a circuit over
``R[t] / (t^(cap+1))``.  The :class:`Poly` type is the user-facing value;
the array helpers (:func:`convolve`) operate on raw coefficient arrays along
the last axis and broadcast over any leading batch axes, which is what the
circuit evaluators use internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Poly",
    "add",
    "scale",
    "mul",
    "coef",
    "convolve",
    "AUTO_NAIVE_MAX_LEN",
]

# auto backend: naive when the shorter operand has at most this many coefficients
AUTO_NAIVE_MAX_LEN = 64


class CapMismatchError(ValueError):
    pass


def _trim(c: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(c)
    return c[: nz[-1] + 1] if nz.size else c[:0]


@dataclass(frozen=True, eq=False)
class Poly:
    """Dense polynomial in ``t`` with degree capped at ``cap``.

    ``coeffs[i]`` holds the coefficient of ``t**i``.  Trailing zeros are
    trimmed on construction, so the zero polynomial has empty ``coeffs``
    and degree -1.
    """

    coeffs: np.ndarray
    cap: int

    def __post_init__(self):
        if self.cap < 0:
            raise ValueError("cap must be non-negative")
        c = np.asarray(self.coeffs, dtype=float).ravel()[: self.cap + 1]
        c = _trim(c).copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def const(cls, value: float, cap: int) -> "Poly":
        return cls(np.array([value]), cap)

    @classmethod
    def t(cls, cap: int) -> "Poly":
        """The indeterminate itself (zero if ``cap == 0``)."""
        return cls(np.array([0.0, 1.0]), cap)

    @classmethod
    def zero(cls, cap: int) -> "Poly":
        return cls(np.zeros(0), cap)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def dense(self) -> np.ndarray:
        """Coefficients padded to length ``cap + 1``."""
        out = np.zeros(self.cap + 1)
        out[: len(self.coeffs)] = self.coeffs
        return out

    def embed(self, cap: int) -> "Poly":
        return Poly(self.coeffs, cap)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs) if len(self.coeffs) else 0.0 * x

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(other, self.cap)
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(other, self.cap)
        return add(self, -other)

    def __mul__(self, other):
        if isinstance(other, Poly):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.cap == other.cap and np.array_equal(self.coeffs, other.coeffs)

    def allclose(self, other: "Poly", atol: float = 1e-9) -> bool:
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        b[: len(other.coeffs)] = other.coeffs
        return bool(np.all(np.abs(a - b) <= atol))

    def __repr__(self):
        terms = [f"{c:g}*t^{i}" for i, c in enumerate(self.coeffs) if c != 0]
        return f"Poly({' + '.join(terms) or '0'}; cap={self.cap})"


def _check_caps(a: Poly, b: Poly):
    if a.cap != b.cap:
        raise CapMismatchError(f"cap mismatch: {a.cap} != {b.cap}")


def add(a: Poly, b: Poly) -> Poly:
    _check_caps(a, b)
    n = max(len(a.coeffs), len(b.coeffs))
    out = np.zeros(n)
    out[: len(a.coeffs)] += a.coeffs
    out[: len(b.coeffs)] += b.coeffs
    return Poly(out, a.cap)


def scale(a: Poly, c: float) -> Poly:
    return Poly(a.coeffs * c, a.cap)


def mul(a: Poly, b: Poly, backend: str = "auto") -> Poly:
    _check_caps(a, b)
    if not len(a.coeffs) or not len(b.coeffs):
        return Poly.zero(a.cap)
    return Poly(convolve(a.coeffs, b.coeffs, a.cap, backend), a.cap)


def coef(a: Poly, k: int) -> float:
    return float(a.coeffs[k]) if 0 <= k < len(a.coeffs) else 0.0


def _naive(a: np.ndarray, b: np.ndarray, out_len: int) -> np.ndarray:
    # shift-and-add over the shorter operand: O(len(a) * len(b)) flops
    if a.shape[-1] > b.shape[-1]:
        a, b = b, a
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (out_len,)
    dtype = np.result_type(a, b)
    out = np.zeros(shape, dtype=dtype)
    for i in range(min(a.shape[-1], out_len)):
        m = min(b.shape[-1], out_len - i)
        out[..., i:i + m] += a[..., i:i + 1] * b[..., :m]
    return out


def _fft(a: np.ndarray, b: np.ndarray, out_len: int) -> np.ndarray:
    full = a.shape[-1] + b.shape[-1] - 1
    size = 1 << max(0, (full - 1).bit_length())
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        prod = np.fft.fft(a, size) * np.fft.fft(b, size)
        return np.fft.ifft(prod, size)[..., :out_len]
    prod = np.fft.rfft(a, size) * np.fft.rfft(b, size)
    return np.fft.irfft(prod, size)[..., :out_len]


def convolve(a: np.ndarray, b: np.ndarray, cap: int, backend: str = "auto") -> np.ndarray:
    """Product of coefficient arrays along the last axis, truncated at ``cap``.

    Leading axes broadcast.  The result has length
    ``min(cap + 1, len(a) + len(b) - 1)`` along the last axis.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    out_len = min(cap + 1, a.shape[-1] + b.shape[-1] - 1)
    if backend == "auto":
        short = min(a.shape[-1], b.shape[-1])
        backend = "naive" if short <= AUTO_NAIVE_MAX_LEN else "fft"
    if backend == "naive":
        return _naive(a, b, out_len)
    if backend == "fft":
        out = _fft(a, b, out_len)
        if out.shape[-1] < out_len:
            pad = [(0, 0)] * (out.ndim - 1) + [(0, out_len - out.shape[-1])]
            out = np.pad(out, pad)
        return out
    raise ValueError(f"unknown backend {backend!r}")
