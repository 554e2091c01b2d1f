"""Truncated power series in a single small parameter.

Coefficient arrays have shape ``(order + 1, *shape)`` so that a whole
quadrature grid (or a batch of grids) is carried through the algebra at
once.  Complex dtypes are allowed, which lets callers differentiate
through the series arithmetic by the complex-step trick.
"""

from __future__ import annotations

import numpy as np


def _align(a, b):
    # broadcast trailing (non-coefficient) axes against each other
    nd = max(a.ndim, b.ndim) - 1
    a = a.reshape(a.shape[:1] + (1,) * (nd - a.ndim + 1) + a.shape[1:])
    b = b.reshape(b.shape[:1] + (1,) * (nd - b.ndim + 1) + b.shape[1:])
    return a, b


class Series:
    __slots__ = ("c",)
    __array_priority__ = 100

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs)

    @classmethod
    def constant(cls, value, order: int) -> "Series":
        value = np.asarray(value)
        c = np.zeros((order + 1,) + value.shape, dtype=np.result_type(value, float))
        c[0] = value
        return cls(c)

    @classmethod
    def polynomial(cls, coeffs, order: int, shape=()) -> "Series":
        """``coeffs[k]`` multiplies ``eps**k``; extra terms are dropped."""
        out = np.zeros((order + 1,) + tuple(shape), dtype=np.result_type(*coeffs, float))
        for k, v in enumerate(coeffs[: order + 1]):
            out[k] = v
        return cls(out)

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    def __getitem__(self, k):
        return self.c[k]

    def _coerce(self, other) -> "Series":
        if isinstance(other, Series):
            return other
        other = np.asarray(other)
        c = np.zeros((self.c.shape[0],) + np.broadcast_shapes(other.shape, self.c.shape[1:]),
                     dtype=np.result_type(other, self.c))
        c[0] = other
        return Series(c)

    def __add__(self, other):
        other = self._coerce(other)
        a, b = _align(self.c, other.c)
        return Series(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Series(-self.c)

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = _align(self.c, other.c)
        return Series(a - b)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Series):
            other = np.asarray(other)
            a, b = _align(self.c, other.reshape((1,) + other.shape))
            return Series(a * b)
        a, b = self.c, other.c
        n = a.shape[0]
        shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        out = np.zeros((n,) + shape, dtype=np.result_type(a, b))
        for k in range(n):
            for j in range(k + 1):
                out[k] = out[k] + a[j] * b[k - j]
        return Series(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Series):
            other = np.asarray(other)
            a, b = _align(self.c, other.reshape((1,) + other.shape))
            return Series(a / b)
        a, b = self.c, other.c
        n = a.shape[0]
        shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        q = np.zeros((n,) + shape, dtype=np.result_type(a, b, float))
        for k in range(n):
            acc = a[k] + np.zeros(shape)
            for j in range(1, k + 1):
                acc = acc - b[j] * q[k - j]
            q[k] = acc / b[0]
        return Series(q)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = self._coerce(1.0)
        for _ in range(n):
            out = out * self
        return out

    def sqrt(self) -> "Series":
        a = self.c
        n = a.shape[0]
        s = np.zeros_like(a, dtype=np.result_type(a, float))
        s[0] = np.sqrt(a[0])
        for k in range(1, n):
            acc = a[k] + 0.0
            for j in range(1, k):
                acc = acc - s[j] * s[k - j]
            s[k] = acc / (2.0 * s[0])
        return Series(s)

    def shift_down(self) -> "Series":
        """Divide by the small parameter; the constant term must vanish."""
        c = np.zeros_like(self.c)
        c[:-1] = self.c[1:]
        return Series(c[:-1])

    def truncate(self, order: int) -> "Series":
        return Series(self.c[: order + 1])

    def __call__(self, eps):
        """Evaluate the truncated polynomial at ``eps``."""
        out = np.zeros_like(self.c[0])
        for k in range(self.c.shape[0] - 1, -1, -1):
            out = out * eps + self.c[k]
        return out

    def __repr__(self):
        return f"Series(order={self.order}, shape={self.c.shape[1:]})"
