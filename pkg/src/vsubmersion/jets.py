"""Truncated multivariate Taylor jets.

A :class:`Jet` is an array of truncated Taylor polynomials in ``m`` variables.
``coeffs`` has shape ``(*shape, M)`` where ``M`` is the number of monomials of
total degree ``<= K``; the leading axes are ordinary array axes (sample points,
tensor indices) and broadcast like numpy arrays.  Arithmetic is exact through
the jet's ``order``; differentiating lowers the order by one.

Coefficients are Taylor coefficients, not derivatives: the coefficient of
``h**alpha`` is ``D^alpha f / alpha!``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_ORDER = 4


@dataclass(frozen=True, eq=False)
class JetSpace:
    nvars: int
    max_order: int
    monomials: tuple[tuple[int, ...], ...]
    degrees: np.ndarray
    index: dict
    # product table, sorted by target monomial for reduceat
    left: np.ndarray
    right: np.ndarray
    starts: np.ndarray
    # derivative tables: deriv_src[k][t] is the source monomial for target t
    deriv_src: tuple[np.ndarray, ...]
    deriv_fac: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return len(self.monomials)


@functools.lru_cache(maxsize=None)
def jet_space(nvars: int, max_order: int = DEFAULT_ORDER) -> JetSpace:
    monos = []
    for deg in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            alpha = [0] * nvars
            for k in combo:
                alpha[k] += 1
            monos.append(tuple(alpha))
    index = {a: i for i, a in enumerate(monos)}
    degrees = np.array([sum(a) for a in monos])

    pairs = []
    for i, a in enumerate(monos):
        for j, b in enumerate(monos):
            if degrees[i] + degrees[j] <= max_order:
                t = index[tuple(x + y for x, y in zip(a, b))]
                pairs.append((t, i, j))
    pairs.sort()
    tgt = np.array([p[0] for p in pairs])
    left = np.array([p[1] for p in pairs])
    right = np.array([p[2] for p in pairs])
    starts = np.searchsorted(tgt, np.arange(len(monos)))

    deriv_src, deriv_fac = [], []
    for k in range(nvars):
        src = np.zeros(len(monos), dtype=int)
        fac = np.zeros(len(monos))
        for t, a in enumerate(monos):
            if degrees[t] < max_order:
                up = list(a)
                up[k] += 1
                src[t] = index[tuple(up)]
                fac[t] = up[k]
        deriv_src.append(src)
        deriv_fac.append(fac)
    return JetSpace(nvars, max_order, tuple(monos), degrees, index,
                    left, right, starts, tuple(deriv_src), tuple(deriv_fac))


@functools.lru_cache(maxsize=None)
def _pair_table(space: JetSpace, order: int):
    """Product table restricted to monomials of degree <= ``order`` (a prefix of the monomial list)."""
    n = int(np.searchsorted(space.degrees, order, side="right"))
    keep = space.degrees[space.left] + space.degrees[space.right] <= order
    left, right = space.left[keep], space.right[keep]
    tgt = np.repeat(np.arange(space.size), np.diff(np.append(space.starts, len(space.left))))[keep]
    return left, right, np.searchsorted(tgt, np.arange(n)), n


class Jet:
    """Array of truncated Taylor polynomials sharing one :class:`JetSpace`."""

    __array_priority__ = 1000

    def __init__(self, coeffs, space: JetSpace, order: int | None = None):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.space = space
        self.order = space.max_order if order is None else order
        if self.coeffs.shape[-1] != space.size:
            raise ValueError("coefficient axis does not match jet space")

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value, space: JetSpace, order: int | None = None) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros(value.shape + (space.size,))
        c[..., 0] = value
        return cls(c, space, order)

    @classmethod
    def variables(cls, point, order: int = DEFAULT_ORDER) -> list["Jet"]:
        """Coordinate jets ``x_k + h_k`` at ``point`` of shape ``(..., m)``."""
        point = np.asarray(point, dtype=float)
        m = point.shape[-1]
        space = jet_space(m, order)
        out = []
        for k in range(m):
            c = np.zeros(point.shape[:-1] + (space.size,))
            c[..., 0] = point[..., k]
            if order >= 1:
                e = [0] * m
                e[k] = 1
                c[..., space.index[tuple(e)]] = 1.0
            out.append(cls(c, space))
        return out

    # -- array protocol -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[:-1]

    @property
    def ndim(self) -> int:
        return self.coeffs.ndim - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[..., 0]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        if not any(i is Ellipsis for i in idx):
            idx = idx + (Ellipsis,)
        return Jet(self.coeffs[idx + (slice(None),)], self.space, self.order)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, nvars={self.space.nvars}, order={self.order})"

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a - 1 if a < 0 else a for a in axes)
        return Jet(self.coeffs.sum(axis=axes), self.space, self.order)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet(self.coeffs.reshape(shape + (self.space.size,)), self.space, self.order)

    def expand(self, axis: int) -> "Jet":
        axis = axis - 1 if axis < 0 else axis
        return Jet(np.expand_dims(self.coeffs, axis), self.space, self.order)

    def swapaxes(self, a: int, b: int) -> "Jet":
        a = a - 1 if a < 0 else a
        b = b - 1 if b < 0 else b
        return Jet(np.swapaxes(self.coeffs, a, b), self.space, self.order)

    # -- arithmetic ------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets live in different jet spaces")
            return other
        return Jet.constant(other, self.space, self.space.max_order)

    def _truncate(self, c: np.ndarray, order: int) -> np.ndarray:
        if order < self.space.max_order:
            c = np.where(self.space.degrees <= order, c, 0.0)
        return c

    def __add__(self, other):
        o = self._coerce(other)
        return Jet(self.coeffs + o.coeffs, self.space, min(self.order, o.order))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.space, self.order)

    def __sub__(self, other):
        o = self._coerce(other)
        return Jet(self.coeffs - o.coeffs, self.space, min(self.order, o.order))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.coeffs * other[..., None], self.space, self.order)
        o = self._coerce(other)
        sp = self.space
        order = min(self.order, o.order)
        if order == sp.max_order:
            prod = self.coeffs[..., sp.left] * o.coeffs[..., sp.right]
            return Jet(np.add.reduceat(prod, sp.starts, axis=-1), sp, order)
        left, right, starts, n = _pair_table(sp, order)
        prod = self.coeffs[..., left] * o.coeffs[..., right]
        c = np.zeros(prod.shape[:-1] + (sp.size,))
        c[..., :n] = np.add.reduceat(prod, starts, axis=-1)
        return Jet(c, sp, order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.coeffs / other[..., None], self.space, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if isinstance(n, (int, np.integer)) and n >= 0:
            out = Jet.constant(np.ones(self.shape), self.space, self.order)
            base = self
            while n:
                if n & 1:
                    out = out * base
                n >>= 1
                if n:
                    base = base * base
            return out
        return self.power(float(n))

    # -- calculus --------------------------------------------------------
    def deriv(self, k: int) -> "Jet":
        """Partial derivative in variable ``k``; the result has order reduced by one."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        sp = self.space
        c = self.coeffs[..., sp.deriv_src[k]] * sp.deriv_fac[k]
        order = self.order - 1
        return Jet(self._truncate(c, order), sp, order)

    def derivative(self, alpha) -> np.ndarray:
        """Value of the mixed partial ``D^alpha`` at the expansion point."""
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ValueError("derivative order exceeds jet order")
        fac = math.prod(math.factorial(a) for a in alpha)
        return self.coeffs[..., self.space.index[alpha]] * fac

    def gradient(self) -> np.ndarray:
        m = self.space.nvars
        return np.stack([self.coeffs[..., 1 + k] for k in range(m)], axis=-1) \
            if self.order >= 1 else np.zeros(self.shape + (m,))

    # -- composition with analytic functions -------------------------------
    def _compose(self, taylor: list[np.ndarray]) -> "Jet":
        """``f(self)`` given ``taylor[n] = f^(n)(a0)/n!`` evaluated at the value."""
        a0 = self.value
        h = Jet(self.coeffs.copy(), self.space, self.order)
        h.coeffs[..., 0] = 0.0
        out = Jet.constant(taylor[self.order] * np.ones_like(a0), self.space, self.order)
        for n in range(self.order - 1, -1, -1):
            out = out * h + taylor[n]
        return out

    def power(self, r: float) -> "Jet":
        a0 = self.value
        taylor = [a0 ** r]
        coef = 1.0
        for n in range(1, self.order + 1):
            coef *= (r - n + 1) / n
            taylor.append(coef * a0 ** (r - n))
        return self._compose(taylor)

    def reciprocal(self) -> "Jet":
        a0 = self.value
        inv = 1.0 / a0
        taylor = [inv ** (n + 1) * (-1) ** n for n in range(self.order + 1)]
        return self._compose(taylor)

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._compose([e / math.factorial(n) for n in range(self.order + 1)])

    def log(self) -> "Jet":
        a0 = self.value
        taylor = [np.log(a0)]
        taylor += [(-1) ** (n + 1) / (n * a0 ** n) for n in range(1, self.order + 1)]
        return self._compose(taylor)

    def sin(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [s, c, -s, -c]
        return self._compose([cyc[n % 4] / math.factorial(n) for n in range(self.order + 1)])

    def cos(self) -> "Jet":
        s, c = np.sin(self.value), np.cos(self.value)
        cyc = [c, -s, -c, s]
        return self._compose([cyc[n % 4] / math.factorial(n) for n in range(self.order + 1)])


# Scalar functions that accept floats, arrays and jets alike, so model code can
# be written once and evaluated either pointwise or as jets.

def _dispatch(name, npfunc):
    def f(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        return npfunc(x)
    f.__name__ = name
    return f


sin = _dispatch("sin", np.sin)
cos = _dispatch("cos", np.cos)
exp = _dispatch("exp", np.exp)
log = _dispatch("log", np.log)
sqrt = _dispatch("sqrt", np.sqrt)


def value_of(x):
    """Expansion-point value of a jet (identity on plain numbers)."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def deriv(x, k: int):
    """Partial derivative of a jet; constants differentiate to zero."""
    if isinstance(x, Jet):
        return x.deriv(k)
    return 0.0 * np.asarray(x, dtype=float)


def order_of(x) -> int:
    return x.order if isinstance(x, Jet) else 10**9


# -- jet linear algebra ---------------------------------------------------

def stack(items, axis: int = 0) -> Jet:
    """Stack jets (or constants) along a new leading-style axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        raise ValueError("stack needs at least one jet")
    sp = jets[0].space
    order = min(j.order for j in jets)
    coerced = [x if isinstance(x, Jet) else Jet.constant(x, sp) for x in items]
    shape = np.broadcast_shapes(*(j.shape for j in coerced))
    arrs = [np.broadcast_to(j.coeffs, shape + (sp.size,)) for j in coerced]
    axis = axis - 1 if axis < 0 else axis
    return Jet(np.stack(arrs, axis=axis), sp, order)


def matrix(rows) -> Jet:
    """Build a jet of shape ``(..., r, c)`` from nested lists of scalar-shaped jets."""
    return stack([stack(list(r), axis=-1) for r in rows], axis=-2)


def matmul(a: Jet, b) -> Jet:
    if isinstance(b, Jet):
        return (a.expand(-1) * b.expand(-3)).sum(axis=-2)
    b = np.asarray(b, dtype=float)
    return Jet(np.einsum("...ijm,...jk->...ikm", a.coeffs, b), a.space, a.order)


def matvec(a: Jet, v) -> Jet:
    if isinstance(v, Jet):
        return (a * v.expand(-2)).sum(axis=-1)
    v = np.asarray(v, dtype=float)
    return Jet(np.einsum("...ijm,...j->...im", a.coeffs, v), a.space, a.order)


def transpose(a: Jet) -> Jet:
    return a.swapaxes(-1, -2)


def inv(a: Jet) -> Jet:
    """Inverse of a jet of square matrices via the nilpotent Neumann series."""
    sp = a.space
    a0 = a.value
    a0inv = np.linalg.inv(a0)
    nil = Jet(a.coeffs.copy(), sp, a.order)
    nil.coeffs[..., 0] = 0.0
    x = -matmul(Jet.constant(a0inv, sp, a.order), nil)
    term = Jet.constant(np.broadcast_to(np.eye(a0.shape[-1]), a0.shape), sp, a.order)
    total = term
    for _ in range(a.order):
        term = matmul(x, term)
        total = total + term
    return matmul(total, a0inv)


def det(a: Jet) -> Jet:
    """Determinant by cofactor expansion (matrices here are at most 6x6)."""
    n = a.shape[-1]
    if n == 1:
        return a[..., 0, 0]
    if n == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    total = None
    for j in range(n):
        cols = [c for c in range(n) if c != j]
        minor = Jet(a.coeffs[..., 1:, cols, :], a.space, a.order)
        term = a[..., 0, j] * det(minor)
        if j % 2:
            term = -term
        total = term if total is None else total + term
    return total
