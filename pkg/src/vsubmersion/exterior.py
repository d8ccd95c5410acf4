"""Exterior algebra of an m-dimensional inner-product space.

Forms are stored as ``{increasing index tuple: coefficient}`` with 1-based
indices.  The module-level ``*_coeffs`` helpers only use ``+``, ``-`` and ``*``
on coefficients, so the same code serves plain floats (``MultiIndexForm``) and
jet- or array-valued coefficients used by the geometry layer.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


class ExteriorError(ValueError):
    pass


def merge_sign(left: tuple[int, ...], right: tuple[int, ...]):
    """Sign and sorted tuple of ``left + right``; ``(0, None)`` on a repeated index."""
    if set(left) & set(right):
        return 0, None
    # count inversions between the two increasing runs
    inv = 0
    for a in left:
        for b in right:
            if a > b:
                inv += 1
    return (-1 if inv % 2 else 1), tuple(sorted(left + right))


def increasing_tuples(m: int, p: int):
    return list(itertools.combinations(range(1, m + 1), p))


def _accumulate(out: dict, key, term):
    if key in out:
        out[key] = out[key] + term
    else:
        out[key] = term


def wedge_coeffs(a: Mapping, b: Mapping) -> dict:
    out: dict = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            s, key = merge_sign(ka, kb)
            if s == 0:
                continue
            term = ca * cb
            _accumulate(out, key, term if s > 0 else -term)
    return out


def ext_coeffs(xi, a: Mapping) -> dict:
    """``xi ^ a`` where ``xi`` is a sequence of m covector components."""
    out: dict = {}
    for k, c in a.items():
        for j, x in enumerate(xi, start=1):
            if j in k:
                continue
            s, key = merge_sign((j,), k)
            term = x * c
            _accumulate(out, key, term if s > 0 else -term)
    return out


def int_coeffs(xi, a: Mapping) -> dict:
    """Interior product by the metric dual of ``xi`` (orthonormal basis)."""
    out: dict = {}
    for k, c in a.items():
        for pos, j in enumerate(k):
            term = xi[j - 1] * c
            key = k[:pos] + k[pos + 1:]
            _accumulate(out, key, -term if pos % 2 else term)
    return out


def basis_ext(j: int, a: Mapping) -> dict:
    """``e^j ^ a`` for a basis covector, without touching the other components."""
    out: dict = {}
    for k, c in a.items():
        if j in k:
            continue
        s, key = merge_sign((j,), k)
        out[key] = c if s > 0 else -c
    return out


def basis_int(j: int, a: Mapping) -> dict:
    out: dict = {}
    for k, c in a.items():
        if j in k:
            pos = k.index(j)
            key = k[:pos] + k[pos + 1:]
            out[key] = -c if pos % 2 else c
    return out


def pullback_coeffs(rows, a: Mapping, m_out: int) -> dict:
    """Pull back by the linear map whose i-th row (as a covector on the target) is ``rows[i]``.

    ``rows[i][j]`` is the matrix entry ``A[i, j]``: the pulled-back covector
    ``A^T e^i`` has components ``rows[i]``.
    """
    out: dict = {}
    for k, c in a.items():
        piece: dict = {(): c}
        for i in k:
            piece = ext_right(piece, rows[i - 1])
        for key, v in piece.items():
            _accumulate(out, key, v)
    return out


def ext_right(a: Mapping, xi) -> dict:
    """``a ^ xi`` (covector on the right)."""
    out: dict = {}
    for k, c in a.items():
        for j, x in enumerate(xi, start=1):
            if j in k:
                continue
            s, key = merge_sign(k, (j,))
            term = c * x
            _accumulate(out, key, term if s > 0 else -term)
    return out


@dataclass(frozen=True)
class Covector:
    components: tuple[float, ...]

    def __init__(self, components):
        object.__setattr__(self, "components", tuple(float(c) for c in components))

    @property
    def dimension(self) -> int:
        return len(self.components)

    @classmethod
    def basis(cls, j: int, m: int) -> "Covector":
        c = [0.0] * m
        c[j - 1] = 1.0
        return cls(c)

    def as_form(self) -> "MultiIndexForm":
        return MultiIndexForm(self.dimension, 1, {(j + 1,): c for j, c in enumerate(self.components)})


@dataclass(frozen=True)
class MultiIndexForm:
    """Alternating p-tensor on R^m in the standard orthonormal coframe."""

    dimension: int
    degree: int
    coeffs: Mapping[tuple[int, ...], float] = field(default_factory=dict)

    def __post_init__(self):
        m, p = self.dimension, self.degree
        if not 0 <= p <= m:
            raise ExteriorError(f"degree {p} outside 0..{m}")
        clean = {}
        for k, c in self.coeffs.items():
            k = tuple(int(i) for i in k)
            if len(k) != p or any(i < 1 or i > m for i in k) or any(
                    k[i] >= k[i + 1] for i in range(len(k) - 1)):
                raise ExteriorError(f"bad multi-index {k} for a {p}-form on R^{m}")
            c = float(c)
            if c != 0.0:
                clean[k] = c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def scalar(cls, value: float, m: int) -> "MultiIndexForm":
        return cls(m, 0, {(): value})

    @classmethod
    def basis(cls, indices, m: int) -> "MultiIndexForm":
        """Signed basis element ``e^{i1} ^ ... ^ e^{ip}`` for any index order."""
        form = cls.scalar(1.0, m)
        for i in indices:
            form = wedge(form, Covector.basis(i, m).as_form())
        return form

    def __getitem__(self, key) -> float:
        return self.coeffs.get(tuple(key), 0.0)

    def __add__(self, other: "MultiIndexForm") -> "MultiIndexForm":
        _check_same(self, other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0.0) + c
        return MultiIndexForm(self.dimension, self.degree, out)

    def __sub__(self, other: "MultiIndexForm") -> "MultiIndexForm":
        return self + (-1.0) * other

    def __mul__(self, s: float) -> "MultiIndexForm":
        return MultiIndexForm(self.dimension, self.degree, {k: s * c for k, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return -1.0 * self

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self)))

    def to_array(self) -> np.ndarray:
        keys = increasing_tuples(self.dimension, self.degree)
        return np.array([self[k] for k in keys])


def _check_same(a: MultiIndexForm, b: MultiIndexForm):
    if a.dimension != b.dimension:
        raise ExteriorError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if a.degree != b.degree:
        raise ExteriorError(f"degree mismatch: {a.degree} vs {b.degree}")


def _check_dim(xi: Covector, a: MultiIndexForm):
    if xi.dimension != a.dimension:
        raise ExteriorError(f"dimension mismatch: {xi.dimension} vs {a.dimension}")


def wedge(a: MultiIndexForm, b: MultiIndexForm) -> MultiIndexForm:
    if a.dimension != b.dimension:
        raise ExteriorError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if a.degree + b.degree > a.dimension:
        raise ExteriorError(f"degree {a.degree}+{b.degree} exceeds dimension {a.dimension}")
    return MultiIndexForm(a.dimension, a.degree + b.degree, wedge_coeffs(a.coeffs, b.coeffs))


def ext_mul(xi: Covector, a: MultiIndexForm) -> MultiIndexForm:
    _check_dim(xi, a)
    if a.degree == a.dimension:
        return MultiIndexForm(a.dimension, a.degree, {})
    return MultiIndexForm(a.dimension, a.degree + 1, ext_coeffs(xi.components, a.coeffs))


def int_mul(xi: Covector, a: MultiIndexForm) -> MultiIndexForm:
    _check_dim(xi, a)
    if a.degree == 0:
        return MultiIndexForm(a.dimension, 0, {})
    return MultiIndexForm(a.dimension, a.degree - 1, int_coeffs(xi.components, a.coeffs))


def inner(a: MultiIndexForm, b: MultiIndexForm) -> float:
    _check_same(a, b)
    return float(sum(c * b.coeffs.get(k, 0.0) for k, c in a.coeffs.items()))


def pullback_linear(A, a: MultiIndexForm) -> MultiIndexForm:
    """``(A^* a)(v_1..v_p) = a(A v_1, .., A v_p)``.

    ``A`` has one row per dimension of ``a``; the result lives on R^(columns of A).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != a.dimension:
        raise ExteriorError(f"matrix of shape {A.shape} cannot pull back a form on R^{a.dimension}")
    m_out = A.shape[1]
    if a.degree > m_out:
        raise ExteriorError(f"a {a.degree}-form cannot live on R^{m_out}")
    return MultiIndexForm(m_out, a.degree, pullback_coeffs(list(A), a.coeffs, m_out))

