"""Sparse multivariate polynomials over voltage components.

Monomials are exponent tuples; polynomials map monomials to float
coefficients and never store exact zeros.  A ``MomentIndex`` enumerates all
exponent vectors up to a degree bound in graded lexicographic order and is
the single source of truth for how matrix rows/columns and lifted-variable
positions line up throughout the relaxation machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

# Exponent vector, one entry per active variable.
Monomial = tuple[int, ...]


class DegreeOverflowError(ValueError):
    """A monomial exceeds the degree bound of the target moment index."""


class Polynomial:
    """Sparse polynomial with float coefficients, keyed by exponent tuple."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict[Monomial, float] | None = None):
        self.nvars = nvars
        self.terms: dict[Monomial, float] = {}
        if terms:
            for mono, coef in terms.items():
                if len(mono) != nvars:
                    raise ValueError(f"exponent vector {mono} has wrong length for {nvars} variables")
                if coef != 0.0:
                    self.terms[mono] = self.terms.get(mono, 0.0) + coef

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value} if value != 0.0 else {})

    @classmethod
    def variable(cls, nvars: int, index: int, coef: float = 1.0) -> "Polynomial":
        mono = tuple(1 if i == index else 0 for i in range(nvars))
        return cls(nvars, {mono: coef})

    @property
    def degree(self) -> int:
        """Max term degree; 0 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, float(other))
        if other.nvars != self.nvars:
            raise ValueError("polynomials over different variable spaces")
        out = dict(self.terms)
        for mono, coef in other.terms.items():
            acc = out.get(mono, 0.0) + coef
            if acc == 0.0:
                out.pop(mono, None)
            else:
                out[mono] = acc
        result = Polynomial(self.nvars)
        result.terms = out
        return result

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        result = Polynomial(self.nvars)
        result.terms = {m: -c for m, c in self.terms.items()}
        return result

    def __sub__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, float(other))
        return self + (-other)

    def __rsub__(self, other: float) -> "Polynomial":
        return Polynomial.constant(self.nvars, float(other)) + (-self)

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if not isinstance(other, Polynomial):
            result = Polynomial(self.nvars)
            if other != 0.0:
                result.terms = {m: c * other for m, c in self.terms.items()}
            return result
        if other.nvars != self.nvars:
            raise ValueError("polynomials over different variable spaces")
        out: dict[Monomial, float] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                acc = out.get(mono, 0.0) + c1 * c2
                if acc == 0.0:
                    out.pop(mono, None)
                else:
                    out[mono] = acc
        result = Polynomial(self.nvars)
        result.terms = out
        return result

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __repr__(self) -> str:
        if not self.terms:
            return f"Polynomial({self.nvars}, 0)"
        parts = [f"{c:+g}*x^{m}" for m, c in sorted(self.terms.items())]
        return f"Polynomial({self.nvars}, {' '.join(parts)})"

    def shifted(self, offsets) -> "Polynomial":
        """Compose with the translation x -> x + offsets.

        Returns q with q(x) = p(x + offsets), expanded term by term via the
        binomial theorem.  Used to recenter a problem around an operating
        point, which dramatically improves the conditioning of high-order
        moment bases on small regions.
        """
        offsets = np.asarray(offsets, dtype=float)
        if offsets.shape != (self.nvars,):
            raise ValueError(f"offsets must have length {self.nvars}")
        from math import comb as _comb

        out: dict[Monomial, float] = {}
        for mono, coef in self.terms.items():
            # expand prod_i (x_i + c_i)^{e_i}
            partial: dict[Monomial, float] = {(0,) * self.nvars: coef}
            for i, e in enumerate(mono):
                if e == 0:
                    continue
                c = offsets[i]
                nxt: dict[Monomial, float] = {}
                for base_mono, base_coef in partial.items():
                    for k in range(e + 1):
                        w = base_coef * _comb(e, k) * (c ** (e - k) if e != k else 1.0)
                        if w == 0.0:
                            continue
                        new_mono = list(base_mono)
                        new_mono[i] += k
                        key = tuple(new_mono)
                        nxt[key] = nxt.get(key, 0.0) + w
                partial = nxt
            for m2, c2 in partial.items():
                acc = out.get(m2, 0.0) + c2
                if acc == 0.0:
                    out.pop(m2, None)
                else:
                    out[m2] = acc
        result = Polynomial(self.nvars)
        result.terms = {m: c for m, c in out.items() if c != 0.0}
        return result

    def evaluate(self, point) -> float:
        """Direct sum of coefficient times monomial value at ``point``."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.nvars,):
            raise ValueError(
                f"point has length {point.shape}, expected ({self.nvars},)"
            )
        total = 0.0
        for mono, coef in self.terms.items():
            val = coef
            for v, e in zip(point, mono):
                if e:
                    val *= v ** e
            total += val
        return total


def poly_eval(p: Polynomial, point) -> float:
    return p.evaluate(point)


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def graded_monomials(nvars: int, degree: int) -> list[Monomial]:
    """All exponent vectors with total degree <= ``degree``, graded lex order.

    Within each degree block, earlier variables sort first, so for three
    variables the degree-2 block reads x0^2, x0*x1, x0*x2, x1^2, x1*x2, x2^2.
    """
    out: list[Monomial] = []
    for d in range(degree + 1):
        for combo in combinations_with_replacement(range(nvars), d):
            exp = [0] * nvars
            for idx in combo:
                exp[idx] += 1
            out.append(tuple(exp))
    return out


class MomentIndex:
    """Bijection between exponent vectors up to a degree bound and positions.

    Position 0 is always the constant monomial.  The basis has exactly
    C(nvars + degree, degree) entries.
    """

    __slots__ = ("nvars", "degree", "exponents", "_pos", "_exp_matrix")

    def __init__(self, nvars: int, degree: int):
        if nvars < 1 or degree < 0:
            raise ValueError("need nvars >= 1 and degree >= 0")
        self.nvars = nvars
        self.degree = degree
        self.exponents: list[Monomial] = graded_monomials(nvars, degree)
        self._pos: dict[Monomial, int] = {m: i for i, m in enumerate(self.exponents)}
        self._exp_matrix: np.ndarray | None = None
        assert len(self.exponents) == comb(nvars + degree, degree)

    def __len__(self) -> int:
        return len(self.exponents)

    def position(self, mono: Monomial) -> int:
        try:
            return self._pos[mono]
        except KeyError:
            raise DegreeOverflowError(
                f"monomial {mono} of degree {sum(mono)} exceeds index degree {self.degree}"
            ) from None

    @property
    def exponent_matrix(self) -> np.ndarray:
        """(len, nvars) int64 matrix of all exponent vectors, row i = position i."""
        if self._exp_matrix is None:
            self._exp_matrix = np.array(self.exponents, dtype=np.int64)
        return self._exp_matrix


@dataclass
class LinearExpr:
    """Sparse linear expression over moment-variable positions."""

    coeffs: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = {k: v for k, v in self.coeffs.items() if v != 0.0}

    def add_term(self, pos: int, coef: float) -> None:
        acc = self.coeffs.get(pos, 0.0) + coef
        if acc == 0.0:
            self.coeffs.pop(pos, None)
        else:
            self.coeffs[pos] = acc

    def __add__(self, other: "LinearExpr") -> "LinearExpr":
        out = LinearExpr(dict(self.coeffs))
        for pos, coef in other.coeffs.items():
            out.add_term(pos, coef)
        return out

    def scaled(self, factor: float) -> "LinearExpr":
        if factor == 0.0:
            return LinearExpr()
        return LinearExpr({k: v * factor for k, v in self.coeffs.items()})

    def evaluate(self, y: np.ndarray) -> float:
        return float(sum(c * y[p] for p, c in self.coeffs.items()))

    def is_zero(self) -> bool:
        return not self.coeffs


def apply_functional(p: Polynomial, idx: MomentIndex) -> LinearExpr:
    """Replace each monomial by its moment variable, keeping coefficients.

    Raises DegreeOverflowError naming the offending monomial when the
    polynomial degree exceeds the index bound.
    """
    if p.nvars != idx.nvars:
        raise ValueError("polynomial and index have different variable counts")
    out = LinearExpr()
    for mono, coef in p.terms.items():
        out.add_term(idx.position(mono), coef)
    return out


def lift_point(point, idx: MomentIndex) -> np.ndarray:
    """Moment vector of a point: entry alpha equals point**alpha, entry 0 is 1."""
    point = np.asarray(point, dtype=float)
    if point.shape != (idx.nvars,):
        raise ValueError(f"point has shape {point.shape}, expected ({idx.nvars},)")
    exps = idx.exponent_matrix
    with np.errstate(invalid="ignore"):
        powers = np.where(exps == 0, 1.0, point[np.newaxis, :] ** exps)
    return np.prod(powers, axis=1)
