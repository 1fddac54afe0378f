"""Differential forms as point-evaluable covector fields."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .algebra import (
    DimensionMismatch,
    Frame,
    KCovector,
    _index_table,
    _minors,
    multi_indices,
)

__all__ = [
    "CapabilityError",
    "FormField",
    "ConstantForm",
    "FunctionForm",
    "PolynomialForm",
    "SmoothMap",
    "linear_map",
    "compose",
    "evaluate",
    "exterior_derivative",
    "pullback",
    "integrate_over_chain",
    "segment_rule",
    "triangle_rule",
]

ANALYTIC = "analytic_derivative"
AUTODIFF = "autodiff_derivative"
FINITE_DIFFERENCE = "finite_difference_only"


class CapabilityError(ValueError):
    """The form cannot provide the requested kind of derivative."""


def _fd_step(x: np.ndarray) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


class FormField:
    """A k-covector field on R^d.

    Subclasses implement :meth:`evaluate`. :meth:`pair` and
    :meth:`directional_derivative` have generic implementations that a
    subclass may override with something cheaper or exact.
    """

    capability = FINITE_DIFFERENCE

    def __init__(self, d: int, k: int):
        if not 0 <= k <= d:
            raise DimensionMismatch(f"grade {k} not in [0, {d}]")
        self.d = d
        self.k = k

    def evaluate(self, x) -> KCovector:
        raise NotImplementedError

    def __call__(self, x) -> KCovector:
        return self.evaluate(x)

    def pair(self, x, columns) -> float:
        """``<omega(x), v1 ^ ... ^ vk>`` for the columns of a d x k matrix."""
        w = self.evaluate(x)
        cols = np.asarray(columns, dtype=float).reshape(self.d, self.k)
        return float(_minors(cols) @ w.coeffs)

    def directional_derivative(self, x, columns, direction) -> float:
        """``grad_x <omega(x), xi> . u`` for a fixed k-vector xi given by columns."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(direction, dtype=float)
        h = _fd_step(x)
        return (self.pair(x + h * u, columns) - self.pair(x - h * u, columns)) / (2.0 * h)


def evaluate(form: FormField, x) -> KCovector:
    w = form.evaluate(np.asarray(x, dtype=float))
    if (w.d, w.k) != (form.d, form.k):
        raise DimensionMismatch("form returned a covector of the wrong shape")
    return w


class ConstantForm(FormField):
    capability = ANALYTIC

    def __init__(self, covector: KCovector):
        super().__init__(covector.d, covector.k)
        self.covector = KCovector(covector.d, covector.k, covector.coeffs)

    def evaluate(self, x) -> KCovector:
        return self.covector

    def directional_derivative(self, x, columns, direction) -> float:
        return 0.0


class FunctionForm(FormField):
    """Wraps a callable ``x -> coefficient array``; derivatives by central differences."""

    def __init__(self, d: int, k: int, fn: Callable[[np.ndarray], np.ndarray]):
        super().__init__(d, k)
        self.fn = fn

    def evaluate(self, x) -> KCovector:
        return KCovector(self.d, self.k, self.fn(np.asarray(x, dtype=float)))


class PolynomialForm(FormField):
    """``sum_I p_I(x) dx_I`` with each p_I a sparse table of monomials.

    ``terms`` maps a 1-based multi-index to a list of ``(exponents, coef)``.
    """

    capability = ANALYTIC

    def __init__(self, d: int, k: int, terms: dict | None = None):
        super().__init__(d, k)
        table = _index_table(d, k)
        self._exps = [np.zeros((0, d), dtype=np.int64) for _ in table]
        self._coefs = [np.zeros(0) for _ in table]
        for idx, monos in (terms or {}).items():
            slot = table[tuple(idx)]
            e = [np.asarray(m[0], dtype=np.int64).reshape(d) for m in monos]
            c = [float(m[1]) for m in monos]
            if not all(np.isfinite(c)):
                raise ValueError("non-finite polynomial coefficient")
            if any((ee < 0).any() for ee in e):
                raise ValueError("negative exponent")
            if e:
                self._exps[slot] = np.vstack([self._exps[slot], np.array(e)])
                self._coefs[slot] = np.concatenate([self._coefs[slot], c])

    @property
    def degree(self) -> int:
        degs = [int(e.sum(axis=1).max()) for e in self._exps if e.size]
        return max(degs, default=0)

    @property
    def terms(self) -> dict:
        out = {}
        for idx, e, c in zip(multi_indices(self.d, self.k), self._exps, self._coefs):
            nz = c != 0.0
            if nz.any():
                out[idx] = [(tuple(int(v) for v in ee), float(cc)) for ee, cc in zip(e[nz], c[nz])]
        return out

    @staticmethod
    def _poly(e, c, x):
        if c.size == 0:
            return 0.0
        return float(c @ np.prod(x[None, :] ** e, axis=1))

    @staticmethod
    def _dpoly(e, c, x, j):
        if c.size == 0:
            return 0.0
        ej = e[:, j]
        live = ej > 0
        if not live.any():
            return 0.0
        e2 = e[live].copy()
        e2[:, j] -= 1
        return float((c[live] * ej[live]) @ np.prod(x[None, :] ** e2, axis=1))

    def evaluate(self, x) -> KCovector:
        x = np.asarray(x, dtype=float)
        return KCovector(self.d, self.k, [self._poly(e, c, x) for e, c in zip(self._exps, self._coefs)])

    def directional_derivative(self, x, columns, direction) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(direction, dtype=float)
        cols = np.asarray(columns, dtype=float).reshape(self.d, self.k)
        xi = _minors(cols)
        grad = np.array([
            [self._dpoly(e, c, x, j) for j in range(self.d)] for e, c in zip(self._exps, self._coefs)
        ])
        return float(xi @ grad @ u)

    def d_form(self) -> "PolynomialForm":
        """Exterior derivative ``sum_I sum_j (d_j p_I) dx_j ^ dx_I`` as a new polynomial form."""
        if self.k == self.d:
            raise DimensionMismatch(f"exterior derivative of a {self.d}-form in R^{self.d} has grade {self.d + 1}")
        out: dict = {}
        for idx, e, c in zip(multi_indices(self.d, self.k), self._exps, self._coefs):
            for j in range(1, self.d + 1):
                if j in idx:
                    continue
                sign = -1.0 if sum(1 for i in idx if i < j) % 2 else 1.0
                new = tuple(sorted(idx + (j,)))
                for ee, cc in zip(e, c):
                    if ee[j - 1] == 0 or cc == 0.0:
                        continue
                    e2 = ee.copy()
                    e2[j - 1] -= 1
                    out.setdefault(new, []).append((e2, sign * cc * ee[j - 1]))
        return PolynomialForm(self.d, self.k + 1, out)

    @classmethod
    def random(cls, d: int, k: int, degree: int, rng: np.random.Generator, density: float = 1.0):
        """Random polynomial form with all monomials up to ``degree`` (Gaussian coefficients)."""
        import itertools

        monos = [e for e in itertools.product(range(degree + 1), repeat=d) if sum(e) <= degree]
        terms = {}
        for idx in multi_indices(d, k):
            chosen = [(e, rng.standard_normal()) for e in monos if rng.random() < density]
            if chosen:
                terms[idx] = chosen
        return cls(d, k, terms)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "terms": [
                {"index": ",".join(map(str, idx)),
                 "monomials": [{"exps": list(e), "coef": c} for e, c in monos]}
                for idx, monos in self.terms.items()
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolynomialForm":
        d, k = int(obj["d"]), int(obj["k"])
        terms: dict = {}
        for t in obj.get("terms", []):
            key = str(t["index"]).strip()
            idx = tuple(int(s) for s in key.split(",")) if key else ()
            if len(idx) != k:
                raise ValueError(f"term index {key!r} does not have grade {k}")
            for m in t.get("monomials", []):
                exps = [int(v) for v in m["exps"]]
                if len(exps) != d:
                    raise ValueError(f"monomial exponents {exps} do not have length {d}")
                terms.setdefault(idx, []).append((exps, float(m["coef"])))
        return cls(d, k, terms)


class SmoothMap:
    """``g: R^l -> R^d`` together with its Jacobian ``z -> (d x l)``."""

    def __init__(self, l: int, d: int, fn, jacobian=None):
        self.l = l
        self.d = d
        self.fn = fn
        self._jac = jacobian

    def __call__(self, z) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(z, dtype=float)), dtype=float).reshape(self.d)

    def jacobian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(z), dtype=float).reshape(self.d, self.l)
        h = _fd_step(z)
        cols = [(self(z + h * e) - self(z - h * e)) / (2 * h) for e in np.eye(self.l)]
        return np.column_stack(cols)


def linear_map(A, b=None) -> SmoothMap:
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    return SmoothMap(A.shape[1], A.shape[0], lambda z: A @ z + b, lambda z: A)


def compose(g: SmoothMap, h: SmoothMap) -> SmoothMap:
    """``g o h`` with the chain-rule Jacobian."""
    if h.d != g.l:
        raise DimensionMismatch(f"cannot compose: inner map lands in R^{h.d}, outer expects R^{g.l}")
    return SmoothMap(h.l, g.d, lambda z: g(h(z)), lambda z: g.jacobian(h(z)) @ h.jacobian(z))


def exterior_derivative(form: FormField, x, vectors) -> float:
    """``<d omega(x), v1 ^ ... ^ v_{k+1}>`` via the alternating sum of directional derivatives."""
    vs = [np.asarray(v, dtype=float).reshape(form.d) for v in vectors]
    if len(vs) != form.k + 1:
        raise DimensionMismatch(f"need {form.k + 1} vectors for a {form.k}-form")
    x = np.asarray(x, dtype=float)
    total = 0.0
    for i, vi in enumerate(vs):
        rest = vs[:i] + vs[i + 1:]
        cols = np.column_stack(rest) if rest else np.zeros((form.d, 0))
        total += (-1) ** i * form.directional_derivative(x, cols, vi)
    return total


def pullback(g: SmoothMap, form: FormField, z, vectors) -> float:
    """``<(g^# omega)(z), v1 ^ ... ^ vk> = <omega(g(z)), Dg v1 ^ ... ^ Dg vk>``."""
    if g.d != form.d:
        raise DimensionMismatch(f"map lands in R^{g.d}, form lives on R^{form.d}")
    vs = [np.asarray(v, dtype=float).reshape(g.l) for v in vectors]
    if len(vs) != form.k:
        raise DimensionMismatch(f"need {form.k} vectors for a {form.k}-form")
    J = g.jacobian(z)
    cols = J @ np.column_stack(vs) if vs else np.zeros((g.d, 0))
    return form.pair(g(z), cols)


def segment_rule(order: int):
    """Gauss-Legendre on [0, 1], exact for polynomials of degree ``order``."""
    n = max(1, math.ceil((order + 1) / 2))
    t, w = np.polynomial.legendre.leggauss(n)
    return [np.array([0.5 * (ti + 1.0)]) for ti in t], 0.5 * w


def triangle_rule(order: int):
    """Barycentric-free rule on the reference triangle (0,0),(1,0),(0,1).

    Returns points as (s, t) pairs and weights summing to 1 (fractions of the
    area). Degree <= 2 uses the 3-point symmetric rule; higher degrees use a
    collapsed Gauss product rule exact to the requested degree.
    """
    if order <= 1:
        return [np.array([1 / 3, 1 / 3])], np.array([1.0])
    if order == 2:
        pts = [np.array([1 / 6, 1 / 6]), np.array([2 / 3, 1 / 6]), np.array([1 / 6, 2 / 3])]
        return pts, np.full(3, 1 / 3)
    n = math.ceil((order + 2) / 2)
    a, wa = np.polynomial.legendre.leggauss(n)
    a = 0.5 * (a + 1.0)
    wa = 0.5 * wa
    pts, wts = [], []
    for ui, wu in zip(a, wa):
        for vi, wv in zip(a, wa):
            # (u, v) in the unit square -> (u, (1-u) v) in the triangle; Jacobian (1-u)
            pts.append(np.array([ui, (1.0 - ui) * vi]))
            wts.append(2.0 * wu * wv * (1.0 - ui))
    return pts, np.array(wts)


def _simplex_rule(k: int, order: int):
    if k == 1:
        return segment_rule(order)
    if k == 2:
        return triangle_rule(order)
    raise DimensionMismatch(f"quadrature only implemented for grades 1 and 2, got {k}")


def integrate_over_chain(form: FormField, chain, quadrature_order: int = 2) -> float:
    """Integral of a k-form over a simplicial k-chain.

    Each simplex contributes ``coef * vol * mean_q <omega(x_q), tau>`` where
    ``tau`` is its unit orientation; ``vol * tau = (p1-p0)^..^(pk-p0) / k!``.
    """
    if chain.k != form.k:
        raise DimensionMismatch(f"chain grade {chain.k} != form grade {form.k}")
    cx = chain.complex
    if cx.vertices.shape[1] != form.d:
        raise DimensionMismatch("chain and form live in different dimensions")
    simplices = cx.simplices(chain.k)
    k = chain.k
    total = 0.0
    if k == 0:
        for coef, (i,) in zip(chain.coeffs, simplices):
            if coef != 0.0:
                total += coef * float(form.evaluate(cx.vertices[i]).coeffs[0])
        return total
    pts, wts = _simplex_rule(k, quadrature_order)
    fact = math.factorial(k)
    for coef, simp in zip(chain.coeffs, simplices):
        if coef == 0.0:
            continue
        p = cx.vertices[list(simp)]
        edges = (p[1:] - p[0]).T  # d x k
        acc = 0.0
        for q, w in zip(pts, wts):
            acc += w * form.pair(p[0] + edges @ q, edges)
        total += coef * acc / fact
    return total
