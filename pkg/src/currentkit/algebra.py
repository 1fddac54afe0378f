"""Grassmann algebra over R^d.

k-vectors and k-covectors are stored densely over the ordered multi-indices
``I(d, k)`` in lexicographic order. Simple k-vectors are carried around as
frames (d x k column matrices) and only expanded into coefficients on demand.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy import linalg

MAX_DIM = 16

__all__ = [
    "MAX_DIM",
    "DimensionMismatch",
    "UnsupportedExactMode",
    "multi_indices",
    "index_of",
    "KVector",
    "KCovector",
    "Frame",
    "basis",
    "wedge",
    "wedge_all",
    "frame_to_kvector",
    "inner",
    "euclidean_norm",
    "spectral_decompose_2vector",
    "comass",
    "mass",
    "haar_frame_sample",
    "kvector_from_json",
    "kvector_to_json",
]


class DimensionMismatch(ValueError):
    """Ambient dimension or grade of two operands do not fit together."""


class UnsupportedExactMode(ValueError):
    """Exact mass/comass requested for a grade without a closed form."""


@lru_cache(maxsize=None)
def multi_indices(d: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All 1-based ordered multi-indices ``i1 < ... < ik`` in lexicographic order."""
    if not 0 <= k <= d:
        raise DimensionMismatch(f"grade {k} not in [0, {d}]")
    return tuple(itertools.combinations(range(1, d + 1), k))


@lru_cache(maxsize=None)
def _index_table(d: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: n for n, idx in enumerate(multi_indices(d, k))}


@lru_cache(maxsize=None)
def _index_array(d: int, k: int) -> np.ndarray:
    arr = np.array(multi_indices(d, k), dtype=np.intp).reshape(comb(d, k), k)
    return arr - 1


def index_of(indices, d: int) -> int:
    idx = tuple(int(i) for i in indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index {idx} is not strictly increasing")
    try:
        return _index_table(d, len(idx))[idx]
    except KeyError:
        raise ValueError(f"multi-index {idx} out of range for d={d}") from None


def _check_dim(d: int) -> None:
    if not 1 <= d <= MAX_DIM:
        raise DimensionMismatch(f"ambient dimension {d} outside [1, {MAX_DIM}]")


@dataclass(frozen=True, eq=False)
class KVector:
    d: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        _check_dim(self.d)
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != comb(self.d, self.k):
            raise DimensionMismatch(
                f"expected {comb(self.d, self.k)} coefficients for d={self.d}, k={self.k}, got {c.size}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, d: int, k: int):
        return cls(d, k, np.zeros(comb(d, k)))

    @classmethod
    def from_dict(cls, d: int, k: int, entries: dict):
        c = np.zeros(comb(d, k))
        for idx, val in entries.items():
            c[index_of(idx, d)] += float(val)
        return cls(d, k, c)

    def items(self):
        for idx, val in zip(multi_indices(self.d, self.k), self.coeffs):
            if val != 0.0:
                yield idx, float(val)

    def _like(self, coeffs):
        return type(self)(self.d, self.k, coeffs)

    def _check_same(self, other):
        if type(other) is not type(self):
            raise DimensionMismatch(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if (self.d, self.k) != (other.d, other.k):
            raise DimensionMismatch(f"(d, k) mismatch: {(self.d, self.k)} vs {(other.d, other.k)}")

    def __add__(self, other):
        self._check_same(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same(other)
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, c):
        return self._like(float(c) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._like(self.coeffs / float(c))

    def allclose(self, other, atol=1e-12) -> bool:
        self._check_same(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def dual(self):
        """Coefficient-isomorphic element of the dual space."""
        target = KCovector if type(self) is KVector else KVector
        return target(self.d, self.k, self.coeffs)

    def __repr__(self):
        terms = " + ".join(f"{v:g}*{''.join(map(str, i)) or '1'}" for i, v in self.items()) or "0"
        return f"{type(self).__name__}(d={self.d}, k={self.k}: {terms})"


class KCovector(KVector):
    """Same storage as :class:`KVector`, over the dual basis ``dx_I``."""


def basis(d: int, indices, covector: bool = False) -> KVector:
    """Basis element ``e_I`` (or ``dx_I``) for a 1-based multi-index."""
    cls = KCovector if covector else KVector
    return cls.from_dict(d, len(tuple(indices)), {tuple(indices): 1.0})


@dataclass(frozen=True, eq=False)
class Frame:
    """d x k matrix whose columns are the factors of a simple k-vector."""

    columns: np.ndarray

    def __post_init__(self):
        m = np.array(self.columns, dtype=float)
        if m.ndim != 2:
            raise DimensionMismatch("frame must be a d x k matrix")
        if m.shape[1] < 1:
            raise DimensionMismatch("frame grade must be at least 1")
        if m.shape[1] > m.shape[0]:
            raise DimensionMismatch(f"grade {m.shape[1]} exceeds dimension {m.shape[0]}")
        m.setflags(write=False)
        object.__setattr__(self, "columns", m)

    @classmethod
    def from_vectors(cls, *vectors):
        return cls(np.column_stack([np.asarray(v, dtype=float) for v in vectors]))

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def k(self) -> int:
        return self.columns.shape[1]


@lru_cache(maxsize=None)
def _wedge_table(d: int, j: int, k: int):
    left = multi_indices(d, j)
    right = multi_indices(d, k)
    out = _index_table(d, j + k)
    iu, iv, io, sg = [], [], [], []
    for a, I in enumerate(left):
        sI = set(I)
        for b, J in enumerate(right):
            if sI.intersection(J):
                continue
            # sign of the shuffle that sorts I + J
            inversions = sum(1 for x in I for y in J if x > y)
            iu.append(a)
            iv.append(b)
            io.append(out[tuple(sorted(I + J))])
            sg.append(-1.0 if inversions % 2 else 1.0)
    return (np.array(iu, dtype=np.intp), np.array(iv, dtype=np.intp),
            np.array(io, dtype=np.intp), np.array(sg))


def wedge(u: KVector, v: KVector) -> KVector:
    if type(u) is not type(v):
        raise DimensionMismatch("wedge of a vector with a covector")
    if u.d != v.d:
        raise DimensionMismatch(f"dimension mismatch: {u.d} vs {v.d}")
    if u.k + v.k > u.d:
        raise DimensionMismatch(f"grade overflow: {u.k} + {v.k} > {u.d}")
    iu, iv, io, sg = _wedge_table(u.d, u.k, v.k)
    out = np.zeros(comb(u.d, u.k + v.k))
    np.add.at(out, io, sg * u.coeffs[iu] * v.coeffs[iv])
    return type(u)(u.d, u.k + v.k, out)


def wedge_all(vectors, d: int | None = None) -> KVector:
    """Fold of 1-vectors ``v1 ^ ... ^ vk`` (arrays or grade-1 KVectors) through :func:`wedge`."""
    vectors = [v.coeffs if isinstance(v, KVector) else np.asarray(v, dtype=float) for v in vectors]
    if not vectors:
        if d is None:
            raise ValueError("need d for the empty wedge")
        return KVector(d, 0, [1.0])
    d = vectors[0].size
    acc = KVector(d, 1, vectors[0])
    for v in vectors[1:]:
        acc = wedge(acc, KVector(d, 1, v))
    return acc


def _minors(columns: np.ndarray) -> np.ndarray:
    """All k x k minors of (..., d, k) column matrices, lexicographic rows."""
    d, k = columns.shape[-2:]
    rows = _index_array(d, k)
    sub = columns[..., rows, :]  # (..., C, k, k)
    return np.linalg.det(sub)


def frame_to_kvector(frame) -> KVector:
    """Plücker coordinates of a frame: the k x k minors of its column matrix."""
    if not isinstance(frame, Frame):
        frame = Frame(frame)
    return KVector(frame.d, frame.k, _minors(frame.columns))


def inner(v: KVector, w: KVector) -> float:
    if (v.d, v.k) != (w.d, w.k):
        raise DimensionMismatch(f"(d, k) mismatch: {(v.d, v.k)} vs {(w.d, w.k)}")
    return float(v.coeffs @ w.coeffs)


def euclidean_norm(v: KVector) -> float:
    return float(np.linalg.norm(v.coeffs))


def _antisymmetric(v: KVector) -> np.ndarray:
    a = np.zeros((v.d, v.d))
    idx = _index_array(v.d, 2)
    a[idx[:, 0], idx[:, 1]] = v.coeffs
    return a - a.T


def spectral_decompose_2vector(v: KVector) -> list[tuple[float, Frame]]:
    """Canonical form of a 2-vector as a sum of orthogonal simple pieces.

    Returns ``[(sigma_i, frame_i), ...]`` with orthonormal frames spanning
    mutually orthogonal planes and ``sigma`` sorted descending, such that
    ``v = sum sigma_i * frame_to_kvector(frame_i)``. Zero pieces are dropped.
    """
    if v.k != 2:
        raise DimensionMismatch(f"expected a 2-vector, got grade {v.k}")
    a = _antisymmetric(v)
    t, z = linalg.schur(a, output="real")
    scale = max(1.0, float(np.abs(a).max()))
    pieces = []
    i = 0
    while i < v.d - 1:
        if abs(t[i + 1, i]) > 1e-14 * scale:
            s = 0.5 * (t[i, i + 1] - t[i + 1, i])
            p, q = z[:, i], z[:, i + 1]
            if s < 0:
                p, q, s = q, p, -s
            pieces.append((float(s), Frame.from_vectors(p, q)))
            i += 2
        else:
            i += 1
    pieces.sort(key=lambda item: -item[0])
    return pieces


def _slot_gradient(w: np.ndarray, cols: np.ndarray, j: int) -> np.ndarray:
    """Gradient of the map c -> <w, c1^..^c^..^ck> (c in slot j), which is linear."""
    d = cols.shape[0]
    batch = np.repeat(cols[None, :, :], d, axis=0)  # (d, d, k)
    batch[:, :, j] = np.eye(d)
    return _minors(batch) @ w


def _ascend_frame(w: np.ndarray, cols: np.ndarray, max_iter: int = 500, tol: float = 1e-15):
    """Block-coordinate ascent of <w, frame> over orthonormal frames."""
    d, k = cols.shape
    cols = cols.copy()
    value = float(_minors(cols) @ w)
    for _ in range(max_iter):
        for j in range(k):
            g = _slot_gradient(w, cols, j)
            others = np.delete(cols, j, axis=1)
            if others.size:
                q, _ = np.linalg.qr(others)
                g = g - q @ (q.T @ g)
            n = np.linalg.norm(g)
            if n > 0:
                cols[:, j] = g / n
        new = float(_minors(cols) @ w)
        if new - value <= tol * max(1.0, abs(new)):
            value = max(value, new)
            break
        value = new
    return value, cols


def haar_frame_sample(d: int, k: int, rng: np.random.Generator) -> Frame:
    """Orthonormal frame whose span is Haar-distributed on Gr(d, k).

    Uses the orthogonal polar factor of a k x d Gaussian matrix (computed by
    SVD), which is uniformly distributed on the Stiefel manifold.
    """
    if not 1 <= k <= d:
        raise DimensionMismatch(f"need 1 <= k <= d, got k={k}, d={d}")
    g = rng.standard_normal((k, d))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    return Frame(vt.T @ u.T)


def _best_simple(w: np.ndarray, d: int, k: int, restarts: int, rng) -> tuple[float, np.ndarray]:
    best_val, best_cols = -np.inf, None
    for _ in range(restarts):
        start = haar_frame_sample(d, k, rng).columns
        val, cols = _ascend_frame(w, start)
        if val > best_val:
            best_val, best_cols = val, cols
    return best_val, best_cols


def _simple_grade(d: int, k: int) -> bool:
    return k in (0, 1, d - 1, d)


def _hyperplane_frame(v: KVector) -> Frame:
    """Orthonormal frame of a simple (d-1)-vector, oriented so <v, frame> > 0."""
    d = v.d
    # e_{[d]\i} is the Hodge dual of +-e_i; the plane is orthogonal to that normal.
    idx = multi_indices(d, d - 1)
    normal = np.zeros(d)
    for c, I in zip(v.coeffs, idx):
        missing = (set(range(1, d + 1)) - set(I)).pop()
        normal[missing - 1] = (-1) ** (missing - 1) * c
    u, _, _ = np.linalg.svd(normal.reshape(d, 1))
    cols = u[:, 1:].copy()
    if float(_minors(cols) @ v.coeffs) < 0:
        cols[:, 0] *= -1
    return Frame(cols)


def _simple_certificate(v: KVector):
    d, k = v.d, v.k
    n = euclidean_norm(v)
    if k == 0 or n == 0.0:
        return None if k == 0 else Frame(np.eye(d)[:, :k])
    if k == 1:
        return Frame((v.coeffs / n).reshape(d, 1))
    if k == d:
        cols = np.eye(d)
        if v.coeffs[0] < 0:
            cols[:, 0] *= -1
        return Frame(cols)
    return _hyperplane_frame(v)


def comass(w: KVector, mode: str = "exact", restarts: int = 64, seed: int = 0):
    """Comass of a k-covector: sup of <w, xi> over unit simple xi.

    ``mode="exact"`` is available for k in {0, 1, 2, d-1, d}; ``"estimate"``
    runs multi-start ascent over orthonormal frames and returns a lower bound.
    Returns ``(value, certificate_frame)``; the frame is ``None`` for k = 0.
    """
    d, k = w.d, w.k
    if mode == "exact":
        if _simple_grade(d, k):
            return euclidean_norm(w), _simple_certificate(w)
        if k == 2:
            pieces = spectral_decompose_2vector(w)
            if not pieces:
                return 0.0, Frame(np.eye(d)[:, :2])
            return pieces[0][0], pieces[0][1]
        raise UnsupportedExactMode(f"exact comass not available for d={d}, k={k}")
    if mode != "estimate":
        raise ValueError(f"unknown mode {mode!r}")
    if k == 0:
        return abs(float(w.coeffs[0])), None
    rng = np.random.default_rng(seed)
    val, cols = _best_simple(w.coeffs, d, k, restarts, rng)
    return max(val, 0.0), Frame(cols)


def _greedy_upper(v: KVector, restarts: int, rng) -> tuple[float, list[tuple[float, Frame]]]:
    """Peel off best-fitting unit simple pieces; sum of |pieces| plus residual l1."""
    d, k = v.d, v.k
    resid = v.coeffs.copy()
    total = 0.0
    pieces = []
    for _ in range(comb(d, k)):
        if np.linalg.norm(resid) < 1e-10:
            break
        val, cols = _best_simple(resid, d, k, restarts, rng)
        xi = _minors(cols)
        resid = resid - val * xi
        total += abs(val)
        pieces.append((val, Frame(cols)))
    # leftovers are covered by basis elements, each simple with unit norm
    return total + float(np.abs(resid).sum()), pieces


def mass(v: KVector, mode: str = "exact", restarts: int = 32, samples: int = 16, seed: int = 0):
    """Mass norm of a k-vector as ``(lower, upper)``.

    Exact mode (k in {0, 1, 2, d-1, d}) returns equal bounds. Bounds mode gives
    an upper bound from a greedy simple decomposition and a lower bound from
    the mass/comass duality evaluated at a few candidate covectors.
    """
    d, k = v.d, v.k
    if mode == "exact":
        if _simple_grade(d, k):
            n = euclidean_norm(v)
            return n, n
        if k == 2:
            s = float(sum(sig for sig, _ in spectral_decompose_2vector(v)))
            return s, s
        raise UnsupportedExactMode(f"exact mass not available for d={d}, k={k}")
    if mode != "bounds":
        raise ValueError(f"unknown mode {mode!r}")
    norm = euclidean_norm(v)
    if _simple_grade(d, k) or norm == 0.0:
        return norm, norm
    rng = np.random.default_rng(seed)
    upper, pieces = _greedy_upper(v, restarts, rng)
    upper = min(upper, float(np.abs(v.coeffs).sum()))
    candidates = [v.coeffs]
    if pieces:
        candidates.append(sum(np.sign(c) * _minors(f.columns) for c, f in pieces))
    candidates.extend(rng.standard_normal((samples, v.coeffs.size)))
    lower = norm
    for i, cand in enumerate(candidates):
        cm, _ = comass(KCovector(d, k, cand), mode="estimate", restarts=restarts, seed=seed + i + 1)
        if cm > 0:
            lower = max(lower, float(v.coeffs @ cand) / cm)
    return min(lower, upper), upper


def kvector_from_json(obj: dict, covector: bool = False) -> KVector:
    """Parse ``{d, k, coeffs: {"1,2": 1.0, ...}}`` into a (co)vector."""
    d, k = int(obj["d"]), int(obj["k"])
    entries = {}
    for key, val in obj.get("coeffs", {}).items():
        idx = tuple(int(s) for s in key.split(",")) if key.strip() else ()
        if len(idx) != k:
            raise ValueError(f"multi-index {key!r} does not have grade {k}")
        entries[idx] = val
    cls = KCovector if covector else KVector
    return cls.from_dict(d, k, entries)


def kvector_to_json(v: KVector) -> dict:
    return {
        "d": v.d,
        "k": v.k,
        "coeffs": {",".join(map(str, idx)): val for idx, val in v.items()},
    }
