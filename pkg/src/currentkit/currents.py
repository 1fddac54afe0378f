"""Atomic and simplicial k-currents."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .algebra import DimensionMismatch, KVector, _minors, mass as kvector_mass, UnsupportedExactMode
from .forms import FormField, SmoothMap

__all__ = [
    "DiscreteCurrent",
    "SimplicialComplex",
    "SimplicialChain",
    "evaluate",
    "mass",
    "pushforward",
    "boundary",
    "dilate",
    "sample_latent_current",
    "data_current",
    "grid_complex",
    "chain_from_edges",
    "square_boundary",
    "FLATGAN_LATENT",
]


@dataclass(frozen=True, eq=False)
class DiscreteCurrent:
    """``sum_i w_i delta_{x_i} ^ (v_i1 ^ ... ^ v_ik)``.

    ``points`` is (n, d), ``weights`` (n,), ``frames`` (n, d, k). Frames are
    kept as given (not normalized); for k = 0 they have shape (n, d, 0).
    """

    points: np.ndarray
    weights: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        f = np.array(self.frames, dtype=float)
        n, d = p.shape
        if f.size == 0 and f.ndim != 3:
            f = np.zeros((n, d, 0))
        if f.ndim != 3 or f.shape[:2] != (n, d):
            raise DimensionMismatch(f"frames must have shape ({n}, {d}, k), got {f.shape}")
        if w.size != n:
            raise DimensionMismatch(f"{w.size} weights for {n} points")
        if f.shape[2] > d:
            raise DimensionMismatch(f"grade {f.shape[2]} exceeds dimension {d}")
        for name, arr in (("points", p), ("weights", w), ("frames", f)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}")
            arr.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "frames", f)

    @classmethod
    def zero(cls, d: int, k: int = 0):
        return cls(np.zeros((0, d)), np.zeros(0), np.zeros((0, d, k)))

    @classmethod
    def diracs(cls, points, weights):
        p = np.array(points, dtype=float)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
        return cls(p, weights, np.zeros((p.shape[0], p.shape[1], 0)))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def k(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return self.points.shape[0]

    def _check(self, other):
        if (self.d, self.k) != (other.d, other.k):
            raise DimensionMismatch(f"(d, k) mismatch: {(self.d, self.k)} vs {(other.d, other.k)}")

    def __add__(self, other: "DiscreteCurrent") -> "DiscreteCurrent":
        self._check(other)
        return DiscreteCurrent(
            np.vstack([self.points, other.points]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.frames, other.frames]),
        )

    def __neg__(self):
        return DiscreteCurrent(self.points, -self.weights, self.frames)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return DiscreteCurrent(self.points, float(c) * self.weights, self.frames)

    __rmul__ = __mul__

    def kvectors(self) -> np.ndarray:
        """(n, C(d,k)) Plücker coordinates of the weighted orientations."""
        return self.weights[:, None] * _minors(self.frames)

    def merged(self, tol: float = 1e-12) -> "DiscreteCurrent":
        """Combine atoms at coincident points (0-currents only) and drop zero weights."""
        if self.k != 0:
            raise DimensionMismatch("merging is only defined for 0-currents")
        if len(self) == 0:
            return self
        pairs = np.array(sorted(cKDTree(self.points).query_pairs(tol, p=np.inf)), dtype=np.intp).reshape(-1, 2)
        n = len(self)
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        _, reps, inverse = np.unique(labels, return_index=True, return_inverse=True)
        sums = np.zeros(reps.size)
        np.add.at(sums, inverse, self.weights)
        scale = max(1.0, float(np.abs(self.weights).max()))
        keep = np.abs(sums) > 1e-15 * scale
        return DiscreteCurrent.diracs(self.points[reps[keep]].reshape(-1, self.d), sums[keep])

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "atoms": [
                {"x": p.tolist(), "w": float(w), "frame": f.T.tolist()}
                for p, w, f in zip(self.points, self.weights, self.frames)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiscreteCurrent":
        d, k = int(obj["d"]), int(obj["k"])
        atoms = obj.get("atoms", [])
        pts = np.zeros((len(atoms), d))
        wts = np.zeros(len(atoms))
        frames = np.zeros((len(atoms), d, k))
        for i, a in enumerate(atoms):
            x = np.asarray(a["x"], dtype=float)
            if x.shape != (d,):
                raise ValueError(f"atom {i}: point has shape {x.shape}, expected ({d},)")
            pts[i] = x
            wts[i] = float(a.get("w", 1.0))
            cols = np.asarray(a.get("frame", []), dtype=float).reshape(-1, d) if k else np.zeros((0, d))
            if cols.shape != (k, d):
                raise ValueError(f"atom {i}: frame must list {k} vectors of length {d}")
            frames[i] = cols.T
        return cls(pts, wts, frames)


def evaluate(T: DiscreteCurrent, form: FormField) -> float:
    """``T(omega) = sum_i w_i <omega(x_i), xi_i>``."""
    if (T.d, T.k) != (form.d, form.k):
        raise DimensionMismatch(f"current {(T.d, T.k)} vs form {(form.d, form.k)}")
    return float(sum(w * form.pair(x, f) for x, w, f in zip(T.points, T.weights, T.frames)))


def mass(T: DiscreteCurrent) -> float:
    """Mass of an atomic current.

    Atoms sharing a point are summed first; a single simple orientation has mass
    equal to its Euclidean norm, a merged non-simple one uses the k-vector mass.
    """
    if len(T) == 0:
        return 0.0
    xis = T.kvectors()
    keys: dict[tuple, list[int]] = {}
    for i, p in enumerate(T.points):
        keys.setdefault(tuple(np.round(p, 12)), []).append(i)
    total = 0.0
    for idx in keys.values():
        xi = xis[idx].sum(axis=0)
        if len(idx) == 1 or T.k in (0, 1):
            total += float(np.linalg.norm(xi))
        else:
            try:
                total += kvector_mass(KVector(T.d, T.k, xi))[1]
            except UnsupportedExactMode:
                total += kvector_mass(KVector(T.d, T.k, xi), mode="bounds")[1]
    return total


def pushforward(g: SmoothMap, T: DiscreteCurrent) -> DiscreteCurrent:
    """Map points by g and orientation columns by its Jacobian."""
    if g.l != T.d:
        raise DimensionMismatch(f"map expects R^{g.l}, current lives in R^{T.d}")
    pts = np.array([g(x) for x in T.points]).reshape(len(T), g.d)
    frames = np.array([g.jacobian(x) @ f for x, f in zip(T.points, T.frames)]).reshape(len(T), g.d, T.k)
    return DiscreteCurrent(pts, T.weights, frames)


def dilate(T: DiscreteCurrent, lam: float) -> DiscreteCurrent:
    """Pushforward under ``x -> lam x``."""
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    return DiscreteCurrent(lam * T.points, T.weights, lam * T.frames)


FLATGAN_LATENT = (("uniform", -math.pi, math.pi),) + (("normal", 0.0, 1.0),) * 4


def _draw_latent(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    cols = []
    for entry in spec:
        kind, a, b = entry
        if kind == "uniform":
            if not b > a:
                raise ValueError(f"uniform bounds must satisfy a < b, got {entry}")
            cols.append(rng.uniform(a, b, n))
        elif kind == "normal":
            if not b > 0:
                raise ValueError(f"normal scale must be positive, got {entry}")
            cols.append(rng.normal(a, b, n))
        else:
            raise ValueError(f"unknown latent distribution {kind!r}")
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def sample_latent_current(spec=FLATGAN_LATENT, k: int = 0, n_samples: int = 1, seed=0) -> DiscreteCurrent:
    """Empirical ``mu ^ (e1 ^ ... ^ ek)`` with per-coordinate uniform/normal laws."""
    l = len(spec)
    if k > l:
        raise DimensionMismatch(f"grade {k} exceeds latent dimension {l}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = _draw_latent(spec, n_samples, rng)
    frames = np.broadcast_to(np.eye(l)[:, :k], (n_samples, l, k))
    return DiscreteCurrent(z, np.full(n_samples, 1.0 / n_samples), frames)


def data_current(points, tangents=None) -> DiscreteCurrent:
    """``(1/N) sum_i delta_{x_i} ^ T_i`` with ``tangents`` of shape (N, d, k) or (N, d)."""
    p = np.asarray(points, dtype=float)
    n, d = p.shape
    if tangents is None:
        frames = np.zeros((n, d, 0))
    else:
        frames = np.asarray(tangents, dtype=float)
        if frames.ndim == 2:
            frames = frames[:, :, None]
    return DiscreteCurrent(p, np.full(n, 1.0 / n), frames)


class SimplicialComplex:
    """Vertices in R^d with oriented simplices of grades 0, 1, 2.

    ``triangles`` keep the given vertex order as their orientation; edges are
    derived from the triangles (plus any extra ``edges``) and stored with
    increasing vertex indices.
    """

    def __init__(self, vertices, triangles=(), edges=()):
        self.vertices = np.array(vertices, dtype=float)
        if self.vertices.ndim != 2:
            raise DimensionMismatch("vertices must be an (n, d) array")
        nv = len(self.vertices)
        tri = [tuple(int(i) for i in t) for t in triangles]
        es = {tuple(sorted((int(a), int(b)))) for a, b in edges}
        for t in tri:
            if len(set(t)) != 3:
                raise ValueError(f"degenerate triangle {t}")
            for a, b in itertools.combinations(t, 2):
                es.add(tuple(sorted((a, b))))
        for s in list(es) + tri:
            if any(not 0 <= i < nv for i in s):
                raise ValueError(f"simplex {s} references a missing vertex")
            if len(set(s)) != len(s):
                raise ValueError(f"degenerate simplex {s}")
        self._simplices = {0: [(i,) for i in range(nv)], 1: sorted(es), 2: tri}
        self._lookup = {g: {s: n for n, s in enumerate(ss)} for g, ss in self._simplices.items()}
        self._bd: dict[int, np.ndarray] = {}

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    def simplices(self, k: int) -> list[tuple[int, ...]]:
        return self._simplices.get(k, [])

    def count(self, k: int) -> int:
        return len(self.simplices(k))

    def orientation_frames(self, k: int) -> np.ndarray:
        """(n, d, k) edge frames ``p1-p0, ..., pk-p0`` of each k-simplex."""
        s = np.array(self.simplices(k), dtype=np.intp).reshape(-1, k + 1)
        p = self.vertices[s]
        return np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))

    def volumes(self, k: int) -> np.ndarray:
        if k == 0:
            return np.ones(self.count(0))
        xi = _minors(self.orientation_frames(k))
        return np.linalg.norm(xi, axis=-1) / math.factorial(k)

    def find(self, simplex) -> tuple[int, int]:
        """Index and relative sign (+1/-1) of an oriented simplex in this complex."""
        s = tuple(int(i) for i in simplex)
        k = len(s) - 1
        key = s if k == 2 else tuple(sorted(s))
        if k == 2:
            for rot, sign in _triangle_orders(s):
                if rot in self._lookup[2]:
                    return self._lookup[2][rot], sign
            raise KeyError(f"triangle {s} not in complex")
        if key not in self._lookup[k]:
            raise KeyError(f"simplex {s} not in complex")
        perm_sign = 1 if k == 0 or s == key else -1
        return self._lookup[k][key], perm_sign

    def boundary_matrix(self, k: int) -> np.ndarray:
        """Dense matrix of the boundary map from k-chains to (k-1)-chains."""
        if k < 1:
            raise ValueError("boundary of a 0-chain is not defined")
        if k not in self._bd:
            B = np.zeros((self.count(k - 1), self.count(k)))
            for col, s in enumerate(self.simplices(k)):
                for i in range(len(s)):
                    face = s[:i] + s[i + 1:]
                    row, sign = self.find(face)
                    B[row, col] += (-1) ** i * sign
            B.setflags(write=False)
            self._bd[k] = B
        return self._bd[k]

    def chain(self, k: int, coeffs=None) -> "SimplicialChain":
        return SimplicialChain(self, k, np.zeros(self.count(k)) if coeffs is None else coeffs)

    def to_json(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "triangles": [list(t) for t in self.simplices(2)],
            "edges": [list(e) for e in self.simplices(1)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SimplicialComplex":
        return cls(obj["vertices"], obj.get("triangles", []), obj.get("edges", []))


def _triangle_orders(s):
    a, b, c = s
    return [((a, b, c), 1), ((b, c, a), 1), ((c, a, b), 1),
            ((b, a, c), -1), ((a, c, b), -1), ((c, b, a), -1)]


class SimplicialChain:
    """Real coefficients on the k-simplices of a fixed complex."""

    def __init__(self, complex: SimplicialComplex, k: int, coeffs):
        c = np.array(coeffs, dtype=float).reshape(-1)
        if c.size != complex.count(k):
            raise DimensionMismatch(f"{c.size} coefficients for {complex.count(k)} simplices of grade {k}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite chain coefficient")
        c.setflags(write=False)
        self.complex = complex
        self.k = k
        self.coeffs = c

    def _check(self, other):
        if other.complex is not self.complex or other.k != self.k:
            raise DimensionMismatch("chains live on different complexes or grades")

    def __add__(self, other):
        self._check(other)
        return SimplicialChain(self.complex, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SimplicialChain(self.complex, self.k, self.coeffs - other.coeffs)

    def __neg__(self):
        return SimplicialChain(self.complex, self.k, -self.coeffs)

    def __mul__(self, c):
        return SimplicialChain(self.complex, self.k, float(c) * self.coeffs)

    __rmul__ = __mul__

    def boundary(self) -> "SimplicialChain":
        return boundary(self)

    def mass(self) -> float:
        return float(np.abs(self.coeffs) @ self.complex.volumes(self.k))

    def to_json(self) -> dict:
        return {
            "grade": self.k,
            "coeffs": {",".join(map(str, s)): float(c)
                       for s, c in zip(self.complex.simplices(self.k), self.coeffs) if c != 0.0},
        }

    @classmethod
    def from_json(cls, complex: SimplicialComplex, obj: dict) -> "SimplicialChain":
        k = int(obj["grade"])
        c = np.zeros(complex.count(k))
        coeffs = obj.get("coeffs", {})
        if coeffs == "all":
            c[:] = 1.0
        else:
            for key, val in coeffs.items():
                s = tuple(int(v) for v in key.split(","))
                if len(s) != k + 1:
                    raise ValueError(f"simplex {key!r} does not have grade {k}")
                i, sign = complex.find(s)
                c[i] += sign * float(val)
        return cls(complex, k, c)


def boundary(c: SimplicialChain) -> SimplicialChain:
    if c.k < 1:
        raise ValueError("boundary of a 0-chain is not defined")
    return SimplicialChain(c.complex, c.k - 1, c.complex.boundary_matrix(c.k) @ c.coeffs)


def grid_complex(nx: int, ny: int, x0=0.0, y0=0.0, h=1.0) -> SimplicialComplex:
    """Rectangle of nx x ny square cells of side h, each split along its (1,1) diagonal.

    Triangles are positively (counterclockwise) oriented. Vertex (i, j) has
    index ``j * (nx + 1) + i``.
    """
    xs = x0 + h * np.arange(nx + 1)
    ys = y0 + h * np.arange(ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return SimplicialComplex(verts, tris)


def chain_from_edges(complex: SimplicialComplex, oriented_edges, weight: float = 1.0) -> SimplicialChain:
    """1-chain summing the given oriented vertex pairs."""
    c = np.zeros(complex.count(1))
    for a, b in oriented_edges:
        i, sign = complex.find((a, b))
        c[i] += sign * weight
    return SimplicialChain(complex, 1, c)


def square_boundary(complex: SimplicialComplex, lo, hi) -> SimplicialChain:
    """Counterclockwise boundary 1-chain of the axis-aligned box [lo, hi] on a grid complex.

    ``lo`` and ``hi`` are scalars (a square) or per-axis pairs.
    """
    v = complex.vertices
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (v.shape[1],))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (v.shape[1],))
    tol = 1e-9
    inside = np.all((v >= lo - tol) & (v <= hi + tol), axis=1)
    tri_mask = []
    for t in complex.simplices(2):
        tri_mask.append(all(inside[i] for i in t))
    c2 = SimplicialChain(complex, 2, np.array(tri_mask, dtype=float))
    return boundary(c2)
