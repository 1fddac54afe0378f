"""Small exact linear-programming solvers.

``network_simplex`` solves uncapacitated min-cost flow problems (the 0-current
flat norm reduces to one); ``simplex`` is a dense two-phase tableau method for
the general equality-form LPs of the simplicial flat norm.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

__all__ = ["SolverError", "FlowSolution", "LPSolution", "network_simplex", "simplex"]


class SolverError(RuntimeError):
    """The LP solver failed to reach an optimal basis."""


@dataclass
class FlowSolution:
    flow: np.ndarray
    potentials: np.ndarray
    cost: float
    dual_value: float
    iterations: int


@dataclass
class LPSolution:
    x: np.ndarray
    y: np.ndarray
    value: float
    dual_value: float
    iterations: int
    stats: dict = field(default_factory=dict)


def network_simplex(n_nodes, tail, head, cost, supply, root, initial_tree, max_iter=None, block=None):
    """Primal network simplex for ``min c.f  s.t.  out(f) - in(f) = supply, f >= 0``.

    ``initial_tree`` lists ``n_nodes - 1`` arc indices forming a spanning tree
    whose tree solution is feasible. Potentials ``y`` satisfy
    ``c - y[tail] + y[head] >= 0`` at optimality with ``y[root] = 0``, so
    ``supply @ y`` is the dual objective.

    Degenerate pivots are handled with Cunningham's strongly feasible tree
    rule; pricing scans arc blocks of size ``block``.
    """
    tail = np.asarray(tail, dtype=np.intp)
    head = np.asarray(head, dtype=np.intp)
    cost = np.asarray(cost, dtype=float)
    supply = np.asarray(supply, dtype=float)
    m = tail.size
    if abs(supply.sum()) > 1e-9 * max(1.0, np.abs(supply).sum()):
        raise SolverError("supplies do not balance")
    if max_iter is None:
        max_iter = 50 * (n_nodes + m) + 1000
    if block is None:
        block = max(64, int(np.sqrt(m)))

    in_tree = np.zeros(m, dtype=bool)
    in_tree[list(initial_tree)] = True
    adj = [set() for _ in range(n_nodes)]
    for a in initial_tree:
        adj[tail[a]].add(a)
        adj[head[a]].add(a)

    parent = np.full(n_nodes, -1, dtype=np.intp)
    parc = np.full(n_nodes, -1, dtype=np.intp)
    depth = np.zeros(n_nodes, dtype=np.intp)
    y = np.zeros(n_nodes)

    def rebuild():
        parent[:] = -1
        parc[:] = -1
        depth[root] = 0
        y[root] = 0.0
        seen = np.zeros(n_nodes, dtype=bool)
        seen[root] = True
        order = [root]
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for a in adj[u]:
                v = head[a] if tail[a] == u else tail[a]
                if seen[v]:
                    continue
                seen[v] = True
                parent[v] = u
                parc[v] = a
                depth[v] = depth[u] + 1
                # tree arcs have zero reduced cost
                y[v] = y[u] - cost[a] if tail[a] == u else y[u] + cost[a]
                queue.append(v)
                order.append(v)
        if len(order) != n_nodes:
            raise SolverError("initial arcs do not span the nodes")
        return order

    def in_subtree(top, x):
        # walk up from x until reaching top's depth
        while depth[x] > depth[top]:
            x = parent[x]
        return x == top

    def reattach(start, anchor, arc):
        parent[start] = anchor
        parc[start] = arc
        depth[start] = depth[anchor] + 1
        y[start] = y[anchor] - cost[arc] if tail[arc] == anchor else y[anchor] + cost[arc]
        stack = [start]
        while stack:
            p = stack.pop()
            for a in adj[p]:
                if a == parc[p]:
                    continue
                q = head[a] if tail[a] == p else tail[a]
                parent[q] = p
                parc[q] = a
                depth[q] = depth[p] + 1
                y[q] = y[p] - cost[a] if tail[a] == p else y[p] + cost[a]
                stack.append(q)

    def tree_flows():
        f = np.zeros(m)
        excess = supply.copy()
        for v in reversed(rebuild()):
            if v == root:
                continue
            a = parc[v]
            # node v must push its remaining excess over the arc to its parent
            if tail[a] == v:
                f[a] = excess[v]
            else:
                f[a] = -excess[v]
            excess[parent[v]] += excess[v]
        return f

    flow = tree_flows()
    scale = max(1.0, float(np.abs(supply).max()))
    ftol = 1e-12 * scale
    if np.any(flow < -ftol):
        raise SolverError("initial tree is not primal feasible")
    flow[flow < 0] = 0.0
    ctol = 1e-12 * max(1.0, float(np.abs(cost).max()))

    it = 0
    cursor = 0
    while True:
        # block pricing
        entering = -1
        scanned = 0
        while scanned < m:
            lo = cursor
            hi = min(m, lo + block)
            rc = cost[lo:hi] - y[tail[lo:hi]] + y[head[lo:hi]]
            rc[in_tree[lo:hi]] = 0.0
            j = int(np.argmin(rc))
            scanned += hi - lo
            cursor = 0 if hi >= m else hi
            if rc[j] < -ctol:
                entering = lo + j
                break
        if entering < 0:
            break
        it += 1
        if it > max_iter:
            raise SolverError(f"network simplex exceeded {max_iter} pivots")

        u, v = tail[entering], head[entering]
        # paths to the apex; flow increases along u -> v then v -> apex -> u
        path_u, path_v = [], []
        a_, b_ = u, v
        while a_ != b_:
            if depth[a_] >= depth[b_]:
                path_u.append(a_)
                a_ = parent[a_]
            else:
                path_v.append(b_)
                b_ = parent[b_]
        # on v's side we walk child -> parent, on u's side parent -> child
        v_side = [(parc[x], tail[parc[x]] == x) for x in path_v]
        u_side = [(parc[x], head[parc[x]] == x) for x in path_u]

        theta = np.inf
        for arc, fwd in v_side + u_side:
            if not fwd and flow[arc] < theta:
                theta = flow[arc]
        if not np.isfinite(theta):
            raise SolverError("unbounded: negative cost cycle")
        tie = ftol + 1e-12 * theta
        leaving = -1
        # last blocking arc in cycle order apex -> u -> v -> apex
        for arc, fwd in reversed(v_side):
            if not fwd and flow[arc] <= theta + tie:
                leaving = arc
                break
        if leaving < 0:
            for arc, fwd in u_side:
                if not fwd and flow[arc] <= theta + tie:
                    leaving = arc
                    break

        flow[entering] += theta
        for arc, fwd in v_side + u_side:
            flow[arc] += theta if fwd else -theta
        flow[leaving] = 0.0
        np.maximum(flow, 0.0, out=flow)

        in_tree[leaving] = False
        adj[tail[leaving]].discard(leaving)
        adj[head[leaving]].discard(leaving)
        in_tree[entering] = True
        adj[u].add(entering)
        adj[v].add(entering)
        # the subtree cut off by the leaving arc hangs from the entering arc now
        a, b = tail[leaving], head[leaving]
        child = a if parc[a] == leaving else b
        s_in, s_out = (u, v) if in_subtree(child, u) else (v, u)
        reattach(s_in, s_out, entering)
    primal = float(cost @ flow)
    dual = float(supply @ y)
    return FlowSolution(flow=flow, potentials=y.copy(), cost=primal, dual_value=dual, iterations=it)


def simplex(c, A_eq, b_eq, max_iter=None, tol=1e-11):
    """Two-phase dense tableau simplex for ``min c.x  s.t.  A x = b, x >= 0``.

    Uses Dantzig pricing and falls back to Bland's rule after a run of
    degenerate pivots. Returns primal ``x``, dual ``y`` (``A^T y <= c``) and
    both objective values.
    """
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    m, n = A.shape
    if max_iter is None:
        max_iter = 200 * (m + n) + 1000
    flip = b < 0
    A[flip] *= -1
    b[flip] *= -1

    # tableau columns: n structural, m artificial, rhs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    basis = np.arange(n, n + m)
    iters = 0

    def run(cost_row, allowed):
        nonlocal iters
        T[m, :] = 0.0
        T[m, :n + m] = cost_row
        # reduce cost row to the current basis
        for i, j in enumerate(basis):
            if T[m, j] != 0.0:
                T[m, :] -= T[m, j] * T[i, :]
        degenerate = 0
        while True:
            rc = T[m, :n + m].copy()
            rc[~allowed] = 0.0
            if degenerate > 50:
                cand = np.flatnonzero(rc < -tol)
                if cand.size == 0:
                    return
                q = int(cand[0])
            else:
                q = int(np.argmin(rc))
                if rc[q] >= -tol:
                    return
            col = T[:m, q]
            pos = col > tol
            if not pos.any():
                raise SolverError("LP is unbounded")
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / col[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, rmin))
            p = int(ties[np.argmin(basis[ties])])
            degenerate = degenerate + 1 if rmin <= tol else 0
            T[p, :] /= T[p, q]
            others = np.arange(m + 1) != p
            T[others, :] -= np.outer(T[others, q], T[p, :])
            basis[p] = q
            iters += 1
            if iters > max_iter:
                raise SolverError(f"simplex exceeded {max_iter} pivots")

    allowed = np.ones(n + m, dtype=bool)
    run(np.concatenate([np.zeros(n), np.ones(m)]), allowed)
    if -T[m, -1] > 1e-9 * max(1.0, np.abs(b).max()):
        raise SolverError("LP is infeasible")
    # drive remaining artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= n:
            row = T[i, :n]
            nz = np.flatnonzero(np.abs(row) > 1e-9)
            if nz.size:
                q = int(nz[0])
                T[i, :] /= T[i, q]
                others = np.arange(m + 1) != i
                T[others, :] -= np.outer(T[others, q], T[i, :])
                basis[i] = q
    allowed[n:] = False
    run(np.concatenate([c, np.zeros(m)]), allowed)

    x = np.zeros(n)
    mask = basis < n
    x[basis[mask]] = T[:m, -1][mask]
    np.maximum(x, 0.0, out=x)
    # duals of the sign-adjusted rows: y = c_B B^-1, read off the artificial columns
    y = -T[m, n:n + m].copy()
    y[flip] *= -1
    value = float(c @ x)
    return LPSolution(x=x, y=y, value=value, dual_value=float(np.asarray(b_eq, dtype=float) @ y),
                      iterations=iters)
