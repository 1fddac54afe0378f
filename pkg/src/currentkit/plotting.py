"""SVG figures: training panels and flat-norm decompositions.

Figures use an 800 x 800 viewBox. The affine map from data coordinates to
SVG user units is written into each file as an XML comment of the form
``<!-- data-to-svg affine: [a, b, c, d, e, f] -->`` meaning
``svg_x = a x + c y + e`` and ``svg_y = b x + d y + f``.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection, PolyCollection  # noqa: E402

__all__ = ["training_panel", "point_decomposition", "simplicial_decomposition", "flat_curve"]

SIZE = 800
_DPI = 72  # one display unit per SVG user unit


def _figure():
    fig = plt.figure(figsize=(SIZE / _DPI, SIZE / _DPI), dpi=_DPI)
    ax = fig.add_axes([0.08, 0.08, 0.88, 0.88])
    return fig, ax


def _affine(fig, ax):
    fig.canvas.draw()
    t = ax.transData
    o, ex, ey = t.transform([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    height = fig.bbox.height
    # SVG y axis points down
    flip = lambda p: np.array([p[0], height - p[1]])  # noqa: E731
    o, ex, ey = flip(o), flip(ex), flip(ey)
    a, b = ex - o
    c, d = ey - o
    return [float(v) for v in (a, b, c, d, o[0], o[1])]


def _save(fig, ax, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    aff = _affine(fig, ax)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    text = path.read_text()
    comment = f"<!-- data-to-svg affine: [{', '.join(format(v, '.10g') for v in aff)}] -->\n"
    head, sep, rest = text.partition("?>\n")
    text = head + sep + comment + rest if sep else comment + text
    path.write_text(text)
    return path


def _square_limits(ax, pts, pad=0.15):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    lo, hi = pts.min(0), pts.max(0)
    c = 0.5 * (lo + hi)
    r = 0.5 * max(float((hi - lo).max()), 1e-9) * (1 + pad) + pad
    ax.set_xlim(c[0] - r, c[0] + r)
    ax.set_ylim(c[1] - r, c[1] + r)
    ax.set_aspect("equal")


def training_panel(samples, data_points, walk, path, title: str = "", tangents=None) -> Path:
    """Generated samples, data points (with tangents) and the latent walk."""
    fig, ax = _figure()
    samples = np.asarray(samples)
    data_points = np.asarray(data_points)
    walk = np.asarray(walk)
    ax.scatter(samples[:, 0], samples[:, 1], s=6, c="tab:orange", alpha=0.5, gid="samples")
    ax.plot(walk[:, 0], walk[:, 1], c="black", lw=1.5, gid="walk")
    ax.scatter(data_points[:, 0], data_points[:, 1], s=40, c="tab:blue", gid="data")
    if tangents is not None:
        t = np.asarray(tangents).reshape(len(data_points), -1)[:, :2]
        ax.quiver(data_points[:, 0], data_points[:, 1], t[:, 0], t[:, 1], color="tab:blue",
                  angles="xy", scale_units="xy", scale=4, gid="tangents")
    _square_limits(ax, np.vstack([data_points, walk]))
    if title:
        ax.set_title(title)
    return _save(fig, ax, path)


def point_decomposition(T_json: dict, result_json: dict, path) -> Path:
    """Atoms of ``T``, residual atoms ``A`` and transport segments ``B`` (0-currents in R^1 or R^2)."""
    fig, ax = _figure()
    d = int(T_json["d"])

    def lift(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.array([x[0], 0.0]) if d == 1 else x[:2]

    pts = [lift(a["x"]) for a in T_json["atoms"]] or [np.zeros(2)]
    segs = [(lift(s["tail"]), lift(s["head"])) for s in result_json["primal_witness"]["B"]]
    if segs:
        lc = LineCollection(segs, colors="tab:green", linewidths=2, gid="B")
        ax.add_collection(lc)
    a_atoms = result_json["primal_witness"]["A"]["atoms"]
    for a in a_atoms:
        p = lift(a["x"])
        ax.scatter([p[0]], [p[1]], s=220, facecolors="none", edgecolors="tab:red", linewidths=2, gid="A")
    for a, p in zip(T_json["atoms"], pts):
        ax.scatter([p[0]], [p[1]], s=40, c="tab:blue" if a.get("w", 1.0) > 0 else "tab:purple", gid="T")
    _square_limits(ax, np.array(pts))
    ax.set_title(f"F = {result_json['value']:.6g}, lambda = {result_json['lambda']:.6g}")
    return _save(fig, ax, path)


def simplicial_decomposition(complex, t, A, B, path, title: str = "") -> Path:
    """Input chain ``t``, residual 1-chain ``A`` and filling 2-chain ``B`` on a planar complex."""
    fig, ax = _figure()
    V = complex.vertices
    tris = np.array(complex.simplices(2), dtype=np.intp).reshape(-1, 3)
    edges = np.array(complex.simplices(1), dtype=np.intp).reshape(-1, 2)
    ax.add_collection(LineCollection(V[edges], colors="0.85", linewidths=0.5, gid="mesh"))
    b = np.asarray(B.coeffs)
    if np.any(b):
        sel = np.abs(b) > 0
        ax.add_collection(PolyCollection(V[tris[sel]], facecolors="tab:green", alpha=0.35,
                                         edgecolors="none", gid="B"))
    for chain, color, width, gid in ((t, "tab:blue", 4, "T"), (A, "tab:red", 2, "A")):
        c = np.asarray(chain.coeffs)
        sel = np.abs(c) > 0
        if np.any(sel):
            ax.add_collection(LineCollection(V[edges[sel]], colors=color, linewidths=width, gid=gid))
    _square_limits(ax, V, pad=0.05)
    if title:
        ax.set_title(title)
    return _save(fig, ax, path)


def flat_curve(xs, values, path, lams=None) -> Path:
    """Flat norm as a function of a scalar parameter, one curve per lambda."""
    fig, ax = _figure()
    values = np.atleast_2d(values)
    lams = lams if lams is not None else [None] * len(values)
    for v, lam in zip(values, lams):
        ax.plot(xs, v, label=None if lam is None else f"lambda = {lam:g}")
    if lams[0] is not None:
        ax.legend()
    ax.set_xlabel("x")
    ax.set_ylabel("F")
    return _save(fig, ax, path)
