"""FlatGAN: generative modelling of k-currents by a flat-norm critic.

The generator ``g`` pushes the latent current ``S = mu ^ e1 ^ ... ^ ek`` to
``R^d``; the critic is a neural k-form

    omega(x)(v) = omega0(x) + alpha * det(W(x)^T V)

with ``omega0`` scalar and ``W(x)`` the d x k matrix of neural 1-forms. The
game value is ``E = g#S(omega) - T(omega)``; the critic ascends ``E`` minus
soft comass and exterior-derivative penalties at the data points and the
generator descends ``E``.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import algebra
from .autodiff import AdamState, Mlp, MlpSpec, NonFiniteGradient, adam_step, jvp, save_checkpoint
from .currents import FLATGAN_LATENT, DiscreteCurrent, _draw_latent

__all__ = [
    "TrainConfig",
    "DataCurrentSpec",
    "TrainingDivergence",
    "TrainResult",
    "Generator",
    "Discriminator",
    "build_circle_dataset",
    "haar_frame_sample",
    "haar_frames",
    "omega_apply",
    "generator_term",
    "data_term",
    "penalty",
    "train",
    "latent_walk",
    "tangent_alignment",
    "min_distance",
    "tube_fraction",
]


class TrainingDivergence(FloatingPointError):
    """A loss or gradient became non-finite during training."""


@dataclass
class TrainConfig:
    k: int = 1
    epochs: int = 2000
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.9)
    n_critic: int = 5
    batch: int = 5
    lam: float = 1.0
    rho: float = 10.0
    alpha: float = 1.0
    frames_per_point: int = 4
    seed: int = 0
    n_points: int = 5
    radius: float = 1.0
    gen_widths: tuple[int, ...] = (250, 250, 250)
    omega0_widths: tuple[int, ...] = (100, 100, 100)
    omega1_widths: tuple[int, ...] = (100, 100)
    init: str = "glorot"
    init_gain: float = 1.0
    eval_samples: int = 500
    walk_points: int = 201
    snapshot_every: int = 250
    checkpoint_every: int = 250

    def __post_init__(self):
        self.betas = tuple(self.betas)
        for name in ("gen_widths", "omega0_widths", "omega1_widths"):
            setattr(self, name, tuple(int(w) for w in getattr(self, name)))
        if self.k not in (0, 1, 2):
            raise ValueError(f"k must be 0, 1 or 2, got {self.k}")
        for name in ("epochs", "n_critic", "batch", "frames_per_point", "n_points", "eval_samples", "walk_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "lam", "radius", "init_gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init not in ("glorot", "fan_in"):
            raise ValueError(f"unknown init scheme {self.init!r}")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> dict:
        out = asdict(self)
        out["betas"] = list(self.betas)
        for name in ("gen_widths", "omega0_widths", "omega1_widths"):
            out[name] = list(out[name])
        return out


@dataclass(frozen=True)
class DataCurrentSpec:
    """``(1/N) sum_i delta_{x_i} ^ T_i`` with tangent frames of shape (N, d, k)."""

    points: np.ndarray
    tangents: np.ndarray

    @property
    def k(self) -> int:
        return self.tangents.shape[2]

    def current(self, k: int | None = None) -> DiscreteCurrent:
        k = self.k if k is None else k
        n = len(self.points)
        return DiscreteCurrent(self.points, np.full(n, 1.0 / n), self.tangents[:, :, :k])


def build_circle_dataset(n: int = 5, radius: float = 1.0, phase: float = 0.0) -> DataCurrentSpec:
    """``n`` equally spaced points on a circle with counterclockwise unit tangents."""
    if n < 1:
        raise ValueError("need at least one point")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    ang = phase + 2.0 * np.pi * np.arange(n) / n
    pts = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    tan = np.column_stack([-pts[:, 1], pts[:, 0]]) / radius
    return DataCurrentSpec(pts, tan[:, :, None])


def haar_frame_sample(d: int, k: int, rng: np.random.Generator) -> algebra.Frame:
    return algebra.haar_frame_sample(d, k, rng)


def haar_frames(n: int, d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """(n, d, k) batch of Haar-distributed orthonormal k-frames.

    Each frame is the polar factor of a k x d Gaussian matrix.
    """
    if k > d:
        raise ValueError(f"cannot fit {k} orthonormal vectors in R^{d}")
    if k == 0:
        return np.zeros((n, d, 0))
    g = rng.standard_normal((n, k, d))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    return np.transpose(u @ vt, (0, 2, 1))


def _embed(z: torch.Tensor) -> torch.Tensor:
    return torch.cat([torch.cos(z[:, :1]), torch.sin(z[:, :1]), z[:, 1:]], dim=1)


class Generator:
    """``z -> mlp(cos z1, sin z1, z2, ...)``; periodic in ``z1``."""

    def __init__(self, net: Mlp):
        self.net = net

    @classmethod
    def init(cls, latent_dim: int, d: int, rng, widths=(250, 250, 250), gain=None, scheme="fan_in") -> "Generator":
        spec = MlpSpec((latent_dim + 1, *widths, d))
        return cls(Mlp.init(spec, rng, gain=gain, scheme=scheme))

    @property
    def latent_dim(self) -> int:
        return self.net.spec.widths[0] - 1

    @property
    def d(self) -> int:
        return self.net.spec.widths[-1]

    def parameters(self):
        return self.net.params

    def __call__(self, z: torch.Tensor) -> torch.Tensor:
        return self.net(_embed(z))

    def push(self, z, k: int, create_graph: bool = True):
        """Images ``g(z)`` and pushed frames ``dg(z) e_i`` (n, d, k) via jvp."""
        z = torch.as_tensor(z, dtype=torch.float64).detach().requires_grad_(True)
        x = self(z)
        cols = []
        for i in range(k):
            e = torch.zeros_like(z)
            e[:, i] = 1.0
            cols.append(jvp(x, z, e, create_graph=create_graph))
        tangents = torch.stack(cols, dim=2) if cols else x.new_zeros(x.shape + (0,))
        return x, tangents


class Discriminator:
    """Neural k-form ``omega0(x) + alpha det(W(x)^T V)``."""

    def __init__(self, omega0: Mlp, omega1: Mlp | None, k: int, alpha: float = 1.0):
        self.omega0 = omega0
        self.omega1 = omega1
        self.k = k
        self.alpha = float(alpha)
        if (k > 0) != (omega1 is not None):
            raise ValueError("omega1 is required exactly when k > 0")
        if omega1 is not None and omega1.spec.widths[-1] != self.d * k:
            raise ValueError("omega1 must output d * k values")

    @classmethod
    def init(cls, d: int, k: int, rng, widths0=(100, 100, 100), alpha=1.0, widths1=(100, 100), gain=None,
             scheme="fan_in"):
        o0 = Mlp.init(MlpSpec((d, *widths0, 1)), rng, gain=gain, scheme=scheme)
        o1 = Mlp.init(MlpSpec((d, *widths1, d * k)), rng, gain=gain, scheme=scheme) if k else None
        return cls(o0, o1, k, alpha)

    @property
    def d(self) -> int:
        return self.omega0.spec.widths[0]

    def parameters(self):
        return self.omega0.params + (self.omega1.params if self.omega1 is not None else [])

    def value0(self, x: torch.Tensor) -> torch.Tensor:
        return self.omega0(x)[:, 0]

    def forms(self, x: torch.Tensor) -> torch.Tensor:
        """(n, d, k) matrix whose columns are the neural 1-forms."""
        return self.omega1(x).reshape(x.shape[0], self.k, self.d).transpose(1, 2)

    def apply(self, x: torch.Tensor, frames: torch.Tensor) -> torch.Tensor:
        return omega_apply(self, x, frames)


def _pair(W: torch.Tensor, V: torch.Tensor) -> torch.Tensor:
    # det(W^T V) row by row
    if W.shape[2] == 1:
        return (W[:, :, 0] * V[:, :, 0]).sum(1)
    return torch.linalg.det(W.transpose(1, 2) @ V)


def omega_apply(D: Discriminator, x, frames) -> torch.Tensor:
    x = torch.as_tensor(x, dtype=torch.float64)
    frames = torch.as_tensor(frames, dtype=torch.float64)
    if x.ndim != 2 or x.shape[1] != D.d:
        raise ValueError(f"points must have shape (n, {D.d}), got {tuple(x.shape)}")
    if frames.shape != (x.shape[0], D.d, D.k):
        raise ValueError(f"frames must have shape {(x.shape[0], D.d, D.k)}, got {tuple(frames.shape)}")
    out = D.value0(x)
    if D.k:
        out = out + D.alpha * _pair(D.forms(x), frames)
    return out


def generator_term(G: Generator, D: Discriminator, z, k: int, create_graph: bool = True) -> torch.Tensor:
    """Monte Carlo ``g#S(omega)`` over the latent batch ``z``."""
    x, tangents = G.push(z, k, create_graph=create_graph)
    if not torch.isfinite(x).all() or not torch.isfinite(tangents).all():
        raise TrainingDivergence("generator produced non-finite values")
    return omega_apply(D, x, tangents).mean()


def data_term(D: Discriminator, data: DataCurrentSpec, k: int) -> torch.Tensor:
    return omega_apply(D, torch.as_tensor(data.points), torch.as_tensor(data.tangents[:, :, :k])).mean()


def penalty(D: Discriminator, points, k: int, lam: float, rho: float, rng: np.random.Generator,
            frames_per_point: int = 4) -> torch.Tensor:
    """Soft comass and exterior-derivative constraints at ``points``.

    ``rho * mean(relu(|omega(x)(v)| - lam)^2)`` over Haar k-frames ``v`` plus
    ``rho * mean(relu(|d omega| - 1)^2)`` with

        |d omega| ~ (k+1) |grad omega0(x)| + alpha |sum_i (-1)^i grad_x det(W^T V_{-i}) . v_i|

    over Haar (k+1)-frames ``V``. For k = 0 this is a one-sided gradient
    penalty plus a bound on ``|omega0|``.
    """
    pts = torch.as_tensor(points, dtype=torch.float64)
    n, d = pts.shape
    m = frames_per_point
    x = pts.repeat(m, 1).detach().requires_grad_(True)
    V = torch.from_numpy(haar_frames(n * m, d, k, rng))
    U = torch.from_numpy(haar_frames(n * m, d, k + 1, rng)) if k + 1 <= d else None

    o0 = D.value0(x)
    val = o0
    if k:
        W = D.forms(x)
        val = o0 + D.alpha * _pair(W, V)
    comass_pen = torch.relu(val.abs() - lam).pow(2).mean()

    (g0,) = torch.autograd.grad(o0.sum(), x, create_graph=True)
    dnorm = (k + 1) * g0.norm(dim=1)
    if k and U is not None:
        acc = torch.zeros(n * m)
        for i in range(k + 1):
            rest = torch.cat([U[:, :, :i], U[:, :, i + 1:]], dim=2)
            s = _pair(W, rest)
            (gs,) = torch.autograd.grad(s.sum(), x, create_graph=True)
            acc = acc + (-1) ** i * (gs * U[:, :, i]).sum(1)
        dnorm = dnorm + D.alpha * acc.abs()
    deriv_pen = torch.relu(dnorm - 1.0).pow(2).mean()
    out = rho * (comass_pen + deriv_pen)
    if not torch.isfinite(out):
        raise TrainingDivergence("penalty is non-finite")
    return out


def latent_walk(G: Generator, dim: int = 1, n: int = 201, lo: float = -math.pi, hi: float = math.pi) -> np.ndarray:
    """Image of the grid ``z_dim in [lo, hi]`` with other latents at zero, shape (n, d)."""
    if not 1 <= dim <= G.latent_dim:
        raise ValueError(f"dim must be in 1..{G.latent_dim}")
    z = torch.zeros(n, G.latent_dim)
    z[:, dim - 1] = torch.linspace(lo, hi, n)
    with torch.no_grad():
        return G(z).numpy()


def tangent_alignment(G: Generator, data: DataCurrentSpec, n_grid: int = 721) -> float:
    """Mean cosine between ``dg/dz1`` at the walk point nearest each x_i and T_i."""
    if len(data.points) == 0 or data.k < 1:
        raise ValueError("tangent alignment needs data points with tangents")
    z = torch.zeros(n_grid, G.latent_dim)
    z[:, 0] = torch.linspace(-math.pi, math.pi, n_grid)
    x, tan = G.push(z, 1, create_graph=False)
    x = x.detach().numpy()
    tan = tan[:, :, 0].detach().numpy()
    nearest = np.argmin(np.linalg.norm(data.points[:, None] - x[None], axis=-1), axis=1)
    t = tan[nearest]
    ref = data.tangents[:, :, 0]
    cos = (t * ref).sum(1) / np.maximum(np.linalg.norm(t, axis=1) * np.linalg.norm(ref, axis=1), 1e-300)
    return float(cos.mean())


def min_distance(samples: np.ndarray, data: DataCurrentSpec) -> float:
    """Mean over samples of the distance to the nearest data point."""
    return float(np.linalg.norm(samples[:, None] - data.points[None], axis=-1).min(axis=1).mean())


def tube_fraction(walk: np.ndarray, radius: float, width: float, center=(0.0, 0.0)) -> float:
    """Fraction of walk points within ``width`` of the circle of given radius."""
    r = np.linalg.norm(walk - np.asarray(center), axis=1)
    return float(np.mean(np.abs(r - radius) <= width))


@dataclass
class TrainResult:
    config: TrainConfig
    generator: Generator
    discriminator: Discriminator
    metrics: list[dict] = field(default_factory=list)
    run_dir: Path | None = None


METRIC_FIELDS = ("epoch", "E_disc", "E_gen", "penalty", "min_dist", "tangent_alignment")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


def _check(value: torch.Tensor, what: str, epoch: int):
    if not torch.isfinite(value).all():
        raise TrainingDivergence(f"{what} became non-finite at epoch {epoch}")


def _grads(loss, params, what, epoch):
    gs = torch.autograd.grad(loss, params)
    for g in gs:
        if not torch.isfinite(g).all():
            raise TrainingDivergence(f"{what} gradient became non-finite at epoch {epoch}")
    return gs


def _write_points(path: Path, pts: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(pts.shape[1])])
        for p in pts:
            w.writerow([_fmt(v) for v in p])


def train(cfg: TrainConfig, data: DataCurrentSpec | None = None, out_dir=None, progress=None) -> TrainResult:
    """Alternate ``n_critic`` critic ascents with one generator descent per epoch.

    RNG streams for initialization, latent batches, Haar frames and the fixed
    evaluation latents are spawned from ``cfg.seed``, so runs are reproducible.
    With ``out_dir`` set, writes ``config.json``, ``metrics.csv`` and periodic
    checkpoints, sample clouds and latent walks.
    """
    torch.set_default_dtype(torch.float64)
    data = data or build_circle_dataset(cfg.n_points, cfg.radius)
    k = cfg.k
    if data.k < k:
        raise ValueError(f"data carries {data.k} tangents, need {k}")
    d = data.points.shape[1]
    latent = FLATGAN_LATENT
    init_rng, latent_rng, haar_rng, eval_rng = (np.random.default_rng(s)
                                                for s in np.random.SeedSequence(cfg.seed).spawn(4))
    G = Generator.init(len(latent), d, init_rng, cfg.gen_widths, gain=cfg.init_gain, scheme=cfg.init)
    D = Discriminator.init(d, k, init_rng, cfg.omega0_widths, cfg.alpha, cfg.omega1_widths,
                           gain=cfg.init_gain, scheme=cfg.init)
    optG = AdamState(lr=cfg.lr, beta1=cfg.betas[0], beta2=cfg.betas[1])
    optD = AdamState(lr=cfg.lr, beta1=cfg.betas[0], beta2=cfg.betas[1])
    z_eval = torch.from_numpy(_draw_latent(latent, cfg.eval_samples, eval_rng))
    pts = torch.from_numpy(data.points)

    run_dir = Path(out_dir) if out_dir is not None else None
    writer = None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
        fh = (run_dir / "metrics.csv").open("w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRIC_FIELDS)

    result = TrainResult(cfg, G, D, [], run_dir)
    t0 = time.perf_counter()
    try:
        for epoch in range(1, cfg.epochs + 1):
            for _ in range(cfg.n_critic):
                z = torch.from_numpy(_draw_latent(latent, cfg.batch, latent_rng))
                xf, tf = G.push(z, k, create_graph=False)
                e_disc = omega_apply(D, xf.detach(), tf.detach()).mean() - data_term(D, data, k)
                pen = penalty(D, pts, k, cfg.lam, cfg.rho, haar_rng, cfg.frames_per_point)
                loss = pen - e_disc
                _check(loss, "critic loss", epoch)
                adam_step(optD, D.parameters(), _grads(loss, D.parameters(), "critic", epoch))
            z = torch.from_numpy(_draw_latent(latent, cfg.batch, latent_rng))
            gen = generator_term(G, D, z, k)
            _check(gen, "generator loss", epoch)
            adam_step(optG, G.parameters(), _grads(gen, G.parameters(), "generator", epoch))
            with torch.no_grad():
                e_gen = float(gen) - float(data_term(D, data, k))
                samples = G(z_eval).numpy()
            row = {
                "epoch": epoch,
                "E_disc": float(e_disc.detach()),
                "E_gen": e_gen,
                "penalty": float(pen.detach()),
                "min_dist": min_distance(samples, data),
                "tangent_alignment": tangent_alignment(G, data, cfg.walk_points) if k >= 1 else None,
            }
            result.metrics.append(row)
            if writer is not None:
                writer.writerow([_fmt(row[f]) for f in METRIC_FIELDS])
                fh.flush()
                last = epoch == cfg.epochs
                if last or epoch % cfg.snapshot_every == 0:
                    _write_points(run_dir / "samples" / f"epoch_{epoch}.csv", samples)
                    _write_points(run_dir / "walk" / f"epoch_{epoch}.csv", latent_walk(G, n=cfg.walk_points))
                if last or epoch % cfg.checkpoint_every == 0:
                    save_checkpoint(run_dir / "checkpoints" / f"epoch_{epoch}.bin",
                                    {"generator": G.net, "omega0": D.omega0,
                                     **({"omega1": D.omega1} if D.omega1 is not None else {})},
                                    {"epoch": epoch, "k": k, "alpha": cfg.alpha, "seed": cfg.seed})
            if progress is not None:
                progress(row, time.perf_counter() - t0)
    except NonFiniteGradient as exc:
        raise TrainingDivergence(str(exc)) from exc
    finally:
        if writer is not None:
            fh.close()
    return result
