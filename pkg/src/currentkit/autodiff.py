"""Reverse-mode differentiation helpers, small MLPs and Adam.

Built on torch autograd: gradients are recorded (``create_graph=True``) so
gradient expressions can be differentiated again, and Jacobian-vector
products use the double-vjp trick (two extra backward passes).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

torch.set_default_dtype(torch.float64)

__all__ = [
    "TapeError",
    "NonFiniteGradient",
    "ACTIVATIONS",
    "grad",
    "jvp",
    "MlpSpec",
    "Mlp",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]

LEAKY_SLOPE = 0.2


class TapeError(ValueError):
    """A requested leaf is not part of the recorded computation."""


class NonFiniteGradient(FloatingPointError):
    """Adam was handed a NaN/inf gradient."""


def _leaky(x):
    return torch.nn.functional.leaky_relu(x, LEAKY_SLOPE)


ACTIVATIONS = {
    "leaky_relu": _leaky,
    "elu": torch.nn.functional.elu,
    "identity": lambda x: x,
    "tanh": torch.tanh,
}


def grad(output, leaves, create_graph: bool = False, allow_unused: bool = False):
    """Gradient of a recorded scalar with respect to ``leaves``.

    With ``create_graph=True`` the result is itself recorded and can be
    differentiated again.
    """
    single = isinstance(leaves, torch.Tensor)
    leaves = [leaves] if single else list(leaves)
    if output.numel() != 1:
        raise ValueError(f"grad needs a scalar output, got shape {tuple(output.shape)}")
    if not output.requires_grad:
        raise TapeError("output was not recorded on a tape")
    for leaf in leaves:
        if not leaf.requires_grad:
            raise TapeError("leaf does not require grad")
    gs = torch.autograd.grad(output, leaves, create_graph=create_graph, allow_unused=True)
    if not allow_unused and any(g is None for g in gs):
        raise TapeError("leaf is not connected to the output")
    gs = [torch.zeros_like(l) if g is None else g for g, l in zip(gs, leaves)]
    return gs[0] if single else gs


def jvp(output, inputs, v, create_graph: bool = True):
    """``J v`` for a recorded ``output = f(inputs)`` using two backward passes.

    First ``u -> J^T u`` is recorded for a dummy cotangent ``u``; that map is
    linear in ``u`` so differentiating ``<J^T u, v>`` with respect to ``u``
    gives ``J v``. ``v`` must have the shape of ``inputs``.
    """
    if v.shape != inputs.shape:
        raise ValueError(f"tangent shape {tuple(v.shape)} != input shape {tuple(inputs.shape)}")
    u = torch.zeros_like(output, requires_grad=True)
    (vjp_u,) = torch.autograd.grad(output, inputs, u, create_graph=True, allow_unused=True)
    if vjp_u is None:
        return torch.zeros_like(output)
    (jv,) = torch.autograd.grad(vjp_u, u, v, create_graph=create_graph, allow_unused=True)
    return torch.zeros_like(output) if jv is None else jv


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        acts = self.activations or ("leaky_relu",) * (len(self.widths) - 2) + ("identity",)
        if len(acts) != len(self.widths) - 1:
            raise ValueError(f"{len(acts)} activations for {len(self.widths) - 1} layers")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "activations", tuple(acts))


class Mlp:
    """Fully connected net with explicit weight/bias tensors."""

    def __init__(self, spec: MlpSpec, params: list[torch.Tensor]):
        self.spec = spec
        expected = []
        for a, b in zip(spec.widths[:-1], spec.widths[1:]):
            expected += [(b, a), (b,)]
        if [tuple(p.shape) for p in params] != expected:
            raise ValueError("parameter shapes do not match the MlpSpec widths")
        self.params = params

    @classmethod
    def init(cls, spec: MlpSpec, rng: np.random.Generator, zero: bool = False,
             gain: float | None = None, scheme: str = "fan_in") -> "Mlp":
        """Uniform weight init with zero biases.

        ``scheme="fan_in"`` draws from ``U(+-sqrt(gain / fan_in))``; the default
        gain ``6 / (1 + a^2)`` is He init for leaky ReLU with slope ``a``.
        ``scheme="glorot"`` draws from ``U(+-sqrt(6 / (fan_in + fan_out)))``.
        """
        if scheme not in ("fan_in", "glorot"):
            raise ValueError(f"unknown init scheme {scheme!r}")
        if gain is None:
            gain = 6.0 / (1.0 + LEAKY_SLOPE ** 2)
        params = []
        for a, b in zip(spec.widths[:-1], spec.widths[1:]):
            bound = math.sqrt(gain / a) if scheme == "fan_in" else math.sqrt(6.0 / (a + b))
            w = np.zeros((b, a)) if zero else rng.uniform(-bound, bound, (b, a))
            params.append(torch.tensor(w, requires_grad=True))
            params.append(torch.zeros(b, requires_grad=True))
        return cls(spec, params)

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.spec.widths[0]:
            raise ValueError(f"input width {x.shape[-1]} != {self.spec.widths[0]}")
        h = x
        for i, act in enumerate(self.spec.activations):
            h = ACTIVATIONS[act](h @ self.params[2 * i].T + self.params[2 * i + 1])
        return h

    def flat(self) -> np.ndarray:
        return np.concatenate([p.detach().numpy().ravel() for p in self.params])

    def load_flat(self, flat: np.ndarray) -> None:
        flat = np.array(flat, dtype=float)
        n = sum(p.numel() for p in self.params)
        if flat.size != n:
            raise ValueError(f"expected {n} values, got {flat.size}")
        off = 0
        with torch.no_grad():
            for p in self.params:
                p.copy_(torch.from_numpy(flat[off:off + p.numel()].reshape(p.shape)))
                off += p.numel()

    def copy(self) -> "Mlp":
        return Mlp(self.spec, [p.detach().clone().requires_grad_(True) for p in self.params])


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params, grads) -> None:
    """In-place Adam update with bias correction.

    Raises :class:`NonFiniteGradient` before touching anything if any gradient
    is NaN/inf.
    """
    params = list(params)
    grads = list(grads)
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)}")
        if not torch.isfinite(g).all():
            raise NonFiniteGradient("non-finite gradient")
    if not state.m:
        state.m = [torch.zeros_like(p) for p in params]
        state.v = [torch.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.m, state.v):
            g = g.detach()
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            p.sub_(state.lr * (m / c1) / (torch.sqrt(v / c2) + state.eps))


def save_checkpoint(path, nets: dict, manifest: dict) -> None:
    """Write ``path`` (flat little-endian float64) and ``path`` + ``.json`` manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blobs, layout = [], []
    for name, net in nets.items():
        flat = net.flat()
        layout.append({"name": name, "widths": list(net.spec.widths),
                       "activations": list(net.spec.activations), "size": int(flat.size)})
        blobs.append(flat)
    data = np.concatenate(blobs) if blobs else np.zeros(0)
    path.write_bytes(data.astype("<f8").tobytes())
    meta = dict(manifest)
    meta["nets"] = layout
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path) -> tuple[dict, dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(nets, manifest)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    nets, off = {}, 0
    for entry in meta["nets"]:
        spec = MlpSpec(tuple(entry["widths"]), tuple(entry["activations"]))
        net = Mlp.init(spec, np.random.default_rng(0), zero=True)
        net.load_flat(data[off:off + entry["size"]])
        off += entry["size"]
        nets[entry["name"]] = net
    if off != data.size:
        raise ValueError("checkpoint size does not match its manifest")
    return nets, meta
