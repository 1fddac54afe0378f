import json

import numpy as np
import pytest
import torch

from currentkit.autodiff import (
    AdamState,
    Mlp,
    MlpSpec,
    NonFiniteGradient,
    TapeError,
    adam_step,
    grad,
    jvp,
    load_checkpoint,
    save_checkpoint,
)


def small_net(rng, widths=(2, 8, 8, 1), acts=None):
    return Mlp.init(MlpSpec(widths, acts or ()), rng)


def fd_grad(f, x, h=1e-4):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-12)


def test_zero_net_outputs_zero(rng):
    net = Mlp.init(MlpSpec((3, 5, 2)), rng, zero=True)
    assert torch.equal(net(torch.ones(4, 3)), torch.zeros(4, 2))


def test_single_linear_layer_is_matmul(rng):
    net = Mlp.init(MlpSpec((3, 2), ("identity",)), rng)
    with torch.no_grad():
        net.params[1].copy_(torch.tensor([0.5, -1.0]))
    x = rng.standard_normal((4, 3))
    W, b = (p.detach().numpy() for p in net.params)
    assert np.allclose(net(torch.tensor(x)).detach().numpy(), x @ W.T + b, atol=1e-12)


def test_leaky_relu_slope():
    net = Mlp(MlpSpec((1, 1), ("leaky_relu",)), [torch.ones(1, 1, requires_grad=True), torch.zeros(1, requires_grad=True)])
    assert net(torch.tensor([[-1.0]])).item() == pytest.approx(-0.2)


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 2), ("swish",))
    net = Mlp.init(MlpSpec((3, 2)), np.random.default_rng(0))
    with pytest.raises(ValueError):
        net(torch.zeros(1, 4))


def test_grad_of_square():
    x = torch.tensor(3.0, requires_grad=True)
    assert grad(x * x, x).item() == 6.0


def test_grad_errors():
    x = torch.tensor(1.0, requires_grad=True)
    y = torch.tensor(2.0, requires_grad=True)
    with pytest.raises(TapeError):
        grad(x * 2, [x, y])
    with pytest.raises(TapeError):
        grad(torch.tensor(1.0), x)
    with pytest.raises(ValueError):
        grad(torch.stack([x, x]), x)


def test_input_gradient_matches_fd(rng):
    net = small_net(rng)
    x0 = rng.standard_normal(2)
    x = torch.tensor(x0, requires_grad=True)
    g = grad(net(x[None])[0, 0], x).numpy()
    fd = fd_grad(lambda v: net(torch.tensor(v)[None])[0, 0].item(), x0)
    assert rel_err(g, fd) < 1e-5


def test_second_order_gradient_norm_wrt_params(rng):
    # d/dtheta |grad_x net(x)| against finite differences of a finite-difference gradient
    net = small_net(rng, acts=("tanh", "tanh", "identity"))
    x0 = rng.standard_normal(2)
    x = torch.tensor(x0, requires_grad=True)
    gx = grad(net(x[None])[0, 0], x, create_graph=True)
    gtheta = grad(gx.norm(), net.params[0]).numpy()
    W0 = net.params[0].detach().numpy().copy()

    def fd_of_fd(W):
        with torch.no_grad():
            net.params[0].copy_(torch.tensor(W))
        val = np.linalg.norm(fd_grad(lambda v: net(torch.tensor(v)[None])[0, 0].item(), x0, 1e-4))
        return val

    ref = fd_grad(fd_of_fd, W0, 1e-4)
    assert rel_err(gtheta, ref) < 1e-3


def test_jvp_matches_full_jacobian(rng):
    net = small_net(rng, widths=(3, 8, 8, 2))
    z = torch.tensor(rng.standard_normal((5, 3)), requires_grad=True)
    out = net(z)
    v = torch.tensor(rng.standard_normal((5, 3)))
    jv = jvp(out, z, v)
    J = torch.autograd.functional.jacobian(lambda t: net(t[None])[0], z[0].detach())
    assert torch.allclose(jv[0], J @ v[0], atol=1e-10)


def test_jvp_shape_check(rng):
    z = torch.zeros(2, 3, requires_grad=True)
    with pytest.raises(ValueError):
        jvp(z * 2, z, torch.zeros(3))


def test_adam_matches_torch(rng):
    net = small_net(rng)
    ref = [p.detach().clone().requires_grad_(True) for p in net.params]
    opt = torch.optim.Adam(ref, lr=1e-3, betas=(0.5, 0.9), eps=1e-8)
    state = AdamState(lr=1e-3, beta1=0.5, beta2=0.9)
    x = torch.tensor(rng.standard_normal((6, 2)))
    for _ in range(5):
        loss = net(x).pow(2).sum()
        adam_step(state, net.params, torch.autograd.grad(loss, net.params))
        opt.zero_grad()
        ref_net = Mlp(net.spec, ref)
        ref_net(x).pow(2).sum().backward()
        opt.step()
    for p, q in zip(net.params, ref):
        assert torch.allclose(p, q, atol=1e-12)
    assert state.step == 5


def test_adam_rejects_non_finite(rng):
    net = small_net(rng)
    before = [p.detach().clone() for p in net.params]
    bad = [torch.zeros_like(p) for p in net.params]
    bad[-1][0] = float("nan")
    with pytest.raises(NonFiniteGradient):
        adam_step(AdamState(), net.params, bad)
    assert all(torch.equal(p, q) for p, q in zip(net.params, before))


def test_checkpoint_round_trip(tmp_path, rng):
    a = small_net(rng)
    b = small_net(rng, widths=(2, 4, 2), acts=("elu", "identity"))
    path = tmp_path / "ck" / "epoch_1.bin"
    save_checkpoint(path, {"a": a, "b": b}, {"epoch": 1})
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    assert raw.size == a.flat().size + b.flat().size
    nets, meta = load_checkpoint(path)
    assert meta["epoch"] == 1
    assert np.array_equal(nets["a"].flat(), a.flat())
    assert nets["b"].spec == b.spec
    assert json.loads(path.with_suffix(".bin.json").read_text())["nets"][0]["name"] == "a"
