"""``currentkit`` command line.

Exit codes: 0 success, 2 unreadable or invalid input, 3 unsupported exact
mode / missing capability, 4 LP solver failure, 5 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

EXIT_PARSE, EXIT_CAPABILITY, EXIT_SOLVER, EXIT_DIVERGENCE = 2, 3, 4, 5

EPILOG = """exit codes:
  2  input could not be parsed or failed validation
  3  unsupported exact mode or missing derivative capability
  4  LP solver failure
  5  training diverged (non-finite loss)

CURRENTKIT_THREADS caps the number of compute threads (default 1)."""


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _read_json(path):
    try:
        text = sys.stdin.read() if str(path) == "-" else Path(path).read_text()
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_PARSE, f"cannot read {path}: {exc}") from exc


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _parse(fn, *args, what="input"):
    try:
        return fn(*args)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        from .algebra import UnsupportedExactMode
        from .forms import CapabilityError

        if isinstance(exc, (UnsupportedExactMode, CapabilityError)):
            raise
        raise CliError(EXIT_PARSE, f"invalid {what}: {exc}") from exc


def cmd_algebra(args):
    from . import algebra as alg

    obj = _read_json(args.input)
    op = args.op
    if op in ("mass", "comass"):
        v = _parse(alg.kvector_from_json, obj, op == "comass", what="k-vector")
        if op == "mass":
            lo, hi = alg.mass(v, mode=args.mode or "exact", restarts=args.restarts, seed=args.seed)
            return {"op": "mass", "value": hi if lo == hi else None, "lower": lo, "upper": hi,
                    "euclidean": alg.euclidean_norm(v)}
        val, frame = alg.comass(v, mode=args.mode or "exact", restarts=args.restarts, seed=args.seed)
        return {"op": "comass", "value": val, "certificate": frame.columns.T.tolist()}
    pair = obj if isinstance(obj, list) else [obj.get("a"), obj.get("b")] if isinstance(obj, dict) else None
    if not pair or len(pair) != 2 or any(p is None for p in pair):
        raise CliError(EXIT_PARSE, f"{op} expects a list of two k-vectors or an object with 'a' and 'b'")
    if op == "wedge":
        u, w = (_parse(alg.kvector_from_json, p, what="k-vector") for p in pair)
        return {"op": "wedge", "value": alg.kvector_to_json(_parse(alg.wedge, u, w))}
    u = _parse(alg.kvector_from_json, pair[0], what="k-vector")
    w = _parse(alg.kvector_from_json, pair[1], True, what="k-covector")
    return {"op": "inner", "value": _parse(alg.inner, u, w)}


def _strip_form(res_json):
    dw = res_json.get("dual_witness")
    if dw and "form" in dw:
        dw = dict(dw)
        dw.pop("form")
        res_json["dual_witness"] = dw
    return res_json


def cmd_flatnorm(args):
    from .currents import DiscreteCurrent, SimplicialChain, SimplicialComplex
    from . import flatnorm as fn

    obj = _read_json(args.input)
    lam = args.lam
    if args.mode == "simplicial":
        cx = _parse(SimplicialComplex.from_json, obj["complex"] if "complex" in obj else {}, what="complex")
        if "chain" not in obj:
            raise CliError(EXIT_PARSE, "simplicial input needs 'complex' and 'chain'")
        t = _parse(SimplicialChain.from_json, cx, obj["chain"], what="chain")
        res = _parse(fn.flat_norm_simplicial, t, lam)
        out = res.to_json()
        if args.emit_svg:
            from .plotting import simplicial_decomposition

            A = SimplicialChain.from_json(cx, out["primal_witness"]["A"])
            B = SimplicialChain.from_json(cx, out["primal_witness"]["B"])
            simplicial_decomposition(cx, t, A, B, args.emit_svg, f"F = {res.value:.6g}")
        return out
    if "S" in obj:
        S = _parse(DiscreteCurrent.from_json, obj["S"], what="current S")
        T = _parse(DiscreteCurrent.from_json, obj["T"], what="current T") if "T" in obj else DiscreteCurrent.zero(S.d, S.k)
    else:
        S = _parse(DiscreteCurrent.from_json, obj, what="current")
        T = DiscreteCurrent.zero(S.d, S.k)
    if args.mode == "exact":
        U = S - T
        res = _parse(fn.flat_metric_points_exact, U, lam)
        out = res.to_json()
        if args.emit_svg:
            from .plotting import point_decomposition

            point_decomposition(U.to_json(), out, args.emit_svg)
        return out
    cfg = fn.DualConfig(steps=args.steps, seed=args.seed)
    res = _parse(fn.dual_flat_estimate, S, T, lam, None, cfg)
    return _strip_form(res.to_json())


def cmd_stokes(args):
    from .currents import SimplicialChain, SimplicialComplex
    from .forms import PolynomialForm, integrate_over_chain

    form = _parse(PolynomialForm.from_json, _read_json(args.form), what="form")
    cobj = _read_json(args.chain)
    if "complex" not in cobj or "chain" not in cobj:
        raise CliError(EXIT_PARSE, "chain file needs 'complex' and 'chain'")
    cx = _parse(SimplicialComplex.from_json, cobj["complex"], what="complex")
    c = _parse(SimplicialChain.from_json, cx, cobj["chain"], what="chain")
    if c.k != form.k + 1:
        raise CliError(EXIT_PARSE, f"a {form.k}-form integrates over the boundary of a {form.k + 1}-chain, got grade {c.k}")
    order = max(2, form.degree + 1)
    lhs = integrate_over_chain(form.d_form(), c, order)
    rhs = integrate_over_chain(form, c.boundary(), order)
    return {"lhs": lhs, "rhs": rhs, "diff": abs(lhs - rhs), "quadrature_order": order}


def cmd_train2d(args):
    from .flatgan import TrainConfig, build_circle_dataset, train

    base = _read_json(args.config) if args.config else {}
    over = {"k": args.k, "epochs": args.epochs, "seed": args.seed, "lam": args.lam, "rho": args.rho}
    base.update({key: v for key, v in over.items() if v is not None})
    cfg = _parse(TrainConfig.from_json, base, what="config")
    out = Path(args.out)
    data = build_circle_dataset(cfg.n_points, cfg.radius)
    res = train(cfg, data, out)
    if args.emit_svg:
        from .plotting import training_panel

        for f in sorted((out / "samples").glob("epoch_*.csv")):
            ep = f.stem.split("_")[1]
            samples = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
            walk = np.loadtxt(out / "walk" / f.name, delimiter=",", skiprows=1, ndmin=2)
            training_panel(samples, data.points, walk, out / "svg" / f"epoch_{ep}.svg",
                           f"k = {cfg.k}, epoch {ep}", data.tangents if cfg.k else None)
    last = res.metrics[-1]
    summary = (f"epochs={cfg.epochs} k={cfg.k} seed={cfg.seed} min_dist={last['min_dist']:.6g}"
               + (f" tangent_alignment={last['tangent_alignment']:.6g}" if cfg.k else "")
               + f" out={out}")
    print(summary)
    return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="currentkit", description=__doc__.splitlines()[0],
                                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("algebra", help="mass, comass, wedge or inner product of k-vectors")
    a.add_argument("input", help="JSON file ('-' for stdin)")
    a.add_argument("--op", choices=["mass", "comass", "wedge", "inner"], required=True)
    a.add_argument("--mode", choices=["exact", "estimate", "bounds"])
    a.add_argument("--restarts", type=int, default=64)
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_algebra)

    f = sub.add_parser("flatnorm", help="scaled flat norm of a current")
    f.add_argument("input", help="current JSON, {S, T} pair, or {complex, chain}")
    f.add_argument("--mode", choices=["exact", "simplicial", "dual"], default="exact")
    f.add_argument("--lambda", dest="lam", type=float, default=1.0)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--steps", type=int, default=2000, help="Adam steps for --mode dual")
    f.add_argument("--emit-svg", metavar="PATH", help="draw the optimal decomposition")
    f.add_argument("--out", metavar="FILE", help="write JSON here instead of stdout")
    f.set_defaults(func=cmd_flatnorm)

    s = sub.add_parser("stokes-check", help="compare integral of d(omega) over c with omega over the boundary")
    s.add_argument("form")
    s.add_argument("chain")
    s.add_argument("--out", metavar="FILE")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_stokes)

    t = sub.add_parser("train2d", help="five points on a circle experiment")
    t.add_argument("config", nargs="?", help="TrainConfig JSON (defaults otherwise)")
    t.add_argument("--k", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lambda", dest="lam", type=float)
    t.add_argument("--rho", type=float)
    t.add_argument("--out", default="run", metavar="DIR")
    t.add_argument("--emit-svg", action="store_true")
    t.set_defaults(func=cmd_train2d)
    return p


def _threads():
    import torch

    raw = os.environ.get("CURRENTKIT_THREADS", "1")
    try:
        n = max(1, int(raw))
    except ValueError:
        raise CliError(EXIT_PARSE, f"CURRENTKIT_THREADS must be an integer, got {raw!r}")
    torch.set_num_threads(n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    from .algebra import UnsupportedExactMode
    from .flatgan import TrainingDivergence
    from .forms import CapabilityError
    from .lp import SolverError

    try:
        _threads()
        out = args.func(args)
        if out is not None:
            _emit(out, getattr(args, "out", None) if args.command != "train2d" else None)
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (UnsupportedExactMode, CapabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
