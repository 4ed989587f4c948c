"""Command-line interface.

Every subcommand writes its artifacts (report.json and CSV files) into the
output directory: ``--out``, else $SLINVERSE_OUTPUT_DIR, else the current
directory.  A JSON ``--config`` file supplies defaults; explicit flags win.
Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import asymptotics, bc, direct, entire, gl, pipeline, spectrum
from .errors import SpectralError
from .potential import Potential, builtin, read_csv, write_csv

OUTPUT_ENV = "SLINVERSE_OUTPUT_DIR"
log = logging.getLogger("slinverse")


# --- shared helpers ------------------------------------------------------------

def _floats(text: str) -> list:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def parse_mu_grid(text: str) -> np.ndarray:
    """``a:b:step`` (inclusive of b) or a comma list."""
    if ":" in text:
        a, b, step = (float(t) for t in text.split(":"))
        if step <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}")
        n = int(round((b - a) / step))
        return a + step * np.arange(n + 1)
    return np.array(_floats(text))


def _complex(text) -> complex:
    if isinstance(text, (int, float, complex)):
        return complex(text)
    return complex(str(text).replace(" ", "").replace("i", "j"))


def load_potential(args) -> Potential:
    if getattr(args, "q_file", None):
        return read_csv(args.q_file)
    return builtin(args.q, args.grid)


def load_collection(args, q: Potential):
    if getattr(args, "matrix", None):
        cls = bc.classify(bc.as_bc_matrix(_floats(args.matrix)))
        return direct.ProblemCollection.from_classification(cls, q), cls
    alpha, gamma, theta = _complex(args.alpha), _complex(args.gamma), int(args.theta)
    cls = bc.classify(bc.matrix_from_parameters(alpha, gamma, theta))
    return direct.ProblemCollection(alpha, gamma, theta, q), cls


def _num(z):
    z = complex(z)
    return z.real + 0.0 if z.imag == 0 else [z.real + 0.0, z.imag + 0.0]


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUTPUT_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_report(args, doc: dict) -> None:
    path = out_dir(args) / "report.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_json_default)
    print(json.dumps(doc, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (complex, np.complexfloating)):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def write_complex_csv(path, header, columns) -> None:
    """Columns of complex values written as re/im pairs in full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            out = []
            for v in row:
                if isinstance(v, (complex, np.complexfloating)):
                    out += [repr(float(v.real)), repr(float(v.imag))]
                else:
                    out.append(repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) if isinstance(v, np.integer) else v)
            w.writerow(out)


# --- subcommands -------------------------------------------------------------------

def cmd_classify(args) -> int:
    cls = bc.classify(bc.as_bc_matrix(_floats(args.matrix)))
    write_report(args, cls.as_dict())
    return 0


def cmd_solve(args) -> int:
    q = load_potential(args)
    mu = parse_mu_grid(args.mu_grid) + 0j
    sol = direct.fundamental_system(q, mu, args.steps)
    write_complex_csv(out_dir(args) / "solution.csv",
                      ["re_mu", "im_mu", "re_c", "im_c", "re_cp", "im_cp", "re_s", "im_s", "re_sp", "im_sp"],
                      [mu, sol.c_pi, sol.c_prime_pi, sol.s_pi, sol.s_prime_pi])
    write_report(args, {"points": int(mu.size), "steps": sol.steps,
                        "wronskian_residual": float(sol.wronskian_residual.max())})
    return 0


def cmd_determinant(args) -> int:
    q = load_potential(args)
    p, cls = load_collection(args, q)
    mu = parse_mu_grid(args.mu_grid) + 0j
    vals = direct.char_determinant(p, mu, args.steps)
    write_complex_csv(out_dir(args) / "determinant.csv", ["re_mu", "im_mu", "re_delta", "im_delta"],
                      [mu, vals])
    write_report(args, {"classification": cls.as_dict(), "points": int(mu.size),
                        "beta": _num(p.beta)})
    return 0


def cmd_spectrum(args) -> int:
    q = load_potential(args)
    p, cls = load_collection(args, q)
    sp = spectrum.compute_spectrum(p, args.n_max, args.steps)
    sp.to_csv(out_dir(args) / "spectrum.csv")
    verdict = spectrum.classify_asymptotic(sp, args.gap_tol, args.window)
    write_report(args, {"classification": cls.as_dict(), "spectrum": sp.as_dict(), "verdict": verdict})
    return 0


def cmd_dirichlet(args) -> int:
    q = load_potential(args)
    dd = spectrum.dirichlet_spectrum(q, args.n_max, args.steps)
    n = np.arange(1, dd.roots.size + 1)
    write_complex_csv(out_dir(args) / "spectrum.csv",
                      ["n", "re_mu", "im_mu", "re_c", "im_c", "re_sdot", "im_sdot", "re_s2", "im_s2"],
                      [n, dd.roots, dd.c, dd.s_dot, dd.s_sq])
    gl.SpectralData.from_dirichlet(dd).to_csv(out_dir(args) / "spectral_data.csv")
    write_report(args, {"simple": dd.simple, "zero_excluded": dd.zero_excluded,
                        "roots": [_num(z) for z in dd.roots]})
    return 0


def _fit_spectrum(args, p, sp):
    V1 = asymptotics.v1_identity(p.gamma, p.q.mean)
    lo = args.fit_from if args.fit_from else max(1, args.n_max // 3)
    return asymptotics.fit_asymptotics(sp, p.theta, args.l, (lo, args.n_max),
                                       V1=None if args.free_v1 else V1)


def cmd_model(args) -> int:
    q = load_potential(args)
    p, cls = load_collection(args, q)
    sp = spectrum.compute_spectrum(p, args.n_max, args.steps)
    fit = _fit_spectrum(args, p, sp)
    hm = entire.HadamardModel.from_spectrum(sp, fit.V1, fit.V2, N=args.N)
    out = out_dir(args)
    hm.to_json(out / "model.json")
    sp.to_csv(out / "spectrum.csv")
    mu = parse_mu_grid(args.mu_grid) + 0j
    model = hm(mu)
    true = direct.char_determinant(p, mu, args.steps)
    write_complex_csv(out / "determinant.csv",
                      ["re_mu", "im_mu", "re_model", "im_model", "re_delta", "im_delta"], [mu, model, true])
    write_report(args, {"classification": cls.as_dict(), "N": hm.N, "V1": _num(fit.V1),
                        "V2": _num(fit.V2), "max_difference": float(np.abs(model - true).max())})
    return 0


def cmd_reconstruct(args) -> int:
    """Gelfand-Levitan reconstruction from Dirichlet data (a CSV or the forward data of --q)."""
    q = None
    if args.data:
        ref = load_potential(args) if (args.q_file or args.q != "zero") else None
        data = gl.SpectralData.from_csv(args.data, q=ref, shift=_complex(args.shift))
    else:
        q = load_potential(args)
        dd = spectrum.dirichlet_spectrum(q, args.n_pairs, args.steps)
        data = gl.SpectralData.from_dirichlet(dd, shift=q.mean)
    kern = gl.solve_all(gl.build_F_kernel(data, args.grid_size, tail=args.tail))
    qh = gl.potential_from_kernel(np.diag(kern.K_values), kern.x_grid, shift=data.shift)
    out = out_dir(args)
    write_csv(out / "potential.csv", qh)
    kern.to_csv(out / "kernel.csv", which="K")
    doc = {"pairs": int(data.n.size), "grid_size": args.grid_size, "tail": args.tail,
           "max_cond": kern.max_cond, "gl_residual": kern.residual, "last_term": kern.last_term,
           "verify": gl.verify_reconstruction(qh, data)}
    if q is not None:
        doc["l2_error"] = q.l2_distance(qh)
    write_report(args, doc)
    return 0


def cmd_perturb(args) -> int:
    """Theorem-2 construction: a potential whose determinant is the given function u."""
    if args.model:
        u = entire.HadamardModel.from_json(args.model)
    else:
        q = load_potential(args)
        p0 = direct.ProblemCollection(_complex(args.alpha), _complex(args.gamma), int(args.theta), q)
        u = lambda mu: direct.char_determinant(p0, mu, args.steps)
    check = parse_mu_grid(args.mu_grid)
    rec = gl.reconstruct_from_determinant(u, _complex(args.alpha), _complex(args.gamma), int(args.theta),
                                          _complex(args.q0), N=args.N, eps1=args.eps1,
                                          n_terms=args.n_terms, method=args.method,
                                          grid_size=args.grid_size, check_grid=check)
    out = out_dir(args)
    write_csv(out / "potential.csv", rec.potential)
    rec.data.to_csv(out / "spectral_data.csv")
    write_report(args, rec.report)
    return 0


def cmd_asymptotics(args) -> int:
    q = load_potential(args)
    p, cls = load_collection(args, q)
    sp = spectrum.compute_spectrum(p, args.n_max, args.steps)
    fit = _fit_spectrum(args, p, sp)
    doc = fit.as_dict()
    doc["V1_identity"] = _num(asymptotics.v1_identity(p.gamma, q.mean))
    try:
        doc["jump_target"] = _num(asymptotics.boundary_jump_target(cls))
    except SpectralError as exc:
        doc["jump_target"] = None
        doc["jump_note"] = str(exc)
    sp.to_csv(out_dir(args) / "spectrum.csv")
    write_report(args, doc)
    return 0


def cmd_theorem3(args) -> int:
    q = load_potential(args)
    _, cls = load_collection(args, q)
    opts = pipeline.PipelineOptions(n_fit=args.n_fit, modes=args.modes, n_check=args.n_check,
                                    gap_tol=args.gap_tol, grid_size=args.grid_size,
                                    steps=args.steps, seed=args.seed)
    res = pipeline.theorem3_pipeline(q, args.eps, cls, args.N, opts)
    out = out_dir(args)
    write_csv(out / "potential.csv", res.potential)
    res.spectrum.to_csv(out / "spectrum.csv")
    mu = np.linspace(0.0, 2 * max(args.n_check, args.N + 10) + 1, 401) + 0j
    vals = res.perturbation.determinant(cls.alpha, cls.gamma, cls.theta, mu)
    write_complex_csv(out / "determinant.csv", ["re_mu", "im_mu", "re_delta", "im_delta"], [mu, vals])
    write_report(args, res.report)
    return 0


# --- parser --------------------------------------------------------------------------------

def _add_potential(p):
    p.add_argument("--q", default="zero", help="builtin potential or expression, e.g. '0.2*sin(x)'")
    p.add_argument("--q-file", help="CSV with columns x, re(q), im(q)")
    p.add_argument("--grid", type=int, default=4097, help="sampling grid for builtin potentials")


def _add_collection(p):
    p.add_argument("--matrix", help="boundary matrix: 8 reals or 16 re/im interleaved, row-major")
    p.add_argument("--alpha", default="0.5")
    p.add_argument("--gamma", default="0")
    p.add_argument("--theta", type=int, choices=(0, 1), default=0)


def _add_fit(p):
    p.add_argument("--l", type=int, default=1, help="highest fitted order is l + 1")
    p.add_argument("--fit-from", type=int, default=0)
    p.add_argument("--free-v1", action="store_true", help="fit V1 instead of fixing it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slinverse", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    parser.add_argument("--steps", type=int, default=None, help="integrator steps")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized retries")
    parser.add_argument("-v", "--verbose", action="store_true")
    # the same options after the subcommand; SUPPRESS keeps the top-level values
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    _orig = sub.add_parser
    sub.add_parser = lambda name, **kw: _orig(name, parents=[common], **kw)

    p = sub.add_parser("classify", help="type and (alpha, gamma, theta) of a boundary matrix")
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("solve", help="fundamental system at x = pi")
    _add_potential(p)
    p.add_argument("--mu-grid", default="0:10:0.5")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("determinant", help="characteristic determinant on a grid")
    _add_potential(p)
    _add_collection(p)
    p.add_argument("--mu-grid", default="0:10:0.01")
    p.set_defaults(func=cmd_determinant)

    p = sub.add_parser("spectrum", help="eigenvalue pairs and asymptotic verdict")
    _add_potential(p)
    _add_collection(p)
    p.add_argument("--n-max", type=int, default=20)
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--window", type=int, default=10)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("dirichlet", help="Dirichlet roots and norming data")
    _add_potential(p)
    p.add_argument("--n-max", type=int, default=20)
    p.set_defaults(func=cmd_dirichlet)

    p = sub.add_parser("model", help="truncated Hadamard model from a computed spectrum")
    _add_potential(p)
    _add_collection(p)
    _add_fit(p)
    p.add_argument("--n-max", type=int, default=30)
    p.add_argument("--N", type=int, default=10)
    p.add_argument("--mu-grid", default="0:40:0.05")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("reconstruct", help="Gelfand-Levitan reconstruction from Dirichlet data")
    _add_potential(p)
    p.add_argument("--data", help="spectral data CSV (n, re_mu, im_mu, re_c, im_c)")
    p.add_argument("--shift", default="0", help="mean added back to the reconstruction")
    p.add_argument("--n-pairs", type=int, default=40)
    p.add_argument("--grid-size", type=int, default=513)
    p.add_argument("--tail", choices=("none", "asymptotic"), default="asymptotic")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("perturb", help="potential with a prescribed characteristic determinant")
    _add_potential(p)
    p.add_argument("--alpha", default="2")
    p.add_argument("--gamma", default="0")
    p.add_argument("--theta", type=int, choices=(0, 1), default=0)
    p.add_argument("--model", help="Hadamard model JSON used as the determinant")
    p.add_argument("--q0", default="0")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--eps1", type=float, default=1e-3)
    p.add_argument("--n-terms", type=int, default=200)
    p.add_argument("--method", choices=("nystrom", "finite-rank"), default="nystrom")
    p.add_argument("--grid-size", type=int, default=257)
    p.add_argument("--mu-grid", default="0:20:0.05", help="check grid for the determinant residual")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("asymptotics", help="fit V_m and report the jump condition")
    _add_potential(p)
    _add_collection(p)
    _add_fit(p)
    p.add_argument("--n-max", type=int, default=40)
    p.set_defaults(func=cmd_asymptotics)

    p = sub.add_parser("theorem3", help="nearby potential with asymptotically multiple spectrum")
    _add_potential(p)
    _add_collection(p)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--N", type=int, default=15)
    p.add_argument("--n-fit", type=int, default=40)
    p.add_argument("--modes", type=int, default=40)
    p.add_argument("--n-check", type=int, default=25)
    p.add_argument("--gap-tol", type=float, default=1e-6)
    p.add_argument("--grid-size", type=int, default=2049)
    p.set_defaults(func=cmd_theorem3)
    return parser


def _apply_config(parser, argv):
    """Config values become parser defaults so explicit flags take precedence."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config) as fh:
        cfg = json.load(fh)
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    parser.set_defaults(**cfg)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**{k: v for k, v in cfg.items() if k != "func"})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"slinverse: error: cannot read config: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpectralError as exc:
        print(f"slinverse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except argparse.ArgumentTypeError as exc:
        print(f"slinverse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
