"""Command-line experiment runner.

Subcommands: run (one problem, one method/rule, full logs), sweep
(multi-seed, multi-rule study with an error surface), testproblem (emit a
synthetic problem to files), check (quick invariant battery). Output is
plain CSV and binary PGM images so no plotting stack is required; plot
recipes live in the README.
"""

import argparse
import csv
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .hybrid import (
    GMRES_PLAIN,
    HYBRID_GMRES,
    HYBRID_LSMR,
    HYBRID_LSQR,
    LSQR_PLAIN,
    HybridOptions,
    run_hybrid,
    run_plain,
    theorem_equivalence_check,
)
from .krylov import gkb_init, gkb_step
from .operators import DenseMatrixMap, adjoint_mismatch
from .paramselect import RuleConfig
from .projected import ProjectedProblem, solve_projected_tikhonov
from .testproblems import (
    Image,
    TestProblem,
    estimate_noise_sigma,
    make_deblur_problem,
    make_tomo_problem,
)

_METHODS = {
    "hybrid-lsqr": HYBRID_LSQR,
    "hybrid-gmres": HYBRID_GMRES,
    "hybrid-lsmr": HYBRID_LSMR,
    "lsqr-plain": LSQR_PLAIN,
    "gmres-plain": GMRES_PLAIN,
}


@dataclass
class ExperimentConfig:
    problem: str = "deblur"
    custom_path: str = ""
    n: int = 32
    noise: float = 1e-2
    seed: int = 0
    seeds: int = 1
    method: str = "hybrid-lsqr"
    rule: str = "wgcv"
    rules: str = ""
    lam: float = 0.0
    eta: float = 1.01
    epsilon: str = ""
    sigma2: float = -1.0
    omega: float = -1.0
    max_iter: int = 50
    min_iter: int = 3
    tau_lambda: float = 1e-4
    tau_r: float = 1e-6
    tau_x: float = 1e-6
    outdir: str = "out"

    def validate(self):
        if self.problem not in ("deblur", "tomo", "custom"):
            raise ValueError("problem must be deblur, tomo, or custom")
        if self.problem == "custom" and not self.custom_path:
            raise ValueError("custom problem needs --custom path to an .npz file")
        if self.method not in _METHODS:
            raise ValueError("unknown method %r" % self.method)
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        return self


def config_to_text(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append("%s=%s" % (f.name, repr(v) if isinstance(v, float) else v))
    return "\n".join(lines) + "\n"


def parse_config_text(text, cfg=None):
    """Read flat key=value lines into an ExperimentConfig."""
    cfg = ExperimentConfig() if cfg is None else cfg
    types = {f.name: f.type for f in fields(cfg)}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError("line %d is not key=value: %r" % (ln, raw))
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in types:
            raise ValueError("unknown config key %r" % key)
        setattr(cfg, key, types[key](value))
    return cfg


def load_config_file(path, cfg=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), cfg)


def write_pgm(img, path):
    """8-bit binary PGM, min-max normalized; returns the (lo, hi) bounds."""
    arr = img.as_array() if isinstance(img, Image) else np.asarray(img, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if not np.all(np.isfinite(arr)):
        raise ValueError("image has non-finite pixels")
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        data = np.round((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        data = np.full(arr.shape, 128, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())
    return lo, hi


def read_pgm(path):
    """Read back a binary 8-bit PGM written by write_pgm."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = (int(t) for t in parts[1].split())
    if int(parts[2]) != 255:
        raise ValueError("unsupported maxval")
    data = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    return data.reshape(h, w)


def _build_problem(cfg, seed):
    if cfg.problem == "deblur":
        return make_deblur_problem(N=cfg.n, noise_level=cfg.noise, seed=seed)
    if cfg.problem == "tomo":
        return make_tomo_problem(N=cfg.n, noise_level=cfg.noise, seed=seed)
    with np.load(cfg.custom_path) as z:
        A = DenseMatrixMap(z["A"])
        b = np.asarray(z["b"], dtype=float)
        x_true = np.asarray(z["x_true"], dtype=float) if "x_true" in z else None
    return TestProblem(
        A=A,
        b_true=b.copy(),
        b=b,
        x_true=x_true if x_true is not None else np.zeros(A.cols),
        e=np.zeros(b.shape),
        noise_level=0.0,
        sigma=0.0,
        seed=seed,
    )


def _resolve_epsilon(cfg, prob):
    """Returns (epsilon or None, text describing where it came from)."""
    if cfg.epsilon == "":
        return None, "none"
    if cfg.epsilon == "auto":
        sig = estimate_noise_sigma(prob.b)
        eps = sig * np.sqrt(len(prob.b))
        return float(eps), "auto (wavelet sigma %r)" % sig
    if cfg.epsilon == "true":
        return float(prob.epsilon), "true injected noise norm"
    return float(cfg.epsilon), "explicit"


def _make_options(cfg, prob):
    eps, eps_src = _resolve_epsilon(cfg, prob)
    sigma2 = cfg.sigma2 if cfg.sigma2 >= 0.0 else None
    if sigma2 is None and cfg.rule == "upre":
        sigma2 = float(prob.sigma**2)
    rule = RuleConfig(
        rule=cfg.rule,
        lam=cfg.lam,
        eta=cfg.eta,
        epsilon=eps,
        sigma2=sigma2,
        omega=cfg.omega if cfg.omega > 0.0 else None,
        x_true=prob.x_true if cfg.rule == "optimal" else None,
    )
    opts = HybridOptions(
        method=_METHODS[cfg.method],
        max_iter=cfg.max_iter,
        rule=rule,
        min_iter=cfg.min_iter,
        tau_lambda=cfg.tau_lambda,
        tau_r=cfg.tau_r,
        tau_x=cfg.tau_x,
    )
    return opts, eps_src


def _format(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_log_csv(path, log, norm_b):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "relres", "relerr", "sol_norm", "rule_value", "stop_flags"])
        for r in log.records:
            flags = "".join("1" if f else "0" for f in r.stop_flags)
            w.writerow(
                [
                    r.k,
                    _format(r.lambda_k),
                    _format(r.res_norm / norm_b),
                    _format(r.rel_err),
                    _format(r.sol_norm),
                    _format(r.rule_value),
                    flags,
                ]
            )


def _data_image(prob, cfg):
    b = prob.b
    if cfg.problem == "deblur":
        return b.reshape(cfg.n, cfg.n)
    if cfg.problem == "tomo":
        return b.reshape(-1, prob.A.p)
    m = len(b)
    side = int(np.sqrt(m))
    if side * side == m:
        return b.reshape(side, side)
    return b[None, :]


def _solution_image(x, cfg):
    n = len(x)
    side = int(np.sqrt(n))
    if side * side == n:
        return x.reshape(side, side)
    return x[None, :]


def cmd_run(cfg):
    cfg.validate()
    os.makedirs(cfg.outdir, exist_ok=True)
    t0 = time.perf_counter()
    prob = _build_problem(cfg, cfg.seed)
    opts, eps_src = _make_options(cfg, prob)
    runner = run_plain if opts.method in (LSQR_PLAIN, GMRES_PLAIN) else run_hybrid
    log = runner(prob.A, prob.b, opts, x_true=prob.x_true)
    wall = time.perf_counter() - t0

    norm_b = float(np.linalg.norm(prob.b))
    _write_log_csv(os.path.join(cfg.outdir, "log.csv"), log, norm_b)
    bounds = {}
    bounds["solution"] = write_pgm(
        _solution_image(log.solution, cfg), os.path.join(cfg.outdir, "solution.pgm")
    )
    bounds["truth"] = write_pgm(
        _solution_image(prob.x_true, cfg), os.path.join(cfg.outdir, "truth.pgm")
    )
    bounds["data"] = write_pgm(
        _data_image(prob, cfg), os.path.join(cfg.outdir, "data.pgm")
    )

    with open(os.path.join(cfg.outdir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))
        fh.write("termination=%s\n" % log.termination)
        fh.write("iterations=%d\n" % len(log.records))
        fh.write("wall_time_s=%r\n" % wall)
        fh.write("epsilon_used=%s\n" % _format(opts.rule.epsilon))
        fh.write("epsilon_source=%s\n" % eps_src)
        for name, (lo, hi) in bounds.items():
            fh.write("pgm_%s_lo=%r\npgm_%s_hi=%r\n" % (name, lo, name, hi))
    return 0


def _sweep_once(cfg, seed, rule_name):
    sub = ExperimentConfig(**asdict(cfg))
    sub.rule = rule_name
    sub.seed = seed
    prob = _build_problem(sub, seed)
    opts, _ = _make_options(sub, prob)
    runner = run_plain if opts.method in (LSQR_PLAIN, GMRES_PLAIN) else run_hybrid
    log = runner(prob.A, prob.b, opts, x_true=prob.x_true)
    rec = log.final_record
    return (
        seed,
        rule_name,
        rec.k if rec else 0,
        rec.lambda_k if rec else float("nan"),
        rec.rel_err if rec and rec.rel_err is not None else float("nan"),
    )


def _rre_surface(cfg, n_lambdas=25):
    """Relative reconstruction error on a (k, lambda) grid for the base seed.

    The subspace does not depend on lambda, so one factorization serves the
    whole surface.
    """
    prob = _build_problem(cfg, cfg.seed)
    state = gkb_init(prob.A, prob.b)
    nx = np.linalg.norm(prob.x_true)
    rows = []
    lams = None
    for k in range(1, cfg.max_iter + 1):
        if state.breakdown:
            break
        gkb_step(state, prob.A)
        if len(state.alphas) < k:
            break
        pp = ProjectedProblem(state.B, state.betas[0])
        if lams is None:
            s1 = pp.sigma_max
            lams = np.geomspace(1e-8 * s1**2, 10.0 * s1**2, n_lambdas)
        V = state.V
        for lam in lams:
            y = solve_projected_tikhonov(pp, float(lam)).y
            err = float(np.linalg.norm(V @ y - prob.x_true) / nx)
            rows.append((k, float(lam), err))
    return rows


def cmd_sweep(cfg):
    cfg.validate()
    os.makedirs(cfg.outdir, exist_ok=True)
    rule_names = [r.strip() for r in cfg.rules.split(",") if r.strip()] or [cfg.rule]
    jobs = [(seed, rule) for seed in range(cfg.seed, cfg.seed + cfg.seeds)
            for rule in rule_names]
    threads = max(1, int(os.environ.get("HYBRID_KRYLOV_THREADS", "1")))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda sr: _sweep_once(cfg, *sr), jobs))
    else:
        results = [_sweep_once(cfg, *sr) for sr in jobs]
    results.sort(key=lambda row: (row[0], row[1]))

    with open(os.path.join(cfg.outdir, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "rule", "stop_k", "lambda_final", "relerr_final"])
        for seed, rule, stop_k, lam, relerr in results:
            w.writerow([seed, rule, stop_k, _format(lam), _format(relerr)])

    with open(os.path.join(cfg.outdir, "rre_surface.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "lambda", "relerr"])
        for k, lam, err in _rre_surface(cfg):
            w.writerow([k, _format(lam), _format(err)])
    return 0


def cmd_testproblem(cfg):
    cfg.validate()
    os.makedirs(cfg.outdir, exist_ok=True)
    prob = _build_problem(cfg, cfg.seed)
    write_pgm(_solution_image(prob.x_true, cfg), os.path.join(cfg.outdir, "truth.pgm"))
    write_pgm(_data_image(prob, cfg), os.path.join(cfg.outdir, "data.pgm"))
    np.savez(
        os.path.join(cfg.outdir, "problem.npz"),
        b=prob.b,
        b_true=prob.b_true,
        x_true=prob.x_true,
        e=prob.e,
        sigma=prob.sigma,
        noise_level=prob.noise_level,
        seed=prob.seed,
    )
    with open(os.path.join(cfg.outdir, "meta.txt"), "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg))
        fh.write("epsilon_true=%r\n" % prob.epsilon)
    return 0


def cmd_check(cfg):
    """Small self-contained invariant battery; prints one line per check."""
    rng = np.random.default_rng(7)
    ok_all = True

    def report(name, ok):
        nonlocal ok_all
        ok_all = ok_all and ok
        print("%-40s %s" % (name, "ok" if ok else "FAIL"))

    prob = _build_problem(ExperimentConfig(problem=cfg.problem, n=min(cfg.n, 16)), 0)
    mismatch = adjoint_mismatch(prob.A, rng=np.random.default_rng(3))
    report("adjoint mismatch < 1e-10", mismatch < 1e-10)

    A = rng.standard_normal((12, 8))
    b = rng.standard_normal(12)
    op = DenseMatrixMap(A)
    state = gkb_init(op, b)
    for _ in range(6):
        gkb_step(state, op)
    lhs = A @ state.V
    rhs = state.U @ state.B
    report("GKB identity AV = UB", np.linalg.norm(lhs - rhs) < 1e-10)
    gram = state.V.T @ state.V
    report("GKB orthonormal V", np.linalg.norm(gram - np.eye(gram.shape[0])) < 1e-10)
    report(
        "fixed-lambda subspace equivalence",
        theorem_equivalence_check(op, b, 0.5, 4),
    )
    return 0 if ok_all else 1


def _add_common(p):
    p.add_argument("--config", default="", help="flat key=value config file")
    p.add_argument("--problem", choices=("deblur", "tomo", "custom"))
    p.add_argument("--custom", dest="custom_path", help=".npz with A, b, optional x_true")
    p.add_argument("--n", type=int, help="image side length")
    p.add_argument("--noise", type=float, help="relative noise level")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of realizations (sweep)")
    p.add_argument("--method", choices=sorted(_METHODS))
    p.add_argument("--rule", help="dp|gcv|wgcv|upre|lcurve|reginska|optimal|fixed")
    p.add_argument("--rules", help="comma list of rules (sweep)")
    p.add_argument("--lambda", dest="lam", type=float, help="fixed-rule lambda")
    p.add_argument("--eta", type=float, help="discrepancy safety factor")
    p.add_argument("--epsilon", help="noise norm: number, 'auto', or 'true'")
    p.add_argument("--sigma2", type=float, help="noise variance for UPRE")
    p.add_argument("--omega", type=float, help="wGCV weight in (0,1]")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--min-iter", dest="min_iter", type=int)
    p.add_argument("--tau-lambda", dest="tau_lambda", type=float)
    p.add_argument("--tau-r", dest="tau_r", type=float)
    p.add_argument("--tau-x", dest="tau_x", type=float)
    p.add_argument("--outdir")


def _config_from_args(args):
    cfg = ExperimentConfig()
    if args.config:
        cfg = load_config_file(args.config, cfg)
    for f in fields(cfg):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="hybrid-krylov",
        description="Hybrid Krylov projection methods for ill-posed inverse problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("sweep", cmd_sweep),
        ("testproblem", cmd_testproblem),
        ("check", cmd_check),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.func(cfg)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
