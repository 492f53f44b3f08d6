"""Iteration drivers for hybrid and plain Krylov regularization.

run_hybrid expands a Krylov subspace one vector at a time, picks a fresh
lambda on the projected problem each iteration, and tracks residual /
solution / lambda stabilization. run_plain is the lambda = 0 baseline that
exhibits semiconvergence. Priorconditioned and flexible (ell_p) variants
reuse the same bookkeeping.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from .krylov import (
    arnoldi_init,
    arnoldi_step,
    flex_arnoldi_init,
    flex_arnoldi_step,
    flex_gkb_init,
    flex_gkb_step,
    gkb_init,
    gkb_step,
)
from .operators import ProductMap, to_dense
from .paramselect import (
    DiscrepancyNotAttainable,
    RuleConfig,
    lambda_grid,
    select_lambda,
)
from .projected import (
    ProjectedProblem,
    build_lsmr_projected,
    lift_solution,
    solve_projected_tikhonov,
)

HYBRID_LSQR = "hybrid_lsqr"
HYBRID_GMRES = "hybrid_gmres"
HYBRID_LSMR = "hybrid_lsmr"
LSQR_PLAIN = "lsqr_plain"
GMRES_PLAIN = "gmres_plain"

IDENTITY = "identity"
RFACTOR = "rfactor"
WEIGHTED_RFACTOR = "weighted_rfactor"

_HYBRID_METHODS = (HYBRID_LSQR, HYBRID_GMRES, HYBRID_LSMR)
_PLAIN_METHODS = (LSQR_PLAIN, GMRES_PLAIN)


@dataclass
class HybridOptions:
    method: str = HYBRID_LSQR
    max_iter: int = 50
    rule: RuleConfig = field(default_factory=RuleConfig)
    reorth: bool = True
    tau_lambda: float = 1e-4
    tau_r: float = 1e-6
    tau_x: float = 1e-6
    min_iter: int = 3
    dp_stop: bool = False

    def __post_init__(self):
        if not self.max_iter >= self.min_iter >= 1:
            raise ValueError("need max_iter >= min_iter >= 1")


@dataclass
class IterationRecord:
    k: int
    lambda_k: float
    res_norm: float
    sol_norm: float
    rule_value: float
    rel_err: Optional[float] = None
    stop_flags: Tuple[bool, bool, bool] = (False, False, False)
    res_diff: float = float("nan")
    sol_diff: float = float("nan")


@dataclass
class RunLog:
    options: HybridOptions
    records: List[IterationRecord] = field(default_factory=list)
    solution: Optional[np.ndarray] = None
    termination: str = ""

    @property
    def final_record(self):
        return self.records[-1] if self.records else None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def _stab_flags(prev, cur, opts):
    f_lam = abs(cur.lambda_k - prev.lambda_k) < opts.tau_lambda * prev.lambda_k
    f_res = cur.res_diff < opts.tau_r * prev.res_norm
    f_sol = cur.sol_diff < opts.tau_x * prev.sol_norm
    return (bool(f_lam), bool(f_res), bool(f_sol))


def check_stopping(log, opts):
    """Stabilization test on the last two records of a run.

    Returns (stop, flags). The driver stops once lambda and solution
    stabilization both hold at two consecutive iterations past min_iter.
    """
    if len(log.records) < 2:
        return False, (False, False, False)
    prev, cur = log.records[-2], log.records[-1]
    flags = _stab_flags(prev, cur, opts)
    prev_ok = prev.stop_flags[0] and prev.stop_flags[2]
    stop = flags[0] and flags[2] and prev_ok and cur.k > opts.min_iter
    return stop, flags


def _padded_diff(cur, prev):
    """|| cur - pad(prev) || for coefficient vectors of growing length."""
    d = cur.copy()
    if prev is not None:
        d[: len(prev)] -= prev
    return float(np.linalg.norm(d)) if prev is not None else float("nan")


def _bidiagonal(alphas, betas, k):
    B = np.zeros((k + 1, k))
    for i in range(k):
        B[i, i] = alphas[i]
        B[i + 1, i] = betas[i + 1]
    return B


def _run_driver(A, b, opts, x_true, lift_map, scstab, force_lambda):
    method = opts.method
    arnoldi = method in (HYBRID_GMRES, GMRES_PLAIN)
    lsmr = method == HYBRID_LSMR
    if arnoldi and not A.square:
        raise ValueError("GMRES-family methods need a square operator")
    b = np.asarray(b, dtype=float)
    beta1 = float(np.linalg.norm(b))
    state = arnoldi_init(A, b, opts.reorth) if arnoldi else gkb_init(A, b, opts.reorth)
    step = arnoldi_step if arnoldi else gkb_step

    log = RunLog(options=opts)
    nx = np.linalg.norm(x_true) if x_true is not None else 0.0
    x_prev_coeffs = None
    c_prev = None
    best = None  # (k, lam, y)
    termination = "max_iter"
    k = 0
    while k < opts.max_iter:
        want = k + 2 if lsmr else k + 1
        while not state.breakdown and state.k < want:
            if arnoldi and state.k >= A.cols:
                break
            step(state, A)
        avail = state.k if arnoldi else len(state.alphas)
        if avail < k + 1:
            termination = "breakdown"
            break
        k += 1

        if arnoldi:
            G_res = state.H[: k + 1, :k]
            pp = ProjectedProblem(G_res, beta1)
            basis = state.V[:, :k]
        elif lsmr:
            G_res = _bidiagonal(state.alphas, state.betas, k)
            pp = build_lsmr_projected(state.alphas, state.betas, k)
            basis = state.V[:, :k]
        else:
            G_res = _bidiagonal(state.alphas, state.betas, k)
            pp = ProjectedProblem(G_res, beta1)
            basis = state.V

        if force_lambda is not None:
            lam, rule_value = force_lambda, float("nan")
        else:
            try:
                lam, rule_value = select_lambda(pp, opts.rule, basis=basis)
            except DiscrepancyNotAttainable:
                lam = float(lambda_grid(pp, opts.rule)[0])
                rule_value = float("nan")
        try:
            solve = solve_projected_tikhonov(pp, lam)
        except ValueError:
            termination = "rank_deficient"
            k -= 1
            break
        y = solve.y

        c = beta1 * np.eye(k + 1, 1)[:, 0] - G_res @ y
        res_norm = float(np.linalg.norm(c))
        rec = IterationRecord(
            k=k,
            lambda_k=float(lam),
            res_norm=res_norm,
            sol_norm=float(np.linalg.norm(y)),
            rule_value=float(rule_value),
            res_diff=_padded_diff(c, c_prev),
            sol_diff=_padded_diff(y, x_prev_coeffs),
        )
        if x_true is not None and nx > 0.0:
            x_k = lift_solution(basis, y)
            if lift_map is not None:
                x_k = lift_map.apply(x_k)
            rec.rel_err = float(np.linalg.norm(x_k - x_true) / nx)
        log.records.append(rec)
        best = (k, lam, y, basis)
        c_prev, x_prev_coeffs = c, y

        if len(log.records) >= 2:
            stop, flags = check_stopping(log, opts)
            rec.stop_flags = flags
            if scstab and stop:
                termination = "stabilized"
                break
        if opts.dp_stop and opts.rule.epsilon is not None:
            if res_norm <= opts.rule.eta * opts.rule.epsilon:
                termination = "discrepancy_stop"
                break
        if state.breakdown and avail == k:
            termination = "breakdown"
            break

    log.termination = termination
    if best is not None:
        _, _, y, basis = best
        x = lift_solution(basis, y)
        if lift_map is not None:
            x = lift_map.apply(x)
        log.solution = x
    return log


def run_hybrid(A, b, opts, x_true=None):
    """Hybrid LSQR / GMRES / LSMR with per-iteration lambda selection."""
    if opts.method not in _HYBRID_METHODS:
        raise ValueError("run_hybrid expects a hybrid method, got %r" % opts.method)
    return _run_driver(A, b, opts, x_true, None, scstab=True, force_lambda=None)


def run_plain(A, b, opts, x_true=None):
    """Plain (lambda = 0) LSQR / GMRES; stops at max_iter or the discrepancy."""
    if opts.method not in _PLAIN_METHODS:
        raise ValueError("run_plain expects a plain method, got %r" % opts.method)
    if opts.rule.epsilon is not None and not opts.dp_stop:
        opts = replace(opts, dp_stop=True)
    return _run_driver(A, b, opts, x_true, None, scstab=False, force_lambda=0.0)


def run_priorconditioned(A, L_inv, b, opts, x_true=None):
    """General-form Tikhonov via the standard-form transformation.

    Runs the hybrid driver on A L^{-1} and maps the iterates back through
    L_inv; the log's norms live in the transformed coordinates, rel_err and
    the returned solution in the original ones.
    """
    if opts.method not in _HYBRID_METHODS:
        raise ValueError("run_priorconditioned expects a hybrid method")
    if not L_inv.square:
        raise ValueError("regularization operator must be square and invertible")
    if L_inv.cols != A.cols:
        raise ValueError("L_inv size does not match the operator's columns")
    A_bar = ProductMap(A, L_inv)
    return _run_driver(A_bar, b, opts, x_true, L_inv, scstab=True, force_lambda=None)


def _lp_weights_inv(x, p, tau):
    """Inverse smoothed ell_p weights (x^2 + tau^2)^((2-p)/4)."""
    return (x**2 + tau**2) ** ((2.0 - p) / 4.0)


def run_flexible_lp(
    A,
    b,
    p,
    tau,
    opts,
    regmat_choice=IDENTITY,
    x_true=None,
    weights_fixed=None,
):
    """Flexible hybrid driver for the smoothed ell_p penalty.

    Per-iteration diagonal weights from the current iterate steer the
    flexible factorization; the projected penalty matrix P_k is the
    identity, the R factor of Z_k, or the R factor of W_k Z_k. Passing
    weights_fixed freezes the weights (used to compare against a direct
    weighted-Tikhonov solve).
    """
    if not 0.0 < p <= 2.0:
        raise ValueError("p must lie in (0, 2]")
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if regmat_choice not in (IDENTITY, RFACTOR, WEIGHTED_RFACTOR):
        raise ValueError("unknown penalty-matrix choice %r" % regmat_choice)
    arnoldi = opts.method == HYBRID_GMRES
    if arnoldi and not A.square:
        raise ValueError("GMRES-family methods need a square operator")
    b = np.asarray(b, dtype=float)
    beta1 = float(np.linalg.norm(b))
    n = A.cols

    if weights_fixed is not None:
        weights_fixed = np.asarray(weights_fixed, dtype=float)
        if np.any(weights_fixed <= 0.0):
            raise ValueError("fixed weights must be strictly positive")
        w_inv = 1.0 / weights_fixed
    else:
        w_inv = _lp_weights_inv(np.zeros(n), p, tau)

    state = flex_arnoldi_init(A, b, opts.reorth) if arnoldi else flex_gkb_init(
        A, b, opts.reorth
    )
    step = flex_arnoldi_step if arnoldi else flex_gkb_step

    log = RunLog(options=opts)
    nx = np.linalg.norm(x_true) if x_true is not None else 0.0
    x_prev = None
    c_prev = None
    x_final = None
    termination = "max_iter"
    k = 0
    while k < opts.max_iter:
        if not state.breakdown and state.k < k + 1:
            step(state, A, w_inv)
        if state.k < k + 1 or len(state.zs) < k + 1:
            termination = "breakdown"
            break
        k += 1
        M = state.H[: k + 1, :k] if arnoldi else state.M[: k + 1, :k]
        Z = state.Z[:, :k]

        if regmat_choice == IDENTITY:
            P = None
            G = M
            basis = Z
        else:
            if regmat_choice == WEIGHTED_RFACTOR:
                cur_w = weights_fixed if weights_fixed is not None else 1.0 / w_inv
                _, P = np.linalg.qr(cur_w[:, None] * Z)
            else:
                _, P = np.linalg.qr(Z)
            dr = np.abs(np.diag(P))
            if dr.min() <= max(Z.shape) * np.finfo(float).eps * dr.max():
                termination = "breakdown"
                k -= 1
                break
            G = solve_triangular(P.T, M.T, lower=True).T
            basis = solve_triangular(P.T, Z.T, lower=True).T

        pp = ProjectedProblem(G, beta1)
        try:
            lam, rule_value = select_lambda(pp, opts.rule, basis=basis)
        except DiscrepancyNotAttainable:
            lam = float(lambda_grid(pp, opts.rule)[0])
            rule_value = float("nan")
        try:
            solve = solve_projected_tikhonov(pp, lam)
        except ValueError:
            termination = "rank_deficient"
            k -= 1
            break
        y_hat = solve.y
        y = y_hat if P is None else solve_triangular(P, y_hat, lower=False)
        x_k = Z @ y

        c = beta1 * np.eye(k + 1, 1)[:, 0] - M @ y
        res_norm = float(np.linalg.norm(c))
        rec = IterationRecord(
            k=k,
            lambda_k=float(lam),
            res_norm=res_norm,
            sol_norm=float(np.linalg.norm(x_k)),
            rule_value=float(rule_value),
            res_diff=_padded_diff(c, c_prev),
            sol_diff=float(np.linalg.norm(x_k - x_prev))
            if x_prev is not None
            else float("nan"),
        )
        if x_true is not None and nx > 0.0:
            rec.rel_err = float(np.linalg.norm(x_k - x_true) / nx)
        log.records.append(rec)
        x_final = x_k
        c_prev, x_prev = c, x_k

        if weights_fixed is None:
            w_inv = _lp_weights_inv(x_k, p, tau)

        if len(log.records) >= 2:
            stop, flags = check_stopping(log, opts)
            rec.stop_flags = flags
            if stop:
                termination = "stabilized"
                break
        if opts.dp_stop and opts.rule.epsilon is not None:
            if res_norm <= opts.rule.eta * opts.rule.epsilon:
                termination = "discrepancy_stop"
                break
        if state.breakdown and len(state.zs) == k:
            termination = "breakdown"
            break

    log.termination = termination
    log.solution = x_final
    return log


def theorem_equivalence_check(A, b, lam, k, tol=1e-8):
    """Hybrid-LSQR iterate at fixed lambda vs the subspace-restricted minimizer.

    The dense oracle solves min ||A x - b||^2 + lambda ||x||^2 over
    range(V_k) directly; returns True when the two coincide.
    """
    b = np.asarray(b, dtype=float)
    state = gkb_init(A, b)
    for _ in range(k):
        if state.breakdown:
            break
        gkb_step(state, A)
    kk = len(state.alphas)
    if kk == 0:
        raise ValueError("no Krylov directions generated")
    B = state.B
    pp = ProjectedProblem(B, state.betas[0])
    if lam == 0.0:
        coef = pp.p_vec[:kk] / pp.sigmas
        y = pp.V_G @ coef
    else:
        y = solve_projected_tikhonov(pp, lam).y
    V = state.V
    x_hybrid = V @ y

    Ad = to_dense(A)
    AV = Ad @ V
    M = AV.T @ AV + lam * (V.T @ V)
    rhs = AV.T @ b
    x_star = V @ np.linalg.solve(M, rhs)
    scale = max(np.linalg.norm(x_star), np.finfo(float).tiny)
    return bool(np.linalg.norm(x_hybrid - x_star) <= tol * scale)
