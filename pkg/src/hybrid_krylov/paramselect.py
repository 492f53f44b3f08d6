"""Regularization-parameter rules for the projected problem.

Each rule maps a ProjectedProblem (plus rule-specific data such as a noise
estimate) to a single lambda. All rules work on a log-spaced grid derived
from the largest projected singular value; the smooth ones refine the grid
argmin by golden section. Quadrature bounds on the full-problem residual
are also provided for monitoring.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .projected import filter_factors

GRID_POINTS_DEFAULT = 200
GRID_LO_FACTOR = 1e-12
GRID_HI_FACTOR = 10.0

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class DiscrepancyNotAttainable(RuntimeError):
    """The projected residual cannot reach eta*epsilon at any lambda yet."""


@dataclass
class RuleConfig:
    """Which rule to run and the data it needs."""

    rule: str = "gcv"
    lam: float = 0.0                       # FIXED value
    eta: float = 1.01                      # DP safety factor
    epsilon: Optional[float] = None        # noise-norm estimate ||e||
    sigma2: Optional[float] = None         # white-noise variance (UPRE)
    omega: Optional[float] = None          # wGCV weight; None = adaptive
    grid_lo: Optional[float] = None
    grid_hi: Optional[float] = None
    grid_points: int = GRID_POINTS_DEFAULT
    reginska_tol: float = 1e-6
    reginska_max_iters: int = 100
    x_true: Optional[np.ndarray] = None    # OPTIMAL only


@dataclass
class QuadratureBounds:
    """Gauss / Gauss-Radau bracket of the full Tikhonov residual squared."""

    lower: float
    upper: float


def lambda_grid(pp, cfg=None):
    """Log-spaced lambda grid anchored at the largest projected sigma."""
    lo = cfg.grid_lo if cfg is not None and cfg.grid_lo is not None else None
    hi = cfg.grid_hi if cfg is not None and cfg.grid_hi is not None else None
    npts = cfg.grid_points if cfg is not None else GRID_POINTS_DEFAULT
    s1 = pp.sigma_max
    if s1 <= 0.0:
        raise ValueError("projected problem has no signal; grid undefined")
    if lo is None:
        lo = GRID_LO_FACTOR * s1**2
    if hi is None:
        hi = GRID_HI_FACTOR * s1**2
    if not (0.0 < lo < hi):
        raise ValueError("grid bounds must satisfy 0 < lower < upper")
    return np.geomspace(lo, hi, npts)


def _golden_refine(f, lo, hi, rel_tol=1e-4):
    """Golden-section minimization of f on [lo, hi] (log-lambda domain)."""
    a, b = np.log(lo), np.log(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(np.exp(c)), f(np.exp(d))
    while (b - a) > rel_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(np.exp(d))
    return float(np.exp(0.5 * (a + b)))


def _grid_minimize(f, grid, flat_warn):
    """Grid argmin of f plus local golden-section refinement."""
    vals = np.array([f(lam) for lam in grid])
    if not np.all(np.isfinite(vals)):
        finite = np.isfinite(vals)
        if not np.any(finite):
            raise ValueError("objective is not finite anywhere on the grid")
        vals = np.where(finite, vals, np.inf)
    spread = np.max(vals[np.isfinite(vals)]) - np.min(vals[np.isfinite(vals)])
    scale = max(np.max(np.abs(vals[np.isfinite(vals)])), 1.0)
    if spread <= 1e-14 * scale:
        warnings.warn(flat_warn)
        return float(np.sqrt(grid[0] * grid[-1]))
    i = int(np.argmin(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if lo == hi:
        return float(grid[i])
    lam = _golden_refine(f, lo, hi)
    # keep the grid point if refinement did not actually improve
    return lam if f(lam) <= vals[i] else float(grid[i])


def rule_dp(pp, eta, epsilon, grid=None):
    """Discrepancy principle: res_norm(lambda) = eta * epsilon.

    res_norm is monotone increasing in lambda, so a bisection on log lambda
    converges; runs on the configured grid's bounds.
    """
    if eta <= 1.0:
        raise ValueError("eta must exceed 1")
    if epsilon is None or epsilon < 0.0:
        raise ValueError("DP needs a nonnegative noise estimate")
    if grid is None:
        grid = lambda_grid(pp)
    target = eta * epsilon
    res_floor = pp.residual_norm(0.0)
    if res_floor <= 1e-14 * pp.beta1:
        res_floor = 0.0
    if target < res_floor * (1.0 - 1e-12):
        raise DiscrepancyNotAttainable(
            "projected residual floor %.3e exceeds eta*epsilon %.3e"
            % (res_floor, target)
        )
    if target >= pp.beta1:
        warnings.warn("eta*epsilon is at or above ||b||; returning grid upper bound")
        return float(grid[-1])
    lo, hi = float(grid[0]), float(grid[-1])
    if pp.residual_norm(lo) >= target:
        # the root sits below the searchable range; lo is the closest answer
        return lo
    if pp.residual_norm(hi) <= target:
        return hi
    a, b = np.log(lo), np.log(hi)
    lam = np.exp(0.5 * (a + b))
    for _ in range(80):
        lam = np.exp(0.5 * (a + b))
        r = pp.residual_norm(lam)
        if abs(r - target) <= 1e-8 * target:
            break
        if r > target:
            b = np.log(lam)
        else:
            a = np.log(lam)
    return float(lam)


def gcv_objective(pp, lam, omega=1.0):
    """(w)GCV functional on the projected problem."""
    k1 = pp.k + 1
    den = k1 - omega * pp.influence_trace(lam)
    if den <= 0.0:
        return np.inf
    return k1 * pp.residual_norm(lam) ** 2 / den**2


def rule_gcv(pp, omega=1.0, grid=None):
    """Minimize the (weighted) GCV functional over the lambda grid."""
    if not 0.0 < omega <= 1.0:
        raise ValueError("omega must lie in (0, 1]")
    if grid is None:
        grid = lambda_grid(pp)
    return _grid_minimize(
        lambda lam: gcv_objective(pp, lam, omega),
        grid,
        "GCV objective is flat across the grid; returning geometric midpoint",
    )


def upre_objective(pp, lam, sigma2):
    return (
        pp.residual_norm(lam) ** 2
        + 2.0 * sigma2 * pp.influence_trace(lam)
        - (pp.k + 1) * sigma2
    )


def rule_upre(pp, sigma2, grid=None):
    """Minimize the projected unbiased predictive risk estimate."""
    if sigma2 is None or sigma2 < 0.0:
        raise ValueError("UPRE needs a nonnegative noise variance")
    if grid is None:
        grid = lambda_grid(pp)
    return _grid_minimize(
        lambda lam: upre_objective(pp, lam, sigma2),
        grid,
        "UPRE objective is flat across the grid; returning geometric midpoint",
    )


def _menger_curvature(p1, p2, p3):
    """Curvature of the circle through three points of the log-log curve."""
    area2 = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (p2[1] - p1[1])
    d12 = np.hypot(p2[0] - p1[0], p2[1] - p1[1])
    d23 = np.hypot(p3[0] - p2[0], p3[1] - p2[1])
    d13 = np.hypot(p3[0] - p1[0], p3[1] - p1[1])
    if d12 == 0.0 or d23 == 0.0 or d13 == 0.0:
        return 0.0
    return 2.0 * area2 / (d12 * d23 * d13)


def lcurve_points(pp, grid):
    """(log res_norm, log sol_norm) samples of the L-curve."""
    pts = []
    for lam in grid:
        r = pp.residual_norm(lam)
        s = pp.solution_norm(lam)
        if r <= 0.0 or s <= 0.0:
            pts.append((np.nan, np.nan))
        else:
            pts.append((np.log(r), np.log(s)))
    return np.array(pts)


def rule_lcurve(pp, grid=None):
    """Corner of the (log res, log sol) curve by discrete Menger curvature."""
    if pp.k < 3:
        raise ValueError("L-curve needs at least 3 iterations")
    if grid is None:
        grid = lambda_grid(pp)
    pts = lcurve_points(pp, grid)
    kappa = np.full(len(grid), -np.inf)
    for i in range(1, len(grid) - 1):
        if np.all(np.isfinite(pts[i - 1 : i + 2])):
            kappa[i] = _menger_curvature(pts[i - 1], pts[i], pts[i + 1])
    i = int(np.argmax(kappa))
    if not np.isfinite(kappa[i]) or kappa[i] <= 1e-15:
        warnings.warn("L-curve has no interior curvature maximum; returning endpoint")
        return float(grid[0])
    return float(grid[i])


def rule_reginska_fixed_point(pp, tol=1e-6, max_iters=100, lam0=None, grid=None):
    """Fixed point of lambda = res_norm(lambda) / sol_norm(lambda)."""
    if grid is None:
        grid = lambda_grid(pp)
    if lam0 is None:
        s0 = pp.solution_norm(float(grid[0]))
        if s0 <= 0.0:
            raise ValueError("solution norm vanishes; no fixed point to find")
        lam0 = pp.beta1 / s0
    lam = float(lam0)
    for _ in range(max_iters):
        s = pp.solution_norm(lam)
        if s <= 0.0:
            raise ValueError("solution norm collapsed during fixed-point iteration")
        lam_next = pp.residual_norm(lam) / s
        if abs(lam_next - lam) <= tol * lam:
            return float(lam_next)
        lam = float(lam_next)
    warnings.warn("fixed-point iteration hit max_iters without converging")
    return lam


def rule_optimal(pp, basis, x_true, grid=None):
    """Oracle rule: grid argmin of the true relative error."""
    if x_true is None:
        raise ValueError("optimal rule needs the true solution")
    x_true = np.asarray(x_true, dtype=float)
    nx = np.linalg.norm(x_true)
    if nx == 0.0:
        raise ValueError("true solution is zero; relative error undefined")
    if grid is None:
        grid = lambda_grid(pp)
    lifted = np.asarray(basis, dtype=float) @ pp.V_G
    best_lam, best_err = None, np.inf
    for lam in grid:
        phi = filter_factors(pp.sigmas, lam)
        coef = pp._safe_coef(phi)
        err = np.linalg.norm(lifted @ coef - x_true) / nx
        if err < best_err:
            best_lam, best_err = float(lam), float(err)
    return best_lam


def adaptive_omega(pp, eta, epsilon, grid=None):
    """Stand-in adaptive wGCV weight: mean filter factor at the DP lambda.

    Falls back to 1 when the discrepancy equation is not yet feasible or no
    noise estimate is available.
    """
    if epsilon is None:
        return 1.0
    try:
        lam_dp = rule_dp(pp, eta, epsilon, grid=grid)
    except DiscrepancyNotAttainable:
        return 1.0
    phi = filter_factors(pp.sigmas, lam_dp)
    if pp.k == 0:
        return 1.0
    omega = float(np.mean(phi))
    return min(max(omega, np.finfo(float).tiny), 1.0)


def select_lambda(pp, cfg, basis=None):
    """Dispatch to the configured rule; returns (lambda, objective_value)."""
    rule = cfg.rule.lower()
    if rule.startswith("fixed"):
        if cfg.lam < 0.0:
            raise ValueError("fixed lambda must be nonnegative")
        return float(cfg.lam), float("nan")
    grid = lambda_grid(pp, cfg)
    if rule == "dp":
        lam = rule_dp(pp, cfg.eta, cfg.epsilon, grid=grid)
        return lam, pp.residual_norm(lam)
    if rule == "gcv":
        lam = rule_gcv(pp, 1.0, grid=grid)
        return lam, gcv_objective(pp, lam, 1.0)
    if rule == "wgcv":
        omega = cfg.omega
        if omega is None:
            omega = adaptive_omega(pp, cfg.eta, cfg.epsilon, grid=grid)
        lam = rule_gcv(pp, omega, grid=grid)
        return lam, gcv_objective(pp, lam, omega)
    if rule == "upre":
        lam = rule_upre(pp, cfg.sigma2, grid=grid)
        return lam, upre_objective(pp, lam, cfg.sigma2)
    if rule == "lcurve":
        lam = rule_lcurve(pp, grid=grid)
        return lam, pp.residual_norm(lam)
    if rule == "reginska":
        lam = rule_reginska_fixed_point(
            pp, tol=cfg.reginska_tol, max_iters=cfg.reginska_max_iters, grid=grid
        )
        return lam, pp.residual_norm(lam) / pp.solution_norm(lam)
    if rule == "optimal":
        if basis is None:
            raise ValueError("optimal rule needs the Krylov basis")
        lam = rule_optimal(pp, basis, cfg.x_true, grid=grid)
        return lam, pp.residual_norm(lam)
    raise ValueError("unknown rule %r" % cfg.rule)


def quadrature_bounds(gkb, lam, norm_b=None):
    """Gauss (lower) and Gauss-Radau (upper) bounds for the full residual.

    The quantity bracketed is ||b - A x(lambda)||^2 = lambda^2 b^T
    (A A^T + lambda I)^{-2} b for the full-problem Tikhonov solution. The
    Gauss rule uses the square bidiagonal block, the Radau rule the full
    (k+1) x k factor (which pins a node at the origin).
    """
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    if len(gkb.alphas) < 1:
        raise ValueError("need at least one completed bidiagonalization step")
    nb = float(gkb.betas[0]) if norm_b is None else float(norm_b)

    def _value(M):
        theta, Q = np.linalg.eigh(M)
        theta = np.maximum(theta, 0.0)
        w = Q[0, :] ** 2
        return float(lam**2 * nb**2 * np.sum(w / (theta + lam) ** 2))

    Bsq = gkb.B_square
    B = gkb.B
    lower = _value(Bsq @ Bsq.T)
    upper = _value(B @ B.T)
    return QuadratureBounds(lower=lower, upper=upper)
