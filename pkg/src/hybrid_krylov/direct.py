"""Dense SVD oracles for small instances.

Full-problem Tikhonov / TSVD filtered solutions and full-problem rule
tables. These are the ground truth the projected machinery is tested
against, so everything here is written in the most literal way possible.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .projected import filter_factors

ORACLE_SIZE_CAP = 512


@dataclass
class DenseSVD:
    U: np.ndarray        # m x m
    sigmas: np.ndarray   # min(m, n), descending
    V: np.ndarray        # n x n

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self):
        m, n = self.shape
        if self.sigmas.size == 0 or self.sigmas[0] == 0.0:
            return 0
        tol = max(m, n) * np.finfo(float).eps * self.sigmas[0]
        return int(np.sum(self.sigmas > tol))


def dense_svd(entries):
    """Full SVD of a dense matrix, capped at oracle scale."""
    A = np.asarray(entries, dtype=float)
    if A.ndim != 2:
        raise ValueError("need a 2-d array")
    m, n = A.shape
    if max(m, n) > ORACLE_SIZE_CAP:
        raise ValueError("dense oracle capped at %d" % ORACLE_SIZE_CAP)
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    return DenseSVD(U=U, sigmas=s, V=Vt.T)


def tikhonov_direct(svd, b, lam):
    """x(lambda) = sum_i phi_i (u_i^T b / sigma_i) v_i."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    b = np.asarray(b, dtype=float)
    r = svd.rank
    if lam == 0.0 and r < svd.sigmas.size:
        raise ValueError("lambda = 0 needs full numerical rank")
    c = svd.U.T @ b
    phi = filter_factors(svd.sigmas[:r], lam)
    coef = phi * c[:r] / svd.sigmas[:r]
    return svd.V[:, :r] @ coef


def tsvd_direct(svd, b, trunc):
    """Truncated SVD solution using the first trunc components."""
    if not 1 <= trunc <= svd.rank:
        raise ValueError("truncation index out of range")
    b = np.asarray(b, dtype=float)
    c = svd.U.T @ b
    coef = c[:trunc] / svd.sigmas[:trunc]
    return svd.V[:, :trunc] @ coef


@dataclass
class FullRuleTable:
    lams: np.ndarray
    values: np.ndarray
    lam_star: float


def _full_curves(svd, b, lam):
    """(res^2, sol^2, trace) of the full Tikhonov problem at one lambda."""
    m, n = svd.shape
    c = svd.U.T @ b
    r = svd.sigmas.size
    phi = filter_factors(svd.sigmas, lam)
    res2 = float(np.sum(((phi - 1.0) * c[:r]) ** 2) + np.sum(c[r:] ** 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        coef = np.where(svd.sigmas > 0.0, phi * c[:r] / svd.sigmas, 0.0)
    sol2 = float(np.sum(coef**2))
    return res2, sol2, float(np.sum(phi))


def full_rule_eval(svd, b, cfg, grid=None, x_true=None):
    """Objective table of a selection rule on the full problem.

    Mirrors the projected rules but with the ambient dimensions: GCV uses
    n * res^2 / (m - omega * trace)^2, UPRE uses m sigma^2. lam_star is the
    grid argmin (DP: the grid point closest to the discrepancy level).
    """
    m, n = svd.shape
    if max(m, n) > ORACLE_SIZE_CAP:
        raise ValueError("dense oracle capped at %d" % ORACLE_SIZE_CAP)
    b = np.asarray(b, dtype=float)
    if grid is None:
        s1 = float(svd.sigmas[0]) if svd.sigmas.size else 0.0
        if s1 <= 0.0:
            raise ValueError("zero operator; grid undefined")
        grid = np.geomspace(1e-12 * s1**2, 10.0 * s1**2, 200)
    grid = np.asarray(grid, dtype=float)

    rule = cfg.rule.lower()
    curves = [_full_curves(svd, b, lam) for lam in grid]

    if rule == "dp":
        values = np.array([np.sqrt(res2) for res2, _, _ in curves])
        target = cfg.eta * cfg.epsilon
        if not np.any(values <= target):
            warnings.warn("discrepancy level below the attainable residual")
            lam_star = float(grid[0])
        else:
            lam_star = float(grid[int(np.argmin(np.abs(values - target)))])
    elif rule in ("gcv", "wgcv"):
        omega = cfg.omega if (rule == "wgcv" and cfg.omega is not None) else 1.0
        values = np.array(
            [
                np.inf if m - omega * tr <= 0.0 else n * res2 / (m - omega * tr) ** 2
                for res2, _, tr in curves
            ]
        )
        lam_star = float(grid[int(np.argmin(values))])
    elif rule == "upre":
        values = np.array(
            [
                res2 + 2.0 * cfg.sigma2 * tr - m * cfg.sigma2
                for res2, _, tr in curves
            ]
        )
        lam_star = float(grid[int(np.argmin(values))])
    elif rule == "lcurve":
        tiny = np.finfo(float).tiny
        pts = np.array(
            [
                (0.5 * np.log(max(res2, tiny)), 0.5 * np.log(max(sol2, tiny)))
                for res2, sol2, _ in curves
            ]
        )
        values = np.full(len(grid), -np.inf)
        for i in range(1, len(grid) - 1):
            p1, p2, p3 = pts[i - 1], pts[i], pts[i + 1]
            area2 = (p2[0] - p1[0]) * (p3[1] - p1[1]) - (p3[0] - p1[0]) * (
                p2[1] - p1[1]
            )
            d12 = np.hypot(*(p2 - p1))
            d23 = np.hypot(*(p3 - p2))
            d13 = np.hypot(*(p3 - p1))
            if min(d12, d23, d13) > 0.0:
                values[i] = 2.0 * area2 / (d12 * d23 * d13)
        lam_star = float(grid[int(np.argmax(values))])
    elif rule == "optimal":
        xt = x_true if x_true is not None else cfg.x_true
        if xt is None:
            raise ValueError("optimal rule needs the true solution")
        xt = np.asarray(xt, dtype=float)
        nx = np.linalg.norm(xt)
        values = np.array(
            [
                np.linalg.norm(tikhonov_direct(svd, b, lam) - xt) / nx
                for lam in grid
            ]
        )
        lam_star = float(grid[int(np.argmin(values))])
    else:
        raise ValueError("unsupported rule for full evaluation: %r" % cfg.rule)
    return FullRuleTable(lams=grid, values=values, lam_star=lam_star)
