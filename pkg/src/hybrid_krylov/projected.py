"""Small projected Tikhonov problems.

After k Krylov steps the regularized problem collapses to a (k+1) x k least
squares problem min_y ||beta1 e1 - G y||^2 + lambda ||y||^2. This module
factors G once (dense SVD) and then answers solve / residual / trace queries
for many lambda values in O(k) each, which is what the parameter-selection
rules need.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ProjectedSolve:
    """One regularized solve of the projected problem."""

    lam: float
    y: np.ndarray
    res_norm: float
    sol_norm: float
    trace_influence: float


def small_svd(G):
    """Thin SVD of a small dense matrix, returned as (U, sigmas, V)."""
    U, s, Vt = np.linalg.svd(np.asarray(G, dtype=float), full_matrices=False)
    return U, s, Vt.T


def filter_factors(sigmas, lam):
    """Tikhonov spectral filters sigma^2 / (sigma^2 + lambda).

    Zero singular values get filter zero (the component is not touched).
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    s2 = sigmas**2
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.where(s2 > 0.0, s2 / (s2 + lam), 0.0)
    return phi


class ProjectedProblem:
    """SVD view of min_y ||beta1 e1 - G y||^2 + lambda ||y||^2.

    G is (k+1) x k (a bidiagonal B_k, Hessenberg H_k, or one of the
    transformed forms); p_vec = beta1 * U_G^T e1 carries the data.
    """

    def __init__(self, G, beta1):
        G = np.asarray(G, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1] + 1:
            raise ValueError("projected matrix must be (k+1) x k")
        if beta1 <= 0.0:
            raise ValueError("beta1 must be positive")
        self.G = G
        self.beta1 = float(beta1)
        self.k = G.shape[1]
        self.U_G, self.sigmas, self.V_G = small_svd(G)
        # p_vec has k+1 entries: the first k pair with singular values, the
        # last is the residual component orthogonal to range(G).
        p = np.zeros(self.k + 1)
        p[: self.k] = self.beta1 * self.U_G[0, :]
        p[self.k] = np.sqrt(max(self.beta1**2 - p[: self.k] @ p[: self.k], 0.0))
        self.p_vec = p
        self._rank_tol = max(G.shape) * np.finfo(float).eps * (
            self.sigmas[0] if self.k else 0.0
        )

    @property
    def sigma_max(self):
        return float(self.sigmas[0]) if self.k else 0.0

    def _safe_coef(self, phi, trunc=None):
        k = self.k if trunc is None else trunc
        num = phi[:k] * self.p_vec[:k]
        coef = np.zeros(k)
        np.divide(num, self.sigmas[:k], out=coef, where=self.sigmas[:k] > 0.0)
        return coef

    def residual_norm(self, lam):
        phi = filter_factors(self.sigmas, lam)
        r2 = self.p_vec[self.k] ** 2 + np.sum(
            ((phi - 1.0) * self.p_vec[: self.k]) ** 2
        )
        return float(np.sqrt(r2))

    def solution_norm(self, lam):
        phi = filter_factors(self.sigmas, lam)
        return float(np.linalg.norm(self._safe_coef(phi)))

    def influence_trace(self, lam):
        return float(np.sum(filter_factors(self.sigmas, lam)))


def solve_projected_tikhonov(pp, lam):
    """Solve the projected problem at a given lambda."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    if lam == 0.0 and (pp.k == 0 or pp.sigmas[-1] <= pp._rank_tol):
        raise ValueError(
            "projected matrix is rank deficient; lambda = 0 is not solvable"
        )
    phi = filter_factors(pp.sigmas, lam)
    coef = pp._safe_coef(phi)
    y = pp.V_G @ coef
    return ProjectedSolve(
        lam=float(lam),
        y=y,
        res_norm=pp.residual_norm(lam),
        sol_norm=float(np.linalg.norm(coef)),
        trace_influence=float(np.sum(phi)),
    )


def solve_projected_tsvd(pp, trunc):
    """Truncated SVD solve of the projected problem (filters 1 then 0)."""
    if not 1 <= trunc <= pp.k:
        raise ValueError("truncation index out of range")
    if pp.sigmas[trunc - 1] <= pp._rank_tol:
        raise ValueError("truncation index exceeds numerical rank")
    coef = pp.p_vec[:trunc] / pp.sigmas[:trunc]
    y = pp.V_G[:, :trunc] @ coef
    r2 = pp.p_vec[pp.k] ** 2 + np.sum(pp.p_vec[trunc : pp.k] ** 2)
    return ProjectedSolve(
        lam=0.0,
        y=y,
        res_norm=float(np.sqrt(r2)),
        sol_norm=float(np.linalg.norm(coef)),
        trace_influence=float(trunc),
    )


def lift_solution(basis, y):
    """Map projected coefficients back to the full space, x = basis @ y."""
    basis = np.asarray(basis, dtype=float)
    y = np.asarray(y, dtype=float)
    if basis.shape[1] != y.shape[0]:
        raise ValueError("basis and coefficient sizes do not match")
    return basis @ y


def build_lsmr_projected(alphas, betas, k):
    """Projected normal-equations (LSMR-style) problem from GKB scalars.

    Stacks B_k^T B_k on top of abar_{k+1} e_k^T where abar_i = alpha_i
    beta_i, with right-hand side abar_1 e_1. Requires the factorization to
    be one step ahead (alphas[k], betas[k] available) unless the tail
    vanished at a breakdown.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if k < 1 or len(alphas) < k or len(betas) < k + 1:
        raise ValueError("need at least k alphas and k+1 betas")
    B = np.zeros((k + 1, k))
    for i in range(k):
        B[i, i] = alphas[i]
        B[i + 1, i] = betas[i + 1]
    tail = 0.0
    if len(alphas) >= k + 1 and len(betas) >= k + 1:
        tail = float(alphas[k] * betas[k])
    G = np.zeros((k + 1, k))
    G[:k, :] = B.T @ B
    G[k, k - 1] = tail
    return ProjectedProblem(G, float(alphas[0] * betas[0]))
