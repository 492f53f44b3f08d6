"""Incremental Krylov factorizations.

Arnoldi (square operators), Golub-Kahan bidiagonalization, and the flexible
variants that admit iteration-dependent diagonal weights. States grow one
column per step; all basis vectors are retained. Modified Gram-Schmidt with
one reorthogonalization pass keeps the bases orthonormal at desk scale.

Breakdown (a vanishing normalizer) is detected against a running estimate of
the operator norm and stops the factorization cleanly instead of dividing by
noise.
"""

import numpy as np

_BREAKDOWN_REL = 1e-14


def _mgs(w, basis, reorth):
    """Orthogonalize w against the vectors in basis (in place logic).

    Returns (w, coeffs) where coeffs are the accumulated projections,
    including the second pass when reorth is set.
    """
    coeffs = np.zeros(len(basis))
    for i, v in enumerate(basis):
        c = v @ w
        coeffs[i] = c
        w = w - c * v
    if reorth and basis:
        for i, v in enumerate(basis):
            c = v @ w
            coeffs[i] += c
            w = w - c * v
    return w, coeffs


class ArnoldiFactorization:
    """State of the Arnoldi process: A V_k = V_{k+1} H_k."""

    def __init__(self, vs, reorth):
        self.vs = vs              # list of orthonormal basis vectors
        self.hcols = []           # column j holds h_{1..j+1, j}
        self.k = 0
        self.breakdown = False
        self.reorth = reorth
        self.norm_est = 0.0

    @property
    def V(self):
        return np.stack(self.vs, axis=1)

    @property
    def H(self):
        k = self.k
        H = np.zeros((k + 1, k))
        for j, col in enumerate(self.hcols):
            H[: len(col), j] = col
        return H


def arnoldi_init(A, b, reorth=True):
    if not A.square:
        raise ValueError("Arnoldi requires a square operator")
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ValueError("zero right-hand side")
    return ArnoldiFactorization([b / nb], reorth)


def arnoldi_step(state, A):
    if state.breakdown:
        raise RuntimeError("cannot step past a breakdown")
    if state.k >= A.cols:
        raise RuntimeError("subspace dimension exhausted")
    w = A.apply(state.vs[-1])
    w, coeffs = _mgs(w, state.vs, state.reorth)
    h_next = np.linalg.norm(w)
    state.norm_est = max(state.norm_est, float(np.max(np.abs(coeffs))), h_next)
    tol = _BREAKDOWN_REL * state.norm_est
    if h_next <= tol:
        state.hcols.append(np.concatenate([coeffs, [0.0]]))
        state.k += 1
        state.breakdown = True
        return state
    state.hcols.append(np.concatenate([coeffs, [h_next]]))
    state.vs.append(w / h_next)
    state.k += 1
    return state


class GKBFactorization:
    """State of Golub-Kahan bidiagonalization.

    After k steps: us holds u_1..u_{k+1} (u_{k+1} missing after a beta
    breakdown), vs holds v_1..v_k, alphas has k entries, betas has k+1
    entries with betas[0] = ||b||. The lower bidiagonal B_k is (k+1) x k.
    """

    def __init__(self, us, betas, reorth):
        self.us = us
        self.vs = []
        self.alphas = []
        self.betas = betas
        self.k = 0
        self.breakdown = False
        self.reorth = reorth
        self.norm_est = 0.0

    @property
    def U(self):
        return np.stack(self.us, axis=1)

    @property
    def V(self):
        return np.stack(self.vs, axis=1)

    @property
    def B(self):
        k = len(self.alphas)
        B = np.zeros((k + 1, k))
        for i in range(k):
            B[i, i] = self.alphas[i]
            B[i + 1, i] = self.betas[i + 1]
        return B

    @property
    def B_square(self):
        """Leading k x k block of B (drops the trailing beta row)."""
        return self.B[: len(self.alphas), :]


def gkb_init(A, b, reorth=True):
    b = np.asarray(b, dtype=float)
    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        raise ValueError("zero right-hand side")
    return GKBFactorization([b / beta1], [float(beta1)], reorth)


def gkb_step(state, A):
    if state.breakdown:
        raise RuntimeError("cannot step past a breakdown")
    tol = _BREAKDOWN_REL * state.norm_est
    # A^T side: new v and alpha
    v = A.apply_adjoint(state.us[-1])
    if state.vs:
        v = v - state.betas[-1] * state.vs[-1]
    if state.reorth and state.vs:
        for q in state.vs:
            v = v - (q @ v) * q
    alpha = np.linalg.norm(v)
    if alpha <= tol:
        state.breakdown = True
        return state
    v = v / alpha
    # A side: new u and beta
    u = A.apply(v) - alpha * state.us[-1]
    if state.reorth:
        for q in state.us:
            u = u - (q @ u) * q
    beta = np.linalg.norm(u)
    state.vs.append(v)
    state.alphas.append(float(alpha))
    state.norm_est = max(state.norm_est, float(alpha), float(beta))
    state.k += 1
    if beta <= _BREAKDOWN_REL * state.norm_est:
        state.betas.append(0.0)
        state.breakdown = True
        return state
    state.betas.append(float(beta))
    state.us.append(u / beta)
    return state


class FlexGKBFactorization:
    """Flexible Golub-Kahan state: A Z_k = U_{k+1} M_k, A^T U_{k+1} = V_{k+1} S_{k+1}.

    The solution subspace is spanned by Z (columns z_i = W_i^{-1} v_i, not
    orthonormal); M is upper Hessenberg, S upper triangular.
    """

    def __init__(self, us, vs, scols, reorth):
        self.us = us
        self.vs = vs
        self.zs = []
        self.mcols = []           # column j holds m_{1..j+2, j}
        self.scols = scols        # column j holds s_{1..j+1, j}
        self.k = 0
        self.breakdown = False
        self.reorth = reorth
        self.norm_est = 0.0

    @property
    def U(self):
        return np.stack(self.us, axis=1)

    @property
    def V(self):
        return np.stack(self.vs, axis=1)

    @property
    def Z(self):
        return np.stack(self.zs, axis=1)

    @property
    def M(self):
        k = self.k
        M = np.zeros((k + 1, k))
        for j, col in enumerate(self.mcols):
            M[: len(col), j] = col
        return M

    @property
    def S(self):
        kk = len(self.scols)
        S = np.zeros((kk, kk))
        for j, col in enumerate(self.scols):
            S[: len(col), j] = col
        return S


def flex_gkb_init(A, b, reorth=True):
    b = np.asarray(b, dtype=float)
    beta1 = np.linalg.norm(b)
    if beta1 == 0.0:
        raise ValueError("zero right-hand side")
    u1 = b / beta1
    v = A.apply_adjoint(u1)
    s11 = np.linalg.norm(v)
    if s11 == 0.0:
        raise ValueError("A^T b vanishes; nothing to iterate on")
    state = FlexGKBFactorization([u1], [v / s11], [np.array([s11])], reorth)
    state.norm_est = float(s11)
    state.beta1 = float(beta1)
    return state


def flex_gkb_step(state, A, w_inv):
    if state.breakdown:
        raise RuntimeError("cannot step past a breakdown")
    w_inv = np.asarray(w_inv, dtype=float)
    if w_inv.shape != state.vs[0].shape:
        raise ValueError("weight vector has wrong length")
    if np.any(w_inv <= 0.0):
        raise ValueError("weights must be strictly positive")
    z = w_inv * state.vs[-1]
    u = A.apply(z)
    u, mcoeffs = _mgs(u, state.us, state.reorth)
    m_next = np.linalg.norm(u)
    state.norm_est = max(state.norm_est, float(np.max(np.abs(mcoeffs))), m_next)
    tol = _BREAKDOWN_REL * state.norm_est
    state.zs.append(z)
    if m_next <= tol:
        state.mcols.append(np.concatenate([mcoeffs, [0.0]]))
        state.k += 1
        state.breakdown = True
        return state
    state.mcols.append(np.concatenate([mcoeffs, [m_next]]))
    state.us.append(u / m_next)
    # extend the upper-triangular S with the column from the new u
    v = A.apply_adjoint(state.us[-1])
    v, scoeffs = _mgs(v, state.vs, state.reorth)
    s_next = np.linalg.norm(v)
    state.norm_est = max(state.norm_est, float(np.max(np.abs(scoeffs))), s_next)
    state.k += 1
    if s_next <= _BREAKDOWN_REL * state.norm_est:
        state.scols.append(np.concatenate([scoeffs, [0.0]]))
        state.breakdown = True
        return state
    state.scols.append(np.concatenate([scoeffs, [s_next]]))
    state.vs.append(v / s_next)
    return state


class FlexArnoldiFactorization:
    """Flexible Arnoldi state: A Z_k = V_{k+1} H_k with H upper Hessenberg."""

    def __init__(self, vs, reorth):
        self.vs = vs
        self.zs = []
        self.hcols = []
        self.k = 0
        self.breakdown = False
        self.reorth = reorth
        self.norm_est = 0.0

    @property
    def V(self):
        return np.stack(self.vs, axis=1)

    @property
    def Z(self):
        return np.stack(self.zs, axis=1)

    @property
    def H(self):
        k = self.k
        H = np.zeros((k + 1, k))
        for j, col in enumerate(self.hcols):
            H[: len(col), j] = col
        return H


def flex_arnoldi_init(A, b, reorth=True):
    if not A.square:
        raise ValueError("flexible Arnoldi requires a square operator")
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        raise ValueError("zero right-hand side")
    return FlexArnoldiFactorization([b / nb], reorth)


def flex_arnoldi_step(state, A, w_inv):
    if state.breakdown:
        raise RuntimeError("cannot step past a breakdown")
    w_inv = np.asarray(w_inv, dtype=float)
    if w_inv.shape != state.vs[0].shape:
        raise ValueError("weight vector has wrong length")
    if np.any(w_inv <= 0.0):
        raise ValueError("weights must be strictly positive")
    z = w_inv * state.vs[-1]
    w = A.apply(z)
    w, coeffs = _mgs(w, state.vs, state.reorth)
    h_next = np.linalg.norm(w)
    state.norm_est = max(state.norm_est, float(np.max(np.abs(coeffs))), h_next)
    tol = _BREAKDOWN_REL * state.norm_est
    state.zs.append(z)
    if h_next <= tol:
        state.hcols.append(np.concatenate([coeffs, [0.0]]))
        state.k += 1
        state.breakdown = True
        return state
    state.hcols.append(np.concatenate([coeffs, [h_next]]))
    state.vs.append(w / h_next)
    state.k += 1
    return state
