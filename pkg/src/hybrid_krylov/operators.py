"""Matrix-free linear operators.

All forward models are exposed through :class:`LinearMap`, which only promises
``apply`` (y = A x) and ``apply_adjoint`` (z = A^T w) plus fixed dimensions.
Operators are immutable after construction and safe to share between threads.
"""

import numpy as np
import scipy.sparse as sp


def _as_vector(x, length, what):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != length:
        raise ValueError(
            "%s expected a vector of length %d, got shape %s" % (what, length, x.shape)
        )
    return x


class LinearMap:
    """A real linear operator of fixed shape with forward and adjoint actions."""

    def __init__(self, rows, cols):
        if rows < 1 or cols < 1:
            raise ValueError("operator dimensions must be positive")
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def square(self):
        return self.rows == self.cols

    @property
    def shape(self):
        return (self.rows, self.cols)

    def apply(self, x):
        """Return A x for a length-``cols`` vector x."""
        x = _as_vector(x, self.cols, type(self).__name__ + ".apply")
        return self._apply(x)

    def apply_adjoint(self, w):
        """Return A^T w for a length-``rows`` vector w."""
        w = _as_vector(w, self.rows, type(self).__name__ + ".apply_adjoint")
        return self._apply_adjoint(w)

    def _apply(self, x):
        raise NotImplementedError

    def _apply_adjoint(self, w):
        raise NotImplementedError


class DenseMatrixMap(LinearMap):
    """Wrap an explicit dense matrix (row-major array)."""

    def __init__(self, entries):
        entries = np.asarray(entries, dtype=float)
        if entries.ndim != 2:
            raise ValueError("entries must be a 2-D array")
        super().__init__(entries.shape[0], entries.shape[1])
        self.entries = entries.copy()

    def _apply(self, x):
        return self.entries @ x

    def _apply_adjoint(self, w):
        return self.entries.T @ w


class IdentityMap(LinearMap):
    def __init__(self, n):
        super().__init__(n, n)

    def _apply(self, x):
        return x.copy()

    def _apply_adjoint(self, w):
        return w.copy()


class DiagonalMap(LinearMap):
    """Diagonal operator; ``inverse()`` returns the reciprocal map."""

    def __init__(self, diag):
        diag = np.asarray(diag, dtype=float)
        if diag.ndim != 1:
            raise ValueError("diag must be a vector")
        super().__init__(diag.shape[0], diag.shape[0])
        self.diag = diag.copy()

    def _apply(self, x):
        return self.diag * x

    def _apply_adjoint(self, w):
        return self.diag * w

    def inverse(self):
        if np.any(self.diag == 0.0):
            raise ValueError("diagonal has zero entries, not invertible")
        return DiagonalMap(1.0 / self.diag)


class ProductMap(LinearMap):
    """Composition (A o B)(x) = A(B(x)); adjoint is B^T A^T."""

    def __init__(self, A, B):
        if A.cols != B.rows:
            raise ValueError("inner dimensions of the composition do not match")
        super().__init__(A.rows, B.cols)
        self.A = A
        self.B = B

    def _apply(self, x):
        return self.A.apply(self.B.apply(x))

    def _apply_adjoint(self, w):
        return self.B.apply_adjoint(self.A.apply_adjoint(w))


class FirstDifferenceInverse(LinearMap):
    """Inverse of the first-difference matrix with a Dirichlet row.

    L = bidiag(1 on the diagonal, -1 on the subdiagonal) is invertible;
    this map applies L^{-1} (running sum) and L^{-T} (reversed running sum).
    Intended as a priorconditioner for smooth signals.
    """

    def __init__(self, n):
        super().__init__(n, n)

    def _apply(self, x):
        return np.cumsum(x)

    def _apply_adjoint(self, w):
        return np.cumsum(w[::-1])[::-1]


def _reflect_indices(idx, n):
    # half-sample symmetric reflection: -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2
    m = np.mod(idx, 2 * n)
    return np.where(m < n, m, 2 * n - 1 - m)


class BlurOperator(LinearMap):
    """2-D convolution on an N x N image with reflective boundary handling.

    The kernel is a (2r+1) x (2r+1) PSF normalized to unit sum, so constant
    images are preserved. Images are flattened row-major (row 0 at the top).
    Convolution is done directly in the spatial domain; the adjoint scatters
    through the same reflected index maps, so the operator pair is exact.
    """

    def __init__(self, N, psf):
        psf = np.asarray(psf, dtype=float)
        if psf.ndim != 2 or psf.shape[0] != psf.shape[1] or psf.shape[0] % 2 != 1:
            raise ValueError("psf must be a square array with odd side")
        if abs(psf.sum() - 1.0) > 1e-12:
            raise ValueError("psf must be normalized to unit sum")
        super().__init__(N * N, N * N)
        self.N = int(N)
        self.psf = psf.copy()
        r = psf.shape[0] // 2
        self.radius = r
        # precomputed reflected gather indices, one pair per kernel offset
        base = np.arange(N)
        self._index = []
        for du in range(-r, r + 1):
            rows = _reflect_indices(base - du, N)
            for dv in range(-r, r + 1):
                cols = _reflect_indices(base - dv, N)
                self._index.append((psf[r + du, r + dv], rows, cols))

    def _apply(self, x):
        img = x.reshape(self.N, self.N)
        out = np.zeros_like(img)
        for w, rows, cols in self._index:
            out += w * img[np.ix_(rows, cols)]
        return out.ravel()

    def _apply_adjoint(self, w):
        img = w.reshape(self.N, self.N)
        out = np.zeros_like(img)
        for wt, rows, cols in self._index:
            np.add.at(out, (rows[:, None], cols[None, :]), wt * img)
        return out.ravel()


def build_gaussian_psf(r, s1, s2, theta):
    """Rotated anisotropic Gaussian PSF on a (2r+1)^2 grid, unit sum.

    s1, s2 are the standard deviations along the rotated principal axes and
    theta is the rotation angle in radians. The kernel is renormalized after
    truncation so the blur conserves mass.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if s1 <= 0 or s2 <= 0:
        raise ValueError("spreads must be positive")
    if r == 0:
        return np.array([[1.0]])
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    cov = rot @ np.diag([s1 ** 2, s2 ** 2]) @ rot.T
    cinv = np.linalg.inv(cov)
    offs = np.arange(-r, r + 1, dtype=float)
    uu, vv = np.meshgrid(offs, offs, indexing="ij")
    quad = cinv[0, 0] * uu ** 2 + 2.0 * cinv[0, 1] * uu * vv + cinv[1, 1] * vv ** 2
    kernel = np.exp(-0.5 * quad)
    return kernel / kernel.sum()


class TomoOperator(LinearMap):
    """Sparse parallel-beam tomography operator with exact chord lengths.

    Rays are grouped by view angle; row i = a*p + j is ray j of angle a.
    Entries are the intersection lengths of a ray with each pixel it crosses,
    computed by parametric grid traversal. Stored compressed-row (CSR).
    """

    def __init__(self, N, p, angles_deg, matrix):
        super().__init__(matrix.shape[0], matrix.shape[1])
        self.N = int(N)
        self.p = int(p)
        self.angles_deg = tuple(float(a) for a in angles_deg)
        self.matrix = matrix

    def _apply(self, x):
        return self.matrix @ x

    def _apply_adjoint(self, w):
        return self.matrix.T @ w


def _trace_ray(px, py, dx, dy, N):
    """Chord lengths of the ray (px,py) + s(dx,dy) through the N x N grid.

    Returns (flat pixel indices, lengths). The image occupies the square
    [-N/2, N/2]^2; row 0 is the top of the image (largest y).
    """
    half = N / 2.0
    s_lo, s_hi = -np.inf, np.inf
    for pos, dirc in ((px, dx), (py, dy)):
        if abs(dirc) < 1e-14:
            if not (-half <= pos <= half):
                return np.empty(0, dtype=np.int64), np.empty(0)
        else:
            a = (-half - pos) / dirc
            b = (half - pos) / dirc
            s_lo = max(s_lo, min(a, b))
            s_hi = min(s_hi, max(a, b))
    if not np.isfinite(s_lo) or not np.isfinite(s_hi) or s_hi - s_lo <= 1e-12:
        return np.empty(0, dtype=np.int64), np.empty(0)

    lines = np.arange(N + 1, dtype=float) - half
    crossings = [np.array([s_lo, s_hi])]
    if abs(dx) >= 1e-14:
        sx = (lines - px) / dx
        crossings.append(sx[(sx > s_lo) & (sx < s_hi)])
    if abs(dy) >= 1e-14:
        sy = (lines - py) / dy
        crossings.append(sy[(sy > s_lo) & (sy < s_hi)])
    s = np.unique(np.concatenate(crossings))
    ds = np.diff(s)
    keep = ds > 1e-12
    ds = ds[keep]
    smid = (s[:-1] + 0.5 * np.diff(s))[keep]
    xm = px + smid * dx
    ym = py + smid * dy
    col = np.clip(np.floor(xm + half).astype(np.int64), 0, N - 1)
    row = np.clip(np.floor(half - ym).astype(np.int64), 0, N - 1)
    return row * N + col, ds


def build_tomo(N, p, angles_deg):
    """Build a parallel-beam TomoOperator.

    p rays per view are spaced cell-centered across a detector of width
    N*sqrt(2) (pixel units) centered on the image. At 0 degrees rays travel
    vertically; the detector offset axis is (cos t, sin t).
    """
    if N < 1 or p < 1:
        raise ValueError("N and p must be >= 1")
    angles = list(angles_deg)
    if not angles:
        raise ValueError("need at least one view angle")
    width = N * np.sqrt(2.0)
    offsets = (np.arange(p) + 0.5) / p * width - width / 2.0
    rows_idx, cols_idx, vals = [], [], []
    for a, ang in enumerate(angles):
        t = np.deg2rad(ang)
        dx, dy = -np.sin(t), np.cos(t)
        ox, oy = np.cos(t), np.sin(t)
        for j, off in enumerate(offsets):
            cols, lens = _trace_ray(off * ox, off * oy, dx, dy, N)
            if cols.size:
                rows_idx.append(np.full(cols.size, a * p + j, dtype=np.int64))
                cols_idx.append(cols)
                vals.append(lens)
    m = p * len(angles)
    if rows_idx:
        rows_idx = np.concatenate(rows_idx)
        cols_idx = np.concatenate(cols_idx)
        vals = np.concatenate(vals)
    else:
        rows_idx = np.empty(0, dtype=np.int64)
        cols_idx = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    matrix = sp.csr_matrix((vals, (rows_idx, cols_idx)), shape=(m, N * N))
    return TomoOperator(N, p, angles, matrix)


def to_dense(op):
    """Densify a LinearMap column by column (oracle/diagnostic helper)."""
    out = np.zeros((op.rows, op.cols))
    e = np.zeros(op.cols)
    for j in range(op.cols):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


def estimate_norm(op, rng=None, iters=10):
    """Crude 2-norm estimate by power iteration on A^T A."""
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(op.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = op.apply_adjoint(op.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        est = np.sqrt(nw)
        v = w / nw
    return est


def adjoint_mismatch(op, rng=None, trials=10):
    """Max normalized adjoint defect |<Ax,w> - <x,A^T w>| over random pairs."""
    rng = np.random.default_rng(0) if rng is None else rng
    scale = max(estimate_norm(op, rng), 1e-30)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.cols)
        w = rng.standard_normal(op.rows)
        gap = abs(np.dot(op.apply(x), w) - np.dot(x, op.apply_adjoint(w)))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(w) * scale))
    return worst
