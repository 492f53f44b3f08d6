"""Model inverse problems: deblurring and tomography at configurable scale.

Both generators follow the same recipe: rasterize a phantom, push it through
the forward operator, then add white noise rescaled so that the relative
noise level ||e|| / ||A x_true|| is hit exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .operators import BlurOperator, build_gaussian_psf, build_tomo


@dataclass
class Image:
    width: int
    height: int
    pixels: np.ndarray  # flat, row-major, row 0 on top

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float).ravel()
        if self.width * self.height != self.pixels.size:
            raise ValueError("pixel count does not match width*height")

    def as_array(self):
        return self.pixels.reshape(self.height, self.width)


@dataclass
class TestProblem:
    A: object
    b_true: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    e: np.ndarray = field(repr=False)
    noise_level: float
    sigma: float
    seed: int

    @property
    def epsilon(self):
        """Noise norm ||e||, the quantity the discrepancy principle needs."""
        return float(np.linalg.norm(self.e))


def add_noise(b_true, noise_level, seed):
    """Add white Gaussian noise scaled to an exact relative noise level.

    Returns (b, e, sigma) with ||e||/||b_true|| = noise_level and
    sigma = ||e||/sqrt(m), the per-entry standard deviation implied by the
    rescaling.
    """
    b_true = np.asarray(b_true, dtype=float)
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    m = b_true.size
    if noise_level == 0.0:
        e = np.zeros(m)
    else:
        rng = np.random.default_rng(seed)
        e0 = rng.standard_normal(m)
        e = noise_level * (np.linalg.norm(b_true) / np.linalg.norm(e0)) * e0
    b = b_true + e
    sigma = float(np.linalg.norm(e) / np.sqrt(m))
    return b, e, sigma


def estimate_noise_sigma(b):
    """Estimate the white-noise standard deviation from data alone.

    Single-level Haar detail coefficients (pairwise differences over sqrt(2),
    odd tail dropped), then the median absolute deviation rule with the
    0.6745 normal consistency constant.
    """
    b = np.asarray(b, dtype=float)
    if b.size < 2:
        raise ValueError("need at least two samples")
    n2 = (b.size // 2) * 2
    detail = (b[0:n2:2] - b[1:n2:2]) / np.sqrt(2.0)
    return float(np.median(np.abs(detail)) / 0.6745)


def estimate_noise_level(b):
    """Relative noise-level estimate sigma_hat * sqrt(m) / ||b||."""
    b = np.asarray(b, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return 0.0
    return estimate_noise_sigma(b) * np.sqrt(b.size) / nb


def deblur_phantom(N):
    """Piecewise-smooth test image: two boxes plus a Gaussian bump, in [0,1]."""
    ii, jj = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    img = np.zeros((N, N))
    img[(ii >= 0.15 * N) & (ii < 0.55 * N) & (jj >= 0.10 * N) & (jj < 0.45 * N)] = 0.55
    img[(ii >= 0.35 * N) & (ii < 0.75 * N) & (jj >= 0.30 * N) & (jj < 0.60 * N)] = 0.85
    bump = np.exp(-((ii - 0.72 * N) ** 2 + (jj - 0.72 * N) ** 2) / (2 * (0.09 * N) ** 2))
    img += 0.7 * bump
    np.clip(img, 0.0, 1.0, out=img)
    return Image(width=N, height=N, pixels=img.ravel())


# (intensity, x-semiaxis, y-semiaxis, x0, y0, rotation in degrees)
_SHEPP_LOGAN = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def shepp_logan(N):
    """The 10-ellipse head phantom rasterized on an N x N grid, values in [0,1]."""
    if N < 8:
        raise ValueError("N must be >= 8")
    j = np.arange(N)
    x = (j + 0.5) * 2.0 / N - 1.0
    y = 1.0 - (j + 0.5) * 2.0 / N
    xx, yy = np.meshgrid(x, y, indexing="xy")  # yy[i, :] = y of row i
    img = np.zeros((N, N))
    for inten, a, b, x0, y0, phi_deg in _SHEPP_LOGAN:
        phi = np.deg2rad(phi_deg)
        c, s = np.cos(phi), np.sin(phi)
        xr = (xx - x0) * c + (yy - y0) * s
        yr = -(xx - x0) * s + (yy - y0) * c
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += inten
    np.clip(img, 0.0, 1.0, out=img)
    return Image(width=N, height=N, pixels=img.ravel())


def make_deblur_problem(N=32, noise_level=1e-2, seed=0, r=6, s1=3.0, s2=3.0,
                        theta=0.0, phantom=None):
    """Gaussian deblurring test problem with reflective boundaries."""
    psf = build_gaussian_psf(r, s1, s2, theta)
    A = BlurOperator(N, psf)
    image = deblur_phantom(N) if phantom is None else phantom
    x_true = image.pixels
    b_true = A.apply(x_true)
    b, e, sigma = add_noise(b_true, noise_level, seed)
    return TestProblem(A=A, b_true=b_true, b=b, x_true=x_true, e=e,
                       noise_level=noise_level, sigma=sigma, seed=seed)


def make_tomo_problem(N=32, p=45, angles_deg=None, noise_level=1e-2, seed=0):
    """Parallel-beam CT of the head phantom; overdetermined at the defaults."""
    if angles_deg is None:
        angles_deg = range(0, 180, 2)
    A = build_tomo(N, p, angles_deg)
    x_true = shepp_logan(N).pixels
    b_true = A.apply(x_true)
    b, e, sigma = add_noise(b_true, noise_level, seed)
    return TestProblem(A=A, b_true=b_true, b=b, x_true=x_true, e=e,
                       noise_level=noise_level, sigma=sigma, seed=seed)
