"""Reconstruction fidelity and distribution-distance metrics.

PSNR and SSIM score individual reconstructions against references; the
Fréchet distance and KID compare whole sets through pluggable feature
vectors (raw pixels by default -- no neural feature extractor ships with
the package, but precomputed features can be read from a tensor file).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensorio import read_tensor
from .tensors import as_chw

FEATURE_MODES = ("raw_pixels", "pooled_patches", "external_file")


@dataclass(frozen=True)
class MetricReport:
    """Aggregate metric values for one evaluated set of reconstructions."""

    psnr: float
    ssim: float
    fid: float | None
    kid_x1000: float | None
    n_samples: int

    def as_dict(self) -> dict:
        return {
            "psnr": self.psnr,
            "ssim": self.ssim,
            "fid": self.fid,
            "kid_x1000": self.kid_x1000,
            "n_samples": self.n_samples,
        }


def psnr(x, reference, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); identical inputs give math.inf."""
    if peak <= 0.0:
        raise ValueError(f"peak must be positive, got {peak}")
    a, b = as_chw(x), as_chw(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int, sigma: float = 1.5) -> np.ndarray:
    """Normalised 2-D Gaussian weighting window of odd side length."""
    if size < 3 or size % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {size}")
    half = size // 2
    g = np.exp(-0.5 * (np.arange(-half, half + 1) / sigma) ** 2)
    win = np.outer(g, g)
    return win / win.sum()


def ssim(
    x,
    reference,
    window: int | None = None,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """Mean local structural similarity under a Gaussian-weighted window.

    The window defaults to 11 (7 when the smaller image side is under
    32).  Channels are scored independently and averaged.
    """
    a, b = as_chw(x), as_chw(reference)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    c, h, w = a.shape
    if window is None:
        window = 11 if min(h, w) >= 32 else 7
    if min(h, w) < window:
        raise ValueError(f"image {h}x{w} is smaller than the {window} window")
    win = gaussian_window(window)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    return float(
        np.mean([kernels.ssim_mean(a[ch], b[ch], win, c1, c2) for ch in range(c)])
    )


def _psd_sqrt(cov: np.ndarray):
    vals, vecs = np.linalg.eigh(cov)
    clamp = float(-np.sum(vals[vals < 0.0]))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T, clamp


def frechet_distance_with_clamp(mu1, cov1, mu2, cov2):
    """Fréchet distance between two Gaussians plus the eigenvalue mass
    that had to be clamped to zero to take the matrix square roots."""
    mu1 = np.asarray(mu1, dtype=np.float64).ravel()
    mu2 = np.asarray(mu2, dtype=np.float64).ravel()
    cov1 = np.asarray(cov1, dtype=np.float64)
    cov2 = np.asarray(cov2, dtype=np.float64)
    d = mu1.size
    if mu2.size != d or cov1.shape != (d, d) or cov2.shape != (d, d):
        raise ValueError("moment dimensions disagree")
    root1, clamp1 = _psd_sqrt(cov1)
    cross_vals = np.linalg.eigvalsh(root1 @ cov2 @ root1)
    clamp2 = float(-np.sum(cross_vals[cross_vals < 0.0]))
    cross = 2.0 * float(np.sqrt(np.clip(cross_vals, 0.0, None)).sum())
    diff = mu1 - mu2
    value = float(diff @ diff + np.trace(cov1) + np.trace(cov2) - cross)
    return max(value, 0.0), clamp1 + clamp2


def frechet_distance(mu1, cov1, mu2, cov2) -> float:
    """||mu1-mu2||^2 + trace(cov1 + cov2 - 2 (cov1 cov2)^(1/2)), >= 0."""
    return frechet_distance_with_clamp(mu1, cov1, mu2, cov2)[0]


def gaussian_fit(features) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and covariance of a (count, d) feature stack."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors")
    mu = feats.mean(axis=0)
    centered = feats - mu
    cov = centered.T @ centered / (feats.shape[0] - 1)
    return mu, cov


def frechet_from_features(features_x, features_y) -> float:
    mu1, cov1 = gaussian_fit(features_x)
    mu2, cov2 = gaussian_fit(features_y)
    return frechet_distance(mu1, cov1, mu2, cov2)


def polynomial_kernel(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """k(a, b) = (a.b / d + 1)^3 on stacks of feature vectors."""
    d = a.shape[-1]
    return (a @ b.T / d + 1.0) ** 3


def _unbiased_mmd2(fx: np.ndarray, fy: np.ndarray) -> float:
    m = fx.shape[0]
    kxx = polynomial_kernel(fx, fx)
    kyy = polynomial_kernel(fy, fy)
    kxy = polynomial_kernel(fx, fy)
    sum_off_x = kxx.sum() - np.trace(kxx)
    sum_off_y = kyy.sum() - np.trace(kyy)
    return float(
        sum_off_x / (m * (m - 1)) + sum_off_y / (m * (m - 1)) - 2.0 * kxy.mean()
    )


def kid(
    features_x,
    features_y,
    subset_size: int = 50,
    n_subsets: int = 10,
    seed: int = 0,
) -> float:
    """Unbiased MMD^2 with a degree-3 polynomial kernel, reported x1000.

    Each of the n_subsets rounds draws subset_size vectors without
    replacement from both sets (seeded), computes the unbiased estimator,
    and the rounds are averaged.
    """
    fx = np.asarray(features_x, dtype=np.float64)
    fy = np.asarray(features_y, dtype=np.float64)
    if fx.ndim != 2 or fy.ndim != 2 or fx.shape[1] != fy.shape[1]:
        raise ValueError("feature sets must be 2-D with equal dimension")
    if subset_size < 2:
        raise ValueError(f"subset_size must be >= 2, got {subset_size}")
    if n_subsets < 1:
        raise ValueError(f"n_subsets must be >= 1, got {n_subsets}")
    if fx.shape[0] < subset_size or fy.shape[0] < subset_size:
        raise ValueError(
            f"need at least subset_size={subset_size} vectors per set, "
            f"got {fx.shape[0]} and {fy.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    estimates = []
    for _ in range(n_subsets):
        ix = rng.choice(fx.shape[0], size=subset_size, replace=False)
        iy = rng.choice(fy.shape[0], size=subset_size, replace=False)
        estimates.append(_unbiased_mmd2(fx[ix], fy[iy]))
    return 1000.0 * float(np.mean(estimates))


def kid_with_se(features_x, features_y, subset_size=50, n_subsets=10, seed=0):
    """kid() plus the standard error of the subset mean (both x1000)."""
    fx = np.asarray(features_x, dtype=np.float64)
    fy = np.asarray(features_y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    estimates = []
    for _ in range(n_subsets):
        ix = rng.choice(fx.shape[0], size=subset_size, replace=False)
        iy = rng.choice(fy.shape[0], size=subset_size, replace=False)
        estimates.append(_unbiased_mmd2(fx[ix], fy[iy]))
    estimates = np.asarray(estimates)
    se = estimates.std(ddof=1) / math.sqrt(n_subsets) if n_subsets > 1 else 0.0
    return 1000.0 * float(estimates.mean()), 1000.0 * float(se)


def feature_extract(
    x,
    mode: str = "raw_pixels",
    pool: int = 2,
    feature_file: str | None = None,
    index: int | None = None,
) -> np.ndarray:
    """Turn one image into a feature vector.

    raw_pixels flattens; pooled_patches block-averages non-overlapping
    pool x pool patches first; external_file returns row ``index`` of a
    precomputed (count, d) tensor file.
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"mode must be one of {FEATURE_MODES}, got {mode!r}")
    if mode == "external_file":
        if feature_file is None or index is None:
            raise ValueError("external_file mode needs feature_file and index")
        table = read_tensor(feature_file)
        if table.ndim != 2:
            raise ValueError(f"{feature_file}: expected a (count, d) feature table")
        if not 0 <= index < table.shape[0]:
            raise ValueError(
                f"feature index {index} out of range for {table.shape[0]} rows"
            )
        return table[index]
    arr = as_chw(x)
    if mode == "raw_pixels":
        return arr.ravel().copy()
    c, h, w = arr.shape
    if pool < 1 or h % pool or w % pool:
        raise ValueError(f"pool {pool} must divide image sides {h}x{w}")
    pooled = arr.reshape(c, h // pool, pool, w // pool, pool).mean(axis=(2, 4))
    return pooled.ravel()
