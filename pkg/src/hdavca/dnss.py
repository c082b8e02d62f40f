"""Information-loss feature from natural scene statistics of binocular channels.

The stereo views are combined into a summation map (binocular fusion) and a
signed difference map (disparity/saliency). Each is ZCA-whitened, contrast
normalized, and the paired products of neighboring normalized coefficients
along four orientations at two scales are fitted with a zero-mean asymmetric
generalized Gaussian; the fitted (eta, lambda, sigma_l^2, sigma_r^2) across
all combinations form the 64-dim feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from .image import StereoPair, gaussian_kernel_2d, resample_bilinear

ORIENTATIONS = ("h", "v", "d1", "d2")

# Moment-matching grid for the AGGD shape parameter.
_LAMBDA_GRID = np.arange(0.2, 10.001, 0.001)
_RHO_GRID = gamma_fn(2.0 / _LAMBDA_GRID) ** 2 / (
    gamma_fn(1.0 / _LAMBDA_GRID) * gamma_fn(3.0 / _LAMBDA_GRID)
)

_MSCN_KERNEL = gaussian_kernel_2d(7, 7.0 / 6.0)

# Stand-in parameters when a branch carries no signal (e.g. identical views).
SENTINEL_AGGD = (0.0, 10.0, 0.0, 0.0)


class DegenerateSampleError(ValueError):
    """Raised by fit_aggd on all-zero or too-small sample sets."""


@dataclass(frozen=True)
class AggdParams:
    eta: float
    lam: float
    sigma_l2: float
    sigma_r2: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.eta, self.lam, self.sigma_l2, self.sigma_r2)


@dataclass(frozen=True)
class DnssFeature:
    """64 values: scales (1, 2) x orientations (h, v, d1, d2) x maps (sum, diff)
    x (eta, lambda, sigma_l^2, sigma_r^2)."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (64,):
            raise ValueError(f"D-NSS feature must have 64 values, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("D-NSS feature contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)


def dnss_names() -> list[str]:
    names = []
    for s in (1, 2):
        for o in ORIENTATIONS:
            for m in ("sum", "diff"):
                for q in ("eta", "lambda", "sigma_l2", "sigma_r2"):
                    names.append(f"dnss_s{s}_{o}_{m}_{q}")
    return names


def sum_diff_maps(pair: StereoPair) -> tuple[np.ndarray, np.ndarray]:
    """Pixelwise summation and signed difference of the two views, unclipped."""
    left = pair.left.pixels
    right = pair.right.pixels
    return left + right, left - right


def zca_whiten(arr: np.ndarray, patch_size: int = 8, eps: float = 1e-5) -> np.ndarray:
    """Patch-based zero-phase whitening with center-pixel write-back.

    All overlapping patches are mean-centered; the shared patch covariance is
    symmetrically inverse-square-rooted (eigenvalue floor eps) and each
    transformed patch contributes its center pixel. Borders without a full
    patch are filled by edge replication.
    """
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    p = patch_size
    if h < p or w < p:
        raise ValueError(f"map {h}x{w} smaller than whitening patch {p}x{p}")

    windows = np.lib.stride_tricks.sliding_window_view(arr, (p, p))
    patches = windows.reshape(-1, p * p)
    centered = patches - patches.mean(axis=1, keepdims=True)
    cov = centered.T @ centered / centered.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    scale = 1.0 / np.sqrt(evals + eps)
    center_row = (evecs * scale) @ evecs[p * p // 2 + p // 2]
    interior = (centered @ center_row).reshape(h - p + 1, w - p + 1)
    before = p // 2
    after_h = h - interior.shape[0] - before
    after_w = w - interior.shape[1] - before
    return np.pad(interior, ((before, after_h), (before, after_w)), mode="edge")


def mscn(arr: np.ndarray, c: float = 1.0) -> np.ndarray:
    """Mean-subtracted contrast-normalized coefficients.

    Local mean and deviation come from a 7x7 unit-sum Gaussian window
    (sigma 7/6, replicated borders); c stabilizes flat regions.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size and arr.max() == arr.min():
        return np.zeros_like(arr)  # no contrast anywhere
    mu = ndimage.correlate(arr, _MSCN_KERNEL, mode="nearest")
    e2 = ndimage.correlate(arr * arr, _MSCN_KERNEL, mode="nearest")
    sigma = np.sqrt(np.abs(e2 - mu * mu))
    return (arr - mu) / (sigma + c)


def paired_products(arr: np.ndarray, orientation: str) -> np.ndarray:
    """Products of each coefficient with its neighbor along one orientation.

    Offsets: h=(0,1), v=(1,0), d1=(1,1), d2=(1,-1). All outputs are cropped
    to the common (h-1)x(w-1) valid region.
    """
    m = np.asarray(arr, dtype=np.float64)
    if orientation == "h":
        return (m[:, :-1] * m[:, 1:])[:-1, :]
    if orientation == "v":
        return (m[:-1, :] * m[1:, :])[:, :-1]
    if orientation == "d1":
        return m[:-1, :-1] * m[1:, 1:]
    if orientation == "d2":
        return m[:-1, 1:] * m[1:, :-1]
    raise ValueError(f"unknown orientation: {orientation!r}")


def fit_aggd(samples: np.ndarray) -> AggdParams:
    """Moment-matching fit of a zero-mean asymmetric generalized Gaussian.

    Left/right scales come from the negative/positive sample second moments;
    the shape parameter minimizes the distance between the generalized
    Gaussian ratio function and the skew-corrected sample ratio over a dense
    grid in [0.2, 10].
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 64:
        raise DegenerateSampleError(f"degenerate sample set: only {x.size} samples")
    if not np.any(x):
        raise DegenerateSampleError("degenerate sample set: all samples zero")

    neg = x[x < 0]
    pos = x[x > 0]
    sigma_l = np.sqrt(np.mean(neg * neg)) if neg.size else 0.0
    sigma_r = np.sqrt(np.mean(pos * pos)) if pos.size else 0.0

    gamma_hat = sigma_l / max(sigma_r, 1e-12)
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x * x)
    r_norm = r_hat * (gamma_hat**3 + 1) * (gamma_hat + 1) / (gamma_hat**2 + 1) ** 2

    lam = float(_LAMBDA_GRID[np.argmin(np.abs(_RHO_GRID - r_norm))])
    side_scale = np.sqrt(gamma_fn(1.0 / lam) / gamma_fn(3.0 / lam))
    rho_l = sigma_l * side_scale
    rho_r = sigma_r * side_scale
    eta = (rho_l - rho_r) * gamma_fn(2.0 / lam) / gamma_fn(1.0 / lam)
    return AggdParams(
        eta=float(eta), lam=lam, sigma_l2=float(sigma_l**2), sigma_r2=float(sigma_r**2)
    )


def dnss_feature(
    pair: StereoPair, zca_patch_size: int = 8, mscn_c: float = 1.0
) -> DnssFeature:
    """Assemble the 64-dim information-loss feature of a stereo pair.

    Scale 2 halves the whitened maps (bilinear) before contrast
    normalization. Branches whose product samples are degenerate (identical
    views zero the difference map) take sentinel parameters.
    """
    if pair.width < 16 or pair.height < 16:
        raise ValueError(f"views {pair.width}x{pair.height} too small (min 16x16)")
    s_map, d_map = sum_diff_maps(pair)
    zs = zca_whiten(s_map, patch_size=zca_patch_size)
    zd = zca_whiten(d_map, patch_size=zca_patch_size)

    per_scale = {
        1: (mscn(zs, c=mscn_c), mscn(zd, c=mscn_c)),
        2: (mscn(_half(zs), c=mscn_c), mscn(_half(zd), c=mscn_c)),
    }

    values = []
    for s in (1, 2):
        m_sum, m_diff = per_scale[s]
        for o in ORIENTATIONS:
            for m in (m_sum, m_diff):
                try:
                    params = fit_aggd(paired_products(m, o))
                    values.extend(params.as_tuple())
                except DegenerateSampleError:
                    values.extend(SENTINEL_AGGD)
    return DnssFeature(np.array(values))


def _half(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape
    return resample_bilinear(arr, max(1, w // 2), max(1, h // 2))
