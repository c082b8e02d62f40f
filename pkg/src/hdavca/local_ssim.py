"""Local structural-similarity feature over matched keypoint neighborhoods.

Retargeting changes image dimensions, so a global structural-similarity map is
undefined; instead 33x33 patches are cut around matched keypoints of the
original and retargeted left views and the mean windowed SSIM over all pairs
is the feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import GrayImage, gaussian_kernel_2d, require_feature_size
from .keypoints import DetectorParams, detect_and_describe, match_keypoints

PATCH = 33
HALF = PATCH // 2
WINDOW = 11
C1 = (0.01 * 255.0) ** 2
C2 = (0.03 * 255.0) ** 2

_KERNEL = gaussian_kernel_2d(WINDOW, 1.5)


@dataclass(frozen=True)
class LocalSsimFeature:
    value: float
    n_matches: int


def windowed_ssim(a: np.ndarray, b: np.ndarray, pooling: str = "map_mean") -> float:
    """Mean SSIM over all 11x11 window positions inside a pair of 33x33 patches.

    Per-window statistics are Gaussian-weighted (sigma 1.5, unit-sum kernel).
    pooling="center_window" evaluates only the single window centered in the
    patch instead of averaging the full map.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (PATCH, PATCH) or b.shape != (PATCH, PATCH):
        raise ValueError(f"patches must be {PATCH}x{PATCH}, got {a.shape} and {b.shape}")

    if pooling == "center_window":
        c = HALF - WINDOW // 2
        return _ssim_window(a[c : c + WINDOW, c : c + WINDOW], b[c : c + WINDOW, c : c + WINDOW])
    if pooling != "map_mean":
        raise ValueError(f"unknown pooling mode: {pooling!r}")

    wa = np.lib.stride_tricks.sliding_window_view(a, (WINDOW, WINDOW))
    wb = np.lib.stride_tricks.sliding_window_view(b, (WINDOW, WINDOW))
    k = _KERNEL
    mu_a = np.einsum("ijkl,kl->ij", wa, k)
    mu_b = np.einsum("ijkl,kl->ij", wb, k)
    da = wa - mu_a[:, :, None, None]
    db = wb - mu_b[:, :, None, None]
    var_a = np.einsum("ijkl,kl->ij", da * da, k)
    var_b = np.einsum("ijkl,kl->ij", db * db, k)
    cov = np.einsum("ijkl,kl->ij", da * db, k)
    ssim_map = ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / (
        (mu_a**2 + mu_b**2 + C1) * (var_a + var_b + C2)
    )
    return float(ssim_map.mean())


def _ssim_window(x: np.ndarray, y: np.ndarray) -> float:
    k = _KERNEL
    mu_x = float((k * x).sum())
    mu_y = float((k * y).sum())
    var_x = float((k * (x - mu_x) ** 2).sum())
    var_y = float((k * (y - mu_y) ** 2).sum())
    cov = float((k * (x - mu_x) * (y - mu_y)).sum())
    return ((2 * mu_x * mu_y + C1) * (2 * cov + C2)) / (
        (mu_x**2 + mu_y**2 + C1) * (var_x + var_y + C2)
    )


def local_ssim_feature(
    original_left: GrayImage,
    retargeted_left: GrayImage,
    detector: DetectorParams | None = None,
    border_mode: str = "clamp",
    pooling: str = "map_mean",
) -> LocalSsimFeature:
    """Detect, match retargeted->original, and average patch SSIM over matches.

    Keypoints closer than 16 px to a border get their patch center clamped
    inward (border_mode="drop" discards them instead). Zero matches yield
    value 0: no structural evidence was preserved.
    """
    require_feature_size(original_left)
    require_feature_size(retargeted_left)
    detector = detector or DetectorParams()

    kp_ret = detect_and_describe(retargeted_left, detector)
    kp_orig = detect_and_describe(original_left, detector)
    matches = match_keypoints(kp_ret, kp_orig, ratio=detector.ratio_test)

    values = []
    for m in matches:
        pr = _patch_at(retargeted_left.pixels, m.retargeted_pt.y, m.retargeted_pt.x, border_mode)
        po = _patch_at(original_left.pixels, m.original_pt.y, m.original_pt.x, border_mode)
        if pr is None or po is None:
            continue
        values.append(windowed_ssim(pr, po, pooling=pooling))
    if not values:
        return LocalSsimFeature(value=0.0, n_matches=0)
    return LocalSsimFeature(value=float(np.mean(values)), n_matches=len(values))


def _patch_at(pixels: np.ndarray, y: float, x: float, border_mode: str):
    h, w = pixels.shape
    r = int(round(y))
    c = int(round(x))
    if border_mode == "drop":
        if not (HALF <= r < h - HALF and HALF <= c < w - HALF):
            return None
    elif border_mode == "clamp":
        r = min(max(r, HALF), h - HALF - 1)
        c = min(max(c, HALF), w - HALF - 1)
    else:
        raise ValueError(f"unknown border mode: {border_mode!r}")
    return pixels[r - HALF : r + HALF + 1, c - HALF : c + HALF + 1]
