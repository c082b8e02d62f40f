"""Binocular incongruity features: disparity range, perceptual alternation,
and disparity intensity distribution.

Three perceptual failure modes are scored from the disparity map and the two
views: leaving the comfortable fusion zone, window violation / rivalry at the
image boundaries, and the accommodation-vergence readjustment intensity from
local disparity fluctuations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disparity import DisparityMap
from .image import StereoPair

# Just-noticeable depth difference thresholds per absolute-disparity bin.
JNDD_BIN_EDGES = (64.0, 128.0, 192.0)
JNDD_THRESHOLDS = (21.0, 19.0, 18.0, 20.0)

_GUARD = 1e-6


@dataclass(frozen=True)
class ComfortZone:
    """Disparity interval fused without strain, with crossed/uncrossed penalties."""

    d_min: float = -79.55
    d_max: float = 79.55
    alpha: float = 0.6
    beta: float = 0.4

    def __post_init__(self):
        if not self.d_min < self.d_max:
            raise ValueError(f"comfort zone needs d_min < d_max, got [{self.d_min}, {self.d_max}]")
        if self.alpha < 0 or self.beta < 0 or abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ValueError(f"penalties must be nonnegative and sum to 1, got {self.alpha}, {self.beta}")


@dataclass(frozen=True)
class BinocularFeatures:
    f_dr: float
    f_pa: tuple[float, float, float]  # (A_l, A_r, R_E)
    f_did: tuple[float, float]  # (m, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.f_dr, *self.f_pa, *self.f_did], dtype=np.float64)


def disparity_range_feature(d: DisparityMap, zone: ComfortZone) -> float:
    """Weighted mismatch between the map's disparity range and the comfort zone.

    Zero extrema are guarded to +-1e-6 so the ratio stays finite; a zero
    denominator counts as positive.
    """
    d_l = float(d.data.min())
    d_u = float(d.data.max())
    return zone.alpha * (zone.d_min - d_l) / _guard_denom(d_l) + zone.beta * (
        zone.d_max - d_u
    ) / _guard_denom(d_u)


def _guard_denom(x: float) -> float:
    return math.copysign(max(abs(x), _GUARD), x) if x != 0.0 else _GUARD


def perceptual_alternation_feature(
    pair: StereoPair, d: DisparityMap
) -> tuple[float, float, float]:
    """Boundary-area mean disparities and the left/right energy ratio.

    The first/last column's mean disparity sets each boundary width
    (rounded, clamped to [1, width/4]); the feature averages disparity over
    those strips. Energy is the population variance of gray values per view;
    both energies are floored at 1e-6 so two flat views give a ratio of 1.
    """
    if pair.width < 4:
        raise ValueError(f"image width {pair.width} too small (min 4)")
    if (d.height, d.width) != (pair.height, pair.width):
        raise ValueError(
            f"disparity grid {d.width}x{d.height} does not match views "
            f"{pair.width}x{pair.height}"
        )
    dd = d.data
    m = dd.shape[1]
    b_l = float(dd[:, 0].mean())
    b_r = float(dd[:, -1].mean())
    w_l = _boundary_width(b_l, m)
    w_r = _boundary_width(b_r, m)
    a_l = float(dd[:, :w_l].mean())
    a_r = float(dd[:, m - w_r :].mean())

    e_l = float(pair.left.pixels.var())
    e_r = float(pair.right.pixels.var())
    r_e = max(e_l, _GUARD) / max(e_r, _GUARD)
    return (a_l, a_r, r_e)


def _boundary_width(b: float, m: int) -> int:
    return int(min(max(round(abs(b)), 1), m // 4))


def jndd_rank(patch: np.ndarray, mode: str = "center_graded") -> np.ndarray:
    """Perceived-depth ranks of a 3x3 disparity patch.

    The center pixel's |d| picks a bin (1..4) whose threshold is the smallest
    noticeable disparity step; each neighbor's rank offsets the center bin by
    the number of whole steps it differs from the center. mode
    "independent_bins" instead bins every pixel by its own |d|.
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (3, 3):
        raise ValueError(f"expected a 3x3 patch, got {p.shape}")
    if mode == "independent_bins":
        return _bin_of(np.abs(p))
    if mode != "center_graded":
        raise ValueError(f"unknown ranking mode: {mode!r}")
    center = p[1, 1]
    center_bin = int(_bin_of(abs(center)))
    t = JNDD_THRESHOLDS[center_bin - 1]
    ranks = center_bin + np.floor((p - center) / t).astype(np.int64)
    ranks[1, 1] = center_bin
    return ranks


def _bin_of(abs_d):
    """Bin index 1..4 for |d| clamped to [0, 255]."""
    clamped = np.minimum(abs_d, 255.0)
    return np.digitize(clamped, JNDD_BIN_EDGES) + 1


def patch_gradients(patch: np.ndarray) -> tuple[float, float, float]:
    """Horizontal, vertical and diagonal gradient magnitudes of a 3x3 patch.

    Horizontal/vertical are the RMS of the six adjacent differences; the
    diagonal term is the sum of the two four-difference RMS terms (main and
    anti-diagonal).
    """
    p = np.asarray(patch, dtype=np.float64)
    if p.shape != (3, 3):
        raise ValueError(f"expected a 3x3 patch, got {p.shape}")
    dh = p[:, 1:] - p[:, :-1]
    dv = p[1:, :] - p[:-1, :]
    g_h = math.sqrt(float(np.sum(dh * dh)) / 6.0)
    g_v = math.sqrt(float(np.sum(dv * dv)) / 6.0)
    d_main = p[1:, 1:] - p[:-1, :-1]
    d_anti = p[:-1, 1:] - p[1:, :-1]
    g_d = math.sqrt(float(np.sum(d_main * d_main)) / 4.0) + math.sqrt(
        float(np.sum(d_anti * d_anti)) / 4.0
    )
    return (g_h, g_v, g_d)


def disparity_intensity_feature(
    d: DisparityMap,
    w: float,
    tiling: str = "non_overlapping",
    rank_mode: str = "center_graded",
    normalize_for_ranking: bool = False,
) -> tuple[float, float]:
    """Weighted mean/variance of per-patch gradient magnitudes, two branches.

    Branch one ranks each 3x3 patch by just-noticeable depth steps before
    taking gradients; branch two uses raw disparities. The blend weight w
    applies to the ranked branch. tiling "sliding" evaluates every interior
    position instead of a disjoint partition. normalize_for_ranking rescales
    |d| so its maximum hits 255 before binning (raw branch unaffected).
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"branch weight must be in [0, 1], got {w}")
    dd = d.data
    h, wd = dd.shape
    if h < 3 or wd < 3:
        raise ValueError(f"disparity map {h}x{wd} too small for 3x3 patches")

    rank_src = dd
    if normalize_for_ranking:
        peak = float(np.max(np.abs(dd)))
        if peak > 0:
            rank_src = dd * (255.0 / peak)

    g_rank = []
    g_non = []
    for i, j in _tile_origins(h, wd, tiling):
        raw = dd[i : i + 3, j : j + 3]
        ranks = jndd_rank(rank_src[i : i + 3, j : j + 3], mode=rank_mode)
        gh, gv, gd = patch_gradients(ranks)
        g_rank.append(math.sqrt(gh * gh + gv * gv + gd * gd))
        gh, gv, gd = patch_gradients(raw)
        g_non.append(math.sqrt(gh * gh + gv * gv + gd * gd))

    g_rank = np.asarray(g_rank)
    g_non = np.asarray(g_non)
    m = w * float(g_rank.mean()) + (1.0 - w) * float(g_non.mean())
    v = w * float(g_rank.var()) + (1.0 - w) * float(g_non.var())
    return (m, v)


def _tile_origins(h: int, w: int, tiling: str):
    if tiling == "non_overlapping":
        for i in range(0, h - h % 3, 3):
            for j in range(0, w - w % 3, 3):
                yield i, j
    elif tiling == "sliding":
        for i in range(h - 2):
            for j in range(w - 2):
                yield i, j
    else:
        raise ValueError(f"unknown tiling mode: {tiling!r}")


def binocular_features(
    pair: StereoPair,
    d: DisparityMap,
    zone: ComfortZone | None = None,
    w: float = 0.5,
    **did_kwargs,
) -> BinocularFeatures:
    """Assemble all six binocular incongruity scalars."""
    zone = zone or ComfortZone()
    return BinocularFeatures(
        f_dr=disparity_range_feature(d, zone),
        f_pa=perceptual_alternation_feature(pair, d),
        f_did=disparity_intensity_feature(d, w, **did_kwargs),
    )
