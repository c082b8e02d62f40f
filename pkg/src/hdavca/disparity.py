"""Per-pixel horizontal disparity maps: block-matching estimation and file IO.

Sign convention: d > 0 means the scene point sits to the LEFT in the right
view relative to the left view (crossed / pop-out depth). A left pixel (i, j)
is compared against right-view pixels (i, j - d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fmap import read_fmap, write_fmap
from .image import StereoPair


@dataclass(frozen=True)
class DisparityMap:
    """Signed horizontal disparity in pixels, same grid as the source views."""

    data: np.ndarray
    search_range: float

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"disparity map must be non-empty 2-D, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("disparity map contains non-finite values")
        if np.max(np.abs(arr), initial=0.0) > self.search_range:
            raise ValueError("disparity exceeds declared search range")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def estimate_disparity(
    pair: StereoPair, search_range: int = 128, block: int = 9
) -> DisparityMap:
    """Left-referenced SAD block matching, winner-take-all.

    Shifts are scanned in order 0, -1, +1, -2, +2, ... and a new winner must
    be strictly better, so ties resolve to the smallest |d| and negative
    first. Pixels whose block leaves either image keep the nearest valid
    estimate (edge replication).
    """
    if pair.width <= 2 * search_range:
        raise ValueError(
            f"image width {pair.width} must exceed twice the search range {search_range}"
        )
    half = block // 2
    left = pair.left.pixels
    right = pair.right.pixels
    h, w = left.shape
    ih, iw = h - 2 * half, w - 2 * half
    if ih < 1 or iw < 1:
        raise ValueError(f"views {w}x{h} smaller than the matching block {block}x{block}")

    best_cost = np.full((ih, iw), np.inf)
    best_d = np.zeros((ih, iw))
    for d in _shift_order(search_range):
        # Valid block-center columns j: both the left block around j and the
        # right block around j-d must stay inside the images.
        lo = max(half, half + d)
        hi = min(w - half, w - half + d)
        if hi - lo < 1:
            continue
        a, b = lo - half, hi + half
        diff = np.abs(left[:, a:b] - right[:, a - d : b - d])
        sad = _box_sum_valid(diff, block)
        cols = slice(lo - half, hi - half)
        sub_cost = best_cost[:, cols]
        sub_d = best_d[:, cols]
        better = sad < sub_cost
        sub_cost[better] = sad[better]
        sub_d[better] = d

    full = np.pad(best_d, half, mode="edge")
    return DisparityMap(full, search_range=float(search_range))


def _box_sum_valid(x: np.ndarray, k: int) -> np.ndarray:
    """Sum over every k-by-k window fully inside x (integral-image trick)."""
    c = np.cumsum(np.cumsum(x, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def _shift_order(search_range: int):
    yield 0
    for mag in range(1, search_range + 1):
        yield -mag
        yield mag


def load_disparity(path, expected_w: int, expected_h: int) -> DisparityMap:
    """Read a disparity map stored as an FMAP with dims (1, H, W)."""
    data = read_fmap(path)
    if data.shape[0] != 1:
        raise ValueError(f"dim mismatch: disparity FMAP needs C=1, got {data.shape}")
    if data.shape[1] != expected_h or data.shape[2] != expected_w:
        raise ValueError(
            f"dim mismatch: expected {expected_h}x{expected_w}, "
            f"got {data.shape[1]}x{data.shape[2]}"
        )
    arr = data[0].astype(np.float64)
    max_abs = float(np.max(np.abs(arr), initial=0.0))
    return DisparityMap(arr, search_range=max(max_abs, 0.0))


def save_disparity(d: DisparityMap, path) -> None:
    write_fmap(path, d.data[None, :, :].astype(np.float32))
