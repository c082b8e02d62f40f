"""Semantic-distortion feature: correlation distance between channel-mean
vectors of deep feature maps of the original and retargeted left views.

Feature maps arrive as FMAP files produced by an external exporter, keeping
this package free of any deep-learning runtime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fmap import read_fmap, write_fmap  # noqa: F401  (write re-exported for tools)


@dataclass(frozen=True)
class FeatureMapTensor:
    """Channel-major activation tensor (channels, height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be 3-D (C, H, W), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("empty feature map")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]


def read_feature_map(path) -> FeatureMapTensor:
    return FeatureMapTensor(read_fmap(path))


def channel_means(t: FeatureMapTensor) -> np.ndarray:
    """Mean over the spatial grid per channel."""
    return t.data.mean(axis=(1, 2))


def correlation_distance(a: np.ndarray, b: np.ndarray) -> float:
    """One minus the Pearson correlation of the two vectors.

    Either vector being constant carries no correlation signal; that case
    returns 1 by convention.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.size < 2:
        raise ValueError("need at least 2 entries for a correlation distance")
    da = a - a.mean()
    db = b - b.mean()
    na = np.sqrt(np.sum(da * da))
    nb = np.sqrt(np.sum(db * db))
    if na == 0.0 or nb == 0.0:
        return 1.0
    return float(1.0 - np.sum(da * db) / (na * nb))


def semantic_feature(orig_map: FeatureMapTensor, ret_map: FeatureMapTensor) -> float:
    """Correlation distance of channel means; spatial sizes need not match."""
    if orig_map.channels != ret_map.channels:
        raise ValueError(
            f"channel mismatch: {orig_map.channels} vs {ret_map.channels}"
        )
    return correlation_distance(channel_means(orig_map), channel_means(ret_map))
