"""Run configuration: every tunable of the pipeline in one serializable place."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .binocular import ComfortZone
from .keypoints import DetectorParams


@dataclass(frozen=True)
class RunConfig:
    mode: str = "FR"  # FR: full 72 dims; NR: disparity features + D-NSS only

    zone_d_min: float = -79.55
    zone_d_max: float = 79.55
    zone_alpha: float = 0.6
    zone_beta: float = 0.4

    did_weight: float = 0.5
    did_tiling: str = "non_overlapping"
    did_rank_mode: str = "center_graded"
    disparity_normalize: bool = False
    search_range: int = 128
    block_size: int = 9

    detector: DetectorParams = field(default_factory=DetectorParams)
    ssim_border_mode: str = "clamp"
    ssim_pooling: str = "map_mean"

    mscn_c: float = 1.0
    zca_patch_size: int = 8

    svr_c: float = 256.0
    svr_gamma: float = 1.0 / 72.0
    svr_epsilon: float = 0.1
    svr_grid_search: bool = False

    n_splits: int = 100
    train_frac: float = 0.8
    seed: int = 0
    group_by_content: bool = True
    logistic_fit: bool = False

    def __post_init__(self):
        if self.mode not in ("FR", "NR"):
            raise ValueError(f"mode must be FR or NR, got {self.mode!r}")
        if not 0.0 < self.train_frac < 1.0:
            raise ValueError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if self.n_splits < 1:
            raise ValueError(f"n_splits must be at least 1, got {self.n_splits}")
        self.zone()  # validates alpha/beta/d_min/d_max

    def zone(self) -> ComfortZone:
        return ComfortZone(
            d_min=self.zone_d_min,
            d_max=self.zone_d_max,
            alpha=self.zone_alpha,
            beta=self.zone_beta,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        det = data.pop("detector", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if det is not None:
            det_known = {f.name for f in dataclasses.fields(DetectorParams)}
            bad = set(det) - det_known
            if bad:
                raise ValueError(f"unknown detector keys: {sorted(bad)}")
            data["detector"] = DetectorParams(**det)
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(str(path), "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
