"""Canonical 72-dim feature layout, per-entry extraction, and the CSV table.

Layout (frozen; model files and CSVs depend on it):
  [local_ssim(1) | dnss(64) | dr(1) | pa(3) | did(2) | sd(1)]
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import binocular, dnss, local_ssim, semantic
from .config import RunConfig
from .disparity import estimate_disparity, load_disparity
from .image import StereoPair, load_image
from .manifest import ManifestEntry

FAMILY_SIZES = {
    "local_ssim": 1,
    "dnss": 64,
    "dr": 1,
    "pa": 3,
    "did": 2,
    "sd": 1,
}
FAMILY_ORDER = tuple(FAMILY_SIZES)
N_FEATURES = sum(FAMILY_SIZES.values())

# Disparity-derived families ("DF" in reports).
DF_FAMILIES = ("dr", "pa", "did")

NR_FAMILIES = ("dnss",) + DF_FAMILIES
FR_FAMILIES = FAMILY_ORDER

CSV_VERSION = "hdavca-features-v1"


def family_slices() -> dict[str, slice]:
    out = {}
    start = 0
    for name, size in FAMILY_SIZES.items():
        out[name] = slice(start, start + size)
        start += size
    return out


_SLICES = None


def _slices() -> dict[str, slice]:
    global _SLICES
    if _SLICES is None:
        _SLICES = family_slices()
    return _SLICES


def feature_names() -> list[str]:
    names = ["local_ssim"]
    names.extend(dnss.dnss_names())
    names.append("dr")
    names.extend(["pa_al", "pa_ar", "pa_re"])
    names.extend(["did_m", "did_v"])
    names.append("sd")
    assert len(names) == N_FEATURES
    return names


def build_mask(families) -> np.ndarray:
    mask = np.zeros(N_FEATURES, dtype=bool)
    for fam in families:
        if fam not in FAMILY_SIZES:
            raise ValueError(f"unknown feature family: {fam!r}")
        mask[_slices()[fam]] = True
    return mask


def mask_families(mask: np.ndarray) -> tuple[str, ...]:
    """Families fully active in a mask (partial activation is rejected)."""
    mask = np.asarray(mask, dtype=bool)
    fams = []
    for name, sl in _slices().items():
        part = mask[sl]
        if part.all():
            fams.append(name)
        elif part.any():
            raise ValueError(f"mask partially covers family {name!r}")
    return tuple(fams)


# Ablation masks: the four leave-one-measurement-out combinations, the full
# set, and the no-reference combination.
ABLATION_MASKS = {
    "local_ssim+dnss+sd": ("local_ssim", "dnss", "sd"),
    "df+local_ssim+sd": DF_FAMILIES + ("local_ssim", "sd"),
    "df+local_ssim+dnss": DF_FAMILIES + ("local_ssim", "dnss"),
    "df+dnss+sd": DF_FAMILIES + ("dnss", "sd"),
    "all": FR_FAMILIES,
    "df+dnss": NR_FAMILIES,
}


@dataclass(frozen=True)
class ExtractionResult:
    entry_id: str
    content_id: str
    mos: float | None
    vector: np.ndarray
    mask: np.ndarray
    n_matches: int


def active_families(config: RunConfig) -> tuple[str, ...]:
    return FR_FAMILIES if config.mode == "FR" else NR_FAMILIES


def extract_entry(entry: ManifestEntry, config: RunConfig) -> ExtractionResult:
    """Compute the feature vector for one manifest entry.

    NR mode needs only the retargeted pair; FR mode additionally needs the
    original left view (structural feature) and both feature-map files
    (semantic feature). Inactive families stay exactly zero.
    """
    families = active_families(config)
    mask = build_mask(families)
    vec = np.zeros(N_FEATURES, dtype=np.float64)
    sl = _slices()

    ret_left = load_image(entry.retargeted_left)
    ret_right = load_image(entry.retargeted_right)
    pair = StereoPair(ret_left, ret_right)

    vec[sl["dnss"]] = dnss.dnss_feature(
        pair, zca_patch_size=config.zca_patch_size, mscn_c=config.mscn_c
    ).values

    if entry.disparity:
        disp = load_disparity(entry.disparity, expected_w=pair.width, expected_h=pair.height)
    else:
        disp = estimate_disparity(pair, search_range=config.search_range, block=config.block_size)
    bino = binocular.binocular_features(
        pair,
        disp,
        zone=config.zone(),
        w=config.did_weight,
        tiling=config.did_tiling,
        rank_mode=config.did_rank_mode,
        normalize_for_ranking=config.disparity_normalize,
    )
    vec[sl["dr"]] = bino.f_dr
    vec[sl["pa"]] = bino.f_pa
    vec[sl["did"]] = bino.f_did

    n_matches = 0
    if config.mode == "FR":
        if not entry.original_left:
            raise ValueError(f"entry {entry.id}: FR mode requires original_left")
        if not (entry.featmap_original and entry.featmap_retargeted):
            raise ValueError(f"entry {entry.id}: FR mode requires both feature-map files")
        orig_left = load_image(entry.original_left)
        ls = local_ssim.local_ssim_feature(
            orig_left,
            ret_left,
            detector=config.detector,
            border_mode=config.ssim_border_mode,
            pooling=config.ssim_pooling,
        )
        vec[sl["local_ssim"]] = ls.value
        n_matches = ls.n_matches
        vec[sl["sd"]] = semantic.semantic_feature(
            semantic.read_feature_map(entry.featmap_original),
            semantic.read_feature_map(entry.featmap_retargeted),
        )

    return ExtractionResult(
        entry_id=entry.id,
        content_id=entry.content_id,
        mos=entry.mos,
        vector=vec,
        mask=mask,
        n_matches=n_matches,
    )


# ---------------------------------------------------------------------------
# feature table CSV


def write_feature_csv(path, results: list[ExtractionResult], mask: np.ndarray) -> None:
    fams = ",".join(mask_families(mask))
    with open(str(path), "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {CSV_VERSION} mask={fams}\n")
        writer = csv.writer(fh)
        writer.writerow(["id", "content_id", "mos"] + feature_names())
        for r in results:
            mos = "" if r.mos is None else repr(float(r.mos))
            writer.writerow([r.entry_id, r.content_id, mos] + [repr(float(v)) for v in r.vector])


@dataclass(frozen=True)
class FeatureTable:
    ids: list[str]
    content_ids: list[str]
    mos: np.ndarray  # nan where absent
    x: np.ndarray  # (n, 72)
    mask: np.ndarray  # (72,) bool


def read_feature_csv(path) -> FeatureTable:
    with open(str(path), "r", encoding="utf-8", newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# "):
            raise ValueError(f"feature csv version mismatch in {path}: missing version line")
        parts = first[2:].split()
        if not parts or parts[0] != CSV_VERSION:
            raise ValueError(f"feature csv version mismatch in {path}: {parts[:1]}")
        fams = ()
        for token in parts[1:]:
            if token.startswith("mask="):
                fams = tuple(f for f in token[5:].split(",") if f)
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["id", "content_id", "mos"] + feature_names()
        if header != expected:
            raise ValueError(f"feature csv column mismatch in {path}")
        ids, content_ids, mos, rows = [], [], [], []
        for row in reader:
            if len(row) != len(expected):
                raise ValueError(f"feature csv row width mismatch in {path}")
            ids.append(row[0])
            content_ids.append(row[1])
            mos.append(float(row[2]) if row[2] != "" else np.nan)
            rows.append([float(v) for v in row[3:]])
    if not rows:
        raise ValueError(f"feature csv {path} has no data rows")
    return FeatureTable(
        ids=ids,
        content_ids=content_ids,
        mos=np.array(mos, dtype=np.float64),
        x=np.array(rows, dtype=np.float64),
        mask=build_mask(fams),
    )
