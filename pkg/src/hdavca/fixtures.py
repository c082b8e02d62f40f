"""Deterministic synthetic stereo scenes and simple retargeting operators.

The full pipeline is testable without any external dataset: scenes render
textured rectangles (with per-object disparity) over a textured background,
and crop/scale operators model the two uniform retargeting styles.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np

from .fmap import write_fmap
from .image import GrayImage, StereoPair, resample_bilinear, resize_bilinear, save_pgm
from .manifest import ManifestEntry, save_manifest


@dataclass(frozen=True)
class SceneObject:
    x: int
    y: int
    w: int
    h: int
    disparity: int


@dataclass(frozen=True)
class SyntheticScene:
    name: str
    seed: int
    objects: tuple[SceneObject, ...]

    def with_zero_disparity(self) -> "SyntheticScene":
        return replace(
            self, objects=tuple(replace(o, disparity=0) for o in self.objects)
        )


def default_scenes() -> list[SyntheticScene]:
    return [
        SyntheticScene(
            "scene_a", 101,
            (SceneObject(60, 40, 70, 60, 12), SceneObject(190, 120, 80, 70, 30)),
        ),
        SyntheticScene(
            "scene_b", 202,
            (SceneObject(30, 90, 90, 80, 20), SceneObject(200, 30, 60, 50, -14)),
        ),
        SyntheticScene(
            "scene_c", 303,
            (SceneObject(120, 60, 100, 90, 8),),
        ),
        SyntheticScene(
            "scene_d", 404,
            (SceneObject(40, 30, 60, 60, 24), SceneObject(150, 130, 110, 70, 4)),
        ),
    ]


def _texture(rng, h: int, w: int, lo: float, hi: float) -> np.ndarray:
    """Band-limited noise: coarse structure for matching, fine grain for detail."""
    coarse = rng.uniform(lo, hi, size=(max(2, h // 8), max(2, w // 8)))
    base = resample_bilinear(coarse, w, h)
    grain = rng.normal(0.0, 5.0, size=(h, w))
    return np.clip(base + grain, 0.0, 255.0)


def synth_stereo_pair(scene: SyntheticScene, w: int = 320, h: int = 240) -> StereoPair:
    """Render left/right views; the right view shifts each object left by its
    disparity (positive disparity pops out of the screen)."""
    rng = np.random.default_rng(scene.seed)
    background = _texture(rng, h, w, 60.0, 190.0)
    left = background.copy()
    right = background.copy()
    for obj in scene.objects:
        tex = _texture(rng, obj.h, obj.w, 120.0, 250.0)
        ly, lx = obj.y, obj.x
        left[ly : ly + obj.h, lx : lx + obj.w] = tex
        rx = obj.x - obj.disparity
        src0 = max(0, -rx)
        src1 = obj.w - max(0, rx + obj.w - w)
        if src1 > src0:
            right[ly : ly + obj.h, rx + src0 : rx + src1] = tex[:, src0:src1]
    return StereoPair(GrayImage(left), GrayImage(right))


def scene_disparity_map(scene: SyntheticScene, w: int = 320, h: int = 240) -> np.ndarray:
    """Ground-truth left-referenced disparity: object boxes over a zero background."""
    d = np.zeros((h, w))
    for obj in scene.objects:
        d[obj.y : obj.y + obj.h, obj.x : obj.x + obj.w] = float(obj.disparity)
    return d


def crop_retarget(pair: StereoPair, ratio: float) -> StereoPair:
    """Symmetric removal of columns from both sides of both views."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"crop ratio must be in (0, 1], got {ratio}")
    w = pair.width
    new_w = int(round(ratio * w))
    if new_w < 1:
        raise ValueError(f"crop ratio {ratio} collapses the image")
    remove = w - new_w
    left_cut = remove // 2
    sl = slice(left_cut, left_cut + new_w)
    return StereoPair(
        GrayImage(pair.left.pixels[:, sl]), GrayImage(pair.right.pixels[:, sl])
    )


def scale_retarget(pair: StereoPair, ratio: float) -> StereoPair:
    """Bilinear horizontal rescale of both views; disparities compress by ratio."""
    if ratio <= 0.0:
        raise ValueError(f"scale ratio must be positive, got {ratio}")
    new_w = max(1, int(round(ratio * pair.width)))
    return StereoPair(
        resize_bilinear(pair.left, new_w, pair.height),
        resize_bilinear(pair.right, new_w, pair.height),
    )


def synth_feature_map(img: GrayImage, channels: int = 8, grid: int = 7) -> np.ndarray:
    """Deterministic stand-in feature map: per-channel gamma curves of the
    image pooled onto a coarse grid. Lets the semantic feature run without a
    network backend."""
    unit = img.pixels / 255.0
    chans = []
    for k in range(channels):
        powed = unit ** ((k + 1) / 4.0)
        chans.append(resample_bilinear(powed, grid, grid))
    return np.stack(chans).astype(np.float32)


def write_fixture_set(out_dir, width: int = 320, height: int = 240) -> str:
    """Write the self-test dataset: images, feature maps, manifest and config.

    Per scene: an identity entry (zero-disparity render, retargeted ==
    original), a 0.7 crop and a 0.7 horizontal scale. The bundled config
    shrinks the disparity search range to suit the small images. Returns the
    manifest path.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    mos_by_op = {"identity": 4.8, "crop": 2.8, "scale": 3.8}
    entries = []
    for idx, scene in enumerate(default_scenes()):
        flat = synth_stereo_pair(scene.with_zero_disparity(), width, height)
        deep = synth_stereo_pair(scene, width, height)
        variants = {
            "identity": (flat, flat),
            "crop": (deep, crop_retarget(deep, 0.7)),
            "scale": (deep, scale_retarget(deep, 0.7)),
        }
        for op, (orig, ret) in variants.items():
            stem = f"{scene.name}_{op}"
            paths = {}
            for tag, img in (
                ("orig_left", orig.left),
                ("orig_right", orig.right),
                ("ret_left", ret.left),
                ("ret_right", ret.right),
            ):
                p = os.path.join(out_dir, f"{stem}_{tag}.pgm")
                save_pgm(img, p)
                paths[tag] = p
            fm_orig = os.path.join(out_dir, f"{stem}_orig.fmap")
            write_fmap(fm_orig, synth_feature_map(orig.left))
            if op == "identity":
                fm_ret = fm_orig  # same file: identity retargeting
            else:
                fm_ret = os.path.join(out_dir, f"{stem}_ret.fmap")
                write_fmap(fm_ret, synth_feature_map(ret.left))
            entries.append(
                ManifestEntry(
                    id=stem,
                    content_id=scene.name,
                    retargeted_left=paths["ret_left"],
                    retargeted_right=paths["ret_right"],
                    original_left=paths["orig_left"],
                    original_right=paths["orig_right"],
                    featmap_original=fm_orig,
                    featmap_retargeted=fm_ret,
                    mos=round(mos_by_op[op] + 0.05 * idx, 4),
                )
            )
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(entries, manifest_path)

    from .config import RunConfig

    config = RunConfig(search_range=min(128, int(round(0.7 * width)) // 2 - 1))
    config.save(os.path.join(out_dir, "config.json"))
    return manifest_path
