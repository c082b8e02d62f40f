"""Runs a pretrained VGG backbone and captures one convolutional layer's
activations for the semantic-distortion feature of the companion scorer.

Preprocessing is fixed and documented so exports stay comparable across runs:
the shorter image side is resized to 224 (aspect preserved, bilinear) and
channels are normalized with the standard ImageNet statistics. Inputs that
would warp the image (square crops/stretches) are deliberately avoided: the
images being scored are retargeted, and warping them again would contaminate
the very distortion the downstream feature measures.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from PIL import Image
from torchvision import models
from torchvision.transforms import functional as tf

from .fmap import write_fmap

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Index of each convolution inside torchvision's `features` stack.
CONV_LAYERS = {
    "vgg16": {
        "conv1_1": 0, "conv1_2": 2,
        "conv2_1": 5, "conv2_2": 7,
        "conv3_1": 10, "conv3_2": 12, "conv3_3": 14,
        "conv4_1": 17, "conv4_2": 19, "conv4_3": 21,
        "conv5_1": 24, "conv5_2": 26, "conv5_3": 28,
    },
    "vgg19": {
        "conv1_1": 0, "conv1_2": 2,
        "conv2_1": 5, "conv2_2": 7,
        "conv3_1": 10, "conv3_2": 12, "conv3_3": 14, "conv3_4": 16,
        "conv4_1": 19, "conv4_2": 21, "conv4_3": 23, "conv4_4": 25,
        "conv5_1": 28, "conv5_2": 30, "conv5_3": 32, "conv5_4": 34,
    },
}

_BUILDERS = {"vgg16": models.vgg16, "vgg19": models.vgg19}


@dataclass(frozen=True)
class PreprocessSpec:
    shorter_side: int = 224
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD


@dataclass(frozen=True)
class ExportJob:
    image_path: str
    output_path: str
    backbone: str = "vgg16"
    layer: str = "conv5_3"  # the 13th (last) convolution of vgg16
    weights: str = "auto"  # "auto": torchvision cache; otherwise a state-dict path
    preprocess: PreprocessSpec = field(default_factory=PreprocessSpec)


def load_backbone(backbone: str = "vgg16", weights: str = "auto") -> torch.nn.Module:
    """Build the backbone with pretrained weights from a local path or cache.

    Never downloads; a missing cache raises "missing weights" so batch runs
    fail fast instead of mid-flight.
    """
    if backbone not in _BUILDERS:
        raise ValueError(f"unsupported backbone: {backbone!r}")
    builder = _BUILDERS[backbone]
    if weights == "auto":
        try:
            with _no_download_guard():
                model = builder(weights="IMAGENET1K_V1")
        except Exception as exc:
            raise ValueError(
                f"missing weights for {backbone}: no cached pretrained weights "
                f"and downloads are disabled ({exc})"
            ) from exc
    else:
        if not os.path.exists(weights):
            raise ValueError(f"missing weights: {weights}")
        model = builder(weights=None)
        state = torch.load(weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def untrained_backbone(backbone: str = "vgg16", seed: int = 0) -> torch.nn.Module:
    """Deterministically initialized backbone WITHOUT pretrained weights.

    For format/pipeline plumbing tests only; activations carry no semantics.
    """
    if backbone not in _BUILDERS:
        raise ValueError(f"unsupported backbone: {backbone!r}")
    torch.manual_seed(seed)
    model = _BUILDERS[backbone](weights=None)
    model.eval()
    return model


class _no_download_guard:
    """Fail torchvision weight resolution instead of hitting the network."""

    def __enter__(self):
        import torch.hub

        self._orig = torch.hub.load_state_dict_from_url

        def refuse(*args, **kwargs):
            url = args[0] if args else kwargs.get("url", "?")
            cached = _cached_state_dict(url)
            if cached is not None:
                return cached
            raise FileNotFoundError(f"weights not cached and download disabled: {url}")

        torch.hub.load_state_dict_from_url = refuse
        return self

    def __exit__(self, *exc):
        import torch.hub

        torch.hub.load_state_dict_from_url = self._orig
        return False


def _cached_state_dict(url: str):
    import torch.hub

    filename = os.path.basename(url)
    cache = os.path.join(torch.hub.get_dir(), "checkpoints", filename)
    if os.path.exists(cache):
        return torch.load(cache, map_location="cpu", weights_only=True)
    return None


def preprocess_image(path: str, spec: PreprocessSpec) -> torch.Tensor:
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            rgb.load()
    except (OSError, SyntaxError) as exc:
        raise ValueError(f"unreadable image: {path}") from exc
    resized = tf.resize(rgb, spec.shorter_side, antialias=True)
    tensor = tf.to_tensor(resized)
    return tf.normalize(tensor, list(spec.mean), list(spec.std))


def capture_activations(model: torch.nn.Module, x: torch.Tensor, backbone: str, layer: str) -> np.ndarray:
    layers = CONV_LAYERS.get(backbone, {})
    if layer not in layers:
        raise ValueError(f"layer {layer!r} not in backbone {backbone!r}")
    stop = layers[layer] + 1
    with torch.no_grad():
        out = model.features[:stop](x.unsqueeze(0))
    return out.squeeze(0).numpy().astype(np.float32)


def export_feature_map(job: ExportJob, model: torch.nn.Module | None = None) -> str:
    """Export one image's activations to an FMAP file; returns the path."""
    if model is None:
        model = load_backbone(job.backbone, job.weights)
    x = preprocess_image(job.image_path, job.preprocess)
    activations = capture_activations(model, x, job.backbone, job.layer)
    write_fmap(job.output_path, activations)
    return job.output_path


# ---------------------------------------------------------------------------
# batch export over a dataset manifest


def export_batch(
    manifest_path: str,
    out_dir: str,
    backbone: str = "vgg16",
    layer: str = "conv5_3",
    weights: str = "auto",
    model: torch.nn.Module | None = None,
    patched_manifest_path: str | None = None,
):
    """Export original and retargeted left views for every manifest entry.

    Entries fail in isolation; the patched manifest (featmap paths filled in)
    contains only successful entries. Returns (patched_entries, failures).
    """
    with open(manifest_path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    if not isinstance(entries, list):
        raise ValueError(f"malformed manifest: {manifest_path}")
    os.makedirs(out_dir, exist_ok=True)
    if model is None:
        model = load_backbone(backbone, weights)

    patched, failures = [], []
    for entry in entries:
        entry_id = str(entry.get("id", "?"))
        try:
            updated = dict(entry)
            for key, field_name in (
                ("original_left", "featmap_original"),
                ("retargeted_left", "featmap_retargeted"),
            ):
                src = entry.get(key)
                if not src:
                    raise ValueError(f"entry {entry_id}: missing {key}")
                dst = os.path.join(out_dir, f"{entry_id}_{field_name}.fmap")
                export_feature_map(
                    ExportJob(image_path=src, output_path=dst, backbone=backbone, layer=layer),
                    model=model,
                )
                updated[field_name] = dst
            patched.append(updated)
        except (ValueError, OSError) as exc:
            failures.append(f"{entry_id}: {exc}")

    if patched_manifest_path:
        with open(patched_manifest_path, "w", encoding="utf-8") as fh:
            json.dump(patched, fh, indent=2, sort_keys=True)
    return patched, failures
