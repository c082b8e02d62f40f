"""Scale-invariant keypoint detection, description and matching.

Pairs corresponding local regions between two luminance images: a
difference-of-Gaussians pyramid yields contrast- and edge-filtered extrema,
each assigned a canonical orientation and a 4x4x8 gradient-histogram
descriptor (L2-normalized with 0.2 clamping). Matching uses the nearest /
second-nearest descriptor-distance ratio test with one-to-one enforcement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .image import GrayImage, require_feature_size, resample_bilinear


@dataclass(frozen=True)
class DetectorParams:
    """Detector and descriptor tunables (defaults follow Lowe's published values)."""

    n_octave_layers: int = 3
    sigma: float = 1.6
    assumed_blur: float = 0.5
    contrast_threshold: float = 0.03  # on DoG of a [0,1]-normalized image
    edge_ratio: float = 10.0
    border: int = 5
    max_keypoints: int = 2000  # strongest-response cap; 0 disables
    orientation_bins: int = 36
    peak_ratio: float = 0.8
    descriptor_width: int = 4
    descriptor_bins: int = 8
    descriptor_scale: float = 3.0
    descriptor_clamp: float = 0.2
    ratio_test: float = 0.8


@dataclass(frozen=True)
class Keypoint:
    """Sub-pixel interest point with unit-norm descriptor."""

    x: float
    y: float
    scale: float
    orientation: float
    response: float
    descriptor: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class MatchPair:
    retargeted_pt: Keypoint
    original_pt: Keypoint
    distance: float


def detect_and_describe(img: GrayImage, params: DetectorParams | None = None) -> list[Keypoint]:
    """Detect keypoints and compute descriptors on a luminance image."""
    params = params or DetectorParams()
    require_feature_size(img)

    base = _base_image(img.pixels, params)
    gauss_pyr = _gaussian_pyramid(base, params)
    dog_pyr = [np.diff(octave, axis=0) for octave in gauss_pyr]

    raw = []
    seen = set()
    for octave_idx, dog in enumerate(dog_pyr):
        for cand in _localize_octave(dog, octave_idx, params):
            key = cand[:4]  # distinct cells can converge to one extremum
            if key not in seen:
                seen.add(key)
                raw.append(cand)

    if params.max_keypoints and len(raw) > params.max_keypoints:
        raw.sort(key=lambda c: (-c[6], c[0], c[1], c[2], c[3]))
        raw = raw[: params.max_keypoints]

    keypoints: list[Keypoint] = []
    for cand in raw:
        keypoints.extend(_orient_and_describe(cand, gauss_pyr, params))
    keypoints.sort(key=lambda k: (k.y, k.x, k.scale, k.orientation))
    return keypoints


def match_keypoints(
    src: list[Keypoint], dst: list[Keypoint], ratio: float = 0.8
) -> list[MatchPair]:
    """Ratio-test matching from src to dst, one-to-one on dst.

    A src point is matched to its nearest dst descriptor iff
    nearest < ratio * second_nearest; when several src points claim the same
    dst point only the lowest-distance claim survives.
    """
    if not src or not dst:
        return []
    dst_desc = np.stack([k.descriptor for k in dst])
    best_for_dst: dict[int, tuple[float, int]] = {}
    for si, kp in enumerate(src):
        d2 = np.sum((dst_desc - kp.descriptor) ** 2, axis=1)
        order = np.argsort(d2, kind="stable")
        nearest = int(order[0])
        d1 = float(np.sqrt(d2[nearest]))
        d2nd = float(np.sqrt(d2[order[1]])) if len(order) > 1 else np.inf
        if d1 < ratio * d2nd:
            prev = best_for_dst.get(nearest)
            if prev is None or d1 < prev[0]:
                best_for_dst[nearest] = (d1, si)
    matches = [
        MatchPair(retargeted_pt=src[si], original_pt=dst[di], distance=dist)
        for di, (dist, si) in best_for_dst.items()
    ]
    matches.sort(key=lambda m: (m.retargeted_pt.y, m.retargeted_pt.x, m.distance))
    return matches


# ---------------------------------------------------------------------------
# pyramid construction


def _base_image(pixels: np.ndarray, params: DetectorParams) -> np.ndarray:
    norm = pixels.astype(np.float64) / 255.0
    doubled = resample_bilinear(norm, norm.shape[1] * 2, norm.shape[0] * 2)
    # Doubling halves the effective blur of the camera image.
    sig_diff = np.sqrt(max(params.sigma**2 - (2.0 * params.assumed_blur) ** 2, 0.01))
    return ndimage.gaussian_filter(doubled.astype(np.float32), sig_diff)


def _gaussian_pyramid(base: np.ndarray, params: DetectorParams) -> list[np.ndarray]:
    n_layers = params.n_octave_layers
    k = 2.0 ** (1.0 / n_layers)
    sig = np.zeros(n_layers + 3)
    sig[0] = params.sigma
    for i in range(1, n_layers + 3):
        prev = params.sigma * k ** (i - 1)
        sig[i] = np.sqrt((k * prev) ** 2 - prev**2)

    n_octaves = max(1, int(np.round(np.log2(min(base.shape)))) - 1)
    pyr = []
    img = base
    for _ in range(n_octaves):
        layers = [img]
        for i in range(1, n_layers + 3):
            layers.append(ndimage.gaussian_filter(layers[-1], sig[i]))
        pyr.append(np.stack(layers))
        next_base = layers[n_layers][::2, ::2]
        if min(next_base.shape) < 8:
            break
        img = next_base
    return pyr


# ---------------------------------------------------------------------------
# extremum detection and sub-pixel localization

_CUBE = np.stack(np.meshgrid(np.arange(-1, 2), np.arange(-1, 2), np.arange(-1, 2),
                             indexing="ij"), axis=-1).reshape(-1, 3)


def _localize_octave(dog: np.ndarray, octave_idx: int, params: DetectorParams):
    """Find, refine and filter extrema in one octave's DoG stack.

    Returns tuples (octave, layer, y, x, off_layer, off_y, off_x, response)
    where y/x are integer grid positions and offsets are the sub-pixel part.
    """
    n_layers = params.n_octave_layers
    border = params.border
    _, h, w = dog.shape
    if h < 2 * border + 3 or w < 2 * border + 3:
        return []

    prefilter = 0.5 * params.contrast_threshold / n_layers
    maxf = ndimage.maximum_filter(dog, size=(3, 3, 3), mode="constant", cval=-np.inf)
    minf = ndimage.minimum_filter(dog, size=(3, 3, 3), mode="constant", cval=np.inf)
    is_ext = ((dog >= maxf) | (dog <= minf)) & (np.abs(dog) > prefilter)
    is_ext[: 1] = False
    is_ext[n_layers + 1 :] = False
    is_ext[:, :border, :] = False
    is_ext[:, h - border :, :] = False
    is_ext[:, :, :border] = False
    is_ext[:, :, w - border :] = False
    ss, ii, jj = np.nonzero(is_ext)
    if ss.size == 0:
        return []

    pos = np.stack([ss, ii, jj], axis=1).astype(np.int64)
    dogf = dog.astype(np.float64)
    alive = np.ones(len(pos), dtype=bool)
    offsets = np.zeros((len(pos), 3))
    converged = np.zeros(len(pos), dtype=bool)

    for _ in range(5):
        act = alive & ~converged
        if not act.any():
            break
        p = pos[act]
        cube = dogf[
            p[:, 0, None] + _CUBE[None, :, 0],
            p[:, 1, None] + _CUBE[None, :, 1],
            p[:, 2, None] + _CUBE[None, :, 2],
        ].reshape(-1, 3, 3, 3)
        grad, hess = _grad_hess(cube)
        det = np.linalg.det(hess)
        ok = np.abs(det) > 1e-30
        upd = np.zeros_like(grad)
        if ok.any():
            upd[ok] = -np.linalg.solve(hess[ok], grad[ok][..., None])[..., 0]
        idx = np.nonzero(act)[0]
        alive[idx[~ok]] = False

        small = np.all(np.abs(upd) < 0.5, axis=1) & ok
        conv_idx = idx[small]
        converged[conv_idx] = True
        offsets[conv_idx] = upd[small]

        move = ok & ~small
        if move.any():
            midx = idx[move]
            pos[midx] += np.rint(upd[move]).astype(np.int64)
            s2, i2, j2 = pos[midx, 0], pos[midx, 1], pos[midx, 2]
            in_bounds = (
                (s2 >= 1) & (s2 <= n_layers)
                & (i2 >= border) & (i2 < h - border)
                & (j2 >= border) & (j2 < w - border)
            )
            alive[midx[~in_bounds]] = False
    alive &= converged
    if not alive.any():
        return []

    p = pos[alive]
    off = offsets[alive]
    cube = dogf[
        p[:, 0, None] + _CUBE[None, :, 0],
        p[:, 1, None] + _CUBE[None, :, 1],
        p[:, 2, None] + _CUBE[None, :, 2],
    ].reshape(-1, 3, 3, 3)
    grad, hess = _grad_hess(cube)
    value = cube[:, 1, 1, 1] + 0.5 * np.einsum("nk,nk->n", grad, off)

    keep = np.abs(value) * n_layers >= params.contrast_threshold
    # Edge response: ratio of principal curvatures of the spatial Hessian.
    hxx, hyy, hxy = hess[:, 1, 1], hess[:, 2, 2], hess[:, 1, 2]
    tr = hxx + hyy
    det2 = hxx * hyy - hxy * hxy
    r = params.edge_ratio
    keep &= (det2 > 0) & (tr * tr * r < (r + 1) ** 2 * det2)

    out = []
    for n in np.nonzero(keep)[0]:
        s, i, j = int(p[n, 0]), int(p[n, 1]), int(p[n, 2])
        out.append(
            (octave_idx, s, i, j, float(off[n, 0]), float(off[n, 1]), float(off[n, 2]),
             float(np.abs(value[n])))
        )
    return out


def _grad_hess(cube: np.ndarray):
    """Central-difference gradient and Hessian at the cube center, axes (s, y, x)."""
    ds = 0.5 * (cube[:, 2, 1, 1] - cube[:, 0, 1, 1])
    dy = 0.5 * (cube[:, 1, 2, 1] - cube[:, 1, 0, 1])
    dx = 0.5 * (cube[:, 1, 1, 2] - cube[:, 1, 1, 0])
    c = cube[:, 1, 1, 1]
    dss = cube[:, 2, 1, 1] - 2 * c + cube[:, 0, 1, 1]
    dyy = cube[:, 1, 2, 1] - 2 * c + cube[:, 1, 0, 1]
    dxx = cube[:, 1, 1, 2] - 2 * c + cube[:, 1, 1, 0]
    dsy = 0.25 * (cube[:, 2, 2, 1] - cube[:, 2, 0, 1] - cube[:, 0, 2, 1] + cube[:, 0, 0, 1])
    dsx = 0.25 * (cube[:, 2, 1, 2] - cube[:, 2, 1, 0] - cube[:, 0, 1, 2] + cube[:, 0, 1, 0])
    dyx = 0.25 * (cube[:, 1, 2, 2] - cube[:, 1, 2, 0] - cube[:, 1, 0, 2] + cube[:, 1, 0, 0])
    grad = np.stack([ds, dy, dx], axis=1)
    hess = np.empty((len(cube), 3, 3))
    hess[:, 0, 0] = dss
    hess[:, 1, 1] = dyy
    hess[:, 2, 2] = dxx
    hess[:, 0, 1] = hess[:, 1, 0] = dsy
    hess[:, 0, 2] = hess[:, 2, 0] = dsx
    hess[:, 1, 2] = hess[:, 2, 1] = dyx
    return grad, hess


# ---------------------------------------------------------------------------
# orientation assignment and descriptors


def _orient_and_describe(cand, gauss_pyr, params: DetectorParams) -> list[Keypoint]:
    octave, layer, i, j, off_s, off_y, off_x, response = cand
    n_layers = params.n_octave_layers
    img = gauss_pyr[octave][layer].astype(np.float64)
    h, w = img.shape

    # Blur of the refined layer, in octave-local pixels.
    scale_oct = params.sigma * 2.0 ** ((layer + off_s) / n_layers)
    yc, xc = i + off_y, j + off_x

    hist = _orientation_histogram(img, yc, xc, scale_oct, params)
    if hist is None:
        return []
    smooth = hist
    for _ in range(2):
        smooth = (
            6 * smooth
            + 4 * (np.roll(smooth, 1) + np.roll(smooth, -1))
            + np.roll(smooth, 2) + np.roll(smooth, -2)
        ) / 16.0
    peak = smooth.max()
    if peak <= 0:
        return []

    nb = params.orientation_bins
    out = []
    for b in range(nb):
        left, mid, right = smooth[b - 1], smooth[b], smooth[(b + 1) % nb]
        if mid > left and mid > right and mid >= params.peak_ratio * peak:
            interp = b + 0.5 * (left - right) / (left - 2 * mid + right)
            angle = (interp % nb) * (2.0 * np.pi / nb)
            desc = _descriptor(img, yc, xc, scale_oct, angle, params)
            if desc is None:
                continue
            # Map back to original-image coordinates (pyramid base was 2x upsampled).
            factor = 2.0**octave / 2.0
            out.append(
                Keypoint(
                    x=float(xc * factor),
                    y=float(yc * factor),
                    scale=float(scale_oct * factor),
                    orientation=float(angle),
                    response=float(response),
                    descriptor=desc,
                )
            )
    return out


def _orientation_histogram(img, yc, xc, scale_oct, params: DetectorParams):
    h, w = img.shape
    sigma_w = 1.5 * scale_oct
    radius = int(round(3.0 * sigma_w))
    r0 = int(round(yc))
    c0 = int(round(xc))
    ys = np.arange(max(r0 - radius, 1), min(r0 + radius, h - 2) + 1)
    xs = np.arange(max(c0 - radius, 1), min(c0 + radius, w - 2) + 1)
    if ys.size == 0 or xs.size == 0:
        return None
    region = img[ys[0] - 1 : ys[-1] + 2, xs[0] - 1 : xs[-1] + 2]
    dx = 0.5 * (region[1:-1, 2:] - region[1:-1, :-2])
    dy = 0.5 * (region[:-2, 1:-1] - region[2:, 1:-1])
    mag = np.hypot(dx, dy)
    ang = np.arctan2(dy, dx) % (2.0 * np.pi)
    gy, gx = np.meshgrid(ys - r0, xs - c0, indexing="ij")
    weight = np.exp(-(gy**2 + gx**2) / (2.0 * sigma_w**2))

    nb = params.orientation_bins
    bins = np.floor(ang * nb / (2.0 * np.pi)).astype(np.int64) % nb
    return np.bincount(bins.ravel(), weights=(mag * weight).ravel(), minlength=nb)


def _descriptor(img, yc, xc, scale_oct, angle, params: DetectorParams):
    h, w = img.shape
    d = params.descriptor_width
    nb = params.descriptor_bins
    hist_width = params.descriptor_scale * scale_oct
    radius = int(round(hist_width * np.sqrt(2) * (d + 1) * 0.5))
    radius = min(radius, int(np.sqrt(h * h + w * w)))
    r0, c0 = int(round(yc)), int(round(xc))

    rows = np.arange(max(r0 - radius, 1), min(r0 + radius, h - 2) + 1)
    cols = np.arange(max(c0 - radius, 1), min(c0 + radius, w - 2) + 1)
    if rows.size == 0 or cols.size == 0:
        return None
    region = img[rows[0] - 1 : rows[-1] + 2, cols[0] - 1 : cols[-1] + 2]
    dx = 0.5 * (region[1:-1, 2:] - region[1:-1, :-2])
    dy = 0.5 * (region[:-2, 1:-1] - region[2:, 1:-1])
    mag = np.hypot(dx, dy).ravel()
    theta = (np.arctan2(dy, dx) % (2.0 * np.pi)).ravel()

    gy, gx = np.meshgrid(rows - yc, cols - xc, indexing="ij")
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    # Rotate into the keypoint frame.
    row_rot = (-sin_a * gx + cos_a * gy).ravel() / hist_width
    col_rot = (cos_a * gx + sin_a * gy).ravel() / hist_width
    rbin = row_rot + 0.5 * d - 0.5
    cbin = col_rot + 0.5 * d - 0.5
    inside = (rbin > -1) & (rbin < d) & (cbin > -1) & (cbin < d)
    if not inside.any():
        return None
    rbin, cbin = rbin[inside], cbin[inside]
    mag = mag[inside]
    obin = ((theta[inside] - angle) % (2.0 * np.pi)) * nb / (2.0 * np.pi)
    weight = np.exp(-(row_rot[inside] ** 2 + col_rot[inside] ** 2) / (2 * (0.5 * d) ** 2))
    vals = mag * weight

    hist = np.zeros((d + 2, d + 2, nb))
    r0f = np.floor(rbin).astype(np.int64)
    c0f = np.floor(cbin).astype(np.int64)
    o0f = np.floor(obin).astype(np.int64)
    fr, fc, fo = rbin - r0f, cbin - c0f, obin - o0f
    o0f %= nb
    for dr in (0, 1):
        wr = vals * (fr if dr else 1 - fr)
        for dc in (0, 1):
            wc = wr * (fc if dc else 1 - fc)
            for do in (0, 1):
                wo = wc * (fo if do else 1 - fo)
                np.add.at(
                    hist,
                    (r0f + 1 + dr, c0f + 1 + dc, (o0f + do) % nb),
                    wo,
                )
    vec = hist[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec = np.minimum(vec, params.descriptor_clamp * norm)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec = vec / norm
    vec.setflags(write=False)
    return vec


def keypoints_to_jsonable(kps: list[Keypoint]) -> list[dict]:
    """Plain-dict view for the --dump-keypoints debug output."""
    return [
        {
            "x": kp.x,
            "y": kp.y,
            "scale": kp.scale,
            "orientation": kp.orientation,
            "response": kp.response,
        }
        for kp in kps
    ]
