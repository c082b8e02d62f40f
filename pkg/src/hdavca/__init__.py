"""Visual-comfort assessment for stereoscopic retargeted image pairs.

Four feature families (local structural similarity, dual natural scene
statistics, binocular incongruity, semantic distortion) pooled by an
epsilon-SVR into a predicted comfort score, plus the evaluation protocol
(PLCC/SRCC/KRCC/RMSE over repeated random splits).
"""

from .binocular import (
    BinocularFeatures,
    ComfortZone,
    binocular_features,
    disparity_intensity_feature,
    disparity_range_feature,
    jndd_rank,
    patch_gradients,
    perceptual_alternation_feature,
)
from .config import RunConfig
from .disparity import DisparityMap, estimate_disparity, load_disparity, save_disparity
from .dnss import (
    AggdParams,
    DegenerateSampleError,
    DnssFeature,
    dnss_feature,
    fit_aggd,
    mscn,
    paired_products,
    sum_diff_maps,
    zca_whiten,
)
from .evaluation import EvalReport, ablate, cross_validate, krcc, plcc, rmse, srcc
from .features import (
    ABLATION_MASKS,
    N_FEATURES,
    build_mask,
    extract_entry,
    feature_names,
    read_feature_csv,
    write_feature_csv,
)
from .fmap import read_fmap, write_fmap
from .image import GrayImage, StereoPair, load_image, resize_bilinear, save_pgm
from .keypoints import DetectorParams, Keypoint, MatchPair, detect_and_describe, match_keypoints
from .local_ssim import LocalSsimFeature, local_ssim_feature, windowed_ssim
from .manifest import ManifestEntry, load_manifest, save_manifest
from .semantic import (
    FeatureMapTensor,
    channel_means,
    correlation_distance,
    read_feature_map,
    semantic_feature,
)
from .svr import (
    FeatureScaler,
    SvrModel,
    load_model,
    save_model,
    scale_features,
    svr_predict,
    svr_predict_batch,
    svr_train,
)

__version__ = "0.1.0"
