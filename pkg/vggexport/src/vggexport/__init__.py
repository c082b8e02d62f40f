"""VGG feature-map exporter for the visual-comfort scorer's semantic feature."""

from .export import (
    CONV_LAYERS,
    ExportJob,
    PreprocessSpec,
    export_batch,
    export_feature_map,
    load_backbone,
    untrained_backbone,
)
from .fmap import read_fmap, write_fmap

__version__ = "0.1.0"
