"""layerforge: synthesis and curation toolkit for multi-layer transparent images."""

from .compositor import (
    CanvasSpec,
    CompositeResult,
    alpha_over,
    bbox_iou,
    composite,
    generation_canvas,
    resize_to_bbox,
)
from .errors import LayerForgeError
from .types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
    ValidationReport,
    validate_layout,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaRaster",
    "CanvasSpec",
    "CompositeResult",
    "CurationState",
    "LayerForgeError",
    "LayerSlot",
    "MultiLayerSample",
    "SemanticLayout",
    "TransparentLayer",
    "ValidationReport",
    "alpha_over",
    "bbox_iou",
    "composite",
    "generation_canvas",
    "resize_to_bbox",
    "validate_layout",
    "__version__",
]
