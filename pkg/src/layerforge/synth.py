"""Single-layer and layout-driven multi-layer synthesis over the model backends.

The single-layer path is generate-then-matte: render the caption on a solid
background at an aspect-matched canvas, predict the matte, take the matte as
the alpha channel, crop to content, and fit the slot's bbox. The multi-layer
path runs that per slot and composites in z order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .backends.core import BackendSuite
from .compositor import DEFAULT_LONG_SIDE, composite, generation_canvas, resize_to_bbox
from .errors import (
    BackendError,
    LayerForgeError,
    QualityRejectError,
    SampleSynthesisError,
    UndefinedBackgroundError,
)
from .prompting import DEFAULT_COLOR, DEFAULT_TEMPLATE_ID, apply_suffix
from .seeding import stable_seed
from .types import (
    AlphaRaster,
    CurationState,
    LayerSlot,
    MultiLayerSample,
    SemanticLayout,
    TransparentLayer,
    validate_layout,
)

logger = logging.getLogger(__name__)

#: Matte value below which a pixel counts as background when measuring uniformity.
BACKGROUND_MATTE_CUTOFF = 0.05


@dataclass(frozen=True)
class LayerSynthConfig:
    suffix_template: str = DEFAULT_TEMPLATE_ID
    color: str = DEFAULT_COLOR
    long_side: int = DEFAULT_LONG_SIDE
    matte_coverage_bounds: tuple[float, float] = (0.02, 0.98)
    background_uniformity_max: float = 12.0
    crop_padding: float = 0.02
    retries_per_slot: int = 3
    resample: str = "bilinear"

    def __post_init__(self):
        lo, hi = self.matte_coverage_bounds
        if not (0.0 < lo < hi <= 1.0):
            raise ValueError(f"coverage bounds {self.matte_coverage_bounds} need 0 < min < max <= 1")
        if self.retries_per_slot < 1:
            raise ValueError("retries_per_slot must be >= 1")


def background_uniformity(image: np.ndarray, matte: np.ndarray) -> float:
    """Max per-channel std-dev of the pixels the matte calls background."""
    if matte.shape != image.shape[:2]:
        raise ValueError("matte dimensions must equal the image dimensions")
    bg = matte < BACKGROUND_MATTE_CUTOFF
    if not bg.any():
        raise UndefinedBackgroundError("matte leaves no background pixels to measure")
    pixels = image[bg].astype(np.float64)
    return float(pixels.std(axis=0).max())


def _crop_to_matte(rgb: np.ndarray, matte: np.ndarray, padding: float) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.nonzero(matte > 0)
    y0, y1 = int(ys.min()), int(ys.max()) + 1
    x0, x1 = int(xs.min()), int(xs.max()) + 1
    pad = int(np.ceil(padding * max(y1 - y0, x1 - x0)))
    y0, x0 = max(0, y0 - pad), max(0, x0 - pad)
    y1, x1 = min(matte.shape[0], y1 + pad), min(matte.shape[1], x1 + pad)
    return rgb[y0:y1, x0:x1], matte[y0:y1, x0:x1]


def synth_layer(
    caption: str,
    slot: LayerSlot,
    cfg: LayerSynthConfig,
    backends: BackendSuite,
    seed: int = 0,
) -> TransparentLayer:
    """Generate one transparent layer for a slot.

    Raises QualityRejectError (retriable with a new seed) when the matte
    coverage falls outside the configured bounds or the background is not
    uniform enough to trust the matte.
    """
    if not caption:
        raise ValueError("caption must be non-empty")
    canvas = generation_canvas((slot.bbox[2], slot.bbox[3]), cfg.long_side)
    prompt = apply_suffix(caption, cfg.suffix_template, cfg.color)
    rgb = backends.generate.generate(prompt, canvas, seed=seed)
    matte = backends.matte.matte(rgb)

    if slot.kind == "background":
        # background slots are full-bleed: the whole render is the layer
        layer = TransparentLayer(
            image=AlphaRaster.from_rgb_and_alpha(rgb, np.ones(matte.shape)),
            caption=caption,
            kind="background",
            source=backends.source_label,
        )
        return resize_to_bbox(layer, slot.bbox, cfg.resample)

    coverage = float(np.count_nonzero(matte > 0) / matte.size)
    lo, hi = cfg.matte_coverage_bounds
    if not (lo <= coverage <= hi):
        raise QualityRejectError(f"matte coverage {coverage:.4f} outside bounds ({lo}, {hi})")
    try:
        uniformity = background_uniformity(rgb, matte)
    except UndefinedBackgroundError as exc:
        raise QualityRejectError(f"no measurable background: {exc}") from exc
    if uniformity > cfg.background_uniformity_max:
        raise QualityRejectError(
            f"background std-dev {uniformity:.2f} > {cfg.background_uniformity_max}"
        )

    cropped_rgb, cropped_matte = _crop_to_matte(rgb, matte, cfg.crop_padding)
    layer = TransparentLayer(
        image=AlphaRaster.from_rgb_and_alpha(cropped_rgb, cropped_matte),
        caption=caption,
        kind=slot.kind,
        source=backends.source_label,
    )
    return resize_to_bbox(layer, slot.bbox, cfg.resample)


def synth_layer_with_retries(
    caption: str,
    slot: LayerSlot,
    cfg: LayerSynthConfig,
    backends: BackendSuite,
    base_seed: int = 0,
    slot_index: int = 0,
) -> TransparentLayer:
    """Retry quality rejections with reseeded generation, up to the budget."""
    last: Exception | None = None
    for attempt in range(cfg.retries_per_slot):
        seed = stable_seed(base_seed, "slot", slot_index, "attempt", attempt)
        try:
            return synth_layer(caption, slot, cfg, backends, seed=seed)
        except (QualityRejectError, BackendError) as exc:
            logger.debug("slot %d attempt %d rejected: %s", slot_index, attempt, exc)
            last = exc
    raise QualityRejectError(
        f"slot {slot_index} failed after {cfg.retries_per_slot} attempts: {last}"
    )


def synth_multilayer(
    layout: SemanticLayout,
    cfg: LayerSynthConfig,
    backends: BackendSuite,
    seed: int = 0,
    max_workers: int = 4,
) -> MultiLayerSample:
    """Synthesize every slot of a layout and composite the result (stage C).

    Slots run concurrently; each slot's seeds depend only on (seed, slot
    index, attempt), so the output is bit-reproducible regardless of
    scheduling. Failing slots are reported together by index.
    """
    report = validate_layout(layout)
    if not report.ok:
        raise LayerForgeError(f"layout invalid: {report.codes()}")

    def run_slot(i: int) -> TransparentLayer:
        slot = layout.slots[i]
        return synth_layer_with_retries(slot.caption, slot, cfg, backends, seed, i)

    n = len(layout.slots)
    results: list[TransparentLayer | None] = [None] * n
    failures: list[int] = []
    if max_workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=min(max_workers, n)) as pool:
            futures = {i: pool.submit(run_slot, i) for i in range(n)}
        for i in range(n):
            try:
                results[i] = futures[i].result()
            except LayerForgeError:
                failures.append(i)
    else:
        for i in range(n):
            try:
                results[i] = run_slot(i)
            except LayerForgeError:
                failures.append(i)
    if failures:
        raise SampleSynthesisError(f"slots {failures} failed synthesis", failures)

    layers = tuple(results)  # type: ignore[arg-type]
    merged = composite(layout, list(layers)).merged
    return MultiLayerSample(layout=layout, layers=layers, merged=merged, state=CurationState("C"))
