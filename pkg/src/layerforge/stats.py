"""Dataset statistics over multi-layer samples: layer counts, text layers, styles."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .errors import EmptyInputError
from .types import MultiLayerSample

#: Inclusive layer-count range the headline fraction reports.
RANGE_LO, RANGE_HI = 3, 14

AREA_BINS = tuple(f"{i / 10:.1f}-{(i + 1) / 10:.1f}" for i in range(10))


@dataclass(frozen=True)
class DatasetStats:
    layer_count_histogram: dict[int, int]
    mean_layers: float
    median_layers: float
    pct_in_range_3_14: float
    text_layers_per_image: dict[int, int]
    chars_per_text_instance: dict[int, int]
    text_area_ratio: dict[str, int]
    style_distribution: dict[str, int]
    sample_count: int


def _lower_median(sorted_values: list[int]) -> float:
    return float(sorted_values[(len(sorted_values) - 1) // 2])


def _area_bin(ratio: float) -> str:
    idx = min(int(min(max(ratio, 0.0), 1.0) * 10), 9)
    return AREA_BINS[idx]


def compute_dataset_stats(samples: Iterable[MultiLayerSample]) -> DatasetStats:
    """Histograms and summary numbers over a manifest of samples.

    The median is the lower median for even counts. Text statistics are
    measured on layers tagged kind="text" (captions, not OCR).
    """
    layer_counts: list[int] = []
    text_per_image: Counter = Counter()
    chars: Counter = Counter()
    area_bins: Counter = Counter()
    styles: Counter = Counter()

    n = 0
    for sample in samples:
        n += 1
        layer_counts.append(sample.layer_count)
        canvas_area = sample.layout.canvas[0] * sample.layout.canvas[1]
        text_count = 0
        for layer, slot in zip(sample.layers, sample.layout.slots):
            if layer.kind == "text":
                text_count += 1
                chars[len(layer.caption)] += 1
                area_bins[_area_bin(slot.bbox[2] * slot.bbox[3] / canvas_area)] += 1
        text_per_image[text_count] += 1
        styles[sample.style or "unstyled"] += 1

    if n == 0:
        raise EmptyInputError("cannot compute statistics over an empty manifest")

    ordered = sorted(layer_counts)
    in_range = sum(1 for c in layer_counts if RANGE_LO <= c <= RANGE_HI)
    return DatasetStats(
        layer_count_histogram=dict(sorted(Counter(layer_counts).items())),
        mean_layers=sum(layer_counts) / n,
        median_layers=_lower_median(ordered),
        pct_in_range_3_14=in_range / n,
        text_layers_per_image=dict(sorted(text_per_image.items())),
        chars_per_text_instance=dict(sorted(chars.items())),
        text_area_ratio=dict(sorted(area_bins.items())),
        style_distribution=dict(sorted(styles.items())),
        sample_count=n,
    )


def render_stats_table(stats: DatasetStats) -> str:
    lines = [
        f"samples              {stats.sample_count}",
        f"mean layers          {stats.mean_layers:.3f}",
        f"median layers        {stats.median_layers:.1f}",
        f"in [3, 14] layers    {stats.pct_in_range_3_14:.1%}",
        "layer count histogram:",
    ]
    for count, freq in stats.layer_count_histogram.items():
        lines.append(f"  {count:>3} layers  {freq}")
    if stats.text_layers_per_image:
        lines.append("text layers per image:")
        for count, freq in stats.text_layers_per_image.items():
            lines.append(f"  {count:>3} text layers  {freq}")
    if stats.style_distribution:
        lines.append("styles:")
        for style, freq in stats.style_distribution.items():
            lines.append(f"  {style}  {freq}")
    return "\n".join(lines) + "\n"
