import numpy as np
import pytest

from layerforge.errors import EmptyInputError
from layerforge.stats import compute_dataset_stats, render_stats_table
from layerforge.types import CurationState, LayerSlot, MultiLayerSample, SemanticLayout

from conftest import make_layer, random_sample, solid_raster


def sample_with_layers(n, canvas=(20, 20), text_indices=(), style=None):
    slots = []
    layers = []
    for i in range(n):
        kind = "text" if i in text_indices else "object"
        slots.append(LayerSlot(bbox=(0, 0, 4 + i, 4), z=i, caption=f"caption {i}", kind=kind))
        layers.append(
            make_layer(solid_raster(4 + i, 4, (10, 10, 10, 255)), caption=f"caption {i}", kind=kind)
        )
    layout = SemanticLayout(canvas=canvas, slots=tuple(slots))
    merged = solid_raster(canvas[0], canvas[1], (0, 0, 0, 0))
    return MultiLayerSample(
        layout=layout, layers=tuple(layers), merged=merged, state=CurationState("C"), style=style
    )


def test_single_six_layer_sample():
    stats = compute_dataset_stats([sample_with_layers(6)])
    assert stats.mean_layers == 6
    assert stats.median_layers == 6
    assert stats.pct_in_range_3_14 == 1.0
    assert stats.layer_count_histogram == {6: 1}


def test_two_six_ten_layer_manifest():
    samples = [sample_with_layers(2), sample_with_layers(6), sample_with_layers(10)]
    stats = compute_dataset_stats(samples)
    assert stats.mean_layers == 6
    assert stats.median_layers == 6
    assert stats.pct_in_range_3_14 == pytest.approx(2 / 3)


def test_lower_median_for_even_counts():
    samples = [sample_with_layers(n) for n in (2, 4, 6, 8)]
    stats = compute_dataset_stats(samples)
    assert stats.median_layers == 4  # lower median of {2,4,6,8}


def test_histograms_sum_to_sample_count():
    samples = [sample_with_layers(n, text_indices=(0,) if n > 3 else ()) for n in (2, 3, 4, 5, 5)]
    stats = compute_dataset_stats(samples)
    assert sum(stats.layer_count_histogram.values()) == 5
    assert sum(stats.text_layers_per_image.values()) == 5
    assert stats.sample_count == 5


def test_text_layer_statistics():
    s = sample_with_layers(4, text_indices=(1, 2))
    stats = compute_dataset_stats([s])
    assert stats.text_layers_per_image == {2: 1}
    assert sum(stats.chars_per_text_instance.values()) == 2
    assert len("caption 1") in stats.chars_per_text_instance
    assert sum(stats.text_area_ratio.values()) == 2


def test_style_distribution():
    stats = compute_dataset_stats(
        [sample_with_layers(2, style="ink"), sample_with_layers(3, style="ink"), sample_with_layers(4)]
    )
    assert stats.style_distribution == {"ink": 2, "unstyled": 1}


def test_stats_permutation_invariance(rng):
    samples = [random_sample(rng, n_layers=int(rng.integers(1, 5))) for _ in range(8)]
    a = compute_dataset_stats(samples)
    order = rng.permutation(len(samples))
    b = compute_dataset_stats([samples[i] for i in order])
    assert a == b


def test_empty_manifest_is_error():
    with pytest.raises(EmptyInputError):
        compute_dataset_stats([])


def test_render_table_mentions_key_numbers():
    text = render_stats_table(compute_dataset_stats([sample_with_layers(6)]))
    assert "mean layers" in text and "6.000" in text
