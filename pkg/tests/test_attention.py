import numpy as np
import pytest

from layerforge.attention import (
    AttentionRecord,
    binarize_attention,
    compute_metrics,
    iou_bg,
    iou_fg,
    load_report,
    metrics_report,
    mse_bg,
    mse_fgleak,
    read_grid,
    reference_report,
    render_report,
    trajectory_magnitudes,
    write_grid,
)
from layerforge.errors import DecodeError, DimensionMismatchError, UndefinedRegionError


def brute_iou_bg(M, A_bin):
    inter = union = 0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            bg = 1 - M[i, j]
            a = A_bin[i, j]
            inter += int(bg and a)
            union += int(bg or a)
    return 1.0 if union == 0 else inter / union


def brute_iou_fg(M, A_bin):
    inter = union = 0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            fg = M[i, j]
            na = 1 - A_bin[i, j]
            inter += int(fg and na)
            union += int(fg or na)
    return 1.0 if union == 0 else inter / union


def brute_mse_bg(M, A):
    total = 0.0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            total += ((1 - M[i, j]) - A[i, j]) ** 2
    return total / M.size


def brute_mse_fgleak(M, A):
    total = 0.0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            total += (M[i, j] - M[i, j] * A[i, j]) ** 2
    return total / M.size


def test_binarize_fixed_on_binary_input_is_identity():
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.array_equal(binarize_attention(a, "fixed", 0.5), a.astype(np.uint8))


def test_binarize_otsu_separates_bimodal_exactly():
    rng = np.random.default_rng(0)
    a = np.where(rng.random((16, 16)) < 0.5, 0.1, 0.9)
    binary = binarize_attention(a, "otsu")
    assert np.array_equal(binary, (a > 0.5).astype(np.uint8))


def test_binarize_all_zero_stays_zero():
    a = np.zeros((4, 4))
    assert binarize_attention(a, "otsu").sum() == 0


def test_binarize_constant_falls_back_to_mean():
    a = np.full((4, 4), 0.7)
    out = binarize_attention(a, "otsu")
    assert np.array_equal(out, np.zeros((4, 4), dtype=np.uint8))


def test_perfect_attention_fixture():
    rng = np.random.default_rng(3)
    M = (rng.random((8, 8)) < 0.4).astype(np.uint8)
    A = 1.0 - M.astype(np.float64)
    A_bin = binarize_attention(A, "fixed", 0.5)
    assert iou_bg(M, A_bin) == 1.0
    assert iou_fg(M, A_bin) == 1.0
    assert mse_bg(M, A) == 0.0
    assert mse_fgleak(M, A) == pytest.approx(M.mean())


def test_iou_hand_count_2x2():
    M = np.array([[1, 1], [0, 0]])
    A_bin = np.ones((2, 2), dtype=np.uint8)
    assert iou_bg(M, A_bin) == 0.5
    assert iou_fg(M, A_bin) == 0.0


def test_metrics_match_brute_force_oracles(rng):
    for _ in range(25):
        M = (rng.random((16, 16)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
        A = rng.random((16, 16))
        A_bin = binarize_attention(A, "fixed", 0.5)
        assert iou_bg(M, A_bin) == brute_iou_bg(M, A_bin)
        assert iou_fg(M, A_bin) == brute_iou_fg(M, A_bin)
        assert mse_bg(M, A) == pytest.approx(brute_mse_bg(M, A), abs=1e-12)
        assert mse_fgleak(M, A) == pytest.approx(brute_mse_fgleak(M, A), abs=1e-12)


def test_constant_grid_mse_values():
    M = np.ones((4, 4), dtype=np.uint8)
    A = np.zeros((4, 4))
    assert mse_bg(M, A) == 0.0
    assert mse_fgleak(M, A) == 1.0


def test_iou_duality(rng):
    M = (rng.random((12, 12)) < 0.5).astype(np.uint8)
    A_bin = (rng.random((12, 12)) < 0.5).astype(np.uint8)
    assert iou_bg(M, A_bin) == iou_fg(1 - M, 1 - A_bin)


def test_mse_permutation_invariance(rng):
    M = (rng.random((10, 10)) < 0.5).astype(np.uint8)
    A = rng.random((10, 10))
    perm = rng.permutation(100)
    Mp = M.reshape(-1)[perm].reshape(10, 10)
    Ap = A.reshape(-1)[perm].reshape(10, 10)
    assert mse_bg(M, A) == pytest.approx(mse_bg(Mp, Ap), abs=1e-15)
    assert mse_fgleak(M, A) == pytest.approx(mse_fgleak(Mp, Ap), abs=1e-15)


def test_dim_mismatch_raises():
    with pytest.raises(DimensionMismatchError):
        iou_bg(np.zeros((2, 2), dtype=np.uint8), np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(DimensionMismatchError):
        mse_bg(np.zeros((2, 2)), np.zeros((3, 3)))


def test_trajectory_magnitudes():
    M = np.zeros((4, 4), dtype=np.uint8)
    M[:2] = 1
    zero = np.zeros((5, 4, 4))
    assert trajectory_magnitudes(zero, M) == (0.0, 0.0)
    const = np.full((5, 4, 4), 0.3)
    d_fg, d_bg = trajectory_magnitudes(const, M)
    assert d_fg == pytest.approx(0.3) and d_bg == pytest.approx(0.3)
    planted = np.where(M[None].astype(bool), 0.6, 0.3) * np.ones((5, 4, 4))
    d_fg, d_bg = trajectory_magnitudes(planted, M)
    assert d_fg - d_bg == pytest.approx(0.3)


def test_trajectory_needs_both_regions():
    with pytest.raises(UndefinedRegionError):
        trajectory_magnitudes(np.zeros((2, 3, 3)), np.ones((3, 3), dtype=np.uint8))


def test_metrics_report_rows_and_ranking(rng):
    M = (rng.random((8, 8)) < 0.5).astype(np.uint8)
    perfect = AttentionRecord(attention=(1.0 - M).astype(np.float64), mask=M)
    noisy = AttentionRecord(attention=rng.random((8, 8)), mask=M)
    rows = metrics_report([("perfect", perfect), ("noisy", noisy)], binarize="fixed")
    assert [r.suffix_label for r in rows] == ["perfect", "noisy"]
    assert rows[0].iou_bg == 1.0
    assert rows[0].iou_bg > rows[1].iou_bg
    single = metrics_report([("only", perfect)])
    assert len(single) == 1
    assert all(
        getattr(single[0], c) is not None
        for c in ("iou_bg", "iou_fg", "mse_bg", "mse_fgleak")
    )


def test_report_round_trip():
    M = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    record = AttentionRecord(
        attention=(1.0 - M).astype(np.float64), mask=M, trajectory=np.full((2, 2, 2), 0.5)
    )
    rows = metrics_report([("x", record)], binarize="fixed")
    text = render_report(rows)
    again = load_report(text)
    assert again[0].suffix_label == "x"
    assert again[0].iou_bg == pytest.approx(rows[0].iou_bg, abs=1e-4)


def test_reference_report_gray_is_best_on_iou_bg():
    rows = reference_report()
    assert len(rows) == 12
    by_label = {r.suffix_label: r for r in rows}
    gray = by_label["a solid gray background"]
    assert gray.iou_bg == pytest.approx(0.8642)
    best = max((r for r in rows if r.iou_bg is not None), key=lambda r: r.iou_bg)
    assert best.suffix_label == "a solid gray background"
    assert by_label["original (w/o background prompt)"].iou_bg is None


def test_grid_io_round_trip(tmp_path, rng):
    grid = rng.random((7, 5))
    path = tmp_path / "a.lfgrid"
    write_grid(path, grid)
    again = read_grid(path)
    assert again.shape == (7, 5)
    assert np.allclose(again, grid.astype(np.float32), atol=0)


def test_grid_io_decode_errors(tmp_path):
    bad = tmp_path / "bad.lfgrid"
    bad.write_bytes(b"NOTGRID")
    with pytest.raises(DecodeError):
        read_grid(bad)
    truncated = tmp_path / "short.lfgrid"
    write_grid(truncated, np.zeros((4, 4)))
    data = truncated.read_bytes()
    truncated.write_bytes(data[:-8])
    with pytest.raises(DecodeError):
        read_grid(truncated)


def test_attention_record_validation():
    with pytest.raises(DimensionMismatchError):
        AttentionRecord(attention=np.zeros((2, 2)), mask=np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        AttentionRecord(attention=np.full((2, 2), 1.5), mask=np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        AttentionRecord(attention=np.zeros((2, 2)), mask=np.full((2, 2), 2))
