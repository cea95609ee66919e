"""Attention-map diagnostics: IoU/MSE against matting masks and trajectory magnitudes.

The attention map A holds, per visual token, how strongly the background
suffix token attends to it; M is the binary foreground mask from matting.
Good suffixes light up exactly the background, so the BG metrics compare
(1 - M) with the binarized attention and the FG metrics compare M with its
complement.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DecodeError, DimensionMismatchError, UndefinedRegionError

GRID_MAGIC = b"LFGRID1"


@dataclass(frozen=True, eq=False)
class AttentionRecord:
    """One diagnostic record: attention grid, matting mask, optional trajectory stack."""

    attention: np.ndarray  # float in [0, 1]
    mask: np.ndarray  # binary {0, 1}
    trajectory: Optional[np.ndarray] = None  # (steps, h, w) per-step update values

    def __post_init__(self):
        a, m = np.asarray(self.attention), np.asarray(self.mask)
        if a.shape != m.shape:
            raise DimensionMismatchError(f"attention {a.shape} vs mask {m.shape}")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("attention values must lie in [0, 1]")
        if not np.isin(m, (0, 1)).all():
            raise ValueError("mask must be binary")
        if self.trajectory is not None and self.trajectory.shape[1:] != m.shape:
            raise DimensionMismatchError(
                f"trajectory steps {self.trajectory.shape[1:]} vs mask {m.shape}"
            )


def binarize_attention(attention: np.ndarray, method: str = "otsu", threshold: float = 0.5) -> np.ndarray:
    """Threshold an attention map to {0, 1}.

    Methods: "otsu" (default, parameter-free), "mean", or "fixed" with the
    given threshold. A constant map makes Otsu fall back to the mean rule.
    """
    a = np.asarray(attention, dtype=np.float64)
    if method == "fixed":
        t = threshold
    elif method == "mean":
        t = float(a.mean())
    elif method == "otsu":
        t = _otsu_threshold(a)
        if t is None:
            t = float(a.mean())
    else:
        raise ValueError(f"unknown binarization method {method!r}")
    return (a > t).astype(np.uint8)


def _otsu_threshold(a: np.ndarray) -> Optional[float]:
    """Between-class variance maximization over a 256-bin histogram; None if degenerate."""
    if a.min() == a.max():
        return None
    hist, edges = np.histogram(a, bins=256, range=(0.0, 1.0))
    total = hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(hist)
    w1 = total - w0
    mass = np.cumsum(hist * centers)
    mean_total = mass[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = mass / w0
        mu1 = (mean_total - mass) / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    k = int(np.argmax(between))
    return float(edges[k + 1])


def _check_binary_pair(m: np.ndarray, a_bin: np.ndarray):
    if m.shape != a_bin.shape:
        raise DimensionMismatchError(f"mask {m.shape} vs binarized attention {a_bin.shape}")


def _set_iou(x: np.ndarray, y: np.ndarray) -> float:
    inter = int(np.logical_and(x, y).sum())
    union = int(np.logical_or(x, y).sum())
    if union == 0:
        return 1.0
    return inter / union


def iou_bg(mask: np.ndarray, attention_bin: np.ndarray) -> float:
    """IoU between the background (1 - M) and the binarized attention."""
    _check_binary_pair(mask, attention_bin)
    return _set_iou(1 - np.asarray(mask), np.asarray(attention_bin))


def iou_fg(mask: np.ndarray, attention_bin: np.ndarray) -> float:
    """IoU between the foreground M and the complement of the binarized attention."""
    _check_binary_pair(mask, attention_bin)
    return _set_iou(np.asarray(mask), 1 - np.asarray(attention_bin))


def mse_bg(mask: np.ndarray, attention: np.ndarray) -> float:
    """Mean squared error between (1 - M) and A over all pixels."""
    if mask.shape != attention.shape:
        raise DimensionMismatchError(f"mask {mask.shape} vs attention {attention.shape}")
    m = np.asarray(mask, dtype=np.float64)
    a = np.asarray(attention, dtype=np.float64)
    return float(np.mean(((1.0 - m) - a) ** 2))


def mse_fgleak(mask: np.ndarray, attention: np.ndarray) -> float:
    """Mean of (M - M*A)^2: how much attention leaks into the foreground."""
    if mask.shape != attention.shape:
        raise DimensionMismatchError(f"mask {mask.shape} vs attention {attention.shape}")
    m = np.asarray(mask, dtype=np.float64)
    a = np.asarray(attention, dtype=np.float64)
    return float(np.mean((m - m * a) ** 2))


def trajectory_magnitudes(trajectory: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    """Per-region mean of the per-pixel mean absolute update across steps.

    Returns (d_fg, d_bg) for the mask's foreground and background. The
    aggregation rule, mean absolute per-step update, is this library's own
    definition and is recorded here so reports can cite it.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 3 or traj.shape[1:] != mask.shape:
        raise DimensionMismatchError(f"trajectory {traj.shape} vs mask {mask.shape}")
    field = np.abs(traj).mean(axis=0)
    m = np.asarray(mask).astype(bool)
    if not m.any() or m.all():
        raise UndefinedRegionError("mask must contain both foreground and background pixels")
    return float(field[m].mean()), float(field[~m].mean())


@dataclass(frozen=True)
class MetricsRow:
    suffix_label: str
    iou_bg: Optional[float]
    iou_fg: Optional[float]
    mse_bg: Optional[float]
    mse_fgleak: Optional[float]
    d_fg_minus_d_bg: Optional[float]
    d_bg: Optional[float]


REPORT_COLUMNS = ("suffix_label", "iou_bg", "iou_fg", "mse_bg", "mse_fgleak", "d_fg_minus_d_bg", "d_bg")


def compute_metrics(label: str, record: AttentionRecord, binarize: str = "otsu") -> MetricsRow:
    a_bin = binarize_attention(record.attention, method=binarize)
    if record.trajectory is not None:
        d_fg, d_bg = trajectory_magnitudes(record.trajectory, record.mask)
        d_diff: Optional[float] = d_fg - d_bg
        d_bg_out: Optional[float] = d_bg
    else:
        d_diff = d_bg_out = None
    return MetricsRow(
        suffix_label=label,
        iou_bg=iou_bg(record.mask, a_bin),
        iou_fg=iou_fg(record.mask, a_bin),
        mse_bg=mse_bg(record.mask, record.attention),
        mse_fgleak=mse_fgleak(record.mask, record.attention),
        d_fg_minus_d_bg=d_diff,
        d_bg=d_bg_out,
    )


def metrics_report(records: list[tuple[str, AttentionRecord]], binarize: str = "otsu") -> list[MetricsRow]:
    """One row per labeled record, in input order."""
    if not records:
        raise ValueError("metrics_report needs at least one record")
    return [compute_metrics(label, record, binarize) for label, record in records]


def _format_cell(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4f}"


def render_report(rows: list[MetricsRow]) -> str:
    """Tab-separated table with a header line; missing values render as '-'."""
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append(
            "\t".join(
                [r.suffix_label]
                + [_format_cell(getattr(r, c)) for c in REPORT_COLUMNS[1:]]
            )
        )
    return "\n".join(lines) + "\n"


def load_report(text: str) -> list[MetricsRow]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split("\t") != list(REPORT_COLUMNS):
        raise DecodeError("report header does not match the expected columns")
    rows = []
    for ln in lines[1:]:
        cells = ln.split("\t")
        if len(cells) != len(REPORT_COLUMNS):
            raise DecodeError(f"report row has {len(cells)} cells, wanted {len(REPORT_COLUMNS)}")
        vals = [None if c == "-" else float(c) for c in cells[1:]]
        rows.append(MetricsRow(cells[0], *vals))
    return rows


def reference_report() -> list[MetricsRow]:
    """The bundled reference table of suffix-prompt metrics (fixture data)."""
    text = resources.files("layerforge").joinpath("data/suffix_metrics_reference.tsv").read_text()
    return load_report(text)


# --- LFGRID1 binary grid interchange ---


def write_grid(path: str | Path, grid: np.ndarray) -> None:
    """Write a 2-D float grid: magic, width+height as uint32 LE, row-major float32."""
    g = np.ascontiguousarray(grid, dtype="<f4")
    if g.ndim != 2:
        raise ValueError("grid must be 2-D")
    h, w = g.shape
    with open(path, "wb") as f:
        f.write(GRID_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(g.tobytes())


def read_grid(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < len(GRID_MAGIC) + 8:
        raise DecodeError("grid file truncated before header")
    if data[: len(GRID_MAGIC)] != GRID_MAGIC:
        raise DecodeError("bad magic; not an LFGRID1 file")
    w, h = struct.unpack_from("<II", data, len(GRID_MAGIC))
    expected = len(GRID_MAGIC) + 8 + w * h * 4
    if len(data) != expected:
        raise DecodeError(f"grid payload is {len(data)} bytes, header implies {expected}")
    return np.frombuffer(data, dtype="<f4", offset=len(GRID_MAGIC) + 8).reshape(h, w).astype(np.float64)
