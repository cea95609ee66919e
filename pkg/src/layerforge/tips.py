"""Transparent-image preference scoring: pair building, training, inference.

The score of an image against a text prompt is the dot product of the
(optionally projected, renormalized) image embedding with the text embedding.
A win/lose pair's win probability is the temperature-scaled softmax over the
two scores, and training minimizes -log p_win over labeled pairs. Labels come
from a weighted ensemble of external quality scorers, z-normalized per scorer
over the batch.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backends.core import EmbeddingVector
from .errors import DecodeError, MissingInputError, TrainingFailureError

SCORER_NAMES = ("aesthetic-v25", "image-reward", "laion-aesthetic", "hpsv2", "vqa-score")

DEFAULT_TAU = 10.0
DEFAULT_PAIR_MARGIN = 0.2


@dataclass(frozen=True)
class EnsembleWeights:
    """Per-scorer weights for the quality ensemble; at least one must be nonzero."""

    weights: dict[str, float]

    def __post_init__(self):
        if not any(v != 0.0 for v in self.weights.values()):
            raise ValueError("ensemble needs at least one nonzero weight")

    @classmethod
    def uniform(cls, names: Sequence[str] = SCORER_NAMES) -> "EnsembleWeights":
        return cls({name: 1.0 / len(names) for name in names})


def z_normalize(score_maps: Sequence[dict[str, float]]) -> list[dict[str, float]]:
    """Per-scorer z-scores across the batch; a constant scorer maps to zeros."""
    names = sorted({k for m in score_maps for k in m})
    out: list[dict[str, float]] = [dict() for _ in score_maps]
    for name in names:
        vals = np.array([m[name] for m in score_maps if name in m], dtype=np.float64)
        mean = vals.mean()
        std = vals.std()
        for i, m in enumerate(score_maps):
            if name in m:
                out[i][name] = 0.0 if std == 0 else (m[name] - mean) / std
    return out


def ensemble_quality(scores: dict[str, float], weights: EnsembleWeights) -> float:
    """Weighted sum of (already z-normalized) scorer scores."""
    total = 0.0
    for name, w in weights.weights.items():
        if w == 0.0:
            continue
        if name not in scores:
            raise MissingInputError(f"missing score for weighted scorer {name!r}")
        total += w * scores[name]
    return total


@dataclass(frozen=True)
class PreferencePair:
    e_win: EmbeddingVector
    e_lose: EmbeddingVector
    e_text: EmbeddingVector
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {self.e_win.dim, self.e_lose.dim, self.e_text.dim}
        if len(dims) != 1:
            raise ValueError(f"pair embeddings disagree on dimension: {dims}")

    def swapped(self) -> "PreferencePair":
        return PreferencePair(self.e_lose, self.e_win, self.e_text, dict(self.meta))


@dataclass(frozen=True)
class Candidate:
    """One scored candidate image sharing a text prompt with its peers."""

    id: str
    e_image: EmbeddingVector
    e_text: EmbeddingVector
    scores: dict[str, float]


def build_pairs(
    candidates: Sequence[Candidate],
    weights: Optional[EnsembleWeights] = None,
    margin: float = DEFAULT_PAIR_MARGIN,
) -> list[PreferencePair]:
    """Emit a win/lose pair for every candidate pair separated by more than the margin.

    Ensemble scores are z-normalized over this candidate batch first, so the
    margin is in z-units.
    """
    if len(candidates) < 2:
        raise ValueError("need at least two candidates sharing a prompt")
    weights = weights or EnsembleWeights.uniform()
    normalized = z_normalize([c.scores for c in candidates])
    quality = [ensemble_quality(z, weights) for z in normalized]
    pairs = []
    for i, j in combinations(range(len(candidates)), 2):
        if abs(quality[i] - quality[j]) <= margin:
            continue
        w, l = (i, j) if quality[i] > quality[j] else (j, i)
        pairs.append(
            PreferencePair(
                e_win=candidates[w].e_image,
                e_lose=candidates[l].e_image,
                e_text=candidates[w].e_text,
                meta={"win": candidates[w].id, "lose": candidates[l].id},
            )
        )
    return pairs


@dataclass
class TipsModel:
    """Temperature plus an optional square projection over image embeddings."""

    tau: float = DEFAULT_TAU
    projection: Optional[np.ndarray] = None
    dim: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.projection is not None:
            p = np.asarray(self.projection, dtype=np.float64)
            if p.ndim != 2 or p.shape[0] != p.shape[1]:
                raise ValueError("projection must be square")
            if np.all(p == 0, axis=1).any():
                raise ValueError("projection has an all-zero row")
            self.projection = p
            if self.dim and self.dim != p.shape[0]:
                raise ValueError("projection size disagrees with dim")
            self.dim = p.shape[0]

    def _project(self, e_image: EmbeddingVector) -> np.ndarray:
        if self.projection is None:
            return e_image.values
        if e_image.dim != self.projection.shape[0]:
            raise ValueError(
                f"embedding dimension {e_image.dim} does not match model dimension {self.projection.shape[0]}"
            )
        u = self.projection @ e_image.values
        norm = np.linalg.norm(u)
        if norm == 0:
            return u
        return u / norm

    def save(self, path: str | Path) -> None:
        payload = {
            "tau": self.tau,
            "projection": None if self.projection is None else self.projection.tolist(),
            "dim": self.dim,
            "provenance": self.provenance,
        }
        Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TipsModel":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            proj = payload["projection"]
            return cls(
                tau=float(payload["tau"]),
                projection=None if proj is None else np.asarray(proj, dtype=np.float64),
                dim=int(payload.get("dim", 0)),
                provenance=payload.get("provenance", {}),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DecodeError(f"bad model file {path}: {exc}") from exc


def tips_score(model: TipsModel, e_image: EmbeddingVector, e_text: EmbeddingVector) -> float:
    """Projected, renormalized image embedding dotted with the text embedding."""
    return float(model._project(e_image) @ e_text.values)


def p_win(model: TipsModel, pair: PreferencePair) -> float:
    """Probability that the pair's win image is preferred (softmax over scores)."""
    delta = tips_score(model, pair.e_win, pair.e_text) - tips_score(model, pair.e_lose, pair.e_text)
    # tanh form of the logistic keeps p(w,l) + p(l,w) = 1 exact
    return 0.5 * (1.0 + math.tanh(0.5 * model.tau * delta))


def pref_loss(model: TipsModel, pair: PreferencePair) -> float:
    """-log p_win, computed in log space."""
    delta = tips_score(model, pair.e_win, pair.e_text) - tips_score(model, pair.e_lose, pair.e_text)
    return float(np.logaddexp(0.0, -model.tau * delta))


def _score_and_grad(P: np.ndarray, e_img: np.ndarray, t: np.ndarray):
    """s = (P e / |P e|) . t and ds/dP."""
    u = P @ e_img
    norm = np.linalg.norm(u)
    uhat = u / norm
    s = float(uhat @ t)
    g = (t - s * uhat) / norm
    return s, np.outer(g, e_img)


def loss_and_grads(
    tau: float, P: np.ndarray, pairs: Sequence[PreferencePair], l2: float = 0.0
) -> tuple[float, float, np.ndarray]:
    """Mean pref_loss over the batch plus analytic gradients w.r.t. tau and P.

    The l2 term is a ridge pulling the projection toward the identity.
    """
    dim = P.shape[0]
    loss = 0.0
    d_tau = 0.0
    d_P = np.zeros_like(P)
    for pair in pairs:
        s_w, g_w = _score_and_grad(P, pair.e_win.values, pair.e_text.values)
        s_l, g_l = _score_and_grad(P, pair.e_lose.values, pair.e_text.values)
        delta = s_w - s_l
        loss += float(np.logaddexp(0.0, -tau * delta))
        one_minus_p = 0.5 * (1.0 - math.tanh(0.5 * tau * delta))
        d_tau += -one_minus_p * delta
        d_P += -tau * one_minus_p * (g_w - g_l)
    n = len(pairs)
    loss /= n
    d_tau /= n
    d_P /= n
    if l2:
        eye = np.eye(dim)
        loss += l2 * float(np.sum((P - eye) ** 2))
        d_P += 2.0 * l2 * (P - eye)
    return loss, d_tau, d_P


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.05
    epochs: int = 20
    batch: int = 32
    seed: int = 0
    l2: float = 0.0
    holdout: float = 0.2
    tau_init: float = DEFAULT_TAU


def pairwise_accuracy(model: TipsModel, pairs: Sequence[PreferencePair]) -> float:
    """Fraction of pairs whose win image scores strictly higher (ties count half)."""
    if not pairs:
        return float("nan")
    total = 0.0
    for pair in pairs:
        s_w = tips_score(model, pair.e_win, pair.e_text)
        s_l = tips_score(model, pair.e_lose, pair.e_text)
        total += 1.0 if s_w > s_l else (0.5 if s_w == s_l else 0.0)
    return total / len(pairs)


def train(pairs: Sequence[PreferencePair], hyper: TrainConfig = TrainConfig()) -> TipsModel:
    """Mini-batch gradient descent on mean pref_loss; deterministic given the seed.

    The returned model's provenance records the config and the per-epoch
    train/held-out pairwise accuracy.
    """
    if not pairs:
        raise ValueError("need at least one pair to train")
    dim = pairs[0].e_win.dim
    rng = np.random.default_rng(hyper.seed)

    n_hold = int(round(hyper.holdout * len(pairs)))
    if n_hold >= len(pairs):
        n_hold = len(pairs) - 1
    order = rng.permutation(len(pairs))
    hold = [pairs[i] for i in order[:n_hold]]
    trainset = [pairs[i] for i in order[n_hold:]]

    tau = hyper.tau_init
    P = np.eye(dim)
    history: list[dict] = []
    for epoch in range(hyper.epochs):
        perm = rng.permutation(len(trainset))
        for start in range(0, len(perm), hyper.batch):
            batch = [trainset[i] for i in perm[start : start + hyper.batch]]
            loss, d_tau, d_P = loss_and_grads(tau, P, batch, hyper.l2)
            if not math.isfinite(loss):
                raise TrainingFailureError(f"loss diverged at epoch {epoch}")
            tau = max(tau - hyper.lr * d_tau, 1e-6)
            P = P - hyper.lr * d_P
        snapshot = TipsModel(tau=tau, projection=P.copy(), dim=dim)
        epoch_loss, _, _ = loss_and_grads(tau, P, trainset, hyper.l2)
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss,
                "train_accuracy": pairwise_accuracy(snapshot, trainset),
                "holdout_accuracy": pairwise_accuracy(snapshot, hold) if hold else None,
            }
        )

    projection = P if hyper.epochs > 0 else None
    return TipsModel(
        tau=tau,
        projection=projection,
        dim=dim,
        provenance={
            "pairs": len(pairs),
            "held_out": n_hold,
            "config": {
                "lr": hyper.lr,
                "epochs": hyper.epochs,
                "batch": hyper.batch,
                "seed": hyper.seed,
                "l2": hyper.l2,
                "holdout": hyper.holdout,
                "tau_init": hyper.tau_init,
            },
            "history": history,
        },
    )


# --- pair (de)serialization: one JSON object per line ---


def save_pairs(pairs: Sequence[PreferencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            record = {
                "e_win": p.e_win.values.tolist(),
                "e_lose": p.e_lose.values.tolist(),
                "e_text": p.e_text.values.tolist(),
                "meta": p.meta,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")


def load_pairs(path: str | Path) -> list[PreferencePair]:
    pairs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            pairs.append(
                PreferencePair(
                    e_win=EmbeddingVector.normalized(np.asarray(d["e_win"])),
                    e_lose=EmbeddingVector.normalized(np.asarray(d["e_lose"])),
                    e_text=EmbeddingVector.normalized(np.asarray(d["e_text"])),
                    meta=d.get("meta", {}),
                )
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DecodeError(f"pairs file line {line_no}: {exc}") from exc
    return pairs
