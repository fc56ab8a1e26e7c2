"""Training objectives: cross-entropy, supervised contrastive, and triplet
loss with in-batch semi-hard negative mining (hard fallback).

All losses reduce to batch means so learning rates stay portable across
batch sizes. Contrastive similarity is the dot product of unit-norm
embeddings; triplet distances are squared Euclidean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DegenerateBatchError
from .tensor import Tensor, clamp_min, gather_rows, log, mul, relu, transpose


@dataclass(frozen=True)
class SclConfig:
    temperature: float = 0.07

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ContractError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class TripletConfig:
    margin: float = 0.3
    mining: str = "semi-hard-with-hard-fallback"

    def __post_init__(self):
        if self.margin <= 0.0:
            raise ContractError(f"margin must be > 0, got {self.margin}")
        if self.mining != "semi-hard-with-hard-fallback":
            raise ContractError(f"unknown mining mode '{self.mining}'")


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int


def ce_loss(probabilities: Tensor, labels) -> Tensor:
    """Mean negative log-probability of the true class.

    Expects probability rows (each summing to 1); a zero probability at the
    true class is clamped to 1e-12 with a warning rather than erroring.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, p = probabilities.shape
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= p:
        raise ContractError("label outside [0, num_classes)")
    rows = probabilities.data.sum(axis=1)
    if np.abs(rows - 1.0).max() > 1e-5:
        raise ContractError("probability rows must sum to 1 within 1e-5")
    if probabilities.data.min() < 0.0:
        raise ContractError("probabilities must be non-negative")
    onehot = np.zeros((n, p), dtype=np.float32)
    onehot[np.arange(n), labels] = 1.0
    p_true = mul(probabilities, Tensor(onehot)).sum(axis=1)
    if np.any(p_true.data < 1e-12):
        warnings.warn("ce_loss: zero probability at true class, clamping", RuntimeWarning)
    return -log(clamp_min(p_true, 1e-12)).sum() / n


def scl_loss(embeddings: Tensor, labels, cfg: SclConfig = SclConfig()):
    """Supervised contrastive loss over a batch of unit-norm embeddings.

    Returns (loss, n_skipped): samples with no in-batch positive contribute
    nothing and are tallied in n_skipped; the loss is the mean over the
    contributing samples. Raises DegenerateBatchError when every sample is
    skipped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = embeddings.shape[0]
    if n < 2:
        raise ContractError("scl_loss needs at least 2 samples")
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} != ({n},)")
    norms = np.linalg.norm(embeddings.data, axis=1)
    if np.abs(norms - 1.0).max() > 1e-4:
        raise ContractError("scl_loss expects unit-norm embedding rows (within 1e-4)")

    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(n, dtype=bool)
    pos_mask = (same & off_diag).astype(np.float32)
    anchor_mask = off_diag.astype(np.float32)

    pos_counts = pos_mask.sum(axis=1)
    contributing = pos_counts > 0
    n_contributing = int(contributing.sum())
    n_skipped = n - n_contributing
    if n_contributing == 0:
        raise DegenerateBatchError("scl_loss: no sample has an in-batch positive")

    sim = mul(embeddings @ transpose(embeddings), Tensor(1.0 / cfg.temperature))

    # Max over the non-self entries, detached: keeps exp() in range while the
    # shift cancels exactly in log-sum-exp.
    off = sim.data.copy()
    np.fill_diagonal(off, -np.inf)
    row_max = off.max(axis=1, keepdims=True).astype(np.float32)

    shifted = mul(sim - Tensor(row_max), Tensor(anchor_mask))
    denom = mul(shifted.exp(), Tensor(anchor_mask)).sum(axis=1, keepdims=True)
    log_denom = log(denom) + Tensor(row_max)
    log_prob = sim - log_denom

    inv_counts = np.zeros((n, 1), dtype=np.float32)
    inv_counts[contributing, 0] = 1.0 / pos_counts[contributing]
    per_sample = mul(mul(log_prob, Tensor(pos_mask)).sum(axis=1, keepdims=True),
                     Tensor(inv_counts))
    loss = -per_sample.sum() / n_contributing
    return loss, n_skipped


def mine_semi_hard(embeddings: np.ndarray, labels, cfg: TripletConfig = TripletConfig()):
    """Pick one negative per same-class (anchor, positive) ordered pair.

    Preferred negatives are semi-hard: strictly farther from the anchor than
    the positive but within the margin band (squared Euclidean). The closest
    qualifying negative wins; if the band is empty the hardest negative
    (global closest) is used. Single-class batches yield no triplets.
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    n = embeddings.shape[0]
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} != ({n},)")
    if len(np.unique(labels)) < 2:
        warnings.warn("mine_semi_hard: single-class batch, no triplets", RuntimeWarning)
        return []

    sq = (embeddings**2).sum(axis=1)
    dist = sq[:, None] - 2.0 * (embeddings @ embeddings.T) + sq[None, :]
    np.maximum(dist, 0.0, out=dist)

    triplets: list[Triplet] = []
    for anchor in range(n):
        pos_idx = np.flatnonzero((labels == labels[anchor]))
        pos_idx = pos_idx[pos_idx != anchor]
        if pos_idx.size == 0:
            continue
        neg_idx = np.flatnonzero(labels != labels[anchor])
        d_neg = dist[anchor, neg_idx]
        hardest = neg_idx[int(np.argmin(d_neg))]
        for positive in pos_idx:
            d_ap = dist[anchor, positive]
            in_band = (d_neg > d_ap) & (d_neg < d_ap + cfg.margin)
            if in_band.any():
                band_idx = neg_idx[in_band]
                negative = band_idx[int(np.argmin(d_neg[in_band]))]
            else:
                negative = hardest
            triplets.append(Triplet(anchor, int(positive), int(negative)))
    return triplets


def triplet_loss(embeddings: Tensor, triplets, cfg: TripletConfig = TripletConfig()) -> Tensor:
    """Mean hinge on squared-distance gaps: max(0, d(a,p) - d(a,n) + margin)."""
    if not triplets:
        warnings.warn("triplet_loss: empty triplet list, returning 0", RuntimeWarning)
        return Tensor(0.0)
    n = embeddings.shape[0]
    for t in triplets:
        if not (0 <= t.anchor < n and 0 <= t.positive < n and 0 <= t.negative < n):
            raise ContractError(f"triplet index out of range: {t}")
        if t.anchor == t.positive:
            raise ContractError(f"anchor equals positive: {t}")
    anchors = gather_rows(embeddings, [t.anchor for t in triplets])
    positives = gather_rows(embeddings, [t.positive for t in triplets])
    negatives = gather_rows(embeddings, [t.negative for t in triplets])
    diff_p = anchors - positives
    diff_n = anchors - negatives
    d_ap = mul(diff_p, diff_p).sum(axis=1)
    d_an = mul(diff_n, diff_n).sum(axis=1)
    return relu(d_ap - d_an + Tensor(np.float32(cfg.margin))).mean()
