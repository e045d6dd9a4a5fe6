"""Link quality metrics on symbol streams and I/Q point streams. All logs are base 2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import ShapingDistribution


@dataclass(frozen=True)
class JointHistogram:
    counts: np.ndarray  # (M, M), tx row, rx column

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_indices(cls, tx, rx, M: int) -> "JointHistogram":
        tx = np.asarray(tx, dtype=np.int64).ravel()
        rx = np.asarray(rx, dtype=np.int64).ravel()
        if tx.shape != rx.shape:
            raise ValueError("tx and rx index streams must have equal length")
        if tx.size == 0:
            raise ValueError("empty symbol streams")
        for s in (tx, rx):
            if s.min() < 0 or s.max() >= M:
                raise ValueError(f"symbol index out of range [0, {M})")
        counts = np.bincount(tx * M + rx, minlength=M * M).reshape(M, M)
        return cls(counts)


def _plugin_mi(counts: np.ndarray) -> float:
    p = counts / counts.sum()
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float(np.sum(p[nz] * np.log2(p[nz] / (px @ py)[nz])))
    return max(mi, 0.0)


def mutual_information(tx_indices, rx_indices, M: int) -> float:
    """Plug-in MI (bits) of the empirical joint distribution of sent and decided symbols."""
    return _plugin_mi(JointHistogram.from_indices(tx_indices, rx_indices, M).counts)


def _cos(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero-norm component vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_similarity(tx_points, rx_points) -> float:
    """Mean of the I-component and Q-component cosine similarities."""
    a = np.asarray(tx_points, dtype=float).reshape(-1, 2)
    b = np.asarray(rx_points, dtype=float).reshape(-1, 2)
    if a.shape != b.shape:
        raise ValueError("point streams must have equal length")
    return 0.5 * (_cos(a[:, 0], b[:, 0]) + _cos(a[:, 1], b[:, 1]))


def symbol_error_rate(tx_indices, rx_indices) -> float:
    tx = np.asarray(tx_indices).ravel()
    rx = np.asarray(rx_indices).ravel()
    if tx.shape != rx.shape:
        raise ValueError("tx and rx index streams must have equal length")
    if tx.size == 0:
        raise ValueError("empty symbol streams")
    return float(np.mean(tx != rx))


def entropy(dist: ShapingDistribution | np.ndarray) -> float:
    p = dist.probs if isinstance(dist, ShapingDistribution) else np.asarray(dist, dtype=float)
    nz = p > 0
    return float(-np.sum(p[nz] * np.log2(p[nz])) + 0.0)


def total_variation(p, q) -> float:
    p = p.probs if isinstance(p, ShapingDistribution) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, ShapingDistribution) else np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p - q).sum())
