"""Square QAM geometries with Gray labels, projection and empirical distributions.

Symbol ``s`` carries the bit label ``format(s, f"0{k}b")``: the high half of the
label is the Gray code of the in-phase level, the low half that of the
quadrature level. Bit mapping is therefore plain binary on the index.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SUPPORTED_ORDERS = (16, 64)


@dataclass(frozen=True)
class ConstellationGeometry:
    order: int
    points: np.ndarray  # (M, 2), unit average power
    labels: tuple[str, ...]

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def min_distance(self) -> float:
        d = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
        return float(d[~np.eye(self.order, dtype=bool)].min())


@dataclass(frozen=True)
class ShapingDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("shaping distribution must be a non-negative vector summing to 1")
        object.__setattr__(self, "probs", p)

    @property
    def order(self) -> int:
        return self.probs.size


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _gray_inverse(g: int) -> int:
    i = 0
    while g:
        i ^= g
        g >>= 1
    return i


def qam_geometry(M: int) -> ConstellationGeometry:
    if M not in SUPPORTED_ORDERS:
        raise ValueError(f"unsupported modulation order {M}; choose from {SUPPORTED_ORDERS}")
    k = int(np.log2(M))
    side = int(np.sqrt(M))
    half = k // 2
    levels = 2.0 * np.arange(side) - (side - 1)
    # unnormalized mean energy of a square grid: 2 (L^2 - 1) / 3
    scale = 1.0 / np.sqrt(2.0 * (side ** 2 - 1) / 3.0)
    points = np.empty((M, 2))
    for s in range(M):
        gi, gq = s >> half, s & ((1 << half) - 1)
        points[s] = levels[_gray_inverse(gi)], levels[_gray_inverse(gq)]
    points *= scale
    points.setflags(write=False)
    labels = tuple(format(s, f"0{k}b") for s in range(M))
    return ConstellationGeometry(order=M, points=points, labels=labels)


def project(points, geometry: ConstellationGeometry) -> np.ndarray:
    """Index of the nearest constellation point; exact ties go to the lowest index."""
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    d = ((x[:, None, :] - geometry.points[None, :, :]) ** 2).sum(axis=-1)
    dmin = d.min(axis=1, keepdims=True)
    return np.argmax(d <= dmin + 1e-12 * np.maximum(1.0, dmin), axis=1)


def count_occurrences(indices, M: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= M):
        raise ValueError(f"symbol index out of range [0, {M})")
    return np.bincount(idx, minlength=M)


def empirical_distribution(counts, n_samples: int | None = None) -> ShapingDistribution:
    c = np.asarray(counts, dtype=float)
    n = c.sum() if n_samples is None else n_samples
    if n <= 0:
        raise ValueError("cannot normalize an empty count vector")
    if n_samples is not None and c.sum() != n_samples:
        raise ValueError(f"counts sum to {c.sum()}, expected {n_samples}")
    return ShapingDistribution(c / n)


def sample_symbols(dist: ShapingDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(dist.order, size=n, p=dist.probs)


def bits_to_symbols(bits, M: int) -> np.ndarray:
    k = int(np.log2(M))
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size % k:
        raise ValueError(f"bit stream length {b.size} is not a multiple of {k}")
    if np.any((b != 0) & (b != 1)):
        raise ValueError("bits must be 0 or 1")
    weights = 1 << np.arange(k - 1, -1, -1)
    return b.reshape(-1, k) @ weights


def symbols_to_bits(indices, M: int) -> np.ndarray:
    k = int(np.log2(M))
    s = np.asarray(indices, dtype=np.int64).ravel()
    if s.size and (s.min() < 0 or s.max() >= M):
        raise ValueError(f"symbol index out of range [0, {M})")
    shifts = np.arange(k - 1, -1, -1)
    return ((s[:, None] >> shifts) & 1).ravel()


def write_geometry_csv(geometry: ConstellationGeometry, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "i", "q", "bits"])
        for s, (i, q) in enumerate(geometry.points):
            w.writerow([s, repr(float(i)), repr(float(q)), geometry.labels[s]])
