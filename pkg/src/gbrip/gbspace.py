"""Coarse-grained granular-ball partition by recursive 2-means splitting."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels

MAX_LLOYD_ITER = 100


@dataclass(frozen=True, eq=False)
class GranularBall:
    members: np.ndarray
    center: np.ndarray
    radius: float
    degenerate: bool = False

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @classmethod
    def from_members(cls, features, members, degenerate=False):
        members = np.sort(np.asarray(members, dtype=np.int64))
        pts = features[members]
        center = pts.mean(axis=0)
        radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max())
        return cls(members, center, radius, degenerate)


@dataclass(frozen=True, eq=False)
class GbSpace:
    balls: list
    total_count: int
    split_threshold: int
    ball_of: np.ndarray

    @property
    def ball_count(self) -> int:
        return len(self.balls)

    def centers(self) -> np.ndarray:
        return np.array([b.center for b in self.balls])

    def radii(self) -> np.ndarray:
        return np.array([b.radius for b in self.balls])

    def sample_centers(self) -> np.ndarray:
        """Center of each sample's ball, one row per sample."""
        return self.centers()[self.ball_of]

    def size_histogram(self) -> dict:
        sizes = np.array([b.size for b in self.balls])
        values, counts = np.unique(sizes, return_counts=True)
        return dict(zip(values.tolist(), counts.tolist()))


def split_threshold(total_count: int) -> int:
    if total_count < 1:
        raise ValueError("total_count must be >= 1")
    return math.isqrt(total_count - 1) + 1


def two_means(features, members, seed=0):
    """Split ``members`` in two by 2-means from the farthest pair.

    Returns ``(left, right)`` index arrays, or ``None`` when the points
    cannot be separated (all identical, or a cluster emptied).
    """
    members = np.asarray(members, dtype=np.int64)
    if members.shape[0] < 2:
        raise ValueError("two_means needs at least 2 members")
    pts = np.ascontiguousarray(features[members], dtype=np.float64)
    d2, pairs = kernels.farthest_pairs(pts)
    if d2 <= 0.0:
        return None
    if len(pairs) > 1:
        pick = np.random.default_rng(seed).integers(len(pairs))
    else:
        pick = 0
    i, j = pairs[pick]
    labels, _, ok = kernels.lloyd2(pts, pts[i], pts[j], MAX_LLOYD_ITER)
    if not ok:
        return None
    labels = np.asarray(labels, dtype=bool)
    return members[~labels], members[labels]


def build_gb_space(features, seed=0) -> GbSpace:
    """Queue-driven partition: split balls larger than ceil(sqrt(N)) until none remain."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("build_gb_space needs a non-empty 2-D feature table")
    n = features.shape[0]
    limit = split_threshold(n)
    rng = np.random.default_rng(seed)
    queue = deque([np.arange(n)])
    done = []
    while queue:
        ball = queue.popleft()
        if ball.shape[0] <= limit:
            done.append((ball, False))
            continue
        halves = two_means(features, ball, seed=int(rng.integers(2**31)))
        if halves is None:
            done.append((ball, True))
        else:
            queue.extend(halves)

    balls = [GranularBall.from_members(features, m, deg) for m, deg in done]
    balls.sort(key=lambda b: int(b.members[0]))
    ball_of = np.empty(n, dtype=np.int64)
    for k, b in enumerate(balls):
        ball_of[b.members] = k
    return GbSpace(balls, n, limit, ball_of)


def space_from_assignment(features, ball_of, degenerate=None) -> GbSpace:
    """Rebuild a space from a stored sample-to-ball table (checkpoint reload)."""
    features = np.asarray(features, dtype=np.float64)
    ball_of = np.asarray(ball_of, dtype=np.int64)
    k = int(ball_of.max()) + 1
    flags = np.zeros(k, dtype=bool) if degenerate is None else np.asarray(degenerate, dtype=bool)
    balls = [GranularBall.from_members(features, np.flatnonzero(ball_of == b), bool(flags[b])) for b in range(k)]
    n = features.shape[0]
    return GbSpace(balls, n, split_threshold(n), ball_of)
