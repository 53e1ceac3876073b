"""Granular-ball graph: intra-ball edges, gated inter-ball edges, NNLS weights."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .gbspace import GbSpace, GranularBall

NNLS_TOL = 1e-8
SUPPORT_FALLBACK = 1.0


@dataclass(frozen=True, eq=False)
class GbGraph:
    neighbors: list
    recon_weights: list
    support: np.ndarray
    inter_edges: dict = field(default_factory=dict)
    degenerate_edges: int = 0

    @property
    def sample_count(self) -> int:
        return len(self.neighbors)

    def inter_weight(self, i, j):
        """Gated weight between balls i and j (order-free), or None."""
        return self.inter_edges.get((min(i, j), max(i, j)))

    def intra_edges(self):
        """Yield (sample, neighbor, weight) for every positive NNLS weight."""
        for i, (nb, w) in enumerate(zip(self.neighbors, self.recon_weights)):
            for j, wj in zip(nb.tolist(), w.tolist()):
                if wj > 0.0:
                    yield i, j, wj


def intra_neighbors(space: GbSpace, sample: int) -> np.ndarray:
    if not 0 <= sample < space.total_count:
        raise IndexError(f"sample {sample} outside [0, {space.total_count})")
    members = space.balls[space.ball_of[sample]].members
    return members[members != sample]


def _gate(ball_i: GranularBall, ball_j: GranularBall):
    dist = float(np.linalg.norm(ball_i.center - ball_j.center))
    return dist, dist < 2.0 * max(ball_i.radius, ball_j.radius)


def inter_ball_weight(ball_i: GranularBall, ball_j: GranularBall):
    """1/||c_i - c_j|| when the centers are closer than twice the larger radius.

    Returns None when the gate fails, and also when the centers coincide
    (the weight would be infinite); ``build_graph`` counts the latter.
    """
    dist, gated = _gate(ball_i, ball_j)
    if not gated or dist == 0.0:
        return None
    return 1.0 / dist


def reconstruction_weights(features, sample, neighbors) -> np.ndarray:
    """Non-negative w minimising ||x_sample - sum_j w_j x_neighbors[j]||^2."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    if neighbors.size == 0:
        return np.zeros(0)
    if np.any(neighbors == sample):
        raise ValueError("a sample cannot be its own neighbor")
    A = np.asarray(features[neighbors], dtype=np.float64)
    x = np.asarray(features[sample], dtype=np.float64)
    return kernels.nnls_gram(A @ A.T, A @ x, 10 * neighbors.size, NNLS_TOL)


def _ball_weights(features, members):
    q = members.shape[0]
    if q == 1:
        return [(np.zeros(0, dtype=np.int64), np.zeros(0))]
    pts = np.ascontiguousarray(features[members], dtype=np.float64)
    gram = pts @ pts.T
    out = []
    for k in range(q):
        others = np.delete(np.arange(q), k)
        G = np.ascontiguousarray(gram[np.ix_(others, others)])
        w = kernels.nnls_gram(G, gram[others, k], 10 * (q - 1), NNLS_TOL)
        out.append((members[others], w))
    return out


def build_graph(space: GbSpace, features, threads: int = 1) -> GbGraph:
    features = np.asarray(features, dtype=np.float64)
    n = space.total_count
    neighbors = [None] * n
    weights = [None] * n

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_ball = list(pool.map(lambda b: _ball_weights(features, b.members), space.balls))
    else:
        per_ball = [_ball_weights(features, b.members) for b in space.balls]
    for ball, results in zip(space.balls, per_ball):
        for i, (nb, w) in zip(ball.members.tolist(), results):
            neighbors[i] = nb
            weights[i] = w

    total = np.array([w.sum() for w in weights])
    support = np.where(total > 0.0, np.sqrt(np.maximum(total, 0.0)), SUPPORT_FALLBACK)

    inter = {}
    degenerate = 0
    balls = space.balls
    for i in range(len(balls)):
        for j in range(i + 1, len(balls)):
            dist, gated = _gate(balls[i], balls[j])
            if not gated:
                continue
            if dist == 0.0:
                degenerate += 1
                continue
            inter[(i, j)] = 1.0 / dist
    return GbGraph(neighbors, weights, support, inter, degenerate)


def propagate_confidence(graph: GbGraph, P, candidates, alpha: float) -> np.ndarray:
    """Blend each row with the NNLS-weighted mean of its same-ball neighbors.

    The result is re-masked to the candidate set and rescaled so each row
    keeps its original sum.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    P = np.asarray(P, dtype=np.float64)
    if alpha == 0.0:
        return P.copy()
    out = P.copy()
    for i in range(P.shape[0]):
        w = graph.recon_weights[i]
        pos = w > 0.0
        if not pos.any():
            continue
        nb = graph.neighbors[i][pos]
        w = w[pos]
        avg = w @ P[nb] / w.sum()
        row = (1.0 - alpha) * P[i] + alpha * avg
        row = np.where(candidates[i], row, 0.0)
        s = row.sum()
        if s > 0.0:
            out[i] = row * (P[i].sum() / s)
    return out
