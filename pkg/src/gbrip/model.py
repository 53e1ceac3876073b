"""One-hidden-layer MLP with the joint loss, hand-written gradients and SGD.

The hidden ``tanh`` activations are the feature space in which granular
balls are built; the multi-center term pulls them toward their ball
centers, which are held constant during a step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError

PROB_FLOOR = 1e-12
NORM_FLOOR = 1e-8
LAYERS = ("W1", "b1", "W2", "b2")


@dataclass
class ClassifierParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def class_count(self) -> int:
        return self.W2.shape[1]

    def arrays(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> ClassifierParams:
        return ClassifierParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> ClassifierParams:
        return ClassifierParams(*(np.zeros_like(a) for a in self.arrays()))

    @property
    def size(self) -> int:
        return sum(a.size for a in self.arrays())


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda3: float = 0.1

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be non-negative")


def init_params(in_dim, hidden_dim, class_count, seed) -> ClassifierParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (in_dim + hidden_dim))
    a2 = np.sqrt(6.0 / (hidden_dim + class_count))
    return ClassifierParams(
        rng.uniform(-a1, a1, size=(in_dim, hidden_dim)),
        np.zeros(hidden_dim),
        rng.uniform(-a2, a2, size=(hidden_dim, class_count)),
        np.zeros(class_count),
    )


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ClassifierParams, x):
    """Return (hidden rows F(x), probability rows f(x))."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("forward needs a non-empty 2-D batch")
    if x.shape[1] != params.in_dim:
        raise ValueError(f"batch has {x.shape[1]} features, model expects {params.in_dim}")
    h = np.tanh(x @ params.W1 + params.b1)
    return h, softmax(h @ params.W2 + params.b2)


def predict(params, x):
    return forward(params, x)[1].argmax(axis=1)


def loss_ce(f, P) -> float:
    f = np.asarray(f, dtype=np.float64)
    return float(-(P * np.log(np.maximum(f, PROB_FLOOR))).sum(axis=1).mean())


def loss_mc(hidden, centers) -> float:
    """Mean Euclidean distance of each hidden row to its ball center.

    ``centers`` is either one row per sample or a GbSpace over the batch.
    """
    centers = _row_centers(hidden, centers)
    return float(np.linalg.norm(hidden - centers, axis=1).mean())


def loss_pr(P, prior) -> float:
    u = np.asarray(getattr(prior, "values", prior), dtype=np.float64)
    if np.any(u <= 0.0):
        raise ValueError("class prior entries must be strictly positive")
    return float((P * np.log(u)).sum(axis=1).mean())


def _row_centers(hidden, centers):
    if hasattr(centers, "sample_centers"):
        centers = centers.sample_centers()
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != np.shape(hidden):
        raise ValueError("need one ball center per sample")
    return centers


def loss_total(f, hidden, P, prior, centers, weights: LossWeights) -> float:
    total = weights.lambda1 * loss_ce(f, P)
    if weights.lambda2:
        total += weights.lambda2 * loss_mc(hidden, centers)
    if weights.lambda3:
        total += weights.lambda3 * loss_pr(P, prior)
    return total


def loss_and_grads(params, x, P, prior, centers, weights: LossWeights):
    """Total loss and its gradient w.r.t. every parameter array.

    ``P``, ``prior`` and ``centers`` are constants; the prior term therefore
    contributes to the loss value but not to the gradient.
    """
    h, f = forward(params, x)
    B = x.shape[0]
    loss = loss_total(f, h, P, prior, centers, weights)
    # d/dz of -sum_j p_j log softmax_j(z) is (sum_j p_j) f - p
    dz = weights.lambda1 * (P.sum(axis=1, keepdims=True) * f - P) / B
    dh = dz @ params.W2.T
    if weights.lambda2:
        diff = h - _row_centers(h, centers)
        norm = np.maximum(np.linalg.norm(diff, axis=1, keepdims=True), NORM_FLOOR)
        dh = dh + weights.lambda2 * diff / norm / B
    da = dh * (1.0 - h * h)
    grads = ClassifierParams(x.T @ da, da.sum(axis=0), h.T @ dz, dz.sum(axis=0))
    return loss, grads


@dataclass
class SgdState:
    velocity: ClassifierParams
    momentum: float = 0.9
    steps: int = 0


def sgd_state(params, momentum=0.9) -> SgdState:
    return SgdState(params.zeros_like(), momentum)


def backward_step(params, x, P, prior, centers, weights, learning_rate, state: SgdState):
    """One SGD-with-momentum step on the joint loss; returns (new params, loss)."""
    loss, grads = loss_and_grads(params, np.asarray(x, dtype=np.float64), P, prior, centers, weights)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss}")
    for name, g in zip(LAYERS, grads.arrays()):
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in layer {name}")
    new = []
    for name, p, g in zip(LAYERS, params.arrays(), grads.arrays()):
        v = getattr(state.velocity, name)
        v *= state.momentum
        v += g
        new.append(p - learning_rate * v)
    state.steps += 1
    return ClassifierParams(*new), loss


def sample_mix_coef(rng, beta_a=4.0, beta_b=4.0) -> float:
    return float(rng.beta(beta_a, beta_b))


def mixup_batch(xa, xb, Pa, Pb, beta_a=4.0, beta_b=4.0, seed=None, coef=None):
    """Convex combination of two batches and their confidence targets.

    Returns ``(x, P, coef)``; pass ``coef`` to fix the mixing weight.
    """
    xa, xb = np.asarray(xa), np.asarray(xb)
    if xa.shape != xb.shape or np.shape(Pa) != np.shape(Pb):
        raise ValueError("mixup needs equally sized batches")
    if coef is None:
        coef = sample_mix_coef(np.random.default_rng(seed), beta_a, beta_b)
    return coef * xa + (1.0 - coef) * xb, coef * Pa + (1.0 - coef) * Pb, coef


def select_reliable(f, candidates, rho) -> np.ndarray:
    """Per predicted class, keep the max(1, ceil(rho*count)) most confident rows."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    scores = np.where(candidates, f, -np.inf)
    pred = scores.argmax(axis=1)
    conf = scores.max(axis=1)
    keep = np.zeros(pred.shape[0], dtype=bool)
    for c in np.unique(pred):
        rows = np.flatnonzero(pred == c)
        k = max(1, int(np.ceil(rho * rows.size - 1e-12)))
        order = rows[np.argsort(-conf[rows], kind="stable")]
        keep[order[:k]] = True
    return keep


# --- checkpoints -----------------------------------------------------------

CKPT_MAGIC = b"GBPLLCK1\n"


def save_checkpoint(path, params: ClassifierParams, blocks=None, header=None):
    """Text header (shapes, step count, RNG state, ...) then float64 blocks.

    ``blocks`` maps extra names to arrays; they are stored after the four
    layer arrays in insertion order.
    """
    arrays = dict(zip(LAYERS, params.arrays()))
    for name, arr in (blocks or {}).items():
        arrays[name] = np.asarray(arr)
    meta = dict(header or {})
    lines = [f"{k}={json.dumps(v, sort_keys=True)}" for k, v in meta.items()]
    for name, arr in arrays.items():
        shape = "x".join(str(s) for s in arr.shape) or "scalar"
        lines.append(f"block={name}:{shape}")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(("\n".join(lines) + "\n\n").encode("utf-8"))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return (params, blocks dict, header dict)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    if not raw.startswith(CKPT_MAGIC):
        raise DataError(f"{path}: not a GBPLLCK1 checkpoint")
    end = raw.find(b"\n\n", len(CKPT_MAGIC) - 1)
    if end < 0:
        raise DataError(f"{path}: truncated checkpoint header")
    text = raw[len(CKPT_MAGIC):end].decode("utf-8")
    header, specs = {}, []
    for line in text.splitlines():
        key, _, value = line.partition("=")
        if key == "block":
            name, _, shape = value.partition(":")
            dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
            specs.append((name, dims))
        else:
            header[key] = json.loads(value)
    pos = end + 2
    arrays = {}
    for name, dims in specs:
        count = int(np.prod(dims)) if dims else 1
        if pos + 8 * count > len(raw):
            raise DataError(f"{path}: block {name} is truncated")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims).astype(np.float64)
        pos += 8 * count
    if pos != len(raw):
        raise DataError(f"{path}: {len(raw) - pos} trailing bytes after last block")
    missing = [k for k in LAYERS if k not in arrays]
    if missing:
        raise DataError(f"{path}: missing layer blocks {missing}")
    params = ClassifierParams(*(arrays.pop(k) for k in LAYERS))
    return params, arrays, header
