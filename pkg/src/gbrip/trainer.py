"""Two-phase training loop: prior pre-estimation, then the main run."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from .data import TrainView
from .disambig import (
    ClassPrior,
    init_confidence,
    init_uniform_prior,
    update_confidence,
    update_prior,
)
from .errors import DataError, NumericalError
from .gbgraph import GbGraph, _gate, build_graph, propagate_confidence
from .gbspace import GbSpace, GranularBall, build_gb_space, split_threshold

# Floor applied to the prior before tempering; the moving average can drive
# a never-predicted class toward (and eventually to) zero.
PRIOR_FLOOR = 1e-8


@dataclass
class TrainConfig:
    epochs: int = 200
    pre_epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.05
    cosine_decay: bool = True
    sgd_momentum: float = 0.9
    hidden_dim: int = 16
    lambda1: float = 0.5
    lambda2: float = 0.05
    lambda3: float = 0.1
    prior_momentum_phase1: float = 0.1
    prior_momentum_phase2: float = 0.01
    rho_start: float = 0.2
    rho_end: float = 0.5
    rho_ramp_epochs: int = 50
    rebuild_every: int = 5
    use_graph: bool = True
    propagate: bool = True
    propagate_alpha: float = 0.5
    confidence_mode: str = "gbrip"
    mixup_enabled: bool = True
    mixup_alpha: float = 4.0
    selection_enabled: bool = True
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.epochs < 0 or self.pre_epochs < 0 or self.epochs + self.pre_epochs < 1:
            problems.append("need at least one epoch in total")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.rebuild_every < 1:
            problems.append("rebuild_every must be >= 1")
        for name in ("prior_momentum_phase1", "prior_momentum_phase2", "rho_start", "rho_end", "propagate_alpha"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            problems.append("loss weights must be non-negative")
        if self.confidence_mode not in ("gbrip", "uniform"):
            problems.append("confidence_mode must be 'gbrip' or 'uniform'")
        if self.hidden_dim < 1 or self.threads < 1:
            problems.append("hidden_dim and threads must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def loss_weights(self) -> M.LossWeights:
        return M.LossWeights(self.lambda1, self.lambda2, self.lambda3)

    @classmethod
    def long_schedule(cls, **overrides):
        """Long schedule (1000 epochs, batch 256) with the heavier multi-center weight."""
        base = dict(epochs=1000, pre_epochs=100, batch_size=256, learning_rate=0.01, lambda2=0.5)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> TrainConfig:
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in dataclasses.fields(self))

    @classmethod
    def from_text(cls, text, source="<config>") -> TrainConfig:
        return cls(**parse_config_text(text, source))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def config_field_types():
    return {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def coerce_config_value(name, raw, source="<config>"):
    types = config_field_types()
    if name not in types:
        raise DataError(f"{source}: unknown config key {name!r}")
    kind = types[name]
    try:
        if kind == "bool":
            low = str(raw).strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise DataError(f"{source}: bad value for {name}: {raw!r}") from None


def parse_config_text(text, source="<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise DataError(f"{source}:{lineno}: expected key=value")
        values[key.strip()] = coerce_config_value(key.strip(), raw.strip(), f"{source}:{lineno}")
    return values


def rho_at(epoch, config: TrainConfig) -> float:
    if config.rho_ramp_epochs <= 0 or epoch >= config.rho_ramp_epochs:
        return config.rho_end
    frac = epoch / config.rho_ramp_epochs
    return config.rho_start + frac * (config.rho_end - config.rho_start)


def lr_at(epoch, config: TrainConfig, epochs=None) -> float:
    total = config.epochs if epochs is None else epochs
    if not config.cosine_decay or total <= 0:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * epoch / total))


@dataclass
class TrainState:
    """Everything needed to continue training from an epoch boundary."""

    phase: int
    epoch: int
    params: M.ClassifierParams
    sgd: M.SgdState
    prior: ClassPrior
    P: np.ndarray | None = None
    space: GbSpace | None = None
    graph: GbGraph | None = None
    support: np.ndarray | None = None
    phase2_prior: list | None = None


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    phase2_initial_prior: list | None = None
    phase1_final_prior: list | None = None
    checkpoint_path: str | None = None

    def summary(self) -> dict:
        last = self.records[-1] if self.records else {}
        return {
            "type": "summary",
            "epochs_completed": len(self.records),
            "final_loss": last.get("loss"),
            "final_prior": last.get("prior"),
            "phase1_final_prior": self.phase1_final_prior,
            "phase2_initial_prior": self.phase2_initial_prior,
            "checkpoint": self.checkpoint_path,
        }

    def to_jsonl(self) -> str:
        rows = [dict(type="epoch", **r) for r in self.records] + [self.summary()]
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def _phase_epochs(config, phase):
    return config.pre_epochs if phase == 1 else config.epochs


def _phase_momentum(config, phase):
    return config.prior_momentum_phase1 if phase == 1 else config.prior_momentum_phase2


def _fresh_phase_state(view, config, phase, prior):
    params = M.init_params(view.features.shape[1], config.hidden_dim, view.class_count, [config.seed, phase, 0x1217])
    return TrainState(
        phase=phase,
        epoch=0,
        params=params,
        sgd=M.sgd_state(params, config.sgd_momentum),
        prior=prior.with_momentum(_phase_momentum(config, phase)),
    )


def _uniform_confidence(candidates):
    S = candidates.astype(np.float64)
    return S / S.sum(axis=1, keepdims=True)


class Trainer:
    def __init__(self, view: TrainView, config: TrainConfig, monitor=None):
        if not isinstance(view, TrainView):
            raise TypeError("train() takes a TrainView; use PllDataset.train_view()")
        if view.sample_count == 0:
            raise ValueError("cannot train on an empty dataset")
        self.view = view
        self.config = config
        self.monitor = monitor
        self.weights = config.loss_weights
        self.report = TrainReport()

    @property
    def needs_space(self):
        return self.config.use_graph or self.weights.lambda2 > 0

    def start(self) -> TrainState:
        prior = init_uniform_prior(self.view.class_count)
        first = 1 if self.config.pre_epochs > 0 else 2
        state = _fresh_phase_state(self.view, self.config, first, prior)
        if first == 2:
            state.phase2_prior = state.prior.values.tolist()
            self.report.phase2_initial_prior = state.phase2_prior
        return state

    def _rebuild(self, state, hidden):
        cfg = self.config
        state.space = build_gb_space(hidden, seed=[cfg.seed, state.phase, state.epoch, 0x6B])
        if cfg.use_graph:
            state.graph = build_graph(state.space, hidden, threads=cfg.threads)
            state.support = state.graph.support
        else:
            state.graph = None
            state.support = np.ones(self.view.sample_count)

    def run_epoch(self, state: TrainState) -> TrainState:
        cfg, view = self.config, self.view
        S = view.candidates
        X = view.features
        n = view.sample_count
        n_epochs = _phase_epochs(cfg, state.phase)

        if state.epoch % cfg.rebuild_every == 0 or (self.needs_space and state.space is None):
            if self.needs_space:
                hidden, _ = M.forward(state.params, X)
                self._rebuild(state, hidden)
            else:
                state.support = np.ones(n)
        if state.support is None:
            state.support = np.ones(n)
        if state.P is None:
            if cfg.confidence_mode == "uniform":
                state.P = _uniform_confidence(S)
            else:
                _, f_all = M.forward(state.params, X)
                state.P = init_confidence(S, f_all, state.support)

        centers_all = state.space.sample_centers() if self.weights.lambda2 > 0 else None
        rng = np.random.default_rng([cfg.seed, state.phase, state.epoch, 0xE90C])
        order = rng.permutation(n)
        lr = lr_at(state.epoch, cfg, n_epochs)
        rho = rho_at(state.epoch, cfg)
        batch_losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            if cfg.selection_enabled:
                _, f_b = M.forward(state.params, X[idx])
                idx = idx[M.select_reliable(f_b, S[idx], rho)]
            x_b, P_b = X[idx], state.P[idx]
            c_b = centers_all[idx] if centers_all is not None else None
            if cfg.mixup_enabled and idx.size > 1:
                perm = rng.permutation(idx.size)
                m = M.sample_mix_coef(rng, cfg.mixup_alpha, cfg.mixup_alpha)
                x_b, P_b, _ = M.mixup_batch(x_b, x_b[perm], P_b, P_b[perm], coef=m)
                if c_b is not None:
                    c_b = m * c_b + (1.0 - m) * c_b[perm]
            try:
                state.params, loss = M.backward_step(
                    state.params, x_b, P_b, self._safe_prior(state), c_b, self.weights, lr, state.sgd
                )
            except NumericalError as exc:
                raise NumericalError(f"phase {state.phase} epoch {state.epoch} batch {b}: {exc}") from None
            batch_losses.append(loss)

        hidden, f_all = M.forward(state.params, X)
        if cfg.confidence_mode == "gbrip":
            state.P = update_confidence(S, f_all, state.support, self._safe_prior(state), self.weights.lambda3)
            if cfg.use_graph and cfg.propagate and state.graph is not None:
                state.P = propagate_confidence(state.graph, state.P, S, cfg.propagate_alpha)
        state.prior = update_prior(state.prior, S, f_all)

        comps = {"ce": M.loss_ce(f_all, state.P)}
        if centers_all is not None:
            comps["mc"] = M.loss_mc(hidden, centers_all)
        comps["pr"] = M.loss_pr(state.P, self._safe_prior(state))
        loss = float(np.mean(batch_losses))
        if not np.isfinite(loss):
            raise NumericalError(f"phase {state.phase} epoch {state.epoch}: non-finite loss")
        record = {
            "phase": state.phase,
            "epoch": state.epoch,
            "loss": loss,
            "components": comps,
            "lr": lr,
            "rho": rho,
            "prior": state.prior.values.tolist(),
            "ball_count": state.space.ball_count if state.space is not None else 0,
        }
        if self.monitor is not None:
            record.update(self.monitor(state, f_all))
        self.report.records.append(record)
        state.epoch += 1
        return self._advance(state)

    def _safe_prior(self, state):
        return np.maximum(state.prior.values, PRIOR_FLOOR)

    def _advance(self, state):
        if state.phase == 1 and state.epoch >= _phase_epochs(self.config, 1):
            self.report.phase1_final_prior = state.prior.values.tolist()
            nxt = _fresh_phase_state(self.view, self.config, 2, state.prior)
            nxt.phase2_prior = nxt.prior.values.tolist()
            self.report.phase2_initial_prior = nxt.phase2_prior
            return nxt
        return state

    def finished(self, state) -> bool:
        return state.phase == 2 and state.epoch >= self.config.epochs

    def run(self, state=None, max_epochs=None):
        state = self.start() if state is None else state
        done = 0
        while not self.finished(state):
            if max_epochs is not None and done >= max_epochs:
                break
            state = self.run_epoch(state)
            done += 1
        return state


def train(view: TrainView, config: TrainConfig, monitor=None, resume: TrainState | None = None, max_epochs=None):
    """Run (or continue) training; returns (params, report, final state)."""
    trainer = Trainer(view, config, monitor)
    if resume is not None and resume.phase2_prior is not None:
        trainer.report.phase2_initial_prior = resume.phase2_prior
    state = trainer.run(resume, max_epochs)
    return state.params, trainer.report, state


# --- checkpoint round trip ----------------------------------------------------


def save_state(path, state: TrainState, config: TrainConfig, extra_header=None):
    blocks = {f"velocity_{k}": v for k, v in zip(M.LAYERS, state.sgd.velocity.arrays())}
    blocks["prior"] = state.prior.values
    if state.P is not None:
        blocks["confidence"] = state.P
    if state.support is not None:
        blocks["support"] = state.support
    if state.space is not None:
        sp = state.space
        blocks["ball_of"] = sp.ball_of.astype(np.float64)
        blocks["ball_centers"] = sp.centers()
        blocks["ball_radii"] = sp.radii()
        blocks["ball_degenerate"] = np.array([b.degenerate for b in sp.balls], dtype=np.float64)
    if state.graph is not None:
        edges = [(i, j, w) for i, nb in enumerate(state.graph.neighbors) for j, w in zip(nb, state.graph.recon_weights[i])]
        blocks["recon_edges"] = np.array(edges, dtype=np.float64).reshape(-1, 3)
    header = {
        "phase": state.phase,
        "epoch": state.epoch,
        "steps": state.sgd.steps,
        "sgd_momentum": state.sgd.momentum,
        "prior_momentum": state.prior.momentum,
        "rng": {"seed": config.seed, "phase": state.phase, "epoch": state.epoch},
        "phase2_prior": state.phase2_prior,
        "config": {f.name: getattr(config, f.name) for f in dataclasses.fields(config)},
    }
    header.update(extra_header or {})
    M.save_checkpoint(path, state.params, blocks, header)


def load_state(path, n_samples=None):
    """Return (TrainState, TrainConfig, header) from a checkpoint file."""
    params, blocks, header = M.load_checkpoint(path)
    config = TrainConfig(**header["config"])
    velocity = M.ClassifierParams(*(blocks[f"velocity_{k}"] for k in M.LAYERS))
    sgd = M.SgdState(velocity, header["sgd_momentum"], header["steps"])
    prior = ClassPrior(blocks["prior"], header["prior_momentum"])
    state = TrainState(header["phase"], header["epoch"], params, sgd, prior)
    state.P = blocks.get("confidence")
    state.support = blocks.get("support")
    state.phase2_prior = header.get("phase2_prior")
    if "ball_of" in blocks:
        ball_of = blocks["ball_of"].astype(np.int64)
        centers, radii = blocks["ball_centers"], blocks["ball_radii"]
        flags = blocks["ball_degenerate"].astype(bool)
        balls = [
            GranularBall(np.flatnonzero(ball_of == k), centers[k], float(radii[k]), bool(flags[k]))
            for k in range(centers.shape[0])
        ]
        state.space = GbSpace(balls, ball_of.shape[0], split_threshold(ball_of.shape[0]), ball_of)
    if "recon_edges" in blocks and state.space is not None:
        state.graph = _graph_from_edges(blocks["recon_edges"], state.space, state.support)
    if n_samples is not None and state.P is not None and state.P.shape[0] != n_samples:
        raise DataError(f"{path}: checkpoint holds {state.P.shape[0]} samples, data has {n_samples}")
    return state, config, header


def _graph_from_edges(edges, space, support):
    n = space.total_count
    neighbors = [[] for _ in range(n)]
    weights = [[] for _ in range(n)]
    for i, j, w in edges:
        neighbors[int(i)].append(int(j))
        weights[int(i)].append(w)
    # inter-ball edges are a pure function of centers/radii; recompute them
    inter, degenerate = {}, 0
    for a in range(space.ball_count):
        for b in range(a + 1, space.ball_count):
            dist, gated = _gate(space.balls[a], space.balls[b])
            if gated and dist == 0.0:
                degenerate += 1
            elif gated:
                inter[(a, b)] = 1.0 / dist
    return GbGraph(
        [np.array(nb, dtype=np.int64) for nb in neighbors],
        [np.array(w, dtype=np.float64) for w in weights],
        np.asarray(support, dtype=np.float64),
        inter,
        degenerate,
    )
