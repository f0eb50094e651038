"""Adam-based stochastic optimization of the coordinate field."""
from __future__ import annotations

import time
from dataclasses import dataclass, field as dataclass_field
from typing import List, Optional

import numpy as np

from .energies import FDConfig, MollifierParams, WeightingFunction, loss_with_gradient, _fd_loss
from .errors import EmptyBatch
from .geometry import sample_inside

LOSS_KINDS = ("tv", "weighted_tv", "dirichlet")


@dataclass
class LrDecay:
    factor: float
    every_n_steps: int

    def __post_init__(self):
        if not 0 < self.factor <= 1 or self.every_n_steps < 1:
            raise ValueError("decay factor must be in (0,1], cadence >= 1")


@dataclass
class TrainConfig:
    steps: int = 2000
    learning_rate: float = 1e-3
    batch_size: int = 3000
    loss: str = "tv"
    lr_decay: Optional[LrDecay] = None
    rng_seed: int = 0
    checkpoint_every: int = 250

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")

    @classmethod
    def defaults(cls, d, loss="tv", rng_seed=0):
        if d == 2:
            return cls(steps=2000, learning_rate=1e-3, batch_size=3000,
                       loss=loss, rng_seed=rng_seed)
        return cls(steps=3000, learning_rate=5e-4, batch_size=2000,
                   loss=loss, rng_seed=rng_seed)

    def to_json_dict(self):
        out = {
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "loss": self.loss,
            "rng_seed": self.rng_seed,
            "checkpoint_every": self.checkpoint_every,
        }
        if self.lr_decay is not None:
            out["lr_decay"] = {"factor": self.lr_decay.factor,
                               "every_n_steps": self.lr_decay.every_n_steps}
        return out

    @classmethod
    def from_json_dict(cls, data):
        data = dict(data)
        decay = data.pop("lr_decay", None)
        if decay is not None:
            decay = LrDecay(**decay)
        return cls(lr_decay=decay, **data)


class AdamState:
    """First/second moment accumulators for one list of parameter arrays."""

    def __init__(self, arrays, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.step = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.skipped = 0


def adam_step(params, grads, state: AdamState, lr):
    """Standard bias-corrected Adam update, in place on `params`.

    Arrays whose gradient contains non-finite entries are left untouched and
    counted in state.skipped."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            state.skipped += 1
            continue
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= lr * update
    return params, state


@dataclass
class TrainResult:
    losses: List[float]
    steps: List[int]
    wall_times: List[float]
    eval_steps: List[int] = dataclass_field(default_factory=list)
    eval_losses: List[float] = dataclass_field(default_factory=list)
    aborted: bool = False
    skipped_updates: int = 0

    def history_rows(self):
        return list(zip(self.steps, self.losses, self.wall_times))


def current_lr(cfg: TrainConfig, step):
    if cfg.lr_decay is None:
        return cfg.learning_rate
    return cfg.learning_rate * cfg.lr_decay.factor ** (step // cfg.lr_decay.every_n_steps)


def train(field, cfg: TrainConfig, fdcfg: Optional[FDConfig] = None,
          moll: Optional[MollifierParams] = None,
          psi: Optional[WeightingFunction] = None,
          eval_batch=None, checkpoint_callback=None):
    """Run cfg.steps Adam updates on fresh interior batches.

    Mollification is active for every training evaluation; the returned
    field's plain `evaluate` stays exact. With `eval_batch` given, a
    no-gradient loss on that fixed batch is recorded at checkpoint cadence.
    `checkpoint_callback(step, field)` fires at the same cadence."""
    fdcfg = fdcfg or FDConfig()
    moll = moll or field.mollifier
    rng = np.random.default_rng(cfg.rng_seed)
    state = AdamState(field.params.arrays())
    result = TrainResult([], [], [])
    last_good = field.params.copy_arrays()
    t0 = time.perf_counter()

    def eval_heldout(step):
        if eval_batch is None:
            return
        loss, _ = _fd_loss(field, eval_batch, fdcfg, moll, _loss_kind(cfg.loss),
                           psi=_loss_psi(cfg.loss, psi))
        result.eval_steps.append(step)
        result.eval_losses.append(loss)

    eval_heldout(0)
    for step in range(1, cfg.steps + 1):
        loss = grads = None
        for _ in range(50):
            batch = sample_inside(field.cage, cfg.batch_size, rng)
            try:
                loss, grads = loss_with_gradient(field, batch, fdcfg, moll,
                                                 cfg.loss, psi=psi)
                break
            except EmptyBatch:
                continue
        if loss is None:
            raise EmptyBatch("could not draw a usable batch in 50 attempts")
        if not np.isfinite(loss):
            field.params.load_arrays(last_good)
            result.aborted = True
            break
        adam_step(field.params.arrays(), grads, state, current_lr(cfg, step))
        result.steps.append(step)
        result.losses.append(float(loss))
        result.wall_times.append(time.perf_counter() - t0)
        if step % cfg.checkpoint_every == 0 or step == cfg.steps:
            last_good = field.params.copy_arrays()
            eval_heldout(step)
            if checkpoint_callback is not None:
                checkpoint_callback(step, field)
    result.skipped_updates = state.skipped
    return field, result


def _loss_kind(loss):
    return "dirichlet" if loss == "dirichlet" else "tv"


def _loss_psi(loss, psi):
    if loss != "weighted_tv":
        return None
    psi = psi or WeightingFunction()
    return None if psi.c == 1.0 else psi
