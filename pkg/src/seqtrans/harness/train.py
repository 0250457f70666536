"""Per-utterance training with global-norm clipping.

Two update rules: plain gradient descent (``sgd``) and Adam (``adam``). Both
use a fixed learning rate and clip the gradient before the update.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..numerics import Tape
from .config import TrainConfig
from .data import Utterance
from .models import Model, loss_node

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: Model
    epoch_losses: List[float] = field(default_factory=list)  # mean loss per epoch
    seconds: float = 0.0

    def smoothed(self, window: int = 2) -> List[float]:
        out = []
        for i in range(len(self.epoch_losses)):
            chunk = self.epoch_losses[max(0, i - window + 1) : i + 1]
            out.append(sum(chunk) / len(chunk))
        return out


def loss_and_grads(model: Model, X: np.ndarray, target: List[int]):
    tape = Tape()
    P = {k: tape.leaf(v) for k, v in model.params.items()}
    loss = loss_node(tape, model, P, tape.leaf(X), target)
    return loss.item(), tape.grad(loss, P)


def clip_(grads, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class Optimizer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, params, grads) -> None:
        lr = self.cfg.lr
        if self.cfg.optimizer == "sgd":
            for k, g in grads.items():
                params[k] = params[k] - lr * g
            return
        b1, b2, eps = self.cfg.adam_beta1, self.cfg.adam_beta2, 1e-8
        self.t += 1
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for k, g in grads.items():
            m = self.m[k] = b1 * self.m.get(k, 0.0) + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v.get(k, 0.0) + (1.0 - b2) * g * g
            params[k] = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + eps)


def train(
    model: Model,
    utterances: Sequence[Utterance],
    cfg: TrainConfig,
    progress: Optional[Callable[[int, float], None]] = None,
) -> TrainResult:
    """Train ``model`` in place; utterances are visited in a seeded shuffle.

    Raises :class:`TrainingDiverged` on a non-finite training loss.
    """
    rng = np.random.default_rng(cfg.seed)
    targets = [model.targets(u.text) for u in utterances]
    result = TrainResult(model)
    opt = Optimizer(cfg)
    start = time.perf_counter()
    for epoch in range(cfg.epochs):
        total = 0.0
        order = rng.permutation(len(utterances))
        if epoch == 0 and cfg.sorted_first_epoch:
            # short utterances first: alignments are found faster
            order = sorted(range(len(utterances)), key=lambda i: (len(utterances[i].features), i))
        for i in order:
            loss, grads = loss_and_grads(model, utterances[i].features, targets[i])
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch + 1}, utterance {utterances[i].utt_id}"
                )
            total += loss
            if cfg.lr == 0.0:
                continue
            clip_(grads, cfg.clip_norm)
            opt.step(model.params, grads)
        mean = total / max(len(utterances), 1)
        result.epoch_losses.append(mean)
        log.info("%s epoch %d loss %.4f", model.method, epoch + 1, mean)
        if progress is not None:
            progress(epoch + 1, mean)
    result.seconds = time.perf_counter() - start
    return result
