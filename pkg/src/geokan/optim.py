"""AdamW and a deterministic full-batch training loop.

The loop is intentionally simple: one loss evaluation per epoch on fixed
point sets, one decoupled-weight-decay Adam step, optional early stopping
on a held-out metric.  Everything is plain numpy on a single flat
parameter vector, so a (seed, config, spec) triple fully determines the
loss trace.
"""

from __future__ import annotations

import ctypes
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import param_gradient


def _keep_heap_buffers():
    """Ask glibc not to hand large freed buffers back to the kernel.

    The training loop allocates and frees the same tens-of-megabytes jet
    arrays every epoch; without this, each epoch pays mmap + page-zeroing
    costs again.  Best effort: silently skipped off glibc.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 30)   # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)   # M_TRIM_THRESHOLD
    except OSError:
        pass


_keep_heap_buffers()


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 1000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0
    patience: int = 0          # 0: early stopping off
    min_delta: float = 0.0
    log_every: int = 100

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.lr <= 0 or self.epochs < 1:
            raise ValueError("need lr > 0 and epochs >= 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @staticmethod
    def fresh(n):
        return AdamState(np.zeros(n), np.zeros(n), 0)


@dataclass
class RunReport:
    label: str = ""
    seed: int = 0
    param_count: int = 0
    epochs_run: int = 0
    final_loss: float = np.nan
    best_loss: float = np.nan
    best_epoch: int = -1
    wall_time: float = 0.0
    aborted: bool = False
    metrics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)   # (epoch, loss) pairs

    def to_json(self):
        d = {k: v for k, v in self.__dict__.items() if k != "trace"}
        d["trace_len"] = len(self.trace)
        return json.dumps(d, indent=2, default=float)

    def trace_csv(self):
        lines = ["epoch,loss"]
        lines += [f"{e},{l:.17g}" for e, l in self.trace]
        return "\n".join(lines) + "\n"


def adamw_step(params, grad, state, config):
    """One decoupled-weight-decay Adam update, in place on `params`."""
    if params.shape != grad.shape:
        raise ValueError("parameter/gradient length mismatch")
    if not np.isfinite(grad).all():
        raise TrainingAborted("non-finite gradient")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    if config.weight_decay:
        params -= config.lr * config.weight_decay * params
    params -= config.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return state


def train(params, loss_fn, config, metric_fn=None, label="",
          on_epoch=None):
    """Optimize a ParamStore in place; returns (params, RunReport).

    loss_fn: store -> (tape, scalar loss node).  metric_fn (optional):
    store -> float, evaluated every epoch; early stopping and best-params
    tracking use it when present, the training loss otherwise.  The best
    parameters seen are restored before returning.  A non-finite loss or
    gradient aborts and restores the last finite state.
    """
    state = AdamState.fresh(len(params.flat))
    report = RunReport(label=label, seed=config.seed,
                       param_count=len(params.flat))
    best_score = np.inf
    best_flat = params.flat.copy()
    last_good = params.flat.copy()
    start = time.time()
    stall = 0
    for epoch in range(config.epochs):
        tape, loss_node = loss_fn(params)
        loss = float(loss_node.val)
        if not np.isfinite(loss):
            report.aborted = True
            params.flat[...] = last_good
            break
        grad = param_gradient(tape, loss_node).values
        last_good = params.flat.copy()
        try:
            adamw_step(params.flat, grad, state, config)
        except TrainingAborted:
            report.aborted = True
            params.flat[...] = last_good
            break
        score = loss if metric_fn is None else float(metric_fn(params))
        report.trace.append((epoch, loss))
        report.epochs_run = epoch + 1
        report.final_loss = loss
        if score < best_score - config.min_delta:
            best_score = score
            report.best_loss = score
            report.best_epoch = epoch
            best_flat = params.flat.copy()
            stall = 0
        else:
            stall += 1
        if on_epoch is not None:
            on_epoch(epoch, loss, score)
        if config.patience and stall >= config.patience:
            break
    params.flat[...] = best_flat
    report.wall_time = time.time() - start
    if np.isnan(report.best_loss):
        report.best_loss = report.final_loss
    return params, report
