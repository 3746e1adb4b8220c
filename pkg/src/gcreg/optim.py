"""Momentum SGD with gated L2 (coupled into the gradient) or L1 (proximal) regularization."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import regularization as reg
from .errors import DomainError
from .regularization import RegKind, RegSchedule
from .tensor import Rng


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.05
    momentum: float = 0.9
    lr_halving_period: int = 30

    def __post_init__(self):
        if not self.lr > 0:
            raise DomainError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise DomainError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.lr_halving_period < 1:
            raise DomainError(f"lr_halving_period must be >= 1, got {self.lr_halving_period}")


@dataclass
class OptimState:
    vel_w: list
    vel_b: list
    step: int = 0
    epoch: int = 0

    @classmethod
    def for_network(cls, net: nn.Network) -> "OptimState":
        dense = net.dense_layers
        return cls([np.zeros_like(l.W) for l in dense], [np.zeros_like(l.b) for l in dense])


@dataclass
class StepMetrics:
    loss: float
    avg_abs_grad: float
    layer_avg_abs_grad: list
    pi: float | None
    effective_lambda: float
    grad_fraction: float
    batch_size: int = 0


def lr_at(config: OptimizerConfig, epoch: int) -> float:
    if epoch < 0:
        raise DomainError(f"epoch must be >= 0, got {epoch}")
    return config.lr * 2.0 ** -(epoch // config.lr_halving_period)


def gradient_fraction(avg_grad: float, lam: float, avg_pen_grad: float) -> float:
    reg_part = lam * avg_pen_grad
    if reg_part == 0:
        return 1.0
    return avg_grad / (avg_grad + reg_part)


def train_step(net: nn.Network, batch, state: OptimState, config: OptimizerConfig,
               sched: RegSchedule, rng: Rng | None = None,
               view: nn.FlatParamView | None = None) -> StepMetrics:
    view = view or nn.FlatParamView(net)
    loss = nn.loss_and_grad(net, batch, rng)
    dense = net.dense_layers

    g_flat = nn.gather_flat(view, net, "grads")
    w_flat = nn.gather_flat(view, net, "params")
    pen_grad = reg.penalty_grad(w_flat, sched.kind)

    # pi is measured against the base strength, whether or not this step applies it
    pi = None
    if sched.lam > 0:
        pi = reg.coherence_rate(g_flat, sched.lam * pen_grad).pi
    lam_t = reg.effective_lambda(sched, state.epoch, pi)

    abs_g = np.abs(g_flat)
    avg_grad = float(np.sum(abs_g) / view.n)
    layer_grad = [float(np.sum(abs_g[sl]) / (sl.stop - sl.start)) for sl in view.slices()]
    frac = gradient_fraction(avg_grad, lam_t, float(np.sum(np.abs(pen_grad)) / view.n))

    alpha = lr_at(config, state.epoch)
    beta = config.momentum
    coupled = sched.kind is RegKind.L2 and lam_t > 0
    for i, layer in enumerate(dense):
        g = layer.dW + lam_t * 2.0 * layer.W if coupled else layer.dW
        state.vel_w[i] = beta * state.vel_w[i] - alpha * g
        layer.W = layer.W + state.vel_w[i]
        state.vel_b[i] = beta * state.vel_b[i] - alpha * layer.db
        layer.b = layer.b + state.vel_b[i]

    if sched.kind is RegKind.L1 and lam_t > 0:
        w_half = nn.gather_flat(view, net, "params")
        nn.scatter_flat(view, net, reg.prox_step(w_half, alpha * lam_t))

    state.step += 1
    return StepMetrics(loss, avg_grad, layer_grad, pi, lam_t, frac, len(batch[1]))


def run_epoch(net: nn.Network, dataset, state: OptimState, config: OptimizerConfig,
              sched: RegSchedule, rng: Rng, batch_size: int = 128) -> dict:
    """One pass over ``dataset`` in shuffled minibatches; returns epoch averages.

    Shuffling and dropout draw from ``rng`` substreams labelled by the epoch
    number, so a run is reproducible from the root seed alone.
    """
    from .data import batches

    view = nn.FlatParamView(net)
    epoch = state.epoch
    dropout_rng = rng.fork(f"dropout/{epoch}")
    steps = [train_step(net, b, state, config, sched, dropout_rng, view)
             for b in batches(dataset, batch_size, rng.fork(f"shuffle/{epoch}"))]
    state.epoch += 1

    sizes = np.array([s.batch_size for s in steps], dtype=np.float64)
    pis = [s.pi for s in steps if s.pi is not None]
    n_layers = len(steps[0].layer_avg_abs_grad)
    return {
        "epoch": epoch,
        "train_loss": float(np.dot(sizes, [s.loss for s in steps]) / sizes.sum()),
        "avg_abs_grad": float(np.mean([s.avg_abs_grad for s in steps])),
        "layer_avg_abs_grad": [float(np.mean([s.layer_avg_abs_grad[k] for s in steps]))
                               for k in range(n_layers)],
        "pi": float(np.mean(pis)) if pis else None,
        "grad_fraction": float(np.mean([s.grad_fraction for s in steps])),
        "effective_lambda_mean": float(np.mean([s.effective_lambda for s in steps])),
        "steps": len(steps),
    }
