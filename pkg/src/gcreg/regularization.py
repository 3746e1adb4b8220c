"""L1/L2 penalties, the soft-threshold prox, gradient sign coherence and lambda gates."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, UsageError


class RegKind(str, enum.Enum):
    L1 = "l1"
    L2 = "l2"


class Gate(str, enum.Enum):
    CONSTANT = "constant"
    EPOCH = "epoch"
    COHERENCE = "coherence"


@dataclass(frozen=True)
class RegSchedule:
    """Regularizer kind, base strength and the rule that switches it on.

    ``gamma`` is the first regularized epoch (epoch gate); ``mu`` is the
    coherence threshold (coherence gate).  Both are ignored by other gates.
    """

    kind: RegKind = RegKind.L2
    lam: float = 0.0
    gate: Gate = Gate.CONSTANT
    gamma: int = 5
    mu: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "kind", RegKind(self.kind))
        object.__setattr__(self, "gate", Gate(self.gate))
        if not self.lam >= 0:
            raise DomainError(f"lambda must be non-negative, got {self.lam}")
        if self.gamma < 0:
            raise DomainError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.mu <= 1.0:
            raise DomainError(f"mu must lie in [0, 1], got {self.mu}")


@dataclass(frozen=True)
class CoherenceReport:
    pi: float
    counted: int
    total: int


def penalty_value(w, kind) -> float:
    w = np.asarray(w, dtype=np.float64)
    if RegKind(kind) is RegKind.L2:
        return float(np.sum(w * w))
    return float(np.sum(np.abs(w)))


def penalty_grad(w, kind) -> np.ndarray:
    """2w for L2, sign(w) for L1 (0 at w == 0)."""
    w = np.asarray(w, dtype=np.float64)
    if RegKind(kind) is RegKind.L2:
        return 2.0 * w
    return np.sign(w)


def soft_threshold(a: float, z: float) -> float:
    if z < 0:
        raise DomainError(f"threshold must be non-negative, got {z}")
    if a > z:
        return a - z
    if a < -z:
        return a + z
    return 0.0


def prox_step(w, threshold: float) -> np.ndarray:
    """Element-wise soft threshold; entries with |w| <= threshold become exactly 0."""
    if threshold < 0:
        raise DomainError(f"threshold must be non-negative, got {threshold}")
    w = np.asarray(w, dtype=np.float64)
    if threshold == 0:
        return w.copy()
    out = np.where(w > threshold, w - threshold, 0.0)
    return np.where(w < -threshold, w + threshold, out)


def coherence_rate(g_loss, g_reg_scaled) -> CoherenceReport:
    """Fraction of coordinates whose total-gradient sign agrees with the loss-gradient sign.

    ``g_reg_scaled`` must already carry the lambda factor.  Coordinates with a
    zero loss gradient are left out; a zero total gradient counts as a
    disagreement.  With nothing left to count the rate is 1.
    """
    g = np.asarray(g_loss, dtype=np.float64)
    r = np.asarray(g_reg_scaled, dtype=np.float64)
    if g.shape != r.shape:
        raise DimensionError(f"gradient shapes differ: {g.shape} vs {r.shape}")
    live = g != 0
    counted = int(np.count_nonzero(live))
    if counted == 0:
        return CoherenceReport(1.0, 0, g.size)
    agree = np.sign(g[live]) * np.sign(g[live] + r[live]) > 0
    return CoherenceReport(float(np.count_nonzero(agree)) / counted, counted, g.size)


def effective_lambda(sched: RegSchedule, epoch: int, pi: float | None = None) -> float:
    if sched.gate is Gate.CONSTANT:
        return sched.lam
    if sched.gate is Gate.EPOCH:
        return sched.lam if epoch >= sched.gamma else 0.0
    if pi is None:
        raise UsageError("coherence gate needs a coherence rate")
    return sched.lam if pi > sched.mu else 0.0
