"""Hedge (exponential weights) with losses in [0, 1], plus the shift-and-scale
transform that brings a [-B, B] payoff vector into that range.

Weights are kept in the log domain so long horizons cannot underflow; the
observable normalized weights are unchanged by the stabilization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LOSS_TOL = 1e-12


@dataclass(frozen=True)
class HedgeState:
    """Exponential-weights state over k coordinates for a T-round horizon."""

    log_weights: np.ndarray
    beta: float
    t: int = 0

    @classmethod
    def create(cls, k: int, horizon: int) -> "HedgeState":
        if k < 1 or horizon < 1:
            raise ValueError("need k >= 1 and horizon >= 1")
        return cls(log_weights=np.zeros(k), beta=math.sqrt(math.log(k) / horizon), t=0)

    @property
    def k(self) -> int:
        return self.log_weights.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Normalized weight vector; max log-weight is subtracted before
        exponentiation, which leaves the normalized result unchanged."""
        shifted = np.exp(self.log_weights - self.log_weights.max())
        return shifted / shifted.sum()


def hedge_step(state: HedgeState, loss: np.ndarray) -> HedgeState:
    """Multiplicative update W_i *= exp(-beta * loss_i); loss must lie in [0, 1]."""
    loss = np.asarray(loss, dtype=float)
    if loss.shape != (state.k,):
        raise ValueError(f"loss must have shape ({state.k},)")
    if np.any(loss < -LOSS_TOL) or np.any(loss > 1.0 + LOSS_TOL):
        raise ValueError("loss entries must lie in [0, 1]")
    loss = np.clip(loss, 0.0, 1.0)
    return replace(state, log_weights=state.log_weights - state.beta * loss, t=state.t + 1)


def rescale_loss(g: np.ndarray, bound: float) -> np.ndarray:
    """Map a payoff vector in [-B, B] to a loss in [0, 1] via (g + B) / 2B.

    Entries that fall outside [0, 1] after rescaling (inputs beyond the
    bound) are clamped; use ``clamp_mask`` to count them.
    """
    if bound <= 0.0:
        raise ValueError("bound must be positive")
    return np.clip((np.asarray(g, dtype=float) + bound) / (2.0 * bound), 0.0, 1.0)


def clamp_mask(g: np.ndarray, bound: float) -> np.ndarray:
    """Per-coordinate indicator of inputs the rescale had to clamp."""
    g = np.asarray(g, dtype=float)
    return (g < -bound) | (g > bound)


def hedge_regret(losses: np.ndarray, horizon: int | None = None) -> float:
    """Realized regret of Hedge on a loss sequence: sum_t w_t . c_t - min_i sum_t c_t(i).

    The comparator minimum over the simplex is attained at a vertex, so the
    coordinate minimum suffices.
    """
    losses = np.asarray(losses, dtype=float)
    n_rounds, k = losses.shape
    state = HedgeState.create(k, horizon if horizon is not None else n_rounds)
    incurred = 0.0
    for row in losses:
        incurred += float(state.weights @ row)
        state = hedge_step(state, row)
    return incurred - float(losses.sum(axis=0).min())
