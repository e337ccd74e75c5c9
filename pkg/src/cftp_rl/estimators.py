"""Unbiased Monte-Carlo estimators built from coalescing trajectory pairs.

Both estimators share one mechanism: draw a stationary start state, launch
two trajectories that differ only in their first action, let both follow
the same policy afterwards with independent transitions and independently
sampled rewards, and accumulate the per-step difference until the
trajectories occupy the same state. The expected accumulated difference is
a Q-value difference, which yields the average-reward gap between policies
and, combined with the score function, the policy gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import (
    DeterministicPolicy,
    SampleLedger,
    StochasticPolicy,
    TabularMDP,
    induce_chain,
    policy_matrix,
)
from .errors import CapExceededError
from .sampling import cftp_batch
from .seeding import as_generator
from .solvers import stationary_distribution


class SoftmaxPolicy:
    """Tabular softmax parametrization: pi(a|s) = exp(theta[s,a]) / sum_b exp(theta[s,b])."""

    def __init__(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2:
            raise ValueError("theta must have shape (n_states, n_actions)")
        self.theta = theta.copy()
        shifted = np.exp(theta - theta.max(axis=1, keepdims=True))
        self.probs = shifted / shifted.sum(axis=1, keepdims=True)

    def as_policy(self) -> StochasticPolicy:
        return StochasticPolicy(self.probs)

    def grad_log(self, state: int, action: int) -> np.ndarray:
        """d log pi(state, action) / d theta, as an (n_states, n_actions) matrix."""
        grad = np.zeros_like(self.theta)
        grad[state] = -self.probs[state]
        grad[state, action] += 1.0
        return grad


@dataclass
class DiffEstimate:
    """One coalescing-pair sample of an average-reward difference."""

    value: float
    t_c: int
    calls: int


def _categorical_rows(cum_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    pick = (u[:, None] >= cum_rows).sum(axis=1)
    return np.minimum(pick, cum_rows.shape[1] - 1)


def coupled_difference_batch(
    mdp: TabularMDP,
    s0: np.ndarray,
    first_actions_a: np.ndarray,
    first_actions_b: np.ndarray,
    draw_actions,
    rng,
    value: str = "reward",
    step_cap: int = 1_000_000,
    ledger: SampleLedger | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulated A-minus-B differences over coalescing trajectory pairs.

    Trajectory A starts with ``first_actions_a`` at ``s0``, B with
    ``first_actions_b``; afterwards both draw actions via ``draw_actions``
    (a callable mapping a state batch to an action batch). Transitions and
    reward samples are independent between the trajectories; accumulation
    stops once a pair occupies the same state after a synchronized step.

    ``value="reward"`` accumulates reward samples, returning shape (n,);
    ``value="features"`` accumulates feature vectors, returning (n, k).
    """
    if value not in ("reward", "features"):
        raise ValueError(f"unknown value kind {value!r}")
    gen = as_generator(rng)
    cum3 = np.cumsum(mdp.transition, axis=2)
    means = mdp.reward.means
    bernoulli = mdp.reward.mode == "bernoulli"
    if value == "features":
        feats = mdp.features
        if feats is None:
            raise ValueError("feature accumulation requires an MDP with features")
        width = feats.shape[1]
    else:
        width = 1

    n_pairs = s0.shape[0]
    acc = np.zeros((n_pairs, width))
    t_c = np.zeros(n_pairs, dtype=np.int64)
    active = np.arange(n_pairs)
    x = np.asarray(s0, dtype=np.int64).copy()
    y = x.copy()
    ax = np.asarray(first_actions_a, dtype=np.int64).copy()
    ay = np.asarray(first_actions_b, dtype=np.int64).copy()

    t = 0
    while active.size:
        if t >= step_cap:
            raise CapExceededError(f"trajectories did not coalesce within {step_cap} steps")
        if value == "reward":
            if bernoulli:
                rx = (gen.random(active.size) < means[x, ax]).astype(float)
                ry = (gen.random(active.size) < means[y, ay]).astype(float)
            else:
                rx = means[x, ax]
                ry = means[y, ay]
            acc[active, 0] += rx - ry
        else:
            acc[active] += feats[x] - feats[y]
        x = _categorical_rows(cum3[ax, x], gen.random(active.size))
        y = _categorical_rows(cum3[ay, y], gen.random(active.size))
        if ledger is not None:
            ledger.add_generative(2 * active.size)
        t += 1
        met = x == y
        t_c[active[met]] = t
        keep = ~met
        active, x, y = active[keep], x[keep], y[keep]
        if active.size:
            ax = draw_actions(x)
            ay = draw_actions(y)
    return (acc[:, 0], t_c) if value == "reward" else (acc, t_c)


def policy_action_drawer(policy, mdp: TabularMDP, gen: np.random.Generator):
    """Batched action sampler for a deterministic or stochastic policy."""
    if isinstance(policy, DeterministicPolicy):
        actions = policy.actions

        def draw(states: np.ndarray) -> np.ndarray:
            return actions[states]

    else:
        cum = np.cumsum(policy_matrix(policy, mdp), axis=1)

        def draw(states: np.ndarray) -> np.ndarray:
            return _categorical_rows(cum[states], gen.random(states.shape[0]))

    return draw


def _stationary_starts(mdp, policy, n, source, gen, step_cap, ledger):
    chain = induce_chain(mdp, policy)
    if source == "exact_solve":
        mu = stationary_distribution(chain)
        cum = np.cumsum(mu)
        starts = _categorical_rows(np.tile(cum, (n, 1)), gen.random(n))
        return starts, 0
    if source == "cftp":
        states, times = cftp_batch(chain, n, gen, step_cap=step_cap)
        calls = int(times.sum()) * chain.n_states
        if ledger is not None:
            ledger.add_generative(calls)
        return states, calls
    raise ValueError(f"unknown start-state source {source!r}")


def delta_rho_batch(
    mdp: TabularMDP,
    pi,
    pi_prime,
    n_samples: int,
    rng,
    s0_source: str = "exact_solve",
    step_cap: int = 1_000_000,
    ledger: SampleLedger | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Independent samples whose mean is rho(pi_prime) - rho(pi).

    Start states follow the stationary distribution of ``pi_prime`` (exact
    linear solve, or CFTP when only sampling access is wanted); trajectory A
    takes pi_prime's action first, B takes pi's, and both follow ``pi``.
    """
    gen = as_generator(rng)
    s0, _ = _stationary_starts(mdp, pi_prime, n_samples, s0_source, gen, step_cap, ledger)
    draw_pi = policy_action_drawer(pi, mdp, gen)
    draw_pi_prime = policy_action_drawer(pi_prime, mdp, gen)
    values, t_c = coupled_difference_batch(
        mdp,
        s0,
        draw_pi_prime(s0),
        draw_pi(s0),
        draw_pi,
        gen,
        value="reward",
        step_cap=step_cap,
        ledger=ledger,
    )
    return values, t_c


def delta_rho_sample(
    mdp: TabularMDP,
    pi,
    pi_prime,
    rng,
    s0_source: str = "exact_solve",
    step_cap: int = 1_000_000,
) -> DiffEstimate:
    """One unbiased sample of rho(pi_prime) - rho(pi)."""
    ledger = SampleLedger()
    values, t_c = delta_rho_batch(
        mdp, pi, pi_prime, 1, rng, s0_source=s0_source, step_cap=step_cap, ledger=ledger
    )
    return DiffEstimate(value=float(values[0]), t_c=int(t_c[0]), calls=ledger.generative_calls)


def policy_gradient_batch(
    mdp: TabularMDP,
    policy: SoftmaxPolicy,
    n_samples: int,
    rng,
    step_cap: int = 1_000_000,
    ledger: SampleLedger | None = None,
) -> np.ndarray:
    """Independent gradient samples with mean d rho / d theta, shape (n, S, A).

    Each sample: s from the stationary distribution of the policy via CFTP,
    two actions drawn independently from pi(s), a coalescing-pair estimate
    of their Q-value difference, times the score d log pi(s, a) / d theta.
    The second trajectory acts as a mean-zero baseline, so only the first
    action's score enters.
    """
    gen = as_generator(rng)
    stoch = policy.as_policy()
    s0, _ = _stationary_starts(mdp, stoch, n_samples, "cftp", gen, step_cap, ledger)
    cum_pi = np.cumsum(policy.probs, axis=1)
    a_main = _categorical_rows(cum_pi[s0], gen.random(n_samples))
    a_base = _categorical_rows(cum_pi[s0], gen.random(n_samples))
    draw = policy_action_drawer(stoch, mdp, gen)
    q_hat, _ = coupled_difference_batch(
        mdp, s0, a_main, a_base, draw, gen, value="reward", step_cap=step_cap, ledger=ledger
    )
    grads = np.zeros((n_samples, mdp.n_states, mdp.n_actions))
    rows = np.arange(n_samples)
    grads[rows, s0, :] = -policy.probs[s0]
    grads[rows, s0, a_main] += 1.0
    grads *= q_hat[:, None, None]
    return grads


def policy_gradient_sample(
    mdp: TabularMDP,
    policy: SoftmaxPolicy,
    rng,
    step_cap: int = 1_000_000,
) -> np.ndarray:
    """One unbiased sample of the average-reward policy gradient."""
    return policy_gradient_batch(mdp, policy, 1, rng, step_cap=step_cap)[0]
