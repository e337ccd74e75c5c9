"""Exact linear-algebra solvers for ergodic chains and MDPs.

These are the ground-truth oracles every stochastic estimator in the
package is validated against: stationary distribution, average reward,
bias and Q-values (Poisson equation), mixing time by exact distribution
iteration, and average-reward policy iteration.
"""

from __future__ import annotations

import numpy as np

from .chains import DeterministicPolicy, MarkovChain, RewardModel, TabularMDP, induce_chain
from .errors import CapExceededError, SolveError

STATIONARY_TOL = 1e-10
MIXING_THRESHOLD = 1.0 / 8.0


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    """Unique mu with mu^T P = mu^T, sum(mu) = 1, mu > 0.

    Solves (P^T - I) mu = 0 with the last equation replaced by the
    normalization constraint. Dense and exact; this layer is the oracle.
    """
    chain.require_ergodic()
    n = chain.n_states
    a = chain.transition.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SolveError("stationary solve is singular") from exc
    residual = np.max(np.abs(mu @ chain.transition - mu))
    if residual > STATIONARY_TOL or np.any(mu <= 0.0):
        raise SolveError(f"stationary solve residual {residual:.3g} beyond tolerance")
    return mu


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0.0) or abs(vec.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a normalized distribution")
    return 0.5 * float(np.abs(p - q).sum())


def mixing_time(chain: MarkovChain, cap: int = 100_000) -> int:
    """Smallest t with max over starts of TV(delta_x P^t, mu) <= 1/8.

    Computed by exact distribution iteration; raises CapExceededError when
    ``cap`` steps do not suffice (slow mixing or near-periodic structure).
    """
    chain.require_ergodic()
    mu = stationary_distribution(chain)
    dist = np.eye(chain.n_states)
    for t in range(1, cap + 1):
        dist = dist @ chain.transition
        worst = 0.5 * np.abs(dist - mu).sum(axis=1).max()
        if worst <= MIXING_THRESHOLD:
            return t
    raise CapExceededError(f"chain did not mix within {cap} steps")


def average_reward(chain: MarkovChain) -> float:
    """rho = sum_s mu(s) r(s) using the exact stationary distribution."""
    mu = stationary_distribution(chain)
    return float(mu @ chain.reward.means)


def bias_and_q(mdp: TabularMDP, policy: DeterministicPolicy) -> tuple[float, np.ndarray, np.ndarray]:
    """Gain rho, bias h, and Q-values of a deterministic policy.

    h solves (I - P) h = r - rho with the normalization E_mu[h] = 0, the one
    under which h(s) equals the convergent series of expected differential
    rewards from s. Uses the nonsingular system (I - P + 1 mu^T) h = r - rho,
    whose solution automatically satisfies mu^T h = 0.

    Q(s, a) = r(s, a) - rho + sum_s' P^a(s, s') h(s').
    """
    chain = induce_chain(mdp, policy)
    mu = stationary_distribution(chain)
    r_pi = chain.reward.means
    rho = float(mu @ r_pi)
    n = mdp.n_states
    a = np.eye(n) - chain.transition + np.outer(np.ones(n), mu)
    try:
        h = np.linalg.solve(a, r_pi - rho)
    except np.linalg.LinAlgError as exc:
        raise SolveError("bias solve is singular") from exc
    q = mdp.reward.means - rho + np.einsum("axy,y->xa", mdp.transition, h)
    return rho, h, q


def optimal_policy(
    mdp: TabularMDP,
    reward_override: np.ndarray | None = None,
    max_iterations: int = 1000,
) -> DeterministicPolicy:
    """Average-reward Howard policy iteration with exact gain/bias solves.

    ``reward_override`` replaces the MDP's reward with a per-state reward
    (the action only affects dynamics). Ties in the improvement step break
    toward the lowest action index. The returned policy is certified by a
    one-step improvement test; failure to certify raises SolveError.
    """
    work = mdp
    if reward_override is not None:
        reward_override = np.asarray(reward_override, dtype=float)
        if reward_override.shape != (mdp.n_states,):
            raise ValueError("reward_override must have one entry per state")
        means = np.repeat(reward_override[:, None], mdp.n_actions, axis=1)
        work = TabularMDP(mdp.transition, RewardModel(np.clip(means, 0.0, 1.0), "mean"), mdp.features)

    tol = 1e-10
    policy = DeterministicPolicy(np.zeros(work.n_states, dtype=int))
    seen = {policy.key()}
    for _ in range(max_iterations):
        _, _, q = bias_and_q(work, policy)
        best = q.max(axis=1, keepdims=True)
        improved = DeterministicPolicy(np.argmax(q >= best - tol, axis=1))
        if improved == policy:
            break
        if improved.key() in seen:
            # Exact ties can cycle between equal-gain policies; keep the
            # current one, which the certificate below still has to pass.
            break
        seen.add(improved.key())
        policy = improved
    else:
        raise CapExceededError(f"policy iteration did not converge in {max_iterations} iterations")

    _, _, q = bias_and_q(work, policy)
    slack = q[np.arange(work.n_states), policy.actions] - q.max(axis=1)
    if slack.min() < -1e-8:
        raise SolveError("policy iteration certificate failed: one-step improvement exists")
    return policy
