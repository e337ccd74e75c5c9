"""Built-in chain and MDP instances for experiments and validation."""

from __future__ import annotations

import numpy as np

from .chains import MarkovChain, RewardModel, StochasticPolicy, TabularMDP
from .seeding import as_generator


def two_state_chain(reward_mode: str = "bernoulli") -> MarkovChain:
    """Two-state chain: P = [[1/2, 1/2], [1, 0]], rewards (1, 0).

    Stationary distribution (2/3, 1/3), average reward 2/3. Forward
    simulations started from both states can only meet in state 0, which is
    what makes forward-until-coalescence sampling biased here.
    """
    transition = np.array([[0.5, 0.5], [1.0, 0.0]])
    return MarkovChain(transition, RewardModel(np.array([1.0, 0.0]), reward_mode))


def random_ergodic_chain(
    n_states: int,
    rng,
    concentration: float = 1.0,
    reward_mode: str = "bernoulli",
) -> MarkovChain:
    """Dense random chain with Dirichlet rows; rejection-sampled to be ergodic."""
    gen = as_generator(rng)
    for _ in range(100):
        transition = gen.dirichlet(np.full(n_states, concentration), size=n_states)
        transition = transition / transition.sum(axis=1, keepdims=True)
        rewards = gen.random(n_states)
        chain = MarkovChain(transition, RewardModel(rewards, reward_mode))
        if chain.ergodic:
            return chain
    raise RuntimeError("failed to draw an ergodic chain in 100 tries")


def random_mdp(
    n_states: int,
    n_actions: int,
    rng,
    n_features: int | None = None,
    concentration: float = 1.0,
    reward_mode: str = "bernoulli",
) -> TabularMDP:
    """Dense random MDP; dense Dirichlet rows make every policy ergodic."""
    gen = as_generator(rng)
    transition = gen.dirichlet(
        np.full(n_states, concentration), size=(n_actions, n_states)
    )
    transition = transition / transition.sum(axis=2, keepdims=True)
    rewards = gen.random((n_states, n_actions))
    features = gen.random((n_states, n_features)) if n_features else None
    return TabularMDP(transition, RewardModel(rewards, reward_mode), features)


def random_stochastic_policy(n_states: int, n_actions: int, rng) -> StochasticPolicy:
    gen = as_generator(rng)
    probs = gen.dirichlet(np.ones(n_actions), size=n_states)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return StochasticPolicy(probs)


def sparse_cycle_mdp(
    n_states: int,
    epsilon: float,
    n_features: int = 2,
    sparse_states: int = 1,
    action_epsilon: float | None = None,
    reward_mode: str = "bernoulli",
) -> TabularMDP:
    """Cycle with a sticky exit state and features supported on few states.

    Action 0 follows the cycle s_i -> s_{i+1} deterministically, with the
    last state looping on itself w.p. 1 - epsilon and restarting the cycle
    w.p. epsilon. Action 1 is the same cycle with its own exit rate. Features
    are nonzero only in the first ``sparse_states`` states, so trajectory
    feature differences stay small even when coalescence is slow.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if sparse_states >= n_states:
        raise ValueError("sparse_states must be smaller than n_states")
    if action_epsilon is None:
        action_epsilon = min(2.0 * epsilon, 0.5)

    def cycle(eps: float) -> np.ndarray:
        p = np.zeros((n_states, n_states))
        for s in range(n_states - 1):
            p[s, s + 1] = 1.0
        p[n_states - 1, n_states - 1] = 1.0 - eps
        p[n_states - 1, 0] = eps
        return p

    transition = np.stack([cycle(epsilon), cycle(action_epsilon)])
    rewards = np.zeros((n_states, 2))
    rewards[:sparse_states, :] = 1.0
    features = np.zeros((n_states, n_features))
    for i in range(n_features):
        features[:sparse_states, i] = 1.0 - 0.5 * i / max(n_features - 1, 1)
    return TabularMDP(transition, RewardModel(rewards, reward_mode), features)
