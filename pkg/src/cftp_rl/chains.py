"""Data model for finite Markov chains, tabular MDPs, and policies.

Conventions used throughout the package:

- transition matrices are row-stochastic, rows indexed by source state;
- an MDP stores one matrix per action, shape (n_actions, n_states, n_states);
- reward means live in [0, 1] and sampling is bounded in [0, 1];
- state and action indices are 0-based integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import NonErgodicError

ROW_SUM_TOL = 1e-12


def _check_row_stochastic(matrix: np.ndarray, what: str) -> None:
    if np.any(matrix < 0.0) or np.any(matrix > 1.0):
        raise ValueError(f"{what}: entries must lie in [0, 1]")
    row_sums = matrix.sum(axis=-1)
    if np.max(np.abs(row_sums - 1.0)) > ROW_SUM_TOL:
        raise ValueError(f"{what}: rows must sum to 1 within {ROW_SUM_TOL}")


def _frozen(array: np.ndarray, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


def is_ergodic(transition: np.ndarray) -> bool:
    """Irreducible (single strongly connected component) and aperiodic.

    Irreducibility: every state reachable from state 0 and state 0 reachable
    from every state in the support graph. Aperiodicity: the gcd of
    (d[u] + 1 - d[v]) over support edges u -> v is 1, where d is BFS depth
    from state 0; for a strongly connected graph this gcd is the period.
    """
    support = transition > 0.0
    n = support.shape[0]
    if not _reachable_from(support, 0).all():
        return False
    if not _reachable_from(support.T, 0).all():
        return False
    depth = _bfs_depth(support, 0)
    period = 0
    for u, v in zip(*np.nonzero(support)):
        period = gcd(period, depth[u] + 1 - depth[v])
        if period == 1:
            return True
    return period == 1


def _reachable_from(support: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(support.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        step = support[frontier].any(axis=0) & ~seen
        seen |= step
        frontier = list(np.nonzero(step)[0])
    return seen


def _bfs_depth(support: np.ndarray, start: int) -> np.ndarray:
    n = support.shape[0]
    depth = np.full(n, -1, dtype=int)
    depth[start] = 0
    frontier = [start]
    d = 0
    while frontier:
        d += 1
        step = support[frontier].any(axis=0) & (depth < 0)
        depth[step] = d
        frontier = list(np.nonzero(step)[0])
    return depth


class RewardModel:
    """Bounded stochastic reward with known means in [0, 1].

    ``bernoulli`` mode samples Bernoulli(mean); ``mean`` mode returns the
    mean deterministically. Both keep samples inside [0, 1].
    """

    MODES = ("bernoulli", "mean")

    def __init__(self, means: np.ndarray, mode: str = "bernoulli"):
        means = np.asarray(means, dtype=float)
        if np.any(means < 0.0) or np.any(means > 1.0):
            raise ValueError("reward means must lie in [0, 1]")
        if mode not in self.MODES:
            raise ValueError(f"unknown reward mode {mode!r}")
        self.means = _frozen(means)
        self.mode = mode

    def sample(self, means_selected: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one reward per entry of ``means_selected``."""
        means_selected = np.asarray(means_selected, dtype=float)
        if self.mode == "mean":
            return means_selected.copy()
        return (rng.random(means_selected.shape) < means_selected).astype(float)

    def sample_state(self, state: int, rng: np.random.Generator) -> float:
        return float(self.sample(self.means[state], rng))


class MarkovChain:
    """Finite-state chain: row-stochastic transition matrix plus a per-state reward model."""

    def __init__(self, transition: np.ndarray, reward: RewardModel):
        transition = np.asarray(transition, dtype=float)
        if transition.ndim != 2 or transition.shape[0] != transition.shape[1]:
            raise ValueError("transition must be a square matrix")
        _check_row_stochastic(transition, "transition")
        if reward.means.shape != (transition.shape[0],):
            raise ValueError("reward means must have one entry per state")
        self.n_states = transition.shape[0]
        self.transition = _frozen(transition)
        self.reward = reward
        self._ergodic: bool | None = None

    @property
    def ergodic(self) -> bool:
        if self._ergodic is None:
            self._ergodic = is_ergodic(self.transition)
        return self._ergodic

    def require_ergodic(self) -> None:
        if not self.ergodic:
            raise NonErgodicError("chain is not ergodic (reducible or periodic)")

    def cumulative(self) -> np.ndarray:
        """Per-row cumulative probabilities, for inverse-CDF sampling."""
        return np.cumsum(self.transition, axis=1)


class TabularMDP:
    """Finite MDP: per-action transition matrices, per-(state, action) rewards, optional features."""

    def __init__(
        self,
        transition: np.ndarray,
        reward: RewardModel,
        features: np.ndarray | None = None,
    ):
        transition = np.asarray(transition, dtype=float)
        if transition.ndim != 3 or transition.shape[1] != transition.shape[2]:
            raise ValueError("transition must have shape (n_actions, n_states, n_states)")
        _check_row_stochastic(transition, "transition")
        n_actions, n_states, _ = transition.shape
        if reward.means.shape != (n_states, n_actions):
            raise ValueError("reward means must have shape (n_states, n_actions)")
        if features is not None:
            features = np.asarray(features, dtype=float)
            if features.ndim != 2 or features.shape[0] != n_states:
                raise ValueError("features must have shape (n_states, k)")
            if np.any(features < 0.0) or np.any(features > 1.0):
                raise ValueError("feature entries must lie in [0, 1]")
            features = _frozen(features)
        self.n_states = n_states
        self.n_actions = n_actions
        self.transition = _frozen(transition)
        self.reward = reward
        self.features = features

    @property
    def n_features(self) -> int:
        if self.features is None:
            raise ValueError("MDP has no feature map")
        return self.features.shape[1]


class DeterministicPolicy:
    """One action index per state."""

    def __init__(self, actions: np.ndarray):
        actions = np.asarray(actions, dtype=int)
        if actions.ndim != 1:
            raise ValueError("actions must be a 1-d array of action indices")
        self.actions = _frozen(actions, dtype=int)

    def action_probs(self, n_actions: int) -> np.ndarray:
        probs = np.zeros((self.actions.shape[0], n_actions))
        probs[np.arange(self.actions.shape[0]), self.actions] = 1.0
        return probs

    def key(self) -> tuple[int, ...]:
        return tuple(int(a) for a in self.actions)

    def __eq__(self, other) -> bool:
        return isinstance(other, DeterministicPolicy) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"DeterministicPolicy({list(self.actions)})"


class StochasticPolicy:
    """Row-stochastic matrix over actions, one row per state."""

    def __init__(self, probs: np.ndarray):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2:
            raise ValueError("probs must have shape (n_states, n_actions)")
        _check_row_stochastic(probs, "policy probabilities")
        self.probs = _frozen(probs)

    def action_probs(self, n_actions: int) -> np.ndarray:
        if self.probs.shape[1] != n_actions:
            raise ValueError("policy action dimension does not match the MDP")
        return self.probs

    def sample_action(self, state: int, rng: np.random.Generator) -> int:
        return int(rng.choice(self.probs.shape[1], p=self.probs[state]))


class MixedPolicy:
    """Distribution over deterministic policies, selected once at time 0."""

    def __init__(self, weights: np.ndarray, members: list[DeterministicPolicy]):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or len(members) != weights.shape[0]:
            raise ValueError("one weight per member policy required")
        if np.any(weights < 0.0):
            raise ValueError("mixture weights must be non-negative")
        if abs(weights.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"mixture weights must sum to 1 within {ROW_SUM_TOL}")
        self.weights = _frozen(weights)
        self.members = list(members)

    def draw_member(self, rng: np.random.Generator) -> DeterministicPolicy:
        return self.members[int(rng.choice(len(self.members), p=self.weights))]


def policy_matrix(policy, mdp: TabularMDP) -> np.ndarray:
    """Action-probability matrix of a deterministic or stochastic policy."""
    if isinstance(policy, MixedPolicy):
        raise ValueError("mixed policies do not induce a single chain; handle members separately")
    probs = policy.action_probs(mdp.n_actions)
    if probs.shape[0] != mdp.n_states:
        raise ValueError("policy state dimension does not match the MDP")
    return probs


def induce_chain(mdp: TabularMDP, policy) -> MarkovChain:
    """Markov chain induced by running ``policy`` in ``mdp``.

    P(x, y) = sum_a pi(a|x) P^a(x, y); the reward model is the
    action-marginalized reward with the MDP's sampling mode.
    """
    if isinstance(policy, DeterministicPolicy):
        if policy.actions.shape[0] != mdp.n_states:
            raise ValueError("policy state dimension does not match the MDP")
        if policy.actions.min() < 0 or policy.actions.max() >= mdp.n_actions:
            raise ValueError("policy uses an action index outside the MDP")
        idx = np.arange(mdp.n_states)
        transition = mdp.transition[policy.actions, idx, :]
        means = mdp.reward.means[idx, policy.actions]
    else:
        probs = policy_matrix(policy, mdp)
        transition = np.einsum("xa,axy->xy", probs, mdp.transition)
        # Renormalize away accumulated float error so the 1e-12 row-sum
        # validation never trips on an exactly-valid input.
        transition = transition / transition.sum(axis=1, keepdims=True)
        means = np.clip(np.einsum("xa,xa->x", probs, mdp.reward.means), 0.0, 1.0)
    return MarkovChain(transition, RewardModel(means, mdp.reward.mode))


@dataclass
class SampleLedger:
    """Monotone counters of generative-model and expert-model calls."""

    generative_calls: int = 0
    expert_calls: int = 0

    def add_generative(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("ledger increments must be non-negative")
        self.generative_calls += int(n)

    def add_expert(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("ledger increments must be non-negative")
        self.expert_calls += int(n)


class GenerativeModel:
    """Sampling oracle over an MDP or chain; every call costs one ledger unit.

    A call takes a state (and an action, for MDPs) and returns one next-state
    draw together with one reward sample. With a fixed seed the full call
    sequence is reproducible bit for bit. Single-threaded: parallel workers
    need one instance each with independently derived seeds.
    """

    def __init__(self, model: TabularMDP | MarkovChain, rng, ledger: SampleLedger | None = None):
        from .seeding import as_generator

        self.model = model
        self.rng = as_generator(rng)
        self.ledger = ledger if ledger is not None else SampleLedger()
        if isinstance(model, TabularMDP):
            self._cum = np.cumsum(model.transition, axis=2)
        else:
            self._cum = model.cumulative()

    def step(self, state: int, action: int | None = None) -> tuple[int, float]:
        """One oracle call: next-state draw and reward sample."""
        if isinstance(self.model, TabularMDP):
            if action is None:
                raise ValueError("an MDP generative model requires an action")
            cum = self._cum[action, state]
            mean = self.model.reward.means[state, action]
        else:
            if action is not None:
                raise ValueError("a chain generative model takes no action")
            cum = self._cum[state]
            mean = self.model.reward.means[state]
        next_state = int(np.searchsorted(cum, self.rng.random(), side="right"))
        next_state = min(next_state, cum.shape[0] - 1)
        reward = float(self.model.reward.sample(np.asarray(mean), self.rng))
        self.ledger.add_generative(1)
        return next_state, reward


# ---------------------------------------------------------------------------
# Plain-text serialization
#
# Format: header line "states n actions m features k", then each per-action
# transition matrix row-major (one row per line), then reward means (one
# state per line, m values), then, if k > 0, features (one state per line,
# k values). Floats use 17 significant digits so round-trips are exact.
# ---------------------------------------------------------------------------

def _fmt_row(values) -> str:
    return " ".join(f"{float(v):.17g}" for v in values)


def dumps_mdp(mdp: TabularMDP) -> str:
    k = 0 if mdp.features is None else mdp.features.shape[1]
    lines = [f"states {mdp.n_states} actions {mdp.n_actions} features {k}"]
    for a in range(mdp.n_actions):
        for s in range(mdp.n_states):
            lines.append(_fmt_row(mdp.transition[a, s]))
    for s in range(mdp.n_states):
        lines.append(_fmt_row(mdp.reward.means[s]))
    if k:
        for s in range(mdp.n_states):
            lines.append(_fmt_row(mdp.features[s]))
    return "\n".join(lines) + "\n"


def loads_mdp(text: str, reward_mode: str = "bernoulli") -> TabularMDP:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if header[0::2] != ["states", "actions", "features"]:
        raise ValueError("bad header; expected 'states n actions m features k'")
    n, m, k = int(header[1]), int(header[3]), int(header[5])
    expected = 1 + m * n + n + (n if k else 0)
    if len(lines) != expected:
        raise ValueError(f"expected {expected} lines, got {len(lines)}")
    body = iter(lines[1:])
    transition = np.array(
        [[[float(v) for v in next(body).split()] for _ in range(n)] for _ in range(m)]
    )
    rewards = np.array([[float(v) for v in next(body).split()] for _ in range(n)])
    features = None
    if k:
        features = np.array([[float(v) for v in next(body).split()] for _ in range(n)])
    return TabularMDP(transition, RewardModel(rewards, reward_mode), features)


def dumps_chain(chain: MarkovChain) -> str:
    mdp = TabularMDP(chain.transition[None, :, :], RewardModel(chain.reward.means[:, None], chain.reward.mode))
    return dumps_mdp(mdp)


def loads_chain(text: str, reward_mode: str = "bernoulli") -> MarkovChain:
    mdp = loads_mdp(text, reward_mode)
    if mdp.n_actions != 1:
        raise ValueError("chain files must have exactly one action")
    return MarkovChain(mdp.transition[0], RewardModel(mdp.reward.means[:, 0], reward_mode))


def save_mdp(mdp: TabularMDP, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_mdp(mdp))


def load_mdp(path, reward_mode: str = "bernoulli") -> TabularMDP:
    with open(path) as fh:
        return loads_mdp(fh.read(), reward_mode)


def save_chain(chain: MarkovChain, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_chain(chain))


def load_chain(path, reward_mode: str = "bernoulli") -> MarkovChain:
    with open(path) as fh:
        return loads_chain(fh.read(), reward_mode)
