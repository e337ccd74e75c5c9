"""Apprenticeship learning as a zero-sum game over feature expectations.

The learner only observes an expert through a generative model (state in,
sampled expert action out) inside known dynamics. Two multiplicative-weights
learners are provided:

- ``mwal``: estimate the expert's feature expectations once, up front, from
  exact stationary samples obtained by running CFTP against the expert
  model; then play Hedge against exactly-evaluated candidate policies.
- ``mwal_generative``: never estimate expert feature expectations; instead,
  each round queries the expert for two coalescing trajectories to get an
  unbiased sample of the game-matrix column of the current candidate.

Both return a mixed policy mixing the per-round optimal policies uniformly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .chains import (
    DeterministicPolicy,
    MixedPolicy,
    SampleLedger,
    StochasticPolicy,
    TabularMDP,
    induce_chain,
)
from .errors import CapExceededError
from .estimators import _categorical_rows, coupled_difference_batch
from .hedge import HedgeState, clamp_mask, hedge_step, rescale_loss
from .sampling import _cftp_core
from .seeding import as_generator, seed_sequence, substream
from .solvers import optimal_policy, stationary_distribution


class ExpertModel:
    """Generative access to an expert policy: one sampled action per query.

    The expert policy itself may be stochastic and is never estimated; all
    consumers work from sampled actions only. Queries are counted in the
    ledger and reproducible under a fixed seed.
    """

    def __init__(self, policy, n_actions: int, rng, ledger: SampleLedger | None = None):
        if isinstance(policy, DeterministicPolicy):
            probs = policy.action_probs(n_actions)
        elif isinstance(policy, StochasticPolicy):
            probs = policy.action_probs(n_actions)
        else:
            raise TypeError("expert policy must be deterministic or stochastic")
        self.policy = StochasticPolicy(probs)
        self._cum = np.cumsum(probs, axis=1)
        self.rng = as_generator(rng)
        self.ledger = ledger if ledger is not None else SampleLedger()

    def act(self, state: int) -> int:
        return int(self.act_batch(np.array([state], dtype=np.int64))[0])

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        actions = _categorical_rows(self._cum[states], self.rng.random(states.shape[0]))
        self.ledger.add_expert(states.shape[0])
        return actions


def feature_expectations_exact(mdp: TabularMDP, policy) -> np.ndarray:
    """Phi(pi) = sum_s mu_pi(s) phi(s); mixed policies average their members."""
    if mdp.features is None:
        raise ValueError("MDP has no feature map")
    if isinstance(policy, MixedPolicy):
        member_values = [feature_expectations_exact(mdp, m) for m in policy.members]
        return np.einsum("m,mk->k", policy.weights, np.array(member_values))
    mu = stationary_distribution(induce_chain(mdp, policy))
    return mu @ mdp.features


@dataclass
class ExpertFeatureEstimate:
    """Monte-Carlo estimate of the expert's feature expectations via CFTP."""

    phi: np.ndarray
    n_samples: int
    total_steps: int
    expert_calls: int
    generative_calls: int


def expert_stationary_samples(
    mdp: TabularMDP,
    expert: ExpertModel,
    m: int,
    rng,
    step_cap: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray, int]:
    """m exact samples from the stationary distribution the expert induces.

    Runs CFTP on the expert-induced chain without ever representing that
    chain: each random-map entry queries the expert once for an action and
    the dynamics once for the resulting transition. Returns the sampled
    states, per-sample coalescence times, and total dynamics calls.
    """
    base = seed_sequence(rng) if not isinstance(rng, np.random.Generator) else None
    gen_fallback = rng if base is None else None
    cum3 = np.cumsum(mdp.transition, axis=2)
    all_states = np.arange(mdp.n_states)
    ledger = SampleLedger()
    samples = np.empty(m, dtype=np.int64)
    times = np.empty(m, dtype=np.int64)
    for i in range(m):
        gen = substream(base, i) if base is not None else gen_fallback

        def map_at(t: int, _gen=gen) -> np.ndarray:
            actions = expert.act_batch(all_states)
            nxt = _categorical_rows(cum3[actions, all_states], _gen.random(mdp.n_states))
            ledger.add_generative(mdp.n_states)
            return nxt

        samples[i], times[i] = _cftp_core(map_at, mdp.n_states, step_cap, "dense")
    return samples, times, ledger.generative_calls


def estimate_expert_features(
    mdp: TabularMDP,
    expert: ExpertModel,
    m: int,
    rng,
    step_cap: int = 1_000_000,
) -> ExpertFeatureEstimate:
    """Average phi over m exact samples from the expert's stationary distribution."""
    if mdp.features is None:
        raise ValueError("MDP has no feature map")
    expert_before = expert.ledger.expert_calls
    samples, times, generative_calls = expert_stationary_samples(mdp, expert, m, rng, step_cap)
    return ExpertFeatureEstimate(
        phi=mdp.features[samples].mean(axis=0),
        n_samples=m,
        total_steps=int(times.sum()),
        expert_calls=expert.ledger.expert_calls - expert_before,
        generative_calls=generative_calls,
    )


@dataclass
class GameColumnEstimate:
    """Unbiased sample of one game-matrix column Phi(pi) - Phi(expert)."""

    g: np.ndarray
    t_c: int
    clamped: np.ndarray | None = None


def game_column_batch(
    mdp: TabularMDP,
    expert: ExpertModel,
    pi_t: DeterministicPolicy,
    n_samples: int,
    rng,
    step_cap: int = 1_000_000,
    ledger: SampleLedger | None = None,
    mu_pi_t: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Batched game-column samples; each coordinate mean is Phi(pi_t)[i] - Phi(expert)[i].

    Start states come from the stationary distribution of ``pi_t`` by exact
    linear solve (the dynamics and pi_t are known). Trajectory A takes
    pi_t's action first and follows the expert afterwards; trajectory B
    follows the expert from the start; feature differences (A minus B)
    accumulate until the pair coalesces.
    """
    gen = as_generator(rng)
    if mu_pi_t is None:
        mu_pi_t = stationary_distribution(induce_chain(mdp, pi_t))
    cum_mu = np.tile(np.cumsum(mu_pi_t), (n_samples, 1))
    s0 = _categorical_rows(cum_mu, gen.random(n_samples))
    first_a = pi_t.actions[s0]
    first_b = expert.act_batch(s0)
    g, t_c = coupled_difference_batch(
        mdp,
        s0,
        first_a,
        first_b,
        expert.act_batch,
        gen,
        value="features",
        step_cap=step_cap,
        ledger=ledger,
    )
    return g, t_c


def game_column_sample(
    mdp: TabularMDP,
    expert: ExpertModel,
    pi_t: DeterministicPolicy,
    rng,
    step_cap: int = 1_000_000,
) -> GameColumnEstimate:
    """One unbiased sample of the game column for ``pi_t``."""
    g, t_c = game_column_batch(mdp, expert, pi_t, 1, rng, step_cap=step_cap)
    return GameColumnEstimate(g=g[0], t_c=int(t_c[0]))


@dataclass
class MwalResult:
    """Mixed policy plus the per-round trail of a multiplicative-weights run."""

    mixture: MixedPolicy
    policies: list[DeterministicPolicy]
    weights: np.ndarray  # (T, k) min-player strategies w^(t)
    losses: np.ndarray  # (T, k) Hedge losses (rescaled game columns)
    round_values: np.ndarray  # (T,) w^(t) . Phi(pi^(t)), the value PI maximized
    beta: float
    expert_calls: int
    generative_calls: int
    phi_expert_estimate: np.ndarray | None = None
    raw_columns: np.ndarray | None = None  # (T, k) unrescaled g_t (direct-estimation runs)
    clamped: np.ndarray | None = None  # (T, k) rescale clamp indicators
    rescale_bound: float | None = None


def _uniform_mixture(policies: list[DeterministicPolicy]) -> MixedPolicy:
    n = len(policies)
    return MixedPolicy(np.full(n, 1.0 / n), policies)


def mwal(
    mdp: TabularMDP,
    expert: ExpertModel,
    k: int,
    n_rounds: int,
    m: int,
    rng,
    step_cap: int = 1_000_000,
) -> MwalResult:
    """Multiplicative-weights apprenticeship with up-front expert estimation.

    Estimates the expert's feature expectations once from m CFTP samples,
    then for T rounds plays Hedge over features against the exactly
    evaluated optimal policy for the current feature weighting. Returns the
    uniform mixture of the per-round policies.
    """
    if mdp.features is None or mdp.features.shape[1] != k:
        raise ValueError("MDP features must be present with width k")
    base = seed_sequence(rng)
    gen_before = 0
    estimate = estimate_expert_features(mdp, expert, m, substream(base, 0), step_cap=step_cap)
    expert_calls = estimate.expert_calls
    gen_before += estimate.generative_calls

    state = HedgeState.create(k, n_rounds)
    policies: list[DeterministicPolicy] = []
    weights = np.empty((n_rounds, k))
    losses = np.empty((n_rounds, k))
    round_values = np.empty(n_rounds)
    phi_cache: dict[tuple[int, ...], np.ndarray] = {}
    for t in range(n_rounds):
        w = state.weights
        weights[t] = w
        pi_t = optimal_policy(mdp, reward_override=mdp.features @ w)
        policies.append(pi_t)
        phi_t = phi_cache.get(pi_t.key())
        if phi_t is None:
            phi_t = feature_expectations_exact(mdp, pi_t)
            phi_cache[pi_t.key()] = phi_t
        g_tilde = (phi_t - estimate.phi + 1.0) / 2.0
        losses[t] = g_tilde
        round_values[t] = float(w @ phi_t)
        state = hedge_step(state, g_tilde)
    return MwalResult(
        mixture=_uniform_mixture(policies),
        policies=policies,
        weights=weights,
        losses=losses,
        round_values=round_values,
        beta=state.beta,
        expert_calls=expert_calls,
        generative_calls=gen_before,
        phi_expert_estimate=estimate.phi,
    )


def mwal_generative(
    mdp: TabularMDP,
    expert: ExpertModel,
    k: int,
    n_rounds: int,
    delta: float,
    b: float,
    rng,
    step_cap: int = 1_000_000,
) -> MwalResult:
    """Multiplicative-weights apprenticeship with per-round column sampling.

    Each round draws one unbiased game-column sample from two expert
    trajectories, rescales it into [0, 1] with B = b log(2 T k / delta)
    (clamping the low-probability overshoots), and feeds it to Hedge.
    """
    if mdp.features is None or mdp.features.shape[1] != k:
        raise ValueError("MDP features must be present with width k")
    if b <= 0.0 or not 0.0 < delta < 1.0:
        raise ValueError("need b > 0 and delta in (0, 1)")
    bound = b * math.log(2.0 * n_rounds * k / delta)
    base = seed_sequence(rng)
    ledger = SampleLedger()
    expert_before = expert.ledger.expert_calls

    state = HedgeState.create(k, n_rounds)
    policies: list[DeterministicPolicy] = []
    weights = np.empty((n_rounds, k))
    losses = np.empty((n_rounds, k))
    raw = np.empty((n_rounds, k))
    clamped = np.zeros((n_rounds, k), dtype=bool)
    round_values = np.empty(n_rounds)
    phi_cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}
    for t in range(n_rounds):
        w = state.weights
        weights[t] = w
        pi_t = optimal_policy(mdp, reward_override=mdp.features @ w)
        policies.append(pi_t)
        cached = phi_cache.get(pi_t.key())
        if cached is None:
            mu_t = stationary_distribution(induce_chain(mdp, pi_t))
            cached = (mu_t, mu_t @ mdp.features)
            phi_cache[pi_t.key()] = cached
        mu_t, phi_t = cached
        g, _ = game_column_batch(
            mdp, expert, pi_t, 1, substream(base, t), step_cap=step_cap,
            ledger=ledger, mu_pi_t=mu_t,
        )
        raw[t] = g[0]
        clamped[t] = clamp_mask(g[0], bound)
        g_tilde = rescale_loss(g[0], bound)
        losses[t] = g_tilde
        round_values[t] = float(w @ phi_t)
        state = hedge_step(state, g_tilde)
    return MwalResult(
        mixture=_uniform_mixture(policies),
        policies=policies,
        weights=weights,
        losses=losses,
        round_values=round_values,
        beta=state.beta,
        expert_calls=expert.ledger.expert_calls - expert_before,
        generative_calls=ledger.generative_calls,
        raw_columns=raw,
        clamped=clamped,
        rescale_bound=bound,
    )


def enumerate_deterministic_policies(n_states: int, n_actions: int) -> list[DeterministicPolicy]:
    return [
        DeterministicPolicy(np.array(actions))
        for actions in itertools.product(range(n_actions), repeat=n_states)
    ]


@dataclass
class GameValue:
    """min over w in the simplex of max over policies of w . G(., pi)."""

    value: float
    exact: bool
    resolution: float | None = None
    best_column: tuple[int, ...] | None = None


def game_matrix(mdp: TabularMDP, expert) -> tuple[np.ndarray, list[DeterministicPolicy]]:
    """Full k x |Pi| matrix G(i, pi) = Phi(pi)[i] - Phi(expert)[i] by exact solves.

    ``expert`` may be an ExpertModel or a bare policy; only its underlying
    policy table is needed for the exact computation.
    """
    policies = enumerate_deterministic_policies(mdp.n_states, mdp.n_actions)
    expert_policy = expert.policy if isinstance(expert, ExpertModel) else expert
    phi_expert = feature_expectations_exact(mdp, expert_policy)
    columns = np.array([feature_expectations_exact(mdp, pi) for pi in policies])
    return (columns - phi_expert).T, policies


def game_value_oracle(
    mdp: TabularMDP,
    expert,
    enumeration_budget: int = 256,
    grid_points: int = 2000,
    refinements: int = 3,
) -> GameValue:
    """Exact game value for k = 2 (piecewise-linear breakpoints); grid bound otherwise.

    Enumerates every deterministic policy, so it requires
    |A| ** |S| <= enumeration_budget. ``expert`` may be an ExpertModel or a
    bare policy.
    """
    n_policies = mdp.n_actions ** mdp.n_states
    if n_policies > enumeration_budget:
        raise CapExceededError(
            f"enumeration needs {n_policies} policies, budget is {enumeration_budget}"
        )
    g, _ = game_matrix(mdp, expert)
    k = g.shape[0]
    if k == 2:
        value = _min_max_two_features(g)
        return GameValue(value=value, exact=True)
    value, resolution = _min_max_grid(g, grid_points, refinements)
    return GameValue(value=value, exact=False, resolution=resolution)


def _min_max_two_features(g: np.ndarray) -> float:
    """Exact min over w = (lam, 1 - lam) of max over columns, via breakpoints.

    Each column is the line lam * g0 + (1 - lam) * g1; the upper envelope is
    convex piecewise linear, so its minimum sits at an endpoint or at a
    crossing of two column lines.
    """
    g0, g1 = g[0], g[1]
    candidates = [0.0, 1.0]
    slopes = g0 - g1
    for i in range(g.shape[1]):
        for j in range(i + 1, g.shape[1]):
            denom = slopes[i] - slopes[j]
            if denom == 0.0:
                continue
            lam = (g1[j] - g1[i]) / denom
            if 0.0 <= lam <= 1.0:
                candidates.append(float(lam))
    best = math.inf
    for lam in candidates:
        envelope = (lam * g0 + (1.0 - lam) * g1).max()
        best = min(best, float(envelope))
    return best


def _simplex_grid(k: int, subdivisions: int) -> np.ndarray:
    combos = itertools.combinations(range(subdivisions + k - 1), k - 1)
    points = []
    for dividers in combos:
        prev = -1
        counts = []
        for d in dividers:
            counts.append(d - prev - 1)
            prev = d
        counts.append(subdivisions + k - 2 - prev)
        points.append(counts)
    return np.array(points, dtype=float) / subdivisions


def _min_max_grid(g: np.ndarray, grid_points: int, refinements: int) -> tuple[float, float]:
    k = g.shape[0]
    subdivisions = max(2, int(round(grid_points ** (1.0 / max(k - 1, 1)))))
    center = np.full(k, 1.0 / k)
    radius = 1.0
    best_value = math.inf
    for _ in range(refinements + 1):
        grid = _simplex_grid(k, subdivisions)
        w = center[None, :] + radius * (grid - np.full(k, 1.0 / k)[None, :])
        w = np.clip(w, 0.0, None)
        w = w / w.sum(axis=1, keepdims=True)
        envelope = (w @ g).max(axis=1)
        idx = int(np.argmin(envelope))
        best_value = min(best_value, float(envelope[idx]))
        center = w[idx]
        radius /= subdivisions / 2.0
    return best_value, radius / subdivisions


def solve_game_lp(g: np.ndarray) -> tuple[float, np.ndarray]:
    """Column player's side: max over mixtures psi of min_i (G psi)_i, by LP."""
    k, n_cols = g.shape
    c = np.zeros(n_cols + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-g, np.ones((k, 1))])
    b_ub = np.zeros(k)
    a_eq = np.zeros((1, n_cols + 1))
    a_eq[0, :n_cols] = 1.0
    b_eq = np.ones(1)
    bounds = [(0.0, None)] * n_cols + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"game LP failed: {res.message}")
    return -float(res.fun), res.x[:n_cols]


def margin_against_all_rewards(mdp: TabularMDP, mixture: MixedPolicy, phi_expert: np.ndarray) -> float:
    """min over w in the simplex of w . (Phi(mixture) - Phi(expert)).

    Linear in w, so the minimum is the smallest coordinate of the gap.
    """
    gap = feature_expectations_exact(mdp, mixture) - phi_expert
    return float(gap.min())


def mwal_rounds_csv(result: MwalResult) -> str:
    """CSV serialization: one row per round, then a summary line with ledger totals."""
    k = result.weights.shape[1]
    header = ["t"] + [f"w_{i}" for i in range(k)] + ["rho_t"] + [f"loss_{i}" for i in range(k)]
    if result.raw_columns is not None:
        header += [f"g_{i}" for i in range(k)] + [f"clamped_{i}" for i in range(k)]
    lines = [",".join(header)]
    for t in range(result.weights.shape[0]):
        row = [str(t + 1)]
        row += [f"{v:.17g}" for v in result.weights[t]]
        row.append(f"{result.round_values[t]:.17g}")
        row += [f"{v:.17g}" for v in result.losses[t]]
        if result.raw_columns is not None:
            row += [f"{v:.17g}" for v in result.raw_columns[t]]
            row += [str(int(v)) for v in result.clamped[t]]
        lines.append(",".join(row))
    lines.append(
        f"# summary expert_calls={result.expert_calls} "
        f"generative_calls={result.generative_calls} beta={result.beta:.17g}"
    )
    return "\n".join(lines) + "\n"
