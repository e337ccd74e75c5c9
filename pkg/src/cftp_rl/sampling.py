"""Random maps and coupling from the past (CFTP).

A random map realizes one next-state draw per state. CFTP composes maps
backward in time until the composite sends every state to the same one;
that value is an exact draw from the stationary distribution.

Composition order matters: with maps f_{-1}, f_{-2}, ... (drawn in that
order, each for one step further into the past), the composite after t
maps is f_{-1} o f_{-2} o ... o f_{-t}, i.e. the newest map is applied
first. Maps are drawn once per past time and reused; redrawing one breaks
exactness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import MarkovChain, RewardModel, SampleLedger
from .errors import CapExceededError
from .seeding import as_generator, seed_sequence, substream


@dataclass
class CoalescenceRecord:
    """Outcome of a coalescence run: first hit time, state, and sampling cost."""

    t_c: int
    state: int
    calls: int


def _map_from_cum(cum: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(cum.shape[0])
    image = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(image, cum.shape[1] - 1)


def draw_random_map(chain: MarkovChain, rng: np.random.Generator) -> np.ndarray:
    """One realized next state per state, drawn independently across states."""
    return _map_from_cum(chain.cumulative(), rng)


class MapStore:
    """Append-only store of random maps indexed by past time t = 1, 2, ...

    The map for past time -t is drawn on first access and never redrawn.
    When constructed from an int or SeedSequence, map t comes from the
    substream keyed by t, so a run is reproducible and stores for parallel
    runs can be derived independently. When constructed from a Generator,
    maps are drawn from it sequentially.
    """

    def __init__(self, chain: MarkovChain, rng):
        self.chain = chain
        self._cum = chain.cumulative()
        self._maps: list[np.ndarray] = []
        if isinstance(rng, np.random.Generator):
            self._base = None
            self._gen = rng
        else:
            self._base = seed_sequence(rng)
            self._gen = None

    def __len__(self) -> int:
        return len(self._maps)

    def map_at(self, t: int) -> np.ndarray:
        """Map for past time -t (1-indexed), drawing any missing maps."""
        if t < 1:
            raise ValueError("past time index starts at 1")
        while len(self._maps) < t:
            idx = len(self._maps) + 1
            rng = self._gen if self._gen is not None else substream(self._base, idx)
            image = _map_from_cum(self._cum, rng)
            image.setflags(write=False)
            self._maps.append(image)
        return self._maps[t - 1]


def _cftp_core(map_at, n_states: int, step_cap: int, mode: str) -> tuple[int, int]:
    """Shared CFTP loop over an arbitrary map source; returns (state, t_c)."""
    if mode not in ("dense", "reps"):
        raise ValueError(f"unknown cftp mode {mode!r}")
    if mode == "dense":
        composite = np.arange(n_states)
        for t in range(1, step_cap + 1):
            composite = composite[map_at(t)]
            if (composite == composite[0]).all():
                return int(composite[0]), t
    else:
        # Track one representative value per coalesced class instead of the
        # full composite: labels[s] is s's class, values[c] its image.
        labels = np.arange(n_states)
        values = np.arange(n_states)
        for t in range(1, step_cap + 1):
            raw = labels[map_at(t)]
            uniq, labels = np.unique(raw, return_inverse=True)
            values = values[uniq]
            if values.shape[0] == 1:
                return int(values[0]), t
    raise CapExceededError(f"no coalescence within {step_cap} steps")


def cftp(
    chain: MarkovChain,
    rng,
    step_cap: int = 1_000_000,
    mode: str = "dense",
    store: MapStore | None = None,
    ledger: SampleLedger | None = None,
) -> tuple[int, CoalescenceRecord]:
    """Exact draw from the stationary distribution of an ergodic chain.

    Extends the past one step per iteration; the composite is maintained
    incrementally so each step costs O(n_states). ``mode="reps"`` tracks
    only class representatives once classes merge; both modes draw the same
    maps and return identically distributed outputs.

    Ergodicity is the caller's precondition: a chain that cannot coalesce
    surfaces as a step-cap error rather than an upfront rejection.
    """
    if store is None:
        store = MapStore(chain, rng)
    state, t_c = _cftp_core(store.map_at, chain.n_states, step_cap, mode)
    calls = t_c * chain.n_states
    if ledger is not None:
        ledger.add_generative(calls)
    return state, CoalescenceRecord(t_c=t_c, state=state, calls=calls)


def cftp_batch(
    chain: MarkovChain,
    n_samples: int,
    rng,
    step_cap: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized independent CFTP runs; returns (states, coalescence times).

    Each run extends its own past one step per iteration with its own maps,
    exactly as ``cftp`` does run by run, so the output distribution is the
    same; only the loop is shared across runs.
    """
    gen = as_generator(rng)
    n = chain.n_states
    cum = chain.cumulative()
    states = np.empty(n_samples, dtype=np.int64)
    times = np.empty(n_samples, dtype=np.int64)
    active = np.arange(n_samples)
    composite = np.tile(np.arange(n), (n_samples, 1))
    t = 0
    while active.size:
        t += 1
        if t > step_cap:
            raise CapExceededError(f"no coalescence within {step_cap} steps")
        u = gen.random((active.size, n))
        maps = np.empty((active.size, n), dtype=np.int64)
        for s in range(n):
            maps[:, s] = np.searchsorted(cum[s], u[:, s], side="right")
        np.minimum(maps, n - 1, out=maps)
        composite = np.take_along_axis(composite, maps, axis=1)
        done = (composite == composite[:, [0]]).all(axis=1)
        if done.any():
            states[active[done]] = composite[done, 0]
            times[active[done]] = t
            keep = ~done
            active = active[keep]
            composite = composite[keep]
    return states, times


def two_chain_coalesce(
    chain: MarkovChain,
    i: int,
    j: int,
    coupling: str = "independent",
    rng=None,
    step_cap: int = 10_000_000,
) -> CoalescenceRecord:
    """Run two forward chains from states i and j until they meet.

    ``independent`` draws each chain's transition separately; ``shared_map``
    applies one random map per step to both chains (costing n_states draws
    per step).
    """
    if coupling not in ("independent", "shared_map"):
        raise ValueError(f"unknown coupling {coupling!r}")
    gen = as_generator(rng if rng is not None else 0)
    if i == j:
        return CoalescenceRecord(t_c=0, state=int(i), calls=0)
    cum = chain.cumulative()
    cum_rows = [cum[s] for s in range(chain.n_states)]
    x, y = int(i), int(j)
    calls = 0
    for t in range(1, step_cap + 1):
        if coupling == "independent":
            u = gen.random(2)
            x = int(np.searchsorted(cum_rows[x], u[0], side="right"))
            y = int(np.searchsorted(cum_rows[y], u[1], side="right"))
            calls += 2
        else:
            image = _map_from_cum(cum, gen)
            x = int(image[x])
            y = int(image[y])
            calls += chain.n_states
        x = min(x, chain.n_states - 1)
        y = min(y, chain.n_states - 1)
        if x == y:
            return CoalescenceRecord(t_c=t, state=x, calls=calls)
    raise CapExceededError(f"no coalescence within {step_cap} steps")


def coalescence_times_batch(
    chain: MarkovChain,
    i: int,
    j: int,
    n_runs: int,
    rng,
    step_cap: int = 10_000_000,
    censor_at_cap: bool = False,
) -> np.ndarray:
    """Vectorized independent-coupling coalescence times over many runs.

    With ``censor_at_cap`` runs still apart at the cap report ``step_cap``
    as a censored time instead of raising, so sweeps can record the
    exceedance and continue.
    """
    gen = as_generator(rng)
    cum = chain.cumulative()
    x = np.full(n_runs, int(i), dtype=np.int64)
    y = np.full(n_runs, int(j), dtype=np.int64)
    times = np.zeros(n_runs, dtype=np.int64)
    active = np.arange(n_runs)
    if i == j:
        return times
    t = 0
    while active.size:
        t += 1
        if t > step_cap:
            if censor_at_cap:
                times[active] = step_cap
                break
            raise CapExceededError(f"no coalescence within {step_cap} steps")
        ux = gen.random(active.size)
        uy = gen.random(active.size)
        x = _row_sample(cum, x, ux)
        y = _row_sample(cum, y, uy)
        met = x == y
        times[active[met]] = t
        keep = ~met
        active, x, y = active[keep], x[keep], y[keep]
    return times


def _row_sample(cum: np.ndarray, states: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Next states for a batch of chains, by inverse CDF on each row."""
    rows = cum[states]
    nxt = (u[:, None] >= rows).sum(axis=1)
    return np.minimum(nxt, cum.shape[1] - 1)


def lower_bound_chain(n_states: int, epsilon: float, reward_mode: str = "bernoulli") -> MarkovChain:
    """Lazy chain that stays put w.p. 1 - eps, else jumps uniformly.

    P(s'|s) = (1 - eps) 1{s = s'} + eps / n. Its stationary distribution is
    uniform, it mixes in O(1/eps) steps, yet two independent chains need
    about n / (2 eps) steps to meet, which makes it the worst case for
    pairwise coalescence.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    transition = np.full((n_states, n_states), epsilon / n_states)
    transition[np.diag_indices(n_states)] += 1.0 - epsilon
    rewards = np.linspace(0.0, 1.0, n_states)
    return MarkovChain(transition, RewardModel(rewards, reward_mode))


class UnionFind:
    """Disjoint sets over 0..n-1 with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.n_classes = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.n_classes -= 1
        return True


@dataclass
class GrandCouplingRecord:
    """Outcome of a grand coupling: merge time, class-count path, final state."""

    merge_time: int
    class_counts: list[int]
    final_state: int
    calls: int


def grand_coupling_sim(
    chain: MarkovChain,
    rng,
    step_cap: int = 10_000_000,
) -> GrandCouplingRecord:
    """Run n_states forward chains under shared random maps until one class remains.

    Chains occupying the same state are merged (union-find over classes);
    the returned trajectory records the surviving-class count after each
    step, starting at n_states before any step.
    """
    gen = as_generator(rng)
    n = chain.n_states
    cum = chain.cumulative()
    uf = UnionFind(n)
    position = np.arange(n)  # current state of each class representative
    counts = [n]
    calls = 0
    if n == 1:
        return GrandCouplingRecord(merge_time=0, class_counts=counts, final_state=0, calls=0)
    for t in range(1, step_cap + 1):
        image = _map_from_cum(cum, gen)
        calls += n
        reps = {}
        for s in range(n):
            root = uf.find(s)
            if root in reps:
                continue
            reps[root] = int(image[position[root]])
        by_state: dict[int, int] = {}
        for root, state in reps.items():
            position[root] = state
            if state in by_state:
                uf.union(by_state[state], root)
            else:
                by_state[state] = root
        counts.append(uf.n_classes)
        if uf.n_classes == 1:
            final = int(position[uf.find(0)])
            return GrandCouplingRecord(merge_time=t, class_counts=counts, final_state=final, calls=calls)
    raise CapExceededError(f"no full merge within {step_cap} steps")
