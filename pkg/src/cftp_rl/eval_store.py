"""Shared sample matrix for unbiased policy evaluation across many policies.

The matrix holds, per row, one next-state draw and one reward draw for every
(state, action) pair. Restricting a row to the columns (s, pi(s)) of a
deterministic policy pi yields a valid random map of the chain pi induces,
so the same rows drive CFTP for every policy. Rows are appended on demand
and never modified, which is what lets exponentially many policies share
polynomially many generative calls.

Reusing rows across policies correlates their estimates within one matrix;
averaging over independent copies (StoreEnsemble) restores concentration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chains import DeterministicPolicy, SampleLedger, TabularMDP
from .sampling import _cftp_core
from .seeding import child_sequence, seed_sequence, substream


@dataclass
class StoreRow:
    """One sample per (state, action): next-state indices and reward draws."""

    next_state: np.ndarray  # (n_states, n_actions) int
    reward: np.ndarray  # (n_states, n_actions) float


class SampleMatrix:
    """Append-only matrix of per-(state, action) samples; rows double as CFTP maps.

    Row t is drawn from the substream keyed by t, so a matrix grown after a
    checkpoint restore is bit-identical to one grown without interruption.
    Single-writer: do not evaluate one matrix concurrently, growth during
    evaluation is part of the contract.
    """

    def __init__(self, mdp: TabularMDP, rng, ledger: SampleLedger | None = None):
        self.mdp = mdp
        self._base = seed_sequence(rng)
        self._cum = np.cumsum(mdp.transition, axis=2)
        self.rows: list[StoreRow] = []
        self.ledger = ledger if ledger is not None else SampleLedger()

    def __len__(self) -> int:
        return len(self.rows)

    def _append_row(self) -> None:
        idx = len(self.rows) + 1
        gen = substream(self._base, idx)
        n, m = self.mdp.n_states, self.mdp.n_actions
        u_next = gen.random((n, m))
        nxt = np.empty((n, m), dtype=np.int64)
        for a in range(m):
            nxt[:, a] = (u_next[:, [a]] >= self._cum[a]).sum(axis=1)
        np.minimum(nxt, n - 1, out=nxt)
        reward = self.mdp.reward.sample(self.mdp.reward.means, gen)
        row = StoreRow(next_state=nxt, reward=np.asarray(reward, dtype=float))
        row.next_state.setflags(write=False)
        row.reward.setflags(write=False)
        self.rows.append(row)
        self.ledger.add_generative(n * m)

    def row_at(self, t: int) -> StoreRow:
        """Row for past time -t (1-indexed), growing the matrix on demand."""
        if t < 1:
            raise ValueError("row index starts at 1")
        while len(self.rows) < t:
            self._append_row()
        return self.rows[t - 1]

    def restricted_map(self, t: int, policy: DeterministicPolicy) -> np.ndarray:
        """Row t restricted to columns (s, pi(s)): a random map of pi's chain."""
        row = self.row_at(t)
        return row.next_state[np.arange(self.mdp.n_states), policy.actions]


@dataclass
class EvaluationRecord:
    """One unbiased average-reward sample for a policy, from stored rows."""

    reward: float
    rows_consumed: int
    state: int


def evaluate_policy(
    store: SampleMatrix,
    policy: DeterministicPolicy,
    step_cap: int = 1_000_000,
) -> EvaluationRecord:
    """Run CFTP for ``policy`` on the stored rows; returns the reward sample.

    Row t supplies the random map for past time -t, with rows appended until
    coalescence. The returned reward is the sample stored at (coalescence
    state, pi(state)) in the row whose addition made the composite constant;
    reward draws are independent of every next-state draw, so the stored
    sample is an unbiased draw of R(state, pi(state)).
    """
    if policy.actions.shape[0] != store.mdp.n_states:
        raise ValueError("policy does not match the stored MDP")
    state, t_c = _cftp_core(
        lambda t: store.restricted_map(t, policy), store.mdp.n_states, step_cap, "dense"
    )
    row = store.row_at(t_c)
    reward = float(row.reward[state, policy.actions[state]])
    return EvaluationRecord(reward=reward, rows_consumed=t_c, state=state)


class StoreEnsemble:
    """Independent sample matrices whose averaged estimates concentrate.

    n = ceil(log(n_policies / delta) / epsilon^2) copies suffice for all
    ``n_policies`` estimates to be within epsilon simultaneously with
    probability at least 1 - delta.
    """

    def __init__(self, mdp: TabularMDP, epsilon: float, delta: float, n_policies: int, rng):
        if not 0.0 < epsilon < 1.0 or not 0.0 < delta < 1.0 or n_policies < 1:
            raise ValueError("need epsilon, delta in (0, 1) and n_policies >= 1")
        self.epsilon = epsilon
        self.delta = delta
        self.n_policies = n_policies
        self.n_copies = math.ceil(math.log(n_policies / delta) / epsilon**2)
        base = seed_sequence(rng)
        self.copies = [SampleMatrix(mdp, child_sequence(base, i)) for i in range(self.n_copies)]

    @property
    def ledger_total(self) -> int:
        return sum(copy.ledger.generative_calls for copy in self.copies)


def estimate_all(
    ensemble: StoreEnsemble,
    policies: list[DeterministicPolicy],
    step_cap: int = 1_000_000,
) -> np.ndarray:
    """Per-policy average-reward estimates, averaging one sample per copy."""
    estimates = np.zeros(len(policies))
    for copy in ensemble.copies:
        for j, policy in enumerate(policies):
            estimates[j] += evaluate_policy(copy, policy, step_cap=step_cap).reward
    return estimates / ensemble.n_copies


# ---------------------------------------------------------------------------
# Persistence: header "states n actions m rows t", then two lines per row
# (next-state indices, then 17-significant-digit reward decimals). Growing a
# restored matrix reproduces the uninterrupted run bit for bit because row
# t's draws depend only on (seed, t).
# ---------------------------------------------------------------------------

def dumps_store(store: SampleMatrix) -> str:
    n, m = store.mdp.n_states, store.mdp.n_actions
    lines = [f"states {n} actions {m} rows {len(store.rows)}"]
    for row in store.rows:
        lines.append(" ".join(str(int(v)) for v in row.next_state.ravel()))
        lines.append(" ".join(f"{float(v):.17g}" for v in row.reward.ravel()))
    return "\n".join(lines) + "\n"


def loads_store(text: str, mdp: TabularMDP, rng, ledger: SampleLedger | None = None) -> SampleMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if header[0::2] != ["states", "actions", "rows"]:
        raise ValueError("bad header; expected 'states n actions m rows t'")
    n, m, t = int(header[1]), int(header[3]), int(header[5])
    if (n, m) != (mdp.n_states, mdp.n_actions):
        raise ValueError("stored shape does not match the MDP")
    store = SampleMatrix(mdp, rng, ledger=ledger)
    for i in range(t):
        nxt = np.array([int(v) for v in lines[1 + 2 * i].split()], dtype=np.int64).reshape(n, m)
        reward = np.array([float(v) for v in lines[2 + 2 * i].split()]).reshape(n, m)
        nxt.setflags(write=False)
        reward.setflags(write=False)
        store.rows.append(StoreRow(next_state=nxt, reward=reward))
    return store


def save_store(store: SampleMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_store(store))


def load_store(path, mdp: TabularMDP, rng, ledger: SampleLedger | None = None) -> SampleMatrix:
    with open(path) as fh:
        return loads_store(fh.read(), mdp, rng, ledger=ledger)
