"""Batch experiment runners: estimator-bias curves, coalescence scaling,
apprenticeship and policy-gradient validation runs, and the shared-store
sample-accounting study. Every runner writes CSV tables (hash-stamped from
the resolved config) plus SVG charts where there are curves to draw, and is
byte-deterministic in its configuration.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..apprenticeship import (
    ExpertModel,
    enumerate_deterministic_policies,
    feature_expectations_exact,
    game_value_oracle,
    margin_against_all_rewards,
    mwal,
    mwal_generative,
    mwal_rounds_csv,
)
from ..chains import induce_chain
from ..errors import CapExceededError
from ..estimators import SoftmaxPolicy, policy_gradient_batch
from ..eval_store import StoreEnsemble, estimate_all
from ..instances import random_ergodic_chain, random_mdp, two_state_chain
from ..sampling import (
    cftp_batch,
    coalescence_times_batch,
    grand_coupling_sim,
    lower_bound_chain,
)
from ..seeding import child_sequence, substream
from ..solvers import average_reward, mixing_time, optimal_policy
from .config import ExperimentConfig
from .svg import line_chart

TRUTH_EXAMPLE = 2.0 / 3.0


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list], config_hash: str) -> None:
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    lines.extend(",".join(_format_cell(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _prepare_out(config: ExperimentConfig) -> Path:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(
        config.resolved_text() + f"config_hash={config.config_hash()}\n"
    )
    return out


def _grid_1_2_5(lo: int, hi: int) -> list[int]:
    points = []
    base = 1
    while base <= hi:
        for mult in (1, 2, 5):
            value = base * mult
            if lo <= value <= hi:
                points.append(value)
        base *= 10
    if not points or points[-1] != hi:
        points.append(hi)
    return points


# ---------------------------------------------------------------------------
# example: estimator-bias study on the two-state chain
# ---------------------------------------------------------------------------

def _example_replicate(payload: tuple) -> tuple[int, dict]:
    seed, replicate, n_runs, t_guess_list, step_cap = payload
    chain = two_state_chain()
    cum = chain.cumulative()
    means = chain.reward.means
    results = {}
    for idx, t_guess in enumerate(t_guess_list):
        gen = substream(seed, replicate, idx)
        states = np.ones(n_runs, dtype=np.int64)  # initial distribution (0, 1)
        for _ in range(t_guess):
            u = gen.random(n_runs)
            states = np.minimum((u[:, None] >= cum[states]).sum(axis=1), 1)
        rewards = (gen.random(n_runs) < means[states]).astype(float)
        steps = np.full(n_runs, t_guess, dtype=np.int64)
        results[f"guess_{t_guess}"] = (rewards, steps)
    gen = substream(seed, replicate, len(t_guess_list))
    states, t_c = cftp_batch(chain, n_runs, gen, step_cap=step_cap)
    rewards = (gen.random(n_runs) < means[states]).astype(float)
    steps = t_c * chain.n_states + 1  # map draws plus the final reward query
    results["cftp"] = (rewards, steps)
    return replicate, results


def _example_bias_floor(t_guess: int) -> float:
    chain = two_state_chain()
    dist = np.array([0.0, 1.0])
    for _ in range(t_guess):
        dist = dist @ chain.transition
    return float((dist @ chain.reward.means - TRUTH_EXAMPLE) ** 2)


def run_example(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    n_runs = config.param("runs")
    t_guess_list = config.param("t_guess")
    step_cap = config.param("step_cap")
    estimators = [f"guess_{t}" for t in t_guess_list] + ["cftp"]

    payloads = [
        (config.seed, r, n_runs, tuple(t_guess_list), step_cap)
        for r in range(config.replicates)
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            collected = dict(pool.map(_example_replicate, payloads))
    else:
        collected = dict(map(_example_replicate, payloads))
    per_replicate = [collected[r] for r in range(config.replicates)]

    run_grid = _grid_1_2_5(10, n_runs)
    rows_runs = []
    curves_runs = {name: ([], []) for name in estimators}
    mse_by_estimator: dict[str, dict[int, float]] = {name: {} for name in estimators}
    for name in estimators:
        for checkpoint in run_grid:
            errors = np.array(
                [rep[name][0][:checkpoint].mean() - TRUTH_EXAMPLE for rep in per_replicate]
            )
            sq = errors**2
            mse = float(sq.mean())
            se = float(sq.std(ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else 0.0
            mean_steps = float(
                np.mean([rep[name][1][:checkpoint].sum() for rep in per_replicate])
            )
            rows_runs.append([name, checkpoint, mse, se, mean_steps])
            curves_runs[name][0].append(checkpoint)
            curves_runs[name][1].append(mse)
            mse_by_estimator[name][checkpoint] = mse
    _write_csv(
        out / "example_mse_vs_runs.csv",
        ["estimator", "runs", "mse", "se_mse", "mean_steps"],
        rows_runs,
        config.config_hash(),
    )

    total_steps = {
        name: min(int(rep[name][1].sum()) for rep in per_replicate) for name in estimators
    }
    step_grid = _grid_1_2_5(100, min(total_steps.values()))
    rows_steps = []
    curves_steps = {name: ([], []) for name in estimators}
    final_step_mse = {}
    for name in estimators:
        for checkpoint in step_grid:
            errors = []
            used_runs = []
            for rep in per_replicate:
                cumulative = np.cumsum(rep[name][1])
                k = int(np.searchsorted(cumulative, checkpoint, side="right"))
                if k == 0:
                    continue
                errors.append(rep[name][0][:k].mean() - TRUTH_EXAMPLE)
                used_runs.append(k)
            sq = np.array(errors) ** 2
            mse = float(sq.mean())
            se = float(sq.std(ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else 0.0
            rows_steps.append([name, checkpoint, mse, se, float(np.mean(used_runs))])
            curves_steps[name][0].append(checkpoint)
            curves_steps[name][1].append(mse)
            final_step_mse[name] = mse
    _write_csv(
        out / "example_mse_vs_steps.csv",
        ["estimator", "steps", "mse", "se_mse", "mean_runs"],
        rows_steps,
        config.config_hash(),
    )

    # Summary: analytic bias floors, the tail log-log slope of the unbiased
    # curve, and the equal-step-budget comparison at the last checkpoint.
    last_decade = [c for c in run_grid if c >= n_runs / 10]
    xs = np.log([c for c in last_decade])
    ys = np.log([max(mse_by_estimator["cftp"][c], 1e-300) for c in last_decade])
    slope = float(np.polyfit(xs, ys, 1)[0])
    summary_rows = []
    for t_guess in t_guess_list:
        name = f"guess_{t_guess}"
        summary_rows.append(
            [name, _example_bias_floor(t_guess), mse_by_estimator[name][run_grid[-1]], np.nan]
        )
    summary_rows.append(["cftp", 0.0, mse_by_estimator["cftp"][run_grid[-1]], slope])
    _write_csv(
        out / "example_summary.csv",
        ["estimator", "bias_floor", "final_mse_vs_runs", "tail_loglog_slope"],
        summary_rows,
        config.config_hash(),
    )

    for stem, curves, x_label in (
        ("example_mse_vs_runs", curves_runs, "runs"),
        ("example_mse_vs_steps", curves_steps, "simulation steps"),
    ):
        series = [(name, curves[name][0], curves[name][1]) for name in estimators]
        (out / f"{stem}.svg").write_text(
            line_chart(series, stem.replace("_", " "), x_label, "MSE", log_x=True, log_y=True)
        )


# ---------------------------------------------------------------------------
# coalescence: scaling studies for pairwise and grand couplings
# ---------------------------------------------------------------------------

def run_coalescence(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    delta = config.param("delta")
    step_cap = config.param("step_cap")
    n_runs = config.param("runs")
    rows = []
    random_curve = ([], [])
    random_ref = ([], [])
    for size in config.param("sizes"):
        for chain_id in range(config.param("chains_per_size")):
            chain = random_ergodic_chain(size, substream(config.seed, 1, size, chain_id))
            t_mix = mixing_time(chain)
            times = coalescence_times_batch(
                chain, 0, size - 1, n_runs, substream(config.seed, 2, size, chain_id),
                step_cap, censor_at_cap=True,
            )
            capped = int((times >= step_cap).sum())
            threshold = 2 * size * t_mix * math.log(1 / delta)
            rows.append(
                [
                    "random", size, chain_id, np.nan, t_mix,
                    float(times.mean()),
                    float(np.quantile(times, 0.5)),
                    float(np.quantile(times, 0.9)),
                    float(np.quantile(times, 0.99)),
                    2.0 * size * t_mix,
                    threshold,
                    float((times > threshold).mean()),
                    n_runs,
                    "capped" if capped else "ok",
                ]
            )
            random_curve[0].append(size)
            random_curve[1].append(float(times.mean()))
            random_ref[0].append(size)
            random_ref[1].append(2.0 * size * t_mix)
    lazy_curve = ([], [])
    lazy_ref = ([], [])
    lazy_size = config.param("lazy_size")
    for eps in config.param("lazy_eps"):
        chain = lower_bound_chain(lazy_size, eps)
        t_mix = mixing_time(chain)
        times = coalescence_times_batch(
            chain, 0, 1, n_runs, substream(config.seed, 3, int(1000 * eps)),
            step_cap, censor_at_cap=True,
        )
        capped = int((times >= step_cap).sum())
        threshold = 2 * lazy_size * t_mix * math.log(1 / delta)
        rows.append(
            [
                "lazy", lazy_size, 0, eps, t_mix,
                float(times.mean()),
                float(np.quantile(times, 0.5)),
                float(np.quantile(times, 0.9)),
                float(np.quantile(times, 0.99)),
                lazy_size / (2 * eps),
                threshold,
                float((times > threshold).mean()),
                n_runs,
                "capped" if capped else "ok",
            ]
        )
        lazy_curve[0].append(1.0 / eps)
        lazy_curve[1].append(float(times.mean()))
        lazy_ref[0].append(1.0 / eps)
        lazy_ref[1].append(lazy_size / (2 * eps))
    grand_curve = ([], [])
    grand_ref = ([], [])
    for size in config.param("grand_sizes"):
        chain = random_ergodic_chain(size, substream(config.seed, 4, size))
        t_mix = mixing_time(chain)
        merge_list = []
        capped = 0
        for i in range(config.param("grand_runs")):
            try:
                merge_list.append(
                    grand_coupling_sim(chain, substream(config.seed, 5, size, i), step_cap).merge_time
                )
            except CapExceededError:
                merge_list.append(step_cap)
                capped += 1
        merges = np.array(merge_list)
        threshold = 512 * size * t_mix * math.log(1 / delta)
        rows.append(
            [
                "grand", size, 0, np.nan, t_mix,
                float(merges.mean()),
                float(np.quantile(merges, 0.5)),
                float(np.quantile(merges, 0.9)),
                float(np.quantile(merges, 0.99)),
                2.0 * size * t_mix,
                threshold,
                float((merges > threshold).mean()),
                int(merges.size),
                "capped" if capped else "ok",
            ]
        )
        grand_curve[0].append(size)
        grand_curve[1].append(float(merges.mean()))
        grand_ref[0].append(size)
        grand_ref[1].append(threshold)
    _write_csv(
        out / "coalescence.csv",
        [
            "family", "size", "chain_id", "eps", "t_mix", "mean_tc",
            "q50", "q90", "q99", "mean_bound", "tail_threshold", "exceed_frac", "n_runs",
            "status",
        ],
        rows,
        config.config_hash(),
    )
    (out / "coalescence_random.svg").write_text(
        line_chart(
            [("mean coalescence time", *random_curve), ("2 n Tmix", *random_ref)],
            "two-chain coalescence, random ergodic chains",
            "states", "steps",
        )
    )
    (out / "coalescence_lazy.svg").write_text(
        line_chart(
            [("mean coalescence time", *lazy_curve), ("n / (2 eps)", *lazy_ref)],
            "two-chain coalescence, lazy chains",
            "1 / eps", "steps",
        )
    )
    (out / "coalescence_grand.svg").write_text(
        line_chart(
            [("mean merge time", *grand_curve), ("512 n Tmix log(1/delta)", *grand_ref)],
            "grand coupling merge times",
            "states", "steps", log_y=True,
        )
    )


# ---------------------------------------------------------------------------
# mwal / mwal-gen: apprenticeship runs with oracle comparisons
# ---------------------------------------------------------------------------

def _mwal_instance(n_states: int, n_actions: int, k: int, instance_seed: int):
    mdp = random_mdp(n_states, n_actions, instance_seed, n_features=k)
    w_star = np.arange(k, 0, -1, dtype=float)
    w_star /= w_star.sum()
    expert_policy = optimal_policy(mdp, reward_override=mdp.features @ w_star)
    return mdp, expert_policy


def _thm8_budgets(epsilon: float, delta: float, k: int) -> tuple[int, int]:
    n_rounds = max(1, math.ceil(144.0 / epsilon**2 * math.log(max(k, 2))))
    m = max(1, math.ceil(18.0 / epsilon**2 * math.log(2 * k / delta)))
    return n_rounds, m


def run_mwal(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    epsilon, delta, k = config.param("epsilon"), config.param("delta"), config.param("k")
    derived_rounds, derived_m = _thm8_budgets(epsilon, delta, k)
    n_rounds = config.param("n_rounds") or derived_rounds
    m = config.param("m") or derived_m
    mdp, expert_policy = _mwal_instance(
        config.param("n_states"), config.param("n_actions"), k, config.param("instance_seed")
    )
    phi_expert = feature_expectations_exact(mdp, expert_policy)
    oracle = game_value_oracle(mdp, expert_policy)
    summary_rows = []
    for replicate in range(config.replicates):
        expert = ExpertModel(expert_policy, mdp.n_actions, substream(config.seed, replicate, 0))
        result = mwal(
            mdp, expert, k, n_rounds, m, child_sequence(config.seed, replicate, 1),
            step_cap=config.param("step_cap"),
        )
        margin = margin_against_all_rewards(mdp, result.mixture, phi_expert)
        summary_rows.append(
            [
                replicate, n_rounds, m, result.beta, oracle.value, margin,
                margin >= oracle.value - epsilon,
                result.expert_calls, result.generative_calls,
            ]
        )
        if replicate == 0:
            text = f"# config_hash={config.config_hash()}\n" + mwal_rounds_csv(result)
            (out / "mwal_rounds.csv").write_text(text)
            series = [
                (f"w_{i}", list(range(1, n_rounds + 1)), list(result.weights[:, i]))
                for i in range(k)
            ]
            (out / "mwal_weights.svg").write_text(
                line_chart(series, "feature weights per round", "round", "weight")
            )
    _write_csv(
        out / "mwal_summary.csv",
        [
            "replicate", "n_rounds", "m", "beta", "v_star", "margin",
            "success", "expert_calls", "generative_calls",
        ],
        summary_rows,
        config.config_hash(),
    )


def run_mwal_gen(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    epsilon, delta, k = config.param("epsilon"), config.param("delta"), config.param("k")
    n_rounds, b = config.param("n_rounds"), config.param("b")
    mdp, expert_policy = _mwal_instance(
        config.param("n_states"), config.param("n_actions"), k, config.param("instance_seed")
    )
    phi_expert = feature_expectations_exact(mdp, expert_policy)
    oracle = game_value_oracle(mdp, expert_policy)
    summary_rows = []
    for replicate in range(config.replicates):
        expert = ExpertModel(expert_policy, mdp.n_actions, substream(config.seed, replicate, 0))
        result = mwal_generative(
            mdp, expert, k, n_rounds, delta, b, child_sequence(config.seed, replicate, 1),
            step_cap=config.param("step_cap"),
        )
        margin = margin_against_all_rewards(mdp, result.mixture, phi_expert)
        norms = np.abs(result.raw_columns).max(axis=1)
        tail = [float((norms > ell * b).mean()) for ell in range(1, 5)]
        summary_rows.append(
            [
                replicate, n_rounds, b, result.rescale_bound, oracle.value, margin,
                margin >= oracle.value - epsilon,
                int(result.clamped.sum()), *tail,
                result.expert_calls, result.generative_calls,
            ]
        )
        if replicate == 0:
            text = f"# config_hash={config.config_hash()}\n" + mwal_rounds_csv(result)
            (out / "mwal_gen_rounds.csv").write_text(text)
            series = [
                (f"w_{i}", list(range(1, n_rounds + 1)), list(result.weights[:, i]))
                for i in range(k)
            ]
            (out / "mwal_gen_weights.svg").write_text(
                line_chart(series, "feature weights per round", "round", "weight")
            )
    _write_csv(
        out / "mwal_gen_summary.csv",
        [
            "replicate", "n_rounds", "b", "rescale_bound", "v_star", "margin", "success",
            "n_clamped", "tail_1b", "tail_2b", "tail_3b", "tail_4b",
            "expert_calls", "generative_calls",
        ],
        summary_rows,
        config.config_hash(),
    )


# ---------------------------------------------------------------------------
# pg: policy-gradient estimator validation
# ---------------------------------------------------------------------------

def _pg_instances(config: ExperimentConfig):
    choice = config.param("instance")
    instances = []
    if choice in ("single_state", "both"):
        from ..chains import RewardModel, TabularMDP

        mdp = TabularMDP(np.ones((2, 1, 1)), RewardModel(np.array([[1.0, 0.0]])))
        instances.append(("single_state", mdp, SoftmaxPolicy(np.zeros((1, 2)))))
    if choice in ("random", "both"):
        mdp = random_mdp(
            config.param("n_states"), config.param("n_actions"), config.param("instance_seed")
        )
        theta = substream(config.seed, 90).normal(size=(mdp.n_states, mdp.n_actions)) * 0.5
        instances.append(("random", mdp, SoftmaxPolicy(theta)))
    return instances


def _exact_gradient(mdp, policy: SoftmaxPolicy, step: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(policy.theta)
    for s in range(grad.shape[0]):
        for a in range(grad.shape[1]):
            up = policy.theta.copy()
            up[s, a] += step
            down = policy.theta.copy()
            down[s, a] -= step
            rho_up = average_reward(induce_chain(mdp, SoftmaxPolicy(up).as_policy()))
            rho_down = average_reward(induce_chain(mdp, SoftmaxPolicy(down).as_policy()))
            grad[s, a] = (rho_up - rho_down) / (2 * step)
    return grad


def run_pg(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    n_samples = config.param("samples")
    rows = []
    for name, mdp, policy in _pg_instances(config):
        oracle = _exact_gradient(mdp, policy)
        grads = policy_gradient_batch(
            mdp, policy, n_samples, substream(config.seed, 91, len(rows)),
            step_cap=config.param("step_cap"),
        )
        mean = grads.mean(axis=0)
        se = grads.std(axis=0, ddof=1) / math.sqrt(n_samples)
        for s in range(mdp.n_states):
            for a in range(mdp.n_actions):
                z = (mean[s, a] - oracle[s, a]) / max(se[s, a], 1e-300)
                rows.append(
                    [name, s, a, mean[s, a], se[s, a], oracle[s, a], z, abs(z) <= 3.0]
                )
    _write_csv(
        out / "pg_components.csv",
        ["instance", "state", "action", "estimate", "se", "oracle", "z", "within_3se"],
        rows,
        config.config_hash(),
    )


# ---------------------------------------------------------------------------
# eval-store: sample sharing across all deterministic policies
# ---------------------------------------------------------------------------

def run_eval_store(config: ExperimentConfig) -> None:
    out = _prepare_out(config)
    epsilon, delta = config.param("epsilon"), config.param("delta")
    mdp = random_mdp(
        config.param("n_states"), config.param("n_actions"), config.param("instance_seed")
    )
    policies = enumerate_deterministic_policies(mdp.n_states, mdp.n_actions)
    exact = np.array([average_reward(induce_chain(mdp, p)) for p in policies])
    rows = []
    summary_rows = []
    for replicate in range(config.replicates):
        ensemble = StoreEnsemble(
            mdp, epsilon, delta, len(policies), child_sequence(config.seed, replicate)
        )
        estimates = estimate_all(ensemble, policies, step_cap=config.param("step_cap"))
        shared_calls = ensemble.ledger_total
        fresh_calls = 0
        for j, policy in enumerate(policies):
            chain = induce_chain(mdp, policy)
            _, times = cftp_batch(
                chain, ensemble.n_copies, substream(config.seed, replicate, 100 + j),
                step_cap=config.param("step_cap"),
            )
            fresh_calls += int(times.sum()) * chain.n_states
            rows.append(
                [
                    replicate, "-".join(str(a) for a in policy.actions),
                    estimates[j], exact[j], abs(estimates[j] - exact[j]),
                ]
            )
        max_err = float(np.max(np.abs(estimates - exact)))
        summary_rows.append(
            [
                replicate, ensemble.n_copies, max_err, max_err <= epsilon,
                shared_calls, fresh_calls, shared_calls < fresh_calls,
            ]
        )
    _write_csv(
        out / "eval_store_policies.csv",
        ["replicate", "policy", "estimate", "exact", "abs_err"],
        rows,
        config.config_hash(),
    )
    _write_csv(
        out / "eval_store_summary.csv",
        [
            "replicate", "n_copies", "max_err", "within_eps",
            "shared_calls", "fresh_calls", "shared_below_fresh",
        ],
        summary_rows,
        config.config_hash(),
    )


RUNNERS = {
    "example": run_example,
    "coalescence": run_coalescence,
    "mwal": run_mwal,
    "mwal-gen": run_mwal_gen,
    "pg": run_pg,
    "eval-store": run_eval_store,
}
