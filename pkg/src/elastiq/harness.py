"""Experiment runner: drives policies over the simulator, computes the
comparison metrics, and assembles deterministic reports.

Loop order per control interval: observe the trace's user count, ask the
policy for a decision, advance the simulator, log the record, then let
the policy learn from the response time its action produced. The control
interval equals the trace's sample spacing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .baselines import ModelFreeQPolicy, OndemandParams, OndemandPolicy, PerformancePolicy, RhOnlyPolicy
from .config import POLICY_NAMES, ExperimentConfig
from .controller import RhqvAgent
from .simcore import Cluster
from .workload import WorkloadTrace, gen_diurnal, gen_irregular, load_trace

RECORDS_HEADER = "t_s,users,n_active,op_index,rt_s,power_w,violated,provenance"


class HarnessError(ValueError):
    """Raised for invalid experiment inputs."""


@dataclass(frozen=True)
class MetricsRecord:
    """One per-interval log row."""

    t_s: float
    users: int
    n_active: int
    op_index: int
    rt_s: float
    power_w: float
    violated: bool
    provenance: str


def build_policy(name: str, config: ExperimentConfig, cluster: Cluster, seed: int):
    """Instantiate a policy by name against a configured cluster."""
    if name not in POLICY_NAMES:
        raise HarnessError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
    reward = config.reward.params()
    learning = config.learning.params()
    ctrl = config.control
    if name == "rhqv" or name == "modelfree-q":
        cls = RhqvAgent if name == "rhqv" else ModelFreeQPolicy
        return cls(
            op_table=cluster.node.op_table,
            n_max=cluster.n_max,
            learning=learning,
            reward=reward,
            v_up=ctrl.v_up,
            scale_down_margin=ctrl.scale_down_margin,
            seed=seed,
        )
    if name == "rh":
        return RhOnlyPolicy(cluster, reward.t_rt_s, v_up=ctrl.v_up, scale_down_margin=ctrl.scale_down_margin)
    if name == "ondemand":
        return OndemandPolicy(
            cluster,
            reward.t_rt_s,
            params=OndemandParams(up_threshold=ctrl.ondemand_up_threshold),
            v_up=ctrl.v_up,
            scale_down_margin=ctrl.scale_down_margin,
            horizontal=ctrl.compose_rh,
        )
    return PerformancePolicy(
        cluster,
        reward.t_rt_s,
        v_up=ctrl.v_up,
        scale_down_margin=ctrl.scale_down_margin,
        horizontal=ctrl.compose_rh,
    )


def run(cluster: Cluster, trace: WorkloadTrace, policy, t_rt_s: float) -> list[MetricsRecord]:
    """Run one policy over a trace; one record per control interval."""
    if len(trace) < 2:
        raise HarnessError("trace must be longer than one interval")
    t0 = trace.samples[0][0]
    state = cluster.initial_state(t_s=t0 - cluster.interval_s)
    records: list[MetricsRecord] = []
    for _, users in trace.samples:
        decision = policy.decide(users, state, records)
        state = cluster.step(state, users, decision)
        record = MetricsRecord(
            t_s=state.t_s,
            users=users,
            n_active=state.n_active,
            op_index=state.op_index,
            rt_s=state.rt_s,
            power_w=state.power_w,
            violated=state.rt_s > t_rt_s,
            provenance=decision.provenance,
        )
        records.append(record)
        policy.observe(record)
    return records


def qos_violation_rate(records: list[MetricsRecord]) -> float:
    """Percentage of control intervals whose response time broke QoS."""
    if not records:
        raise HarnessError("cannot compute violation rate over empty records")
    return 100.0 * sum(1 for r in records if r.violated) / len(records)


def mean_power(records: list[MetricsRecord]) -> float:
    if not records:
        raise HarnessError("cannot compute mean power over empty records")
    return sum(r.power_w for r in records) / len(records)


def power_saving(records_method: list[MetricsRecord], records_baseline: list[MetricsRecord]) -> float:
    """Mean-power saving of a method versus a baseline, in percent."""
    if len(records_method) != len(records_baseline):
        raise HarnessError(
            f"record streams differ in length: {len(records_method)} vs {len(records_baseline)}"
        )
    p_method = mean_power(records_method)
    p_baseline = mean_power(records_baseline)
    return 100.0 * (p_baseline - p_method) / p_baseline


def records_to_csv(records: list[MetricsRecord]) -> str:
    lines = [RECORDS_HEADER]
    for r in records:
        violated = "true" if r.violated else "false"
        lines.append(
            f"{r.t_s!r},{r.users},{r.n_active},{r.op_index},{r.rt_s!r},{r.power_w!r},"
            f"{violated},{r.provenance}"
        )
    return "\n".join(lines) + "\n"


def resolve_trace(config: ExperimentConfig, seed: int, trace: WorkloadTrace | None = None) -> tuple[WorkloadTrace, str]:
    """Pick the trace for a run: explicit > generated-from-config > file path.

    Returns the trace and a short provenance label for the report.
    """
    if trace is not None:
        return trace, "inline"
    wl = config.workload
    if wl is None:
        raise HarnessError("no trace given and config has no workload section")
    if wl.path is not None:
        return load_trace(wl.path), wl.path
    spec = wl.generate
    gen_seed = spec.seed if spec.seed is not None else seed
    if spec.kind == "irregular":
        t = gen_irregular(
            gen_seed,
            spec.duration_s,
            spec.interval_s,
            spec.u_min,
            spec.u_max,
            spec.jump_prob,
            spec.jump_scale,
            spec.step_frac,
        )
    else:
        t = gen_diurnal(
            gen_seed,
            spec.duration_s,
            spec.interval_s,
            spec.u_peak,
            spec.u_trough,
            spec.peak_hour,
            spec.noise_frac,
        )
    return t, f"generated:{spec.kind}"


def run_experiment(
    config: ExperimentConfig,
    policy_name: str,
    seed: int | None = None,
    trace: WorkloadTrace | None = None,
    qtables_doc: dict | None = None,
) -> tuple[list[MetricsRecord], dict, object]:
    """Run one policy; returns (records, summary, policy instance)."""
    run_seed = config.seed if seed is None else seed
    trace, trace_source = resolve_trace(config, run_seed, trace)
    if len(trace) < 2:
        raise HarnessError("trace must be longer than one interval")
    cluster = config.cluster(interval_s=trace.interval_s, seed=run_seed)
    policy = build_policy(policy_name, config, cluster, run_seed)
    if qtables_doc is not None:
        if not isinstance(policy, RhqvAgent):
            raise HarnessError(f"policy {policy_name!r} has no Q-tables to load")
        policy.load_doc(qtables_doc)
    records = run(cluster, trace, policy, config.reward.t_rt_s)
    summary = {
        "policy": policy_name,
        "seed": run_seed,
        "config_hash": config.config_hash(),
        "trace": {
            "source": trace_source,
            "n_samples": len(trace),
            "interval_s": trace.interval_s,
        },
        "intervals": len(records),
        "violations": sum(1 for r in records if r.violated),
        "violation_rate_pct": qos_violation_rate(records),
        "mean_power_w": mean_power(records),
    }
    return records, summary, policy


def compare(
    config: ExperimentConfig,
    policies: list[str],
    seed: int | None = None,
    trace: WorkloadTrace | None = None,
) -> dict:
    """Run several policies over one shared trace and seed.

    The first policy is treated as the method; savings are reported for it
    against every other policy. Returns {"summary": ..., "records_csv":
    {policy: csv}} with fully deterministic content.
    """
    if len(policies) < 2:
        raise HarnessError("compare needs at least 2 policies")
    if len(set(policies)) != len(policies):
        raise HarnessError("duplicate policy names in compare")
    run_seed = config.seed if seed is None else seed
    shared_trace, trace_source = resolve_trace(config, run_seed, trace)
    per_policy: dict[str, list[MetricsRecord]] = {}
    summaries: dict[str, dict] = {}
    for name in policies:
        records, summary, _ = run_experiment(config, name, seed=run_seed, trace=shared_trace)
        per_policy[name] = records
        summaries[name] = {
            "intervals": summary["intervals"],
            "violations": summary["violations"],
            "violation_rate_pct": summary["violation_rate_pct"],
            "mean_power_w": summary["mean_power_w"],
        }
    method = policies[0]
    savings = {
        other: power_saving(per_policy[method], per_policy[other])
        for other in policies[1:]
    }
    summary = {
        "config_hash": config.config_hash(),
        "seed": run_seed,
        "trace": {
            "source": trace_source,
            "n_samples": len(shared_trace),
            "interval_s": shared_trace.interval_s,
        },
        "method": method,
        "policies": summaries,
        "savings_pct": savings,
    }
    return {
        "summary": summary,
        "records_csv": {name: records_to_csv(records) for name, records in per_policy.items()},
    }


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"
