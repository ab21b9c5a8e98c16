"""Reference policies for the comparative experiments.

Performance and Ondemand mimic the QoS-unaware OS frequency governors at
control-interval granularity; RH applies the same horizontal rules as the
learned controller but never leaves the maximum operating point; the
model-free variant is the learned controller with both transfer
mechanisms disabled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .controller import (
    LearningParams,
    RewardParams,
    RhqvAgent,
    TransitionHistory,
    evaluate_scale_down,
    evaluate_scale_up,
)
from .simcore import Cluster, ControlDecision, OperatingPoint


@dataclass(frozen=True)
class OndemandParams:
    up_threshold: float = 0.8

    def __post_init__(self):
        if not 0 < self.up_threshold < 1:
            raise ValueError("up_threshold must lie in (0, 1)")


def performance_decide(op_table: Sequence[OperatingPoint]) -> int:
    """Performance governor: always the maximum operating point."""
    return len(op_table) - 1


def ondemand_decide(rho: float, op_table: Sequence[OperatingPoint], p: OndemandParams) -> int:
    """Ondemand governor at control-interval granularity.

    Above the threshold jump to the maximum frequency; below it scale the
    target linearly with load and snap to the nearest operating point at
    or above the target.
    """
    if rho < 0:
        raise ValueError("utilization must be non-negative")
    if rho > p.up_threshold:
        return len(op_table) - 1
    f_min = op_table[0].freq_hz
    f_max = op_table[-1].freq_hz
    target = f_min + (rho / p.up_threshold) * (f_max - f_min)
    for op in op_table:
        if op.freq_hz >= target:
            return op.index
    return len(op_table) - 1


class _RuledPolicy:
    """Shared plumbing: optional horizontal rules identical to the learned
    controller's, plus the transition history that gates scale-down."""

    def __init__(
        self,
        cluster: Cluster,
        t_rt_s: float,
        v_up: int = 3,
        scale_down_margin: float = 0.9,
        horizontal: bool = False,
    ):
        self.cluster = cluster
        self.t_rt_s = t_rt_s
        self.v_up = v_up
        self.scale_down_margin = scale_down_margin
        self.horizontal = horizontal
        self.history = TransitionHistory()
        self._prev_n = None

    @property
    def max_op_index(self) -> int:
        return self.cluster.node.max_op_index

    def _rule_decision(self, users, state, recent) -> ControlDecision | None:
        if not self.horizontal:
            return None
        if evaluate_scale_up(
            recent, state.n_active, self.cluster.n_max, self.max_op_index, self.v_up
        ):
            return ControlDecision(
                n_active=state.n_active + 1,
                op_index=self.max_op_index,
                provenance="rule-scale-up",
            )
        if evaluate_scale_down(
            users, state.rt_s, state.n_active, self.history, self.t_rt_s, self.scale_down_margin
        ):
            return ControlDecision(
                n_active=state.n_active - 1,
                op_index=self.max_op_index,
                provenance="rule-scale-down",
            )
        return None

    def _node_count(self, state) -> int:
        return state.n_active if self.horizontal else self.cluster.n_max

    def observe(self, record) -> None:
        if self._prev_n is not None and record.n_active != self._prev_n:
            self.history.record(record.n_active, record.users)
        self._prev_n = record.n_active


class PerformancePolicy(_RuledPolicy):
    """Maximum frequency regardless of load; fixed node count by default."""

    name = "performance"

    def decide(self, users, state, recent) -> ControlDecision:
        rule = self._rule_decision(users, state, recent)
        if rule is not None:
            return rule
        return ControlDecision(
            n_active=self._node_count(state),
            op_index=performance_decide(self.cluster.node.op_table),
            provenance="governor",
        )


class OndemandPolicy(_RuledPolicy):
    """Utilization-proportional frequency; fixed node count by default."""

    name = "ondemand"

    def __init__(self, cluster, t_rt_s, params: OndemandParams | None = None, **kwargs):
        super().__init__(cluster, t_rt_s, **kwargs)
        self.params = params or OndemandParams()

    def decide(self, users, state, recent) -> ControlDecision:
        rule = self._rule_decision(users, state, recent)
        if rule is not None:
            return rule
        n = self._node_count(state)
        rho = self.cluster.utilization(users, n, state.op_index)
        return ControlDecision(
            n_active=n,
            op_index=ondemand_decide(rho, self.cluster.node.op_table, self.params),
            provenance="governor",
        )


class RhOnlyPolicy(_RuledPolicy):
    """Horizontal rules identical to the learned controller; frequency
    pinned at the maximum operating point."""

    name = "rh"

    def __init__(self, cluster, t_rt_s, v_up: int = 3, scale_down_margin: float = 0.9):
        super().__init__(cluster, t_rt_s, v_up, scale_down_margin, horizontal=True)

    def decide(self, users, state, recent) -> ControlDecision:
        rule = self._rule_decision(users, state, recent)
        if rule is not None:
            return rule
        return ControlDecision(
            n_active=state.n_active,
            op_index=self.max_op_index,
            provenance="governor",
        )


class ModelFreeQPolicy(RhqvAgent):
    """The learned controller with curve seeding and row transfer disabled:
    unexplored cells are learned through real visits only."""

    def __init__(
        self,
        op_table: Sequence[OperatingPoint],
        n_max: int,
        learning: LearningParams,
        reward: RewardParams,
        v_up: int = 3,
        scale_down_margin: float = 0.9,
        seed: int = 0,
    ):
        super().__init__(
            op_table,
            n_max,
            learning,
            reward,
            v_up=v_up,
            scale_down_margin=scale_down_margin,
            seed=seed,
            enable_transfer=False,
            name="modelfree-q",
        )
