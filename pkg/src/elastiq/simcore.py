"""Cluster model: DVFS operating points, queueing response time, power.

Nodes are identical single-queue stations behind an equal-split load
balancer. Per-request service time shrinks linearly with CPU frequency;
above a utilization cap the station reports a fixed saturated response
time instead of letting the queueing term blow up. Per-node dynamic power
follows the usual V^2 * f * load scaling on top of a constant idle floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Decision provenance tags recorded alongside every control action.
PROVENANCES = (
    "rule-scale-up",
    "rule-scale-down",
    "q-greedy",
    "q-explore",
    "islt-probe",
    "governor",
)


@dataclass(frozen=True)
class OperatingPoint:
    """One DVFS step: position in the ascending-frequency table plus (f, V)."""

    index: int
    freq_hz: float
    voltage_v: float


def build_op_table(points: Sequence[tuple[float, float]]) -> tuple[OperatingPoint, ...]:
    """Build a validated operating-point table from (freq_hz, voltage_v) pairs.

    The table must have at least two entries, strictly ascending frequency,
    and non-decreasing voltage.
    """
    if len(points) < 2:
        raise ValueError("operating-point table needs at least 2 entries")
    table = tuple(
        OperatingPoint(index=i, freq_hz=float(f), voltage_v=float(v))
        for i, (f, v) in enumerate(points)
    )
    for prev, cur in zip(table, table[1:]):
        if cur.freq_hz <= prev.freq_hz:
            raise ValueError(
                f"operating-point frequencies must be strictly ascending "
                f"(index {cur.index}: {cur.freq_hz} Hz after {prev.freq_hz} Hz)"
            )
        if cur.voltage_v < prev.voltage_v:
            raise ValueError(
                f"operating-point voltage must be non-decreasing with frequency "
                f"(index {cur.index}: {cur.voltage_v} V after {prev.voltage_v} V)"
            )
    if any(op.freq_hz <= 0 or op.voltage_v <= 0 for op in table):
        raise ValueError("operating-point frequency and voltage must be positive")
    return table


def default_op_table() -> tuple[OperatingPoint, ...]:
    """Default 8-point table: 600-2000 MHz in 200 MHz steps, 0.90-1.25 V linear."""
    points = []
    for mhz in range(600, 2001, 200):
        volt = 0.90 + 0.35 * (mhz - 600) / 1400.0
        points.append((mhz * 1e6, volt))
    return build_op_table(points)


@dataclass(frozen=True)
class NodeModel:
    """Analytic model of one server node.

    s0_s is the per-request service time at the maximum frequency;
    cores_eff is the effective parallel capacity (heterogeneous cores
    collapsed into one number). rho_cap is the utilization level at which
    the node is treated as saturated and reports rt_sat_s.
    """

    op_table: tuple[OperatingPoint, ...]
    s0_s: float
    cores_eff: float
    p_idle_w: float
    p_dyn_max_w: float
    rho_cap: float
    rt_sat_s: float

    def __post_init__(self):
        build_op_table([(op.freq_hz, op.voltage_v) for op in self.op_table])
        if self.s0_s <= 0:
            raise ValueError("s0_s must be positive")
        if self.cores_eff < 1:
            raise ValueError("cores_eff must be >= 1")
        if not 0 < self.rho_cap < 1:
            raise ValueError("rho_cap must lie in (0, 1)")
        if self.rt_sat_s <= self.s0_s:
            raise ValueError("rt_sat_s must exceed s0_s")
        if self.p_idle_w < 0 or self.p_dyn_max_w < 0:
            raise ValueError("power terms must be non-negative")

    @property
    def f_max_hz(self) -> float:
        return self.op_table[-1].freq_hz

    @property
    def v_max(self) -> float:
        return self.op_table[-1].voltage_v

    @property
    def max_op_index(self) -> int:
        return len(self.op_table) - 1

    def service_time_s(self, op: OperatingPoint) -> float:
        """Per-request service time at the given frequency: s0 * f_max / f."""
        return self.s0_s * self.f_max_hz / op.freq_hz

    def service_rate(self, op: OperatingPoint) -> float:
        """Sustainable throughput at the given operating point, requests/s."""
        return self.cores_eff / self.service_time_s(op)


def response_time(node: NodeModel, lambda_node: float, op: OperatingPoint) -> float:
    """Response time for one node at arrival rate lambda_node (requests/s).

    Below saturation this is the queueing form s(f) / (1 - rho); at or
    above rho_cap the node reports its saturated response time.
    """
    if lambda_node < 0:
        raise ValueError("arrival rate must be non-negative")
    s = node.service_time_s(op)
    rho = lambda_node * s / node.cores_eff
    if rho >= node.rho_cap:
        return node.rt_sat_s
    return s / (1.0 - rho)


def power(node: NodeModel, op: OperatingPoint, rho: float) -> float:
    """Node power draw: p_idle + p_dyn_max * (V/Vmax)^2 * (f/fmax) * min(rho, 1)."""
    if rho < 0:
        raise ValueError("utilization must be non-negative")
    v_ratio = op.voltage_v / node.v_max
    f_ratio = op.freq_hz / node.f_max_hz
    return node.p_idle_w + node.p_dyn_max_w * v_ratio * v_ratio * f_ratio * min(rho, 1.0)


@dataclass(frozen=True)
class ClusterState:
    """Per-interval snapshot of the simulated cluster."""

    t_s: float
    users: int
    n_active: int
    op_index: int
    rt_s: float
    power_w: float


@dataclass(frozen=True)
class ControlDecision:
    """Target node count and global operating point for the next interval."""

    n_active: int
    op_index: int
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown decision provenance {self.provenance!r}")


class Cluster:
    """Discrete-time cluster simulator advanced one control interval at a time.

    Offered load is users * r_u requests/s, split equally across active
    nodes; all active nodes run at the same global operating point.
    Inactive nodes draw no power. With rt_noise_sigma > 0 a seeded
    log-normal factor multiplies the response time, otherwise runs are
    fully deterministic.
    """

    def __init__(
        self,
        node: NodeModel,
        n_max: int,
        r_u: float = 1.0,
        interval_s: float = 1.0,
        rt_noise_sigma: float = 0.0,
        noise_seed: int | None = None,
    ):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        if r_u <= 0:
            raise ValueError("r_u must be positive")
        if interval_s <= 0:
            raise ValueError("interval_s must be positive")
        if rt_noise_sigma < 0:
            raise ValueError("rt_noise_sigma must be non-negative")
        if rt_noise_sigma > 0 and noise_seed is None:
            raise ValueError("rt noise requires a noise seed")
        self.node = node
        self.n_max = n_max
        self.r_u = r_u
        self.interval_s = interval_s
        self.rt_noise_sigma = rt_noise_sigma
        self._rng = np.random.default_rng(noise_seed) if rt_noise_sigma > 0 else None

    def per_node_lambda(self, users: int, n_active: int) -> float:
        return users * self.r_u / n_active

    def utilization(self, users: int, n_active: int, op_index: int) -> float:
        """Per-node utilization lambda/mu at the given operating point (uncapped)."""
        op = self.node.op_table[op_index]
        return self.per_node_lambda(users, n_active) / self.node.service_rate(op)

    def initial_state(self, t_s: float = 0.0, users: int = 0, n_active: int = 1) -> ClusterState:
        """Zero-history snapshot: given nodes at the maximum operating point."""
        op_index = self.node.max_op_index
        op = self.node.op_table[op_index]
        lam = self.per_node_lambda(users, n_active)
        rt = response_time(self.node, lam, op)
        rho = lam / self.node.service_rate(op)
        return ClusterState(
            t_s=t_s,
            users=users,
            n_active=n_active,
            op_index=op_index,
            rt_s=rt,
            power_w=n_active * power(self.node, op, rho),
        )

    def step(self, state: ClusterState, users: int, decision: ControlDecision) -> ClusterState:
        """Apply a control decision and advance one interval."""
        if users < 0:
            raise ValueError("users must be non-negative")
        if not 1 <= decision.n_active <= self.n_max:
            raise ValueError(
                f"decision n_active={decision.n_active} outside [1, {self.n_max}]"
            )
        if not 0 <= decision.op_index < len(self.node.op_table):
            raise ValueError(f"decision op_index={decision.op_index} outside table")
        op = self.node.op_table[decision.op_index]
        lam = self.per_node_lambda(users, decision.n_active)
        rt = response_time(self.node, lam, op)
        if self._rng is not None:
            rt *= math.exp(self._rng.normal(0.0, self.rt_noise_sigma))
        rho = lam / self.node.service_rate(op)
        total_power = decision.n_active * power(self.node, op, rho)
        return ClusterState(
            t_s=state.t_s + self.interval_s,
            users=users,
            n_active=decision.n_active,
            op_index=decision.op_index,
            rt_s=rt,
            power_w=total_power,
        )
