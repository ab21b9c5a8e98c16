"""QoS-aware scaling controller: rule-based horizontal scaling combined
with transfer-accelerated tabular Q-learning over DVFS operating points.

The vertical (per-node resource) policy learns a Q-table per node-count
configuration, keyed by binned active-user state. Two transfer mechanisms
cut exploration cost:

* intra-state transfer: probe the min and max operating points of a fresh
  state, fit rt(f) = a/f + b through the observations, and seed the
  remaining actions' Q-values from rewards predicted by the curve;
* inter-node transfer: when an unexplored node-count configuration is
  entered, map the state onto the explored single-node reference table by
  equal-load division and copy the matching Q-row.

Horizontal scaling is rule-based: scale up when QoS has been violated for
several consecutive intervals with no vertical headroom left; scale down
when QoS holds and the load sits safely below every load that previously
forced the current configuration.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .simcore import ControlDecision, OperatingPoint

if TYPE_CHECKING:  # pragma: no cover
    from .harness import MetricsRecord

logger = logging.getLogger(__name__)

QTABLE_DOC_VERSION = 1

# Floor applied to curve-predicted response times before reward evaluation.
_RT_FLOOR_S = 1e-9


class QTableLoadError(ValueError):
    """Raised when a persisted Q-table document cannot be restored."""


@dataclass(frozen=True)
class LearningParams:
    """Tabular Q-learning hyperparameters and state discretization."""

    alpha: float = 0.5
    gamma: float = 0.5
    epsilon0: float = 0.15
    epsilon_decay: float = 0.995
    bin_width: int = 25

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if not 0 < self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must lie in (0, 1]")
        if self.bin_width < 1:
            raise ValueError("bin_width must be a positive integer")


@dataclass(frozen=True)
class RewardParams:
    """Reward shaping around the response-time constraint t_rt_s."""

    t_rt_s: float = 0.2
    beta0: float = 2.0
    beta1: float = 1.0
    r_max: float = 100.0

    def __post_init__(self):
        if self.t_rt_s <= 0:
            raise ValueError("t_rt_s must be positive")
        if self.beta0 <= 0 or self.beta1 <= 0 or self.r_max <= 0:
            raise ValueError("beta0, beta1 and r_max must be positive")


def compute_reward(rt_s: float, p: RewardParams) -> float:
    """Reward for an observed (or predicted) response time.

    With slack = t_rt - rt: negative branch beta0 * slack / t_rt when the
    constraint is violated, otherwise beta1 / slack capped at r_max (and
    exactly r_max at zero slack, where the uncapped form diverges).
    """
    slack = p.t_rt_s - rt_s
    if slack < 0:
        return p.beta0 * (slack / p.t_rt_s)
    if slack == 0:
        return p.r_max
    return min(p.beta1 / slack, p.r_max)


def update_q(q: float, r: float, max_next: float, alpha: float, gamma: float) -> float:
    """One temporal-difference update: q + alpha * (r + gamma * max_next - q)."""
    return q + alpha * (r + gamma * max_next - q)


@dataclass(frozen=True)
class FittedResponseCurve:
    """Response-time-vs-frequency model rt(f) = a / f + b."""

    a: float
    b: float

    def predict(self, freq_hz: float) -> float:
        return self.a / freq_hz + self.b


def islt_fit(probes: Sequence[tuple[float, float]]) -> FittedResponseCurve:
    """Least-squares fit of rt = a/f + b through (freq_hz, rt_s) probes.

    Exactly two probes give an interpolating solution. All probes at one
    frequency leave the system singular.
    """
    if len(probes) < 2:
        raise ValueError("need at least 2 probes to fit a response curve")
    freqs = np.array([f for f, _ in probes], dtype=float)
    rts = np.array([rt for _, rt in probes], dtype=float)
    if np.all(freqs == freqs[0]):
        raise ValueError("degenerate fit: all probe frequencies identical")
    if len(probes) == 2:
        a = (rts[0] - rts[1]) / (1.0 / freqs[0] - 1.0 / freqs[1])
        return FittedResponseCurve(a=float(a), b=float(rts[0] - a / freqs[0]))
    # column scaling keeps the normal equations well conditioned in Hz
    scale = float(freqs.mean())
    design = np.column_stack([scale / freqs, np.ones_like(freqs)])
    coef, *_ = np.linalg.lstsq(design, rts, rcond=None)
    return FittedResponseCurve(a=float(coef[0] * scale), b=float(coef[1]))


class QTable:
    """Tabular Q-values for one node-count configuration.

    Rows are created lazily per state bin; each row holds one value and
    one real-visit counter per operating point. Transferred values do not
    touch the visit counters.
    """

    def __init__(self, n_config: int, n_actions: int):
        if n_config < 1:
            raise ValueError("n_config must be >= 1")
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_config = n_config
        self.n_actions = n_actions
        self.rows: dict[int, np.ndarray] = {}
        self.visits: dict[int, np.ndarray] = {}

    def has_row(self, state_bin: int) -> bool:
        return state_bin in self.rows

    def row(self, state_bin: int) -> np.ndarray:
        if state_bin not in self.rows:
            self.rows[state_bin] = np.zeros(self.n_actions, dtype=float)
            self.visits[state_bin] = np.zeros(self.n_actions, dtype=np.int64)
        return self.rows[state_bin]

    def visit_row(self, state_bin: int) -> np.ndarray:
        self.row(state_bin)
        return self.visits[state_bin]

    def total_visits(self, state_bin: int) -> int:
        if state_bin not in self.visits:
            return 0
        return int(self.visits[state_bin].sum())

    def best_action(self, state_bin: int) -> int:
        """Greedy action; ties break toward the lower operating point."""
        return int(np.argmax(self.row(state_bin)))

    def update(self, state_bin: int, action: int, reward: float, lp: LearningParams) -> None:
        """Real-visit update; max_next is taken over the same row."""
        row = self.row(state_bin)
        max_next = float(row.max())
        row[action] = update_q(float(row[action]), reward, max_next, lp.alpha, lp.gamma)
        self.visits[state_bin][action] += 1


def islt_transfer(
    qtable: QTable,
    state_bin: int,
    curve: FittedResponseCurve,
    op_table: Sequence[OperatingPoint],
    rp: RewardParams,
    lp: LearningParams,
) -> QTable:
    """Seed every unvisited action of a row from curve-predicted rewards.

    max_next is the row maximum captured before seeding starts, so the
    seeded values preserve the ordering of the predicted rewards. Visit
    counters stay untouched: transferred values are not observations.
    """
    row = qtable.row(state_bin)
    visits = qtable.visit_row(state_bin)
    max_next = float(row.max())
    for op in op_table:
        if visits[op.index] > 0:
            continue
        rt_pred = max(curve.predict(op.freq_hz), _RT_FLOOR_S)
        reward = compute_reward(rt_pred, rp)
        row[op.index] = update_q(float(row[op.index]), reward, max_next, lp.alpha, lp.gamma)
    return qtable


def inlt_map_state(
    users: int,
    n_target: int,
    n_ref: int,
    ref_table: QTable,
    bin_width: int,
) -> int | None:
    """Map a state of an n_target-node configuration onto the reference table.

    Equal-load division: the per-node-equivalent user count is
    round(users * n_ref / n_target). Returns the matching reference bin
    when the reference table holds a row for it, otherwise None.
    """
    if n_target < 1 or n_ref < 1:
        raise ValueError("node counts must be >= 1")
    equivalent = round(users * n_ref / n_target)
    ref_bin = equivalent // bin_width
    if ref_table.has_row(ref_bin):
        return ref_bin
    return None


def inlt_transfer(target: QTable, target_bin: int, ref: QTable, ref_bin: int) -> bool:
    """Copy a reference Q-row into an unexplored target row.

    Rows with any real visit are never overwritten; such calls log a
    warning and leave the target unchanged. Target visits stay at zero.
    """
    if not ref.has_row(ref_bin):
        raise ValueError(f"reference table has no row for bin {ref_bin}")
    if target.has_row(target_bin) and target.visits[target_bin].any():
        logger.warning(
            "inter-node transfer skipped: target bin %d in %d-node table already visited",
            target_bin,
            target.n_config,
        )
        return False
    row = target.row(target_bin)
    row[:] = ref.rows[ref_bin]
    return True


class TransitionHistory:
    """User loads recorded each time the cluster entered a node-count config."""

    def __init__(self):
        self.entries: dict[int, list[int]] = {}

    def record(self, n_config: int, users: int) -> None:
        if users < 0:
            raise ValueError("users must be non-negative")
        self.entries.setdefault(n_config, []).append(users)

    def min_entry(self, n_config: int) -> int | None:
        loads = self.entries.get(n_config)
        if not loads:
            return None
        return min(loads)


def evaluate_scale_up(
    recent: Sequence["MetricsRecord"],
    n_active: int,
    n_max: int,
    max_op_index: int,
    v_up: int,
) -> bool:
    """Scale-up rule: QoS violated for the last v_up consecutive intervals,
    the maximum operating point currently applied (no vertical headroom
    left), and a node available."""
    if n_active >= n_max:
        return False
    if len(recent) < v_up:
        return False
    if recent[-1].op_index != max_op_index:
        return False
    return all(r.violated for r in recent[-v_up:])


def evaluate_scale_down(
    users: int,
    last_rt_s: float,
    n_active: int,
    history: TransitionHistory,
    t_rt_s: float,
    margin: float = 0.9,
) -> bool:
    """Scale-down rule: QoS currently satisfied and the load sits below
    margin times every load that previously forced this configuration."""
    if n_active < 2:
        return False
    floor = history.min_entry(n_active)
    if floor is None:
        return False
    return last_rt_s <= t_rt_s and users < margin * floor


@dataclass
class _ProbeState:
    """Per (node count, state bin) curve-probing progress."""

    observations: list[tuple[float, float]] = field(default_factory=list)
    complete: bool = False


class RhqvAgent:
    """Hierarchical scaling agent: horizontal rules first, learned vertical
    (DVFS) actions otherwise.

    With enable_transfer=False the agent degrades to plain model-free
    Q-learning over the same rules, rewards and update rule; unexplored
    state bins are then handled by forced random exploration instead of
    curve probing and row transfer.
    """

    def __init__(
        self,
        op_table: Sequence[OperatingPoint],
        n_max: int,
        learning: LearningParams,
        reward: RewardParams,
        v_up: int = 3,
        scale_down_margin: float = 0.9,
        seed: int = 0,
        enable_transfer: bool = True,
        name: str = "rhqv",
    ):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        if v_up < 1:
            raise ValueError("v_up must be >= 1")
        if not 0 < scale_down_margin <= 1:
            raise ValueError("scale_down_margin must lie in (0, 1]")
        self.op_table = tuple(op_table)
        self.n_max = n_max
        self.learning = learning
        self.reward = reward
        self.v_up = v_up
        self.scale_down_margin = scale_down_margin
        self.enable_transfer = enable_transfer
        self.name = name
        self.epsilon = learning.epsilon0
        self.frozen = False
        self.tables: dict[int, QTable] = {}
        self.history = TransitionHistory()
        self._rng = np.random.default_rng(seed)
        self._probes: dict[tuple[int, int], _ProbeState] = {}
        self._pending: tuple[int, int, int] | None = None
        self._prev_n: int | None = None

    # -- state helpers -------------------------------------------------

    @property
    def n_actions(self) -> int:
        return len(self.op_table)

    @property
    def max_op_index(self) -> int:
        return len(self.op_table) - 1

    def state_bin(self, users: int) -> int:
        return users // self.learning.bin_width

    def table(self, n_config: int) -> QTable:
        if n_config not in self.tables:
            self.tables[n_config] = QTable(n_config, self.n_actions)
        return self.tables[n_config]

    def freeze(self) -> None:
        """Switch to pure exploitation: no probing, exploring, or updates."""
        self.frozen = True

    # -- control -------------------------------------------------------

    def decide(self, users, state, recent) -> ControlDecision:
        """Pick the next (node count, operating point) action.

        `users` is the load observed this interval, `state` the cluster
        snapshot after the previous interval, `recent` the metrics records
        so far (most recent last).
        """
        decision = self._decide_inner(users, state, recent)
        if not self.frozen:
            self.epsilon *= self.learning.epsilon_decay
        return decision

    def _decide_inner(self, users, state, recent) -> ControlDecision:
        self._pending = None
        if evaluate_scale_up(recent, state.n_active, self.n_max, self.max_op_index, self.v_up):
            return ControlDecision(
                n_active=state.n_active + 1,
                op_index=state.op_index,
                provenance="rule-scale-up",
            )
        if evaluate_scale_down(
            users,
            state.rt_s,
            state.n_active,
            self.history,
            self.reward.t_rt_s,
            self.scale_down_margin,
        ):
            # Conservative handoff: drop a node but pin max frequency until
            # the vertical policy re-settles in the smaller configuration.
            return ControlDecision(
                n_active=state.n_active - 1,
                op_index=self.max_op_index,
                provenance="rule-scale-down",
            )
        n = state.n_active
        bin_ = self.state_bin(users)
        table = self.table(n)
        action, provenance = self._vertical_action(n, bin_, table, users)
        if not self.frozen:
            self._pending = (n, bin_, action)
        return ControlDecision(n_active=n, op_index=action, provenance=provenance)

    def _vertical_action(self, n: int, bin_: int, table: QTable, users: int) -> tuple[int, str]:
        if self.frozen:
            return table.best_action(bin_), "q-greedy"
        if self.enable_transfer:
            if n > 1 and not table.has_row(bin_):
                self._attempt_inlt(n, bin_, users)
            probe = self._probes.setdefault((n, bin_), _ProbeState())
            if not probe.complete:
                # Probe order: min operating point first, then max.
                action = 0 if len(probe.observations) == 0 else self.max_op_index
                return action, "islt-probe"
        else:
            if table.total_visits(bin_) == 0:
                return int(self._rng.integers(self.n_actions)), "q-explore"
        if self._rng.random() < self.epsilon:
            return int(self._rng.integers(self.n_actions)), "q-explore"
        return table.best_action(bin_), "q-greedy"

    def _attempt_inlt(self, n: int, bin_: int, users: int) -> None:
        ref = self.tables.get(1)
        if ref is None:
            return
        ref_bin = inlt_map_state(users, n, 1, ref, self.learning.bin_width)
        if ref_bin is None:
            return
        if inlt_transfer(self.table(n), bin_, ref, ref_bin):
            # Transferred rows skip curve probing entirely.
            self._probes[(n, bin_)] = _ProbeState(complete=True)

    def observe(self, record: "MetricsRecord") -> None:
        """Digest the measured outcome of the interval's applied decision."""
        if self._prev_n is not None and record.n_active != self._prev_n:
            self.history.record(record.n_active, record.users)
        self._prev_n = record.n_active
        if self.frozen or self._pending is None:
            return
        n, bin_, action = self._pending
        self._pending = None
        reward = compute_reward(record.rt_s, self.reward)
        table = self.table(n)
        table.update(bin_, action, reward, self.learning)
        if not self.enable_transfer:
            return
        probe = self._probes.get((n, bin_))
        if probe is None or probe.complete:
            return
        probe.observations.append((self.op_table[action].freq_hz, record.rt_s))
        if len(probe.observations) >= 2:
            curve = islt_fit(probe.observations)
            islt_transfer(table, bin_, curve, self.op_table, self.reward, self.learning)
            probe.complete = True

    # -- persistence ---------------------------------------------------

    def to_doc(self) -> dict:
        """Serializable snapshot of tables, visit counts and history."""
        tables = {}
        for n, table in sorted(self.tables.items()):
            tables[str(n)] = {
                "rows": {str(b): [float(v) for v in row] for b, row in sorted(table.rows.items())},
                "visits": {
                    str(b): [int(v) for v in vis] for b, vis in sorted(table.visits.items())
                },
            }
        probes = {}
        for (n, b), probe in sorted(self._probes.items()):
            probes.setdefault(str(n), {})[str(b)] = {
                "observations": [[float(f), float(rt)] for f, rt in probe.observations],
                "complete": probe.complete,
            }
        return {
            "version": QTABLE_DOC_VERSION,
            "n_actions": self.n_actions,
            "bin_width": self.learning.bin_width,
            "epsilon": self.epsilon,
            "tables": tables,
            "transition_history": {
                str(n): list(loads) for n, loads in sorted(self.history.entries.items())
            },
            "probes": probes,
        }

    def load_doc(self, doc: dict) -> None:
        """Restore agent state from a persisted document."""
        if not isinstance(doc, dict):
            raise QTableLoadError("Q-table document must be a JSON object")
        version = doc.get("version")
        if version != QTABLE_DOC_VERSION:
            raise QTableLoadError(
                f"unsupported Q-table document version {version!r} "
                f"(expected {QTABLE_DOC_VERSION})"
            )
        if doc.get("n_actions") != self.n_actions:
            raise QTableLoadError(
                f"document built for {doc.get('n_actions')} operating points, "
                f"agent has {self.n_actions}"
            )
        if doc.get("bin_width") != self.learning.bin_width:
            raise QTableLoadError(
                f"document bin_width {doc.get('bin_width')} differs from "
                f"agent bin_width {self.learning.bin_width}"
            )
        try:
            tables: dict[int, QTable] = {}
            for n_str, payload in doc.get("tables", {}).items():
                table = QTable(int(n_str), self.n_actions)
                for b_str, values in payload["rows"].items():
                    if len(values) != self.n_actions:
                        raise QTableLoadError(
                            f"row {b_str} in {n_str}-node table has {len(values)} entries"
                        )
                    table.rows[int(b_str)] = np.array(values, dtype=float)
                for b_str, values in payload["visits"].items():
                    table.visits[int(b_str)] = np.array(values, dtype=np.int64)
                for b in table.rows:
                    if b not in table.visits:
                        table.visits[b] = np.zeros(self.n_actions, dtype=np.int64)
                tables[int(n_str)] = table
            history = TransitionHistory()
            for n_str, loads in doc.get("transition_history", {}).items():
                history.entries[int(n_str)] = [int(u) for u in loads]
            probes: dict[tuple[int, int], _ProbeState] = {}
            for n_str, per_bin in doc.get("probes", {}).items():
                for b_str, payload in per_bin.items():
                    probes[(int(n_str), int(b_str))] = _ProbeState(
                        observations=[(float(f), float(rt)) for f, rt in payload["observations"]],
                        complete=bool(payload["complete"]),
                    )
            epsilon = float(doc.get("epsilon", self.learning.epsilon0))
        except QTableLoadError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise QTableLoadError(f"malformed Q-table document: {exc}") from exc
        self.tables = tables
        self.history = history
        self._probes = probes
        self.epsilon = epsilon

    def save_qtables(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_doc(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def load_qtables(self, path) -> None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise QTableLoadError(f"cannot read Q-table file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise QTableLoadError(f"invalid JSON in Q-table file {path}: {exc}") from exc
        self.load_doc(doc)
