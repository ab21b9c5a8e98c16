"""Workload traces: synthetic generators and CSV round-tripping.

Two generators cover the evaluation scenarios: a bounded random walk with
occasional jumps (rapidly changing traffic) and a 24 h sinusoid (diurnal
traffic). Traces are plain CSV so externally collected ones can be
dropped in unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TRACE_HEADER = "t_s,users"

_SECONDS_PER_DAY = 86400.0


class TraceFormatError(ValueError):
    """Raised when a trace file or document fails validation."""


@dataclass(frozen=True)
class WorkloadTrace:
    """Time series of (t_s, users) samples on a fixed grid."""

    samples: tuple[tuple[float, int], ...]

    def __post_init__(self):
        for i, (t, u) in enumerate(self.samples):
            if u < 0:
                raise TraceFormatError(f"sample {i}: users must be non-negative, got {u}")
        if len(self.samples) >= 2:
            spacing = self.samples[1][0] - self.samples[0][0]
            if spacing <= 0:
                raise TraceFormatError("timestamps must be strictly increasing")
            for i in range(1, len(self.samples)):
                dt = self.samples[i][0] - self.samples[i - 1][0]
                if dt <= 0:
                    raise TraceFormatError(
                        f"sample {i}: timestamps must be strictly increasing"
                    )
                if abs(dt - spacing) > 1e-9 * max(abs(spacing), 1.0):
                    raise TraceFormatError(
                        f"sample {i}: spacing {dt} differs from trace spacing {spacing}"
                    )

    @property
    def interval_s(self) -> float:
        """Sample spacing; 0.0 for single-sample traces."""
        if len(self.samples) < 2:
            return 0.0
        return self.samples[1][0] - self.samples[0][0]

    def __len__(self) -> int:
        return len(self.samples)

    def users(self) -> list[int]:
        return [u for _, u in self.samples]


def _grid(duration_s: float, interval_s: float) -> int:
    if interval_s <= 0:
        raise ValueError("interval_s must be positive")
    if duration_s < interval_s:
        raise ValueError("duration_s must be at least one interval")
    # small epsilon so duration = k * interval yields exactly k samples
    return int(math.floor(duration_s / interval_s + 1e-9))


def gen_irregular(
    seed: int,
    duration_s: float,
    interval_s: float,
    u_min: int,
    u_max: int,
    jump_prob: float = 0.05,
    jump_scale: float = 0.5,
    step_frac: float = 0.02,
) -> WorkloadTrace:
    """Bounded random walk with occasional jumps, clamped to [u_min, u_max].

    Each step moves by a uniform draw within +-step_frac of the range and,
    with probability jump_prob, adds a jump uniform within
    +-jump_scale * (u_max - u_min). The walk starts at the midpoint.
    """
    if u_min > u_max:
        raise ValueError("u_min must not exceed u_max")
    if u_min < 0:
        raise ValueError("u_min must be non-negative")
    if not 0 <= jump_prob <= 1:
        raise ValueError("jump_prob must lie in [0, 1]")
    if jump_scale < 0 or step_frac < 0:
        raise ValueError("jump_scale and step_frac must be non-negative")
    n = _grid(duration_s, interval_s)
    rng = np.random.default_rng(seed)
    span = float(u_max - u_min)
    level = (u_min + u_max) / 2.0
    samples = []
    for k in range(n):
        level += rng.uniform(-step_frac * span, step_frac * span)
        if rng.random() < jump_prob:
            level += rng.uniform(-jump_scale * span, jump_scale * span)
        level = min(max(level, float(u_min)), float(u_max))
        samples.append((k * interval_s, int(round(level))))
    return WorkloadTrace(tuple(samples))


def gen_diurnal(
    seed: int,
    duration_s: float,
    interval_s: float,
    u_peak: int,
    u_trough: int,
    peak_hour: float = 14.0,
    noise_frac: float = 0.0,
) -> WorkloadTrace:
    """24 h sinusoid peaking at peak_hour, plus optional multiplicative noise.

    Noise factors are uniform in [1 - noise_frac, 1 + noise_frac]; results
    are clamped at zero.
    """
    if u_trough > u_peak:
        raise ValueError("u_trough must not exceed u_peak")
    if u_trough < 0:
        raise ValueError("u_trough must be non-negative")
    if not 0 <= peak_hour < 24:
        raise ValueError("peak_hour must lie in [0, 24)")
    if noise_frac < 0:
        raise ValueError("noise_frac must be non-negative")
    n = _grid(duration_s, interval_s)
    rng = np.random.default_rng(seed)
    mid = (u_peak + u_trough) / 2.0
    amp = (u_peak - u_trough) / 2.0
    samples = []
    for k in range(n):
        t = k * interval_s
        phase = 2.0 * math.pi * (t / _SECONDS_PER_DAY - peak_hour / 24.0)
        level = mid + amp * math.cos(phase)
        if noise_frac > 0:
            level *= 1.0 + rng.uniform(-noise_frac, noise_frac)
        samples.append((t, max(0, int(round(level)))))
    return WorkloadTrace(tuple(samples))


def format_trace_csv(trace: WorkloadTrace) -> str:
    lines = [TRACE_HEADER]
    for t, u in trace.samples:
        lines.append(f"{t!r},{u}")
    return "\n".join(lines) + "\n"


def parse_trace_csv(text: str, source: str = "<string>") -> WorkloadTrace:
    """Parse trace CSV; errors name the offending line."""
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError(f"{source}: empty file")
    header = lines[0].strip()
    if header != TRACE_HEADER:
        raise TraceFormatError(
            f"{source}: line 1: expected header {TRACE_HEADER!r}, got {header!r}"
        )
    samples = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise TraceFormatError(f"{source}: line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            u = int(parts[1])
        except ValueError as exc:
            raise TraceFormatError(f"{source}: line {lineno}: {exc}") from exc
        if u < 0:
            raise TraceFormatError(f"{source}: line {lineno}: users must be non-negative")
        samples.append((t, u))
    if not samples:
        raise TraceFormatError(f"{source}: trace has no samples")
    try:
        return WorkloadTrace(tuple(samples))
    except TraceFormatError as exc:
        raise TraceFormatError(f"{source}: {exc}") from exc


def save_trace(trace: WorkloadTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trace_csv(trace))


def load_trace(path) -> WorkloadTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_csv(fh.read(), source=str(path))
