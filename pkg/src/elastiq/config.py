"""Experiment configuration: a single JSON document validated with
pydantic so errors carry field paths. The same models double as the
request bodies of the HTTP service.

Every default below is a configuration value chosen for desk-scale runs,
not ground truth from any measured platform.
"""

from __future__ import annotations

import hashlib
import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .controller import LearningParams, RewardParams
from .simcore import Cluster, NodeModel, build_op_table

POLICY_NAMES = ("rhqv", "modelfree-q", "rh", "ondemand", "performance")


class ConfigError(ValueError):
    """Raised when a configuration document fails validation."""


class OpPointModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    freq_hz: float = Field(gt=0)
    voltage_v: float = Field(gt=0)


def _default_op_table() -> list[OpPointModel]:
    return [
        OpPointModel(freq_hz=mhz * 1e6, voltage_v=0.90 + 0.35 * (mhz - 600) / 1400.0)
        for mhz in range(600, 2001, 200)
    ]


class PlatformModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    op_table: list[OpPointModel] = Field(default_factory=_default_op_table)
    n_max: int = Field(default=4, ge=1)
    s0_s: float = Field(default=0.05, gt=0)
    cores_eff: float = Field(default=4.0, ge=1)
    p_idle_w: float = Field(default=2.5, ge=0)
    p_dyn_max_w: float = Field(default=6.0, ge=0)
    rho_cap: float = Field(default=0.95, gt=0, lt=1)
    rt_sat_s: float = Field(default=2.0, gt=0)
    r_u: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.rt_sat_s <= self.s0_s:
            raise ValueError("rt_sat_s must exceed s0_s")
        build_op_table([(p.freq_hz, p.voltage_v) for p in self.op_table])
        return self

    def node_model(self) -> NodeModel:
        return NodeModel(
            op_table=build_op_table([(p.freq_hz, p.voltage_v) for p in self.op_table]),
            s0_s=self.s0_s,
            cores_eff=self.cores_eff,
            p_idle_w=self.p_idle_w,
            p_dyn_max_w=self.p_dyn_max_w,
            rho_cap=self.rho_cap,
            rt_sat_s=self.rt_sat_s,
        )


class RewardModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_rt_s: float = Field(default=0.2, gt=0)
    beta0: float = Field(default=2.0, gt=0)
    beta1: float = Field(default=1.0, gt=0)
    r_max: float = Field(default=100.0, gt=0)

    def params(self) -> RewardParams:
        return RewardParams(t_rt_s=self.t_rt_s, beta0=self.beta0, beta1=self.beta1, r_max=self.r_max)


class LearningModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(default=0.5, gt=0, le=1)
    gamma: float = Field(default=0.5, ge=0, lt=1)
    epsilon0: float = Field(default=0.15, ge=0, le=1)
    epsilon_decay: float = Field(default=0.995, gt=0, le=1)
    bin_width: int = Field(default=25, ge=1)

    def params(self) -> LearningParams:
        return LearningParams(
            alpha=self.alpha,
            gamma=self.gamma,
            epsilon0=self.epsilon0,
            epsilon_decay=self.epsilon_decay,
            bin_width=self.bin_width,
        )


class ControlModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    interval_s: float = Field(default=1.0, gt=0)
    v_up: int = Field(default=3, ge=1)
    scale_down_margin: float = Field(default=0.9, gt=0, le=1)
    compose_rh: bool = False
    ondemand_up_threshold: float = Field(default=0.8, gt=0, lt=1)
    rt_noise_sigma: float = Field(default=0.0, ge=0)


class IrregularSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["irregular"] = "irregular"
    seed: int | None = None
    duration_s: float = Field(default=3600.0, gt=0)
    interval_s: float = Field(default=1.0, gt=0)
    u_min: int = Field(default=10, ge=0)
    u_max: int = Field(default=200, ge=0)
    jump_prob: float = Field(default=0.05, ge=0, le=1)
    jump_scale: float = Field(default=0.5, ge=0)
    step_frac: float = Field(default=0.02, ge=0)


class DiurnalSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["diurnal"] = "diurnal"
    seed: int | None = None
    duration_s: float = Field(default=86400.0, gt=0)
    interval_s: float = Field(default=24.0, gt=0)
    u_peak: int = Field(default=220, ge=0)
    u_trough: int = Field(default=20, ge=0)
    peak_hour: float = Field(default=14.0, ge=0, lt=24)
    noise_frac: float = Field(default=0.0, ge=0)


TraceSpec = Annotated[Union[IrregularSpec, DiurnalSpec], Field(discriminator="kind")]


class WorkloadModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    path: str | None = None
    generate: TraceSpec | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if self.path is not None and self.generate is not None:
            raise ValueError("give either a trace path or a generator spec, not both")
        return self


class ExperimentConfig(BaseModel):
    """Top-level experiment document."""

    model_config = ConfigDict(extra="forbid")

    platform: PlatformModel = Field(default_factory=PlatformModel)
    reward: RewardModel = Field(default_factory=RewardModel)
    learning: LearningModel = Field(default_factory=LearningModel)
    control: ControlModel = Field(default_factory=ControlModel)
    workload: WorkloadModel | None = None
    policy: str | None = None
    seed: int = 0

    @model_validator(mode="after")
    def _check_policy(self):
        if self.policy is not None and self.policy not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICY_NAMES}")
        return self

    def cluster(self, interval_s: float, seed: int) -> Cluster:
        noise_seed = seed if self.control.rt_noise_sigma > 0 else None
        return Cluster(
            node=self.platform.node_model(),
            n_max=self.platform.n_max,
            r_u=self.platform.r_u,
            interval_s=interval_s,
            rt_noise_sigma=self.control.rt_noise_sigma,
            noise_seed=noise_seed,
        )

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    """Read and validate a configuration file; errors carry field paths."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in config {path}: {exc}") from exc
    return validate_config(raw, source=str(path))


def validate_config(raw: dict, source: str = "<dict>") -> ExperimentConfig:
    from pydantic import ValidationError

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        paths = "; ".join(
            ".".join(str(p) for p in err["loc"]) + ": " + err["msg"] for err in exc.errors()
        )
        raise ConfigError(f"{source}: {paths}") from exc
