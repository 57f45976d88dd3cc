"""Experiment configuration schema.

Configs are JSON documents with a top-level ``experiment`` key selecting
one of the six experiment families.  Unknown keys are rejected everywhere.
"""
from __future__ import annotations

import json
import math
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Discriminator, Field, Tag, ValidationError, model_validator

from .errors import ConfigError
from .model import CRITICAL_RATIO, Envelope, ModelParams, Protocol


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Strict):
    J: float = Field(1.0, ge=0)
    U: Optional[float] = Field(None, gt=0)
    delta: Optional[float] = None  # alternative to U: U = (3 + 2 sqrt2) J (1 + delta)
    d: Literal[1, 2, 3] = 2

    @model_validator(mode="after")
    def _one_of(self):
        if (self.U is None) == (self.delta is None):
            raise ValueError("give exactly one of 'U' and 'delta'")
        return self

    def build(self) -> ModelParams:
        if self.U is not None:
            return ModelParams(self.J, self.U, self.d)
        return ModelParams(self.J, CRITICAL_RATIO * self.J * (1.0 + self.delta), self.d)


class EnvelopeSpec(_Strict):
    kind: Literal["ramped", "constant", "zero"] = "ramped"
    amplitude: float = 0.0
    start: float = 0.0
    ramp_up: float = 0.0
    plateau: float = 0.0
    ramp_down: Optional[float] = None
    ramp: Literal["cos2", "smooth"] = "cos2"

    def build(self) -> Envelope:
        if self.kind == "zero":
            return Envelope.zero()
        if self.kind == "constant":
            return Envelope.constant(self.amplitude)
        return Envelope.ramped(self.amplitude, self.start, self.ramp_up, self.plateau,
                               self.ramp_down, self.ramp)


class TunnelingProtocolSpec(_Strict):
    """Hopping on, tilt on for a plateau, tilt off, hopping off."""

    kind: Literal["tunneling"] = "tunneling"
    gradient: Optional[float] = Field(None, ge=0)
    ramp: Literal["cos2", "smooth"] = "smooth"
    j_ramp: Optional[float] = Field(None, gt=0)  # default 200 / gap
    gradient_ramp: Optional[float] = Field(None, gt=0)  # default 50 / gap
    plateau: Optional[float] = Field(None, ge=0)  # default: bloch_periods Bloch periods
    bloch_periods: float = Field(1.0, gt=0)
    axis: int = Field(0, ge=0, le=2)

    def build(self, params: ModelParams, gradient: float | None = None) -> Protocol:
        g = self.gradient if gradient is None else gradient
        if g is None:
            raise ConfigError("tunneling protocol needs a gradient")
        return Protocol.tunneling(params, g, plateau=self.plateau, j_ramp=self.j_ramp,
                                  gradient_ramp=self.gradient_ramp, ramp=self.ramp, axis=self.axis,
                                  bloch_periods=self.bloch_periods)


class EnvelopeProtocolSpec(_Strict):
    kind: Literal["envelopes"]
    hopping: EnvelopeSpec
    gradient: EnvelopeSpec
    t_final: float = Field(gt=0)
    axis: int = Field(0, ge=0, le=2)

    def build(self, params: ModelParams, gradient: float | None = None) -> Protocol:
        return Protocol(self.hopping.build(), self.gradient.build(), self.t_final, self.axis)


def _protocol_kind(v):
    if isinstance(v, dict):
        return v.get("kind", "tunneling")
    return getattr(v, "kind", None)


ProtocolSpec = Annotated[
    Union[Annotated[TunnelingProtocolSpec, Tag("tunneling")], Annotated[EnvelopeProtocolSpec, Tag("envelopes")]],
    Discriminator(_protocol_kind),
]


class _Experiment(_Strict):
    tol: float = Field(1e-10, gt=0, lt=1e-3)
    threads: int = Field(1, ge=0)


class QedScanConfig(_Experiment):
    experiment: Literal["qed-scan"]
    m: float = Field(1.0, gt=0)
    tau: float = Field(100.0, gt=0)
    qE: list[float] = Field(default_factory=lambda: [0.1, 0.2, 0.4], min_length=1)
    k_perp_sq: Optional[list[float]] = None  # default: 8 points over [0, 1.75 qE]
    n_points: int = Field(8, ge=2)
    window: float = Field(12.5, gt=0)
    noise_floor: float = Field(1e-20, ge=0)
    refinement_check: bool = True


class BhScalingConfig(_Experiment):
    experiment: Literal["bh-scaling"]
    model: ModelSpec
    protocol: TunnelingProtocolSpec = TunnelingProtocolSpec()
    gradients: Optional[list[float]] = None
    exponents: tuple[float, float] = (6.0, 16.0)  # k=0 exponent range when gradients are omitted
    n_gradients: int = Field(8, ge=2)
    perp_gradient: Optional[float] = Field(None, gt=0)
    k_perp_sq_max: float = Field(0.25, gt=0)
    grid: int = Field(64, ge=2)  # transverse scan points

    @model_validator(mode="after")
    def _transverse(self):
        if self.model.d < 2:
            raise ValueError("the transverse-momentum scan needs model.d >= 2")
        return self


class BhPairDensityConfig(_Experiment):
    experiment: Literal["bh-pair-density"]
    model: ModelSpec
    protocol: TunnelingProtocolSpec
    grid: int = Field(64, ge=2)
    refinement_check: bool = False


class RangeSpec(_Strict):
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    step: float = Field(gt=0)

    def values(self):
        import numpy as np

        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return self.start + self.step * np.arange(n)


class FloquetScanConfig(_Experiment):
    experiment: Literal["floquet-scan"]
    model: ModelSpec
    delta_v: Optional[Union[RangeSpec, list[float]]] = None  # default [U/3, 1.5U] step J/4
    system: Literal["mode", "correlation"] = "mode"
    k_transverse: float = math.pi / 2
    exponent_check: bool = True
    consistency_periods: int = Field(50, ge=1)
    tol: float = Field(1e-11, gt=0, lt=1e-3)


def _short_protocol() -> "EnvelopeProtocolSpec":
    return EnvelopeProtocolSpec(
        kind="envelopes",
        hopping=EnvelopeSpec(amplitude=0.05, ramp_up=10.0, plateau=1e6),
        gradient=EnvelopeSpec(amplitude=0.3, start=10.0, ramp_up=10.0, plateau=20.0),
        t_final=60.0,
    )


class RealSpaceSpec(_Strict):
    """Ring versus momentum space, and open scalar-gauge chain versus ring."""

    model: ModelSpec = ModelSpec(J=0.05, U=1.0, d=1)
    protocol: ProtocolSpec = Field(default_factory=_short_protocol)
    sites: int = Field(32, ge=4)
    chain_times: list[float] = Field(default_factory=lambda: [20.0, 40.0, 60.0], min_length=1)
    tol: float = Field(1e-12, gt=0)

    @model_validator(mode="after")
    def _chain(self):
        if self.model.d != 1:
            raise ValueError("real-space checks run on a ring and an open chain: model.d must be 1")
        return self


class CorrelationsCheckConfig(_Experiment):
    experiment: Literal["correlations-check"]
    model: ModelSpec
    protocols: list[ProtocolSpec] = Field(min_length=1)
    grid: int = Field(8, ge=2)  # points per axis of the factorisation grid
    n_times: int = Field(16, ge=1)
    real_space: Optional[RealSpaceSpec] = RealSpaceSpec()


class EdRunConfig(_Experiment):
    experiment: Literal["ed-run"]
    model: ModelSpec
    sites: int = Field(6, ge=2, le=10)
    geometry: Literal["open", "ring"] = "open"
    n_max: int = Field(4, ge=2)
    coordination: Optional[int] = Field(None, ge=1)
    protocol: Optional[ProtocolSpec] = None
    initial: Literal["mott", "ground"] = "mott"
    delta_v: Optional[list[float]] = None  # resonance scan instead of a single protocol
    # scan ramps: short enough that sweeping the tilt through delta_v = U on the
    # way up and down stays diabatic at J ~ 0.05, long enough for the hopping
    ramp: float = Field(10.0, gt=0)
    plateau: float = Field(45.0, ge=0)
    n_samples: int = Field(101, ge=2)
    tol: float = Field(1e-10, gt=0, lt=1e-3)

    @model_validator(mode="after")
    def _what(self):
        if (self.protocol is None) == (self.delta_v is None):
            raise ValueError("give exactly one of 'protocol' and 'delta_v'")
        if self.model.d != 1:
            raise ValueError("ED runs on chains: model.d must be 1")
        return self


ExperimentConfig = Annotated[
    Union[QedScanConfig, BhScalingConfig, BhPairDensityConfig, FloquetScanConfig,
          CorrelationsCheckConfig, EdRunConfig],
    Field(discriminator="experiment"),
]

EXPERIMENTS = ("qed-scan", "bh-scaling", "bh-pair-density", "floquet-scan", "correlations-check", "ed-run")

_TUNNELING = ("bh-scaling", "bh-pair-density")


class _Wrapper(_Strict):
    config: ExperimentConfig


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"][2:]) or "<root>"
        lines.append(f"  {loc}: {e['msg']}")
    return "config schema violation:\n" + "\n".join(lines)


def parse_config(text: str, experiment: str | None = None, overrides: dict | None = None):
    """Validate a JSON config document; ``experiment`` fills in a missing key.

    Schema problems raise ConfigError listing every violation; model
    parameters outside the physically valid window raise the matching
    physics-guard error.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if experiment is not None:
        if doc.setdefault("experiment", experiment) != experiment:
            raise ConfigError(f"config is for {doc['experiment']!r}, not {experiment!r}")
    doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        cfg = _Wrapper.model_validate({"config": doc}).config
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    check_physics(cfg)
    return cfg


def check_physics(cfg) -> None:
    model = getattr(cfg, "model", None)
    if model is None:
        return
    params = model.build()
    if cfg.experiment in _TUNNELING:
        params.require_mott(f"the {cfg.experiment} experiment")


def resolved(cfg) -> dict:
    """Config with defaults filled, for the output summary."""
    return json.loads(cfg.model_dump_json())
