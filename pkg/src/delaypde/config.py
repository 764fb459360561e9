"""Run configuration: a single versioned JSON document fully determines a run.

The defaults reproduce the canonical desk-scale scenario (unit-pi interval,
32 modes, clamped blowflies birth, state-driven lag), so an empty document is
already runnable. Validation errors carry the dotted key path of the offending
field. ``config_hash`` is the provenance stamp written into every report; it
covers everything that can influence the numbers (the output directory is
excluded).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import replace
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .diagnostics import constants_from_model
from .history import HistorySegment, linear_history
from .integrator import IntegratorConfig
from .model import (
    ConstantBirth,
    ConstantDelay,
    DelayReactionModel,
    IntegralStateDelay,
    KernelSpec,
    NicholsonBirth,
    PointStateDelay,
    SmoothCutoff,
    ZeroBirth,
    assemble_kernel_operator,
)
from .spectral import MAX_TRUNCATION, Domain1D, QuadratureGrid


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSection(_Section):
    length: float = Field(default=math.pi, gt=0)


class SpectralSection(_Section):
    m: int = Field(default=32, ge=1, le=MAX_TRUNCATION)
    quad_nodes: int = Field(default=257, ge=2)


class TimeSection(_Section):
    h: float = Field(default=1e-3, gt=0)
    T: float = Field(default=20.0, gt=0)


class KernelSection(_Section):
    alpha: float = Field(default=0.1, gt=0)
    delta: float = Field(default=0.1, gt=0, lt=0.5)


class BirthSection(_Section):
    variant: Literal["nicholson", "constant", "zero"] = "nicholson"
    p: float = Field(default=2.0, ge=0)
    W: float = Field(default=50.0, gt=0)
    c: float = 0.5


class DelaySection(_Section):
    variant: Literal["constant", "point_state", "integral_state"] = "point_state"
    eta0: float = Field(default=0.5, ge=0)
    eta_min: float = Field(default=0.1, ge=0)
    c: float = Field(default=1.0, ge=0)


class CutoffSection(_Section):
    enabled: bool = False
    Rhat_mode: Literal["auto", "explicit"] = "auto"
    Rhat_value: Optional[float] = None

    @model_validator(mode="after")
    def _explicit_needs_value(self) -> "CutoffSection":
        if self.Rhat_mode == "explicit" and (self.Rhat_value is None or self.Rhat_value <= 0):
            raise ValueError("model.cutoff.Rhat_value: explicit mode needs a positive radius")
        return self


class ModelSection(_Section):
    kernel: KernelSection = Field(default_factory=KernelSection)
    birth: BirthSection = Field(default_factory=BirthSection)
    delay: DelaySection = Field(default_factory=DelaySection)
    cutoff: CutoffSection = Field(default_factory=CutoffSection)


class HistoryTerm(_Section):
    k: int = Field(ge=1)
    a: float
    s: float


class EnsembleSection(_Section):
    n: int = Field(default=32, ge=1)
    norm_cap: Optional[float] = Field(default=None, gt=0)


class DiagnosticsSection(_Section):
    alpha: float = Field(default=0.75, gt=0.5, lt=1.0)
    eps: float = Field(default=0.01, gt=0)
    eps0: float = Field(default=0.01, gt=0)


class IntegratorSection(_Section):
    scheme: Literal["ETD1", "ETD2"] = "ETD1"


def _canonical_history() -> list[HistoryTerm]:
    return [
        HistoryTerm(k=1, a=0.5, s=0.2),
        HistoryTerm(k=2, a=-0.25, s=-0.3),
        HistoryTerm(k=3, a=0.1, s=0.1),
    ]


class RunConfig(_Section):
    version: int = 1
    domain: DomainSection = Field(default_factory=DomainSection)
    spectral: SpectralSection = Field(default_factory=SpectralSection)
    time: TimeSection = Field(default_factory=TimeSection)
    damping: float = Field(default=0.1, ge=0)
    delay_window: float = Field(default=1.0, gt=0)
    model: ModelSection = Field(default_factory=ModelSection)
    initial_history: list[HistoryTerm] = Field(default_factory=_canonical_history)
    scenario: Literal["single", "ensemble", "compare-delay", "certify"] = "single"
    seed: int = 1234
    ensemble: EnsembleSection = Field(default_factory=EnsembleSection)
    diagnostics: DiagnosticsSection = Field(default_factory=DiagnosticsSection)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        ratio = self.delay_window / self.time.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(
                f"time.h: delay_window / h = {ratio} must be an integer "
                f"(got delay_window={self.delay_window}, h={self.time.h})"
            )
        ratio = self.time.T / self.time.h
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"time.h: T / h = {ratio} must be an integer")
        if self.model.delay.variant == "constant" and self.model.delay.eta0 > self.delay_window:
            raise ValueError("model.delay.eta0: constant delay exceeds the delay window")
        if self.model.delay.eta_min > self.delay_window:
            raise ValueError("model.delay.eta_min: exceeds the delay window")
        for i, term in enumerate(self.initial_history):
            if term.k > self.spectral.m:
                raise ValueError(
                    f"initial_history[{i}].k: mode {term.k} exceeds the truncation m={self.spectral.m}"
                )
        return self

    @property
    def history_intervals(self) -> int:
        return int(round(self.delay_window / self.time.h))


def canonical_config(**overrides) -> RunConfig:
    """The canonical desk-scale configuration; keyword overrides are shallow."""
    cfg = RunConfig()
    return cfg.model_copy(update=overrides) if overrides else cfg


def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical JSON dump, output directory excluded."""
    payload = config.model_dump(mode="json", exclude={"output_dir"})
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def set_by_path(data: dict, path: str, value) -> None:
    """Set a dotted-path key in a nested dict, creating intermediate levels."""
    keys = path.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def with_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Re-validate a copy of the config with dotted-path overrides applied."""
    data = config.model_dump(mode="json")
    for path, value in overrides.items():
        set_by_path(data, path, value)
    return RunConfig.model_validate(data)


# -- assembly ------------------------------------------------------------------

def build_domain(config: RunConfig) -> Domain1D:
    return Domain1D(config.domain.length)


def build_grid(config: RunConfig, domain: Domain1D | None = None) -> QuadratureGrid:
    return QuadratureGrid.gauss_legendre(domain or build_domain(config), config.spectral.quad_nodes)


def build_birth(config: RunConfig):
    b = config.model.birth
    if b.variant == "nicholson":
        return NicholsonBirth(p=b.p, cap=b.W)
    if b.variant == "constant":
        return ConstantBirth(b.c)
    return ZeroBirth()


def build_delay(config: RunConfig):
    d = config.model.delay
    if d.variant == "constant":
        return ConstantDelay(value=d.eta0, window=config.delay_window)
    if d.variant == "point_state":
        return PointStateDelay(minimum=d.eta_min, window=config.delay_window, sensitivity=d.c)
    return IntegralStateDelay(minimum=d.eta_min, window=config.delay_window, sensitivity=d.c)


def build_model(config: RunConfig) -> DelayReactionModel:
    """Assemble the full model; the cutoff radius resolves 'auto' from the ledger radii."""
    domain = build_domain(config)
    grid = build_grid(config, domain)
    kernel = KernelSpec(alpha=config.model.kernel.alpha, delta=config.model.kernel.delta)
    op = assemble_kernel_operator(kernel, config.spectral.m, grid, domain)
    model = DelayReactionModel(
        domain=domain, grid=grid, m=config.spectral.m, kernel_op=op,
        birth=build_birth(config), delay=build_delay(config),
    )
    if config.model.cutoff.enabled:
        if config.model.cutoff.Rhat_mode == "explicit":
            radius = float(config.model.cutoff.Rhat_value)
        else:
            ledger = constants_from_model(
                model, config.damping, path_lipschitz=0.0, horizon=config.time.T,
                alpha=config.diagnostics.alpha, eps=config.diagnostics.eps,
                eps0=config.diagnostics.eps0,
            )
            radius = ledger.absorbing_radius
        model = replace(model, cutoff=SmoothCutoff(radius))
    return model


def build_initial_history(config: RunConfig, domain: Domain1D | None = None) -> HistorySegment:
    return linear_history(
        domain or build_domain(config),
        config.spectral.m,
        config.time.h,
        config.history_intervals,
        [(t.k, t.a, t.s) for t in config.initial_history],
    )


def build_integrator_config(config: RunConfig, horizon: float | None = None) -> IntegratorConfig:
    return IntegratorConfig(
        h=config.time.h,
        horizon=config.time.T if horizon is None else horizon,
        damping=config.damping,
        scheme=config.integrator.scheme,
        modified_nonlinearity=config.model.cutoff.enabled,
    )
