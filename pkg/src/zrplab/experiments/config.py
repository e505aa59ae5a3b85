"""
Experiment configuration: validation, defaults and canonical form.

A config file is JSON holding one experiment object, a list of them, or
``{"experiments": [...]}``.  Each object names its ``scenario``; unknown
keys are rejected and every error message carries the key path.
"""

from __future__ import annotations

import hashlib
import json
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

__all__ = [
    "ConfigError",
    "TestFunctionSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
    "canonical_json",
    "config_digest",
    "SCENARIOS",
]

GAMMA_LIMIT = 1.0 / 3.0


class ConfigError(ValueError):
    """Malformed or out-of-range experiment configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TestFunctionSpec(_Strict):
    __test__ = False

    kind: Literal["gaussian_bump", "ramp_n", "tabulated"] = "gaussian_bump"
    center: float = 0.0
    width: float = Field(1.0, gt=0)
    n: Optional[float] = Field(None, gt=0)
    grid: Optional[list[float]] = None
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "ramp_n" and self.n is None:
            raise ValueError("ramp_n needs n")
        if self.kind == "tabulated" and (self.grid is None or self.values is None):
            raise ValueError("tabulated needs grid and values")
        return self

    def build(self):
        from ..observables import TestFunction

        if self.kind == "gaussian_bump":
            return TestFunction.gaussian_bump(self.center, self.width)
        if self.kind == "ramp_n":
            return TestFunction.ramp(self.n)
        return TestFunction.tabulated(self.grid, self.values)


def _bump(width: float = 1.0, center: float = 0.0) -> TestFunctionSpec:
    return TestFunctionSpec(kind="gaussian_bump", center=center, width=width)


class _Base(_Strict):
    name: Optional[str] = Field(None, pattern=r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
    rho: float = Field(1.0, ge=0)
    rate: Literal["indicator", "independent"] = "indicator"
    R: int = Field(256, ge=16)
    c: int = Field(32, ge=2)
    probe: bool = False

    @property
    def label(self) -> str:
        return self.name or self.scenario

    def rate_function(self):
        from ..ensemble import RateFunction

        return RateFunction.indicator() if self.rate == "indicator" else RateFunction.independent()


def _check_gamma(gamma: float, probe: bool) -> None:
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma >= GAMMA_LIMIT and not probe:
        raise ValueError("gamma must be < 1/3, the range of the Boltzmann-Gibbs estimate on the "
                         "long time scale; set probe=true to explore beyond it without a verdict")


def _gamma_field(v: float, info) -> float:
    _check_gamma(v, bool(info.data.get("probe")) or bool(info.data.get("probe_kpz")))
    return v


def _sweep(values: list[int]) -> list[int]:
    if len(values) < 4:
        raise ValueError("an exponent fit needs at least 4 values of N")
    if sorted(set(values)) != list(values):
        raise ValueError("N_list must be strictly increasing")
    return values


class StaticField(_Base):
    """Variance of ``Y_0(H)`` and covariance with a disjoint translate."""

    scenario: Literal["static_field"] = "static_field"
    N: int = Field(100, ge=1)
    H: TestFunctionSpec = _bump()
    G: TestFunctionSpec = _bump(center=16.0)
    R: int = Field(10_000, ge=16)


class FieldCovariance(_Base):
    """``E[Y_t(H) Y_s(G)]`` on the hyperbolic scale."""

    scenario: Literal["field_covariance"] = "field_covariance"
    N: int = Field(200, ge=1)
    H: TestFunctionSpec = _bump()
    G: Optional[TestFunctionSpec] = None
    s: float = Field(0.0, ge=0)
    t: float = Field(1.0, ge=0)

    @model_validator(mode="after")
    def _order(self):
        if self.t < self.s:
            raise ValueError("need t >= s")
        return self


class CurrentCLT(_Base):
    """Fixed-bond current: mean, variance, Gaussianity and time covariance."""

    scenario: Literal["current_clt"] = "current_clt"
    N: int = Field(500, ge=1)
    t: float = Field(1.0, ge=0)
    t_mid: float = Field(0.5, ge=0)
    bond_spacing: float = Field(2.0, gt=0, description="macroscopic distance between pooled bonds")

    @model_validator(mode="after")
    def _order(self):
        if self.t_mid > self.t:
            raise ValueError("need t_mid <= t")
        return self


class CurrentVsField(_Base):
    """Squared distance between the centred current and ramp-field increments."""

    scenario: Literal["current_vs_field"] = "current_vs_field"
    N: int = Field(64, ge=1)
    t: float = Field(1.0, ge=0)
    n_list: list[float] = [2.0, 4.0, 8.0, 16.0]
    c: int = Field(40, ge=2)

    @field_validator("n_list")
    @classmethod
    def _n(cls, v):
        if len(v) < 2 or sorted(v) != list(v) or v[0] <= 0:
            raise ValueError("n_list must be increasing positive ramp lengths")
        return v


class Martingale(_Base):
    """Field increment minus drift against the stated quadratic variation."""

    scenario: Literal["martingale"] = "martingale"
    N: int = Field(128, ge=1)
    t: float = Field(1.0, ge=0)
    H: TestFunctionSpec = _bump()


class BGDecay(_Base):
    """Decay exponent of the integrated recentred functional."""

    scenario: Literal["bg_decay"] = "bg_decay"
    N_list: list[int] = [64, 128, 256, 512]
    gamma: float = 0.25
    t: float = Field(1.0, gt=0)
    H: TestFunctionSpec = _bump(width=0.5)
    frame: Literal["moving", "fixed"] = "moving"
    R: int = Field(64, ge=16)
    windows: int = Field(2, ge=1, description="independent test-function windows per replica")

    _n = field_validator("N_list")(classmethod(lambda cls, v: _sweep(v)))

    _g = field_validator("gamma")(classmethod(lambda cls, v, info: _gamma_field(v, info)))


class CharacteristicCurrent(_Base):
    """Second moment of the current along the characteristic, with a fixed-bond control."""

    scenario: Literal["characteristic_current"] = "characteristic_current"
    N_list: list[int] = [64, 128, 256, 512]
    probe_kpz: bool = False
    gamma: float = 0.25
    t: float = Field(1.0, ge=0)
    R: int = Field(64, ge=16)
    trackers: int = Field(4, ge=1, description="characteristic bonds per replica")
    kpz_L: int = Field(16384, ge=64)
    kpz_T: list[float] = [125.0, 250.0, 500.0, 1000.0, 2000.0]
    kpz_R: int = Field(32, ge=16)

    _n = field_validator("N_list")(classmethod(lambda cls, v: _sweep(v)))

    _g = field_validator("gamma")(classmethod(lambda cls, v, info: _gamma_field(v, info)))


class Flu2Static(_Base):
    """Time independence of the characteristic-frame field covariance."""

    scenario: Literal["flu2_static"] = "flu2_static"
    N: int = Field(128, ge=1)
    gamma: float = 0.25
    H: TestFunctionSpec = _bump()
    G: Optional[TestFunctionSpec] = None
    pairs: list[tuple[float, float]] = [(0.0, 1.0), (0.5, 1.0)]

    _g = field_validator("gamma")(classmethod(lambda cls, v, info: _gamma_field(v, info)))

    @model_validator(mode="after")
    def _check(self):
        for s, t in self.pairs:
            if not 0 <= s <= t:
                raise ValueError("each (s, t) pair needs 0 <= s <= t")
        return self


class SymmetricBG(_Base):
    """Decay exponent of the integrated functional for the symmetric process on the diffusive scale."""

    scenario: Literal["symmetric_bg"] = "symmetric_bg"
    N_list: list[int] = [64, 128, 256, 512]
    t: float = Field(0.01, gt=0)
    beta: float = Field(0.45, ge=0)
    H: TestFunctionSpec = _bump(width=0.5)
    p_right: float = 0.5
    c: int = Field(16, ge=2)
    R: int = Field(64, ge=16)
    windows: int = Field(2, ge=1)

    _n = field_validator("N_list")(classmethod(lambda cls, v: _sweep(v)))

    @model_validator(mode="after")
    def _symmetric(self):
        if self.p_right != 0.5:
            raise ValueError("symmetric_bg runs the symmetric process; p_right must be 0.5")
        if self.beta >= 0.5 and not self.probe:
            raise ValueError("beta must be < 1/2")
        return self


class BlockVariances(_Base):
    """Variances of the block-conditioned functionals against block size."""

    scenario: Literal["block_variances"] = "block_variances"
    K_list: list[int] = [8, 16, 32, 64, 128, 256, 512]
    L_list: list[int] = [4, 8, 16, 32, 64]
    K_inner: int = Field(8, ge=2)
    blocks: int = Field(20_000, ge=100, description="sampled blocks per size")
    R: int = Field(16, ge=16)

    @field_validator("K_list", "L_list")
    @classmethod
    def _sizes(cls, v):
        if any(k < 2 for k in v):
            raise ValueError("block sizes must be at least 2")
        return v


class Hydro(_Base):
    """Empirical profile from step data against the entropy solution."""

    scenario: Literal["hydro"] = "hydro"
    rho_left: float = Field(1.0, ge=0)
    rho_right: float = Field(0.0, ge=0)
    N_list: list[int] = [256, 512]
    t: float = Field(1.0, gt=0)
    c: int = Field(8, ge=4)
    R: int = Field(512, ge=16)

    @field_validator("N_list")
    @classmethod
    def _pair(cls, v):
        if len(v) < 2 or sorted(v) != list(v):
            raise ValueError("N_list needs at least two increasing values")
        return v


class Stationarity(_Base):
    """Occupancy law and mean bond current after evolving from equilibrium."""

    scenario: Literal["stationarity"] = "stationarity"
    N: int = Field(256, ge=1)
    t: float = Field(1.0, ge=0)
    p_right: float = Field(1.0, ge=0.5, le=1.0)
    bonds: int = Field(16, ge=1)
    R: int = Field(16, ge=16)


ExperimentConfig = Annotated[
    Union[StaticField, FieldCovariance, CurrentCLT, CurrentVsField, Martingale, BGDecay,
          CharacteristicCurrent, Flu2Static, SymmetricBG, BlockVariances, Hydro, Stationarity],
    Field(discriminator="scenario"),
]

SCENARIOS = ("static_field", "field_covariance", "current_clt", "current_vs_field", "martingale",
             "bg_decay", "characteristic_current", "flu2_static", "symmetric_bg", "block_variances",
             "hydro", "stationarity")

_LIST = TypeAdapter(list[ExperimentConfig])


def _format_error(err: ValidationError, prefix: str) -> str:
    lines = []
    for e in err.errors():
        loc = [str(p) for p in e["loc"]]
        # drop the discriminator tag pydantic inserts after the list index
        if len(loc) >= 2 and loc[1] in SCENARIOS:
            loc.pop(1)
        path = prefix + "".join(f"[{p}]" if p.isdigit() else f".{p}" for p in loc)
        msg = e["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}")
    return "; ".join(lines)


def parse_config_text(text: str) -> list:
    """Validate JSON text into a list of experiment configs with defaults filled."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    prefix = "experiments"
    if isinstance(data, dict) and set(data) == {"experiments"}:
        data = data["experiments"]
    elif isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise ConfigError("config must be an experiment object or a non-empty list of them")
    try:
        configs = _LIST.validate_python(data)
    except ValidationError as exc:
        raise ConfigError(_format_error(exc, prefix)) from None
    labels = [c.label for c in configs]
    dupes = sorted({x for x in labels if labels.count(x) > 1})
    if dupes:
        raise ConfigError(f"experiment names must be unique; repeated: {', '.join(dupes)}")
    return configs


def parse_config(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def canonical_json(configs) -> str:
    """Sorted-key compact JSON of the fully defaulted configs; a fixed point of parsing."""
    payload = {"experiments": [c.model_dump(mode="json") for c in configs]}
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_digest(configs) -> str:
    return hashlib.sha256(canonical_json(configs).encode("utf-8")).hexdigest()


def to_builtin(obj: Any) -> Any:
    return obj.model_dump(mode="json") if isinstance(obj, BaseModel) else obj
