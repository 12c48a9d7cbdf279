"""Run configuration shared by every subcommand.

One YAML (or JSON) document describes the system, the analysis window and
the per-stage knobs. Parsing is strict: unknown keys are rejected with the
full key path, every omitted value takes a recorded default, and the fully
defaulted dictionary round-trips through the provenance file losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .fields import AffineField, PolynomialField
from .flux_solver import GridSpec
from .simulate import SimConfig
from .system import SwitchingRates, SwitchingSystem

__all__ = [
    "AsymptoticsConfig",
    "FieldConfig",
    "RunConfig",
    "SimulateConfig",
    "SolveConfig",
    "SystemConfig",
    "Tolerances",
    "build_grid_spec",
    "build_sim_config",
    "build_system",
    "config_from_dict",
    "config_to_dict",
    "load_config",
]


def _require_mapping(data, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be a mapping")
    return data

def _check_keys(data: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {path}{key}")

def _num(value, path: str) -> float:
    # bool is an int subclass; reject it explicitly
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number")
    value = float(value)
    if value != value:
        raise ConfigError(f"{path} must not be NaN")
    return value

def _int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer")
    return value

def _str(value, path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{path} must be a string")
    return value

def _pair(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{path} must be a pair [low, high]")
    lo, hi = (_num(v, f"{path}[{k}]") for k, v in enumerate(value))
    if not lo < hi:
        raise ConfigError(f"{path} must be strictly increasing")
    return (lo, hi)


@dataclass(frozen=True)
class FieldConfig:
    """One driving field: affine (slope, intercept) or polynomial coefficients."""

    kind: str
    values: tuple[float, ...]

    @staticmethod
    def from_dict(data, path: str) -> "FieldConfig":
        data = _require_mapping(data, path)
        kind = _str(data.get("kind", ""), f"{path}.kind")
        if kind == "affine":
            _check_keys(data, ("kind", "slope", "intercept"), f"{path}.")
            if "slope" not in data or "intercept" not in data:
                raise ConfigError(f"{path} needs slope and intercept")
            return FieldConfig("affine", (_num(data["slope"], f"{path}.slope"),
                                          _num(data["intercept"], f"{path}.intercept")))
        if kind == "polynomial":
            _check_keys(data, ("kind", "coefficients"), f"{path}.")
            coefs = data.get("coefficients")
            if not isinstance(coefs, (list, tuple)) or not coefs:
                raise ConfigError(f"{path}.coefficients must be a nonempty list")
            return FieldConfig("polynomial", tuple(
                _num(c, f"{path}.coefficients[{k}]") for k, c in enumerate(coefs)))
        raise ConfigError(f"{path}.kind must be 'affine' or 'polynomial'")

    def to_dict(self) -> dict:
        if self.kind == "affine":
            return {"kind": "affine", "slope": self.values[0], "intercept": self.values[1]}
        return {"kind": "polynomial", "coefficients": list(self.values)}

    def build(self):
        if self.kind == "affine":
            return AffineField(self.values[0], self.values[1])
        return PolynomialField(self.values)


@dataclass(frozen=True)
class SystemConfig:
    fields: tuple[FieldConfig, ...]
    rates: tuple[tuple[float, ...], ...]

    @staticmethod
    def from_dict(data, path: str) -> "SystemConfig":
        data = _require_mapping(data, path)
        _check_keys(data, ("fields", "rates"), f"{path}.")
        raw_fields = data.get("fields")
        if not isinstance(raw_fields, (list, tuple)) or not raw_fields:
            raise ConfigError(f"{path}.fields must be a nonempty list")
        fields = tuple(FieldConfig.from_dict(f, f"{path}.fields[{k}]")
                       for k, f in enumerate(raw_fields))
        raw_rates = data.get("rates")
        if not isinstance(raw_rates, (list, tuple)) or not raw_rates:
            raise ConfigError(f"{path}.rates must be a square matrix")
        rates = []
        for i, row in enumerate(raw_rates):
            if not isinstance(row, (list, tuple)) or len(row) != len(raw_rates):
                raise ConfigError(f"{path}.rates row {i} has the wrong length")
            rates.append(tuple(_num(v, f"{path}.rates[{i}][{j}]")
                               for j, v in enumerate(row)))
        return SystemConfig(fields, tuple(rates))

    def to_dict(self) -> dict:
        return {"fields": [f.to_dict() for f in self.fields],
                "rates": [list(row) for row in self.rates]}


@dataclass(frozen=True)
class SimulateConfig:
    seed: int = 0
    t_max: float = 1000.0
    burn_in: float = 0.0
    max_switches: int = 10**9
    replicas: int = 1
    bins: int = 200
    start_position: float | None = None   # None: window midpoint
    start_state: int = 0
    method: str = "auto"

    @staticmethod
    def from_dict(data, path: str) -> "SimulateConfig":
        data = _require_mapping(data, path)
        allowed = ("seed", "t_max", "burn_in", "max_switches", "replicas",
                   "bins", "start_position", "start_state", "method")
        _check_keys(data, allowed, f"{path}.")
        kw: dict = {}
        for key in ("seed", "max_switches", "replicas", "bins", "start_state"):
            if key in data:
                kw[key] = _int(data[key], f"{path}.{key}")
        for key in ("t_max", "burn_in"):
            if key in data:
                kw[key] = _num(data[key], f"{path}.{key}")
        if data.get("start_position") is not None:
            kw["start_position"] = _num(data["start_position"], f"{path}.start_position")
        if "method" in data:
            method = _str(data["method"], f"{path}.method")
            if method not in ("auto", "kernel", "reference"):
                raise ConfigError(f"{path}.method must be auto, kernel or reference")
            kw["method"] = method
        cfg = SimulateConfig(**kw)
        if cfg.bins < 1:
            raise ConfigError(f"{path}.bins must be at least 1")
        return cfg

    def to_dict(self) -> dict:
        return {"seed": self.seed, "t_max": self.t_max, "burn_in": self.burn_in,
                "max_switches": self.max_switches, "replicas": self.replicas,
                "bins": self.bins, "start_position": self.start_position,
                "start_state": self.start_state, "method": self.method}


@dataclass(frozen=True)
class Tolerances:
    """Acceptance thresholds used by solve residuals and cross-route checks."""

    fixed_point: float = 1e-10     # iteration stop, L1 change per sweep
    certificate: float = 1e-6      # stationarity defect of the solved density
    route_l1: float = 1e-4         # fixed-point route vs flux route
    monte_carlo_l1: float = 0.05   # occupation histogram vs flux route
    exponent: float = 0.05         # relative error on fitted tail exponents
    limit: float = 0.02            # relative error on extrapolated finite limits
    log_flatness: float = 0.05     # spread of rho/(-ln eta) in the resonant case
    identity: float = 1e-6         # local representation and balance residuals
    flux_sum: float = 1e-10        # total flux constancy along the grid

    _KEYS = ("fixed_point", "certificate", "route_l1", "monte_carlo_l1",
             "exponent", "limit", "log_flatness", "identity", "flux_sum")

    @staticmethod
    def from_dict(data, path: str) -> "Tolerances":
        data = _require_mapping(data, path)
        _check_keys(data, Tolerances._KEYS, f"{path}.")
        kw = {k: _num(v, f"{path}.{k}") for k, v in data.items()}
        for k, v in kw.items():
            if not v > 0.0:
                raise ConfigError(f"{path}.{k} must be positive")
        return Tolerances(**kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self._KEYS}


@dataclass(frozen=True)
class SolveConfig:
    min_offset_rel: float = 1e-8
    grading_ratio: float = 1.05
    max_regular_cells: int = 64
    series_order: int = 8
    rtol: float = 1e-12
    atol: float = 1e-14
    horizon: float | None = None   # transfer-step horizon; None: 1/max holding rate
    max_sweeps: int = 200
    tolerances: Tolerances = field(default_factory=Tolerances)

    @staticmethod
    def from_dict(data, path: str) -> "SolveConfig":
        data = _require_mapping(data, path)
        allowed = ("min_offset_rel", "grading_ratio", "max_regular_cells",
                   "series_order", "rtol", "atol", "horizon", "max_sweeps",
                   "tolerances")
        _check_keys(data, allowed, f"{path}.")
        kw: dict = {}
        for key in ("min_offset_rel", "grading_ratio", "rtol", "atol"):
            if key in data:
                kw[key] = _num(data[key], f"{path}.{key}")
        for key in ("max_regular_cells", "series_order", "max_sweeps"):
            if key in data:
                kw[key] = _int(data[key], f"{path}.{key}")
        if data.get("horizon") is not None:
            horizon = _num(data["horizon"], f"{path}.horizon")
            if not horizon > 0.0:
                raise ConfigError(f"{path}.horizon must be positive")
            kw["horizon"] = horizon
        if "tolerances" in data:
            kw["tolerances"] = Tolerances.from_dict(data["tolerances"], f"{path}.tolerances")
        cfg = SolveConfig(**kw)
        if cfg.max_sweeps < 1:
            raise ConfigError(f"{path}.max_sweeps must be at least 1")
        return cfg

    def to_dict(self) -> dict:
        return {"min_offset_rel": self.min_offset_rel, "grading_ratio": self.grading_ratio,
                "max_regular_cells": self.max_regular_cells, "series_order": self.series_order,
                "rtol": self.rtol, "atol": self.atol, "horizon": self.horizon,
                "max_sweeps": self.max_sweeps, "tolerances": self.tolerances.to_dict()}


@dataclass(frozen=True)
class AsymptoticsConfig:
    series_order: int = 8               # local series truncation order
    epsilon: float | None = None        # local frame radius; None: measured clearance
    fit_window: tuple[float, float] = (1e-4, 1e-2)
    extrapolation_points: int = 5

    @staticmethod
    def from_dict(data, path: str) -> "AsymptoticsConfig":
        data = _require_mapping(data, path)
        allowed = ("series_order", "epsilon", "fit_window", "extrapolation_points")
        _check_keys(data, allowed, f"{path}.")
        kw: dict = {}
        for key in ("series_order", "extrapolation_points"):
            if key in data:
                kw[key] = _int(data[key], f"{path}.{key}")
        if data.get("epsilon") is not None:
            eps = _num(data["epsilon"], f"{path}.epsilon")
            if not eps > 0.0:
                raise ConfigError(f"{path}.epsilon must be positive")
            kw["epsilon"] = eps
        if "fit_window" in data:
            kw["fit_window"] = _pair(data["fit_window"], f"{path}.fit_window")
        cfg = AsymptoticsConfig(**kw)
        if cfg.extrapolation_points < 2:
            raise ConfigError(f"{path}.extrapolation_points must be at least 2")
        return cfg

    def to_dict(self) -> dict:
        return {"series_order": self.series_order, "epsilon": self.epsilon,
                "fit_window": list(self.fit_window),
                "extrapolation_points": self.extrapolation_points}


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig
    window: tuple[float, float]
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    asymptotics: AsymptoticsConfig = field(default_factory=AsymptoticsConfig)
    output: str = "out"


_TOP_KEYS = ("system", "window", "simulate", "solve", "asymptotics", "output")


def config_from_dict(data, source: str = "config") -> RunConfig:
    data = _require_mapping(data, source)
    _check_keys(data, _TOP_KEYS, "")
    if "system" not in data:
        raise ConfigError("config needs a system block")
    if "window" not in data:
        raise ConfigError("config needs a window")
    kw: dict = {
        "system": SystemConfig.from_dict(data["system"], "system"),
        "window": _pair(data["window"], "window"),
    }
    if "simulate" in data:
        kw["simulate"] = SimulateConfig.from_dict(data["simulate"], "simulate")
    if "solve" in data:
        kw["solve"] = SolveConfig.from_dict(data["solve"], "solve")
    if "asymptotics" in data:
        kw["asymptotics"] = AsymptoticsConfig.from_dict(data["asymptotics"], "asymptotics")
    if "output" in data:
        kw["output"] = _str(data["output"], "output")
    return RunConfig(**kw)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data image of the config with every default materialized."""
    return {
        "system": cfg.system.to_dict(),
        "window": list(cfg.window),
        "simulate": cfg.simulate.to_dict(),
        "solve": cfg.solve.to_dict(),
        "asymptotics": cfg.asymptotics.to_dict(),
        "output": cfg.output,
    }


def load_config(path: str) -> RunConfig:
    """Parse a config file; a provenance report is accepted and unwrapped."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        # YAML is a superset of JSON, so one parser covers both formats
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc
    if isinstance(data, dict) and "schema_version" in data and "config" in data:
        data = data["config"]
    return config_from_dict(data, source=path)


def build_system(cfg: RunConfig) -> SwitchingSystem:
    fields = tuple(f.build() for f in cfg.system.fields)
    rates = SwitchingRates([list(row) for row in cfg.system.rates])
    return SwitchingSystem(fields, rates)


def build_grid_spec(cfg: RunConfig) -> GridSpec:
    s = cfg.solve
    return GridSpec(min_offset_rel=s.min_offset_rel, ratio=s.grading_ratio,
                    max_regular_cells=s.max_regular_cells, series_order=s.series_order,
                    rtol=s.rtol, atol=s.atol)


def build_sim_config(cfg: RunConfig, seed_override: int | None = None) -> SimConfig:
    s = cfg.simulate
    seed = s.seed if seed_override is None else seed_override
    return SimConfig(seed=seed, t_max=s.t_max, burn_in=s.burn_in,
                     max_switches=s.max_switches, replicas=s.replicas)
