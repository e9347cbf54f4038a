"""System configuration: dimensions, powers, geometry and solver settings.

Powers are in watts and distances in metres. Rates elsewhere in the package
are in bits per channel use.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt):
    return 10.0 * math.log10(watt) + 30.0


def thermal_noise_dbm(bandwidth_hz, noise_figure_db):
    """Noise power in dBm over ``bandwidth_hz`` at -174 dBm/Hz plus noise figure."""
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 50
    rel_tol: float = 1e-4
    feas_tol: float = 1e-6
    psd_floor: float = 1e-9
    rank_tol: float = 1e-6
    # Slack kept between compression and fronthaul rates so that every
    # linearization anchor is strictly feasible.
    strict_margin: float = 1e-6

    def validate(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        for name in ("rel_tol", "feas_tol", "psd_floor", "rank_tol", "strict_margin"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        return self


_DEFAULT_SIGMA2 = dbm_to_watt(thermal_noise_dbm(20e6, 5.0))


@dataclass(frozen=True)
class SystemConfig:
    """Scenario description.

    ``N_U``, ``N_H`` and ``weights`` accept a scalar, which is broadcast to
    ``K`` (resp. ``L``) entries. The defaults are the desk-scale profile
    (K = L = 4, two antennas everywhere, 50 CU antennas, 20 dBm UEs,
    30 dBm RRHs, thermal noise at the CU).
    """

    K: int = 4
    L: int = 4
    N_U: tuple = 2
    N_H: tuple = 2
    N_C: int = 50
    P_UE: float = 0.1
    P_H_max: float = 1.0
    sigma2_CU: float = _DEFAULT_SIGMA2
    carrier_hz: float = 1.9e9
    bandwidth_hz: float = 20e6
    antenna_spacing_ratio: float = 0.5
    weights: tuple = None
    area_m: float = 1000.0
    min_rrh_cu_m: float = 10.0
    min_rrh_rrh_m: float = 100.0
    h_rrh_m: float = 22.5
    h_ue_m: float = 1.5
    noise_figure_db: float = 5.0
    seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        def per(value, n):
            if isinstance(value, (int, float)):
                return (value,) * n
            return tuple(value)

        object.__setattr__(self, "N_U", tuple(int(v) for v in per(self.N_U, self.K)))
        object.__setattr__(self, "N_H", tuple(int(v) for v in per(self.N_H, self.L)))
        w = 1.0 if self.weights is None else self.weights
        object.__setattr__(self, "weights", tuple(float(v) for v in per(w, self.K)))
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverSettings(**self.solver))

    def validate(self):
        """Check the invariants; returns ``self`` so calls can be chained."""
        for name in ("K", "L", "N_C"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if len(self.N_U) != self.K:
            raise ConfigError(f"len(N_U)={len(self.N_U)} != K={self.K}")
        if len(self.N_H) != self.L:
            raise ConfigError(f"len(N_H)={len(self.N_H)} != L={self.L}")
        if len(self.weights) != self.K:
            raise ConfigError(f"len(weights)={len(self.weights)} != K={self.K}")
        if min(self.N_U) < 1 or min(self.N_H) < 1:
            raise ConfigError("antenna counts must be >= 1")
        for name in ("P_UE", "P_H_max", "sigma2_CU", "carrier_hz", "bandwidth_hz",
                     "antenna_spacing_ratio", "area_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if min(self.weights) <= 0:
            raise ConfigError("weights must be > 0")
        if self.min_rrh_cu_m < 0 or self.min_rrh_rrh_m < 0:
            raise ConfigError("separation floors must be >= 0")
        self.solver.validate()
        return self

    @property
    def n_h_total(self):
        return sum(self.N_H)

    def with_updates(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["N_U"] = list(self.N_U)
        d["N_H"] = list(self.N_H)
        d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, data):
        validate_config_dict(data)
        data = dict(data)
        if "solver" in data:
            data["solver"] = SolverSettings(**data["solver"])
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


def config_schema():
    text = resources.files("cranmm").joinpath("data/system_config.schema.json").read_text()
    return json.loads(text)


def validate_config_dict(data):
    try:
        jsonschema.validate(data, config_schema())
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc


def load_config(path):
    """Load a :class:`SystemConfig` from a JSON or YAML file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return SystemConfig.from_dict(data or {})


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of a config."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
