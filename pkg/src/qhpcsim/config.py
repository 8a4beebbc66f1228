"""Scenario configuration: a flat JSON document, strictly validated.

Every field is optional except ``scenario``; defaults depend on the scenario.
Unknown keys are rejected with the offending field path.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

from .errors import ConfigError
from .qpu import LATENCY_PRESETS, LatencyModel, NoiseParams

SCENARIOS = ("ipe", "qpe", "vqe", "ensemble")
DEFAULT_MODE = {"ipe": "sync", "qpe": "async", "vqe": "sync", "ensemble": "async"}
DEFAULT_SHOTS = {"ipe": 1, "qpe": 1, "vqe": 4096, "ensemble": 1}
LATENCY_FIELDS = ("t_init", "t_gate", "t_meas", "t_submit", "t_return", "jitter_frac")
NOISE_FIELDS = ("p_depol_per_gate", "p_readout_flip", "p_inject")

_TOP_LEVEL = {
    "scenario", "phi", "m", "shots", "mode", "devices", "latency", "noise", "seed", "output_dir",
    "K", "c_x", "c_y", "grid_points", "max_retries", "variant", "exact", "classical_cost",
}


@dataclass
class ScenarioConfig:
    scenario: str
    phi: Optional[str] = None
    m: Optional[int] = None
    shots: int = 1
    mode: str = "sync"
    devices: int = 1
    latency: Union[str, dict] = "tight"
    noise: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "out"
    K: int = 4
    c_x: Optional[float] = None
    c_y: Optional[float] = None
    grid_points: int = 64
    max_retries: int = 0
    variant: str = "two_ancilla"
    exact: bool = False
    classical_cost: float = 0.0

    def latency_model(self) -> LatencyModel:
        if isinstance(self.latency, str):
            return LATENCY_PRESETS[self.latency]
        overrides = dict(self.latency)
        base = LATENCY_PRESETS[overrides.pop("preset", "tight")]
        return replace(base, **overrides)

    def noise_params(self) -> NoiseParams:
        return NoiseParams(self.noise.get("p_depol_per_gate", 0.0), self.noise.get("p_readout_flip", 0.0))

    @property
    def p_inject(self) -> float:
        return self.noise.get("p_inject", 0.0)

    def to_dict(self) -> dict:
        return asdict(self)


def _num(path: str, v: Any, *, integer: bool = False, lo: Optional[float] = None,
         hi: Optional[float] = None) -> Any:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if lo is not None and v < lo:
        raise ConfigError(path, f"must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(path, f"must be <= {hi}, got {v}")
    return v


def _choice(path: str, v: Any, options) -> str:
    if v not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {v!r}")
    return v


def parse_config(raw: Any) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(raw) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "scenario" not in raw:
        raise ConfigError("scenario", "required field missing")
    scenario = _choice("scenario", raw["scenario"], SCENARIOS)
    cfg = ScenarioConfig(scenario, mode=DEFAULT_MODE[scenario], shots=DEFAULT_SHOTS[scenario],
                         devices=2 if scenario == "ensemble" else 1)

    if scenario in ("ipe", "qpe", "ensemble"):
        if "phi" not in raw:
            raise ConfigError("phi", f"required for scenario {scenario!r}")
        phi = raw["phi"]
        if not isinstance(phi, str) or not phi or set(phi) - {"0", "1"} or len(phi) > 10:
            raise ConfigError("phi", f"expected a bit string of length 1..10, got {phi!r}")
        cfg.phi = phi
        cfg.m = len(phi)
        if "m" in raw:
            m = _num("m", raw["m"], integer=True, lo=1, hi=10)
            if m != len(phi):
                raise ConfigError("m", f"m={m} disagrees with len(phi)={len(phi)}")
    elif "phi" in raw or "m" in raw:
        raise ConfigError("phi" if "phi" in raw else "m", f"not used by scenario {scenario!r}")

    if scenario == "vqe":
        for key in ("c_x", "c_y"):
            if key not in raw:
                raise ConfigError(key, "cost coefficient required for scenario 'vqe'")
            setattr(cfg, key, float(_num(key, raw[key])))
        if "grid_points" in raw:
            cfg.grid_points = _num("grid_points", raw["grid_points"], integer=True, lo=4)
        if "max_retries" in raw:
            cfg.max_retries = _num("max_retries", raw["max_retries"], integer=True, lo=0)
        if "variant" in raw:
            cfg.variant = _choice("variant", raw["variant"], ("two_ancilla", "single_ancilla"))
        if "exact" in raw:
            if not isinstance(raw["exact"], bool):
                raise ConfigError("exact", "expected true or false")
            cfg.exact = raw["exact"]
    else:
        for key in ("c_x", "c_y", "grid_points", "max_retries", "variant", "exact"):
            if key in raw:
                raise ConfigError(key, "only used by scenario 'vqe'")

    if "K" in raw:
        if scenario != "ensemble":
            raise ConfigError("K", "only used by scenario 'ensemble'")
        cfg.K = _num("K", raw["K"], integer=True, lo=1, hi=64)
    if "shots" in raw:
        cfg.shots = _num("shots", raw["shots"], integer=True, lo=1)
        if scenario != "vqe" and cfg.shots % 2 == 0:
            raise ConfigError("shots", "must be odd for majority-vote phase estimation")
    if "mode" in raw:
        cfg.mode = _choice("mode", raw["mode"], ("sync", "async"))
    if "devices" in raw:
        cfg.devices = _num("devices", raw["devices"], integer=True, lo=1, hi=64)
    if "seed" in raw:
        cfg.seed = _num("seed", raw["seed"], integer=True, lo=0, hi=2**64 - 1)
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str) or not raw["output_dir"]:
            raise ConfigError("output_dir", "expected a non-empty path string")
        cfg.output_dir = raw["output_dir"]
    if "classical_cost" in raw:
        cfg.classical_cost = float(_num("classical_cost", raw["classical_cost"], lo=0))

    if "latency" in raw:
        lat = raw["latency"]
        if isinstance(lat, str):
            cfg.latency = _choice("latency", lat, tuple(LATENCY_PRESETS))
        elif isinstance(lat, dict):
            for key, v in lat.items():
                if key == "preset":
                    _choice("latency.preset", v, tuple(LATENCY_PRESETS))
                elif key in LATENCY_FIELDS:
                    _num(f"latency.{key}", v, lo=0)
                else:
                    raise ConfigError(f"latency.{key}", "unknown key")
            cfg.latency = dict(lat)
        else:
            raise ConfigError("latency", "expected a preset name or an object of overrides")

    if "noise" in raw:
        nz = raw["noise"]
        if not isinstance(nz, dict):
            raise ConfigError("noise", "expected an object")
        for key, v in nz.items():
            if key not in NOISE_FIELDS:
                raise ConfigError(f"noise.{key}", "unknown key")
            _num(f"noise.{key}", v, lo=0, hi=1)
            if key == "p_inject" and scenario != "vqe":
                raise ConfigError("noise.p_inject", "only used by scenario 'vqe'")
        cfg.noise = {k: float(v) for k, v in nz.items()}
    return cfg


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    return parse_config(raw)
