"""TOML run configuration with sections [market], [model], [simulation], [experiment].

Missing sections fall back to the defaults; unknown keys are errors.
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .defaults import DEFAULT_MARKET, DEFAULT_MODEL_PARAMS
from .errors import ConfigError, FundsepError, ParseError
from .model import PreferenceMarketSpec, StateModelSpec, canonical_kind
from .sde import SCHEMES, SimConfig

__all__ = ["RunConfig", "load_config", "resolve_config", "EXPERIMENT_KEYS"]

MARKET_KEYS = {"p", "r", "mu", "Sigma", "rho"}
MODEL_KEYS = {"kind", "b", "a", "sigma"}
SIMULATION_KEYS = {"dt", "n_paths", "seed", "scheme", "antithetic"}
EXPERIMENT_KEYS = {
    "z", "t", "T", "t_grid", "T_grid", "parameter", "representation", "method", "scaling", "measure",
    "horizon", "record_times", "hs_times", "hs_z", "prices", "filter_horizon", "filter_paths", "filter_dt",
    "y0_hat", "burn_in", "sandwich_bound",
}
SECTIONS = {"market": MARKET_KEYS, "model": MODEL_KEYS, "simulation": SIMULATION_KEYS,
            "experiment": EXPERIMENT_KEYS}

SIM_DEFAULTS = dict(dt=1e-3, n_paths=100_000, seed=0, scheme="auto", antithetic=True)


@dataclass(frozen=True, eq=False)
class RunConfig:
    spec: PreferenceMarketSpec
    model: StateModelSpec
    sim: SimConfig
    experiment: dict
    resolved: dict             # the fully resolved plain-data configuration

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path) -> dict:
    """Parse a TOML file into a dict; syntax errors carry line and column."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return data


def _check_keys(data: dict):
    for sec, body in data.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]; expected one of {sorted(SECTIONS)}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{sec}] must be a table")
        extra = set(body) - SECTIONS[sec]
        if extra:
            raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(extra))}")


def resolve_config(data: dict | None = None, kind: str | None = None, seed=None, paths=None, dt=None) -> RunConfig:
    """Merge a parsed file with defaults and command-line overrides."""
    data = dict(data or {})
    _check_keys(data)
    market = dict(DEFAULT_MARKET)
    market.update(data.get("market", {}))
    model_sec = dict(data.get("model", {}))
    if kind is not None and "kind" in model_sec and canonical_kind(model_sec["kind"]) != canonical_kind(kind):
        raise ConfigError(f"--model {kind} conflicts with [model] kind = {model_sec['kind']!r}")
    k = canonical_kind(model_sec.get("kind", kind or "three_halves"))
    model = dict(DEFAULT_MODEL_PARAMS[k])
    model.update({key: v for key, v in model_sec.items() if key != "kind"})
    model["kind"] = k
    sim = dict(SIM_DEFAULTS)
    sim.update(data.get("simulation", {}))
    for key, val in (("seed", seed), ("n_paths", paths), ("dt", dt)):
        if val is not None:
            sim[key] = val
    if sim["scheme"] not in SCHEMES:
        raise ConfigError(f"unknown scheme {sim['scheme']!r}")
    if not isinstance(sim["antithetic"], bool):
        raise ConfigError("[simulation] antithetic must be true or false")
    try:
        spec = PreferenceMarketSpec(**market)
        mdl = StateModelSpec(**model)
        cfg = SimConfig(dt=float(sim["dt"]), n_paths=int(sim["n_paths"]), seed=int(sim["seed"]),
                        scheme=sim["scheme"], antithetic=sim["antithetic"])
    except FundsepError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc
    exp = dict(data.get("experiment", {}))
    resolved = {"market": market, "model": model, "simulation": sim, "experiment": exp}
    return RunConfig(spec, mdl, cfg, exp, json.loads(json.dumps(resolved)))
