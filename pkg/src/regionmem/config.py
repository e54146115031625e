"""Run configuration: flat dotted keys, file values, flag overrides.

Config files are plain text, one `key = value` per line, with `#` comments
and blank lines ignored. Every key has a typed default below; unknown keys
and badly typed values are configuration errors. Command-line flags win
over file values, which win over defaults.
"""

from __future__ import annotations

import math

from .clustering import ClusteringParams
from .errors import ConfigError
from .evaluate import GtThresholds
from .memory import MemoryParams
from .predictor import TrainConfig

DEFAULTS: dict = {
    "seed": 0,
    "memory.n_wm": 50,
    "memory.k1": 2,
    "memory.k2_frac": 0.25,
    "memory.m_stm": 10,
    "memory.tau_loop": 0.85,
    "memory.alpha": 0.3,
    "memory.policy": "region",
    "cluster.s_prime": 0.5,
    "cluster.s_max": 3.0,
    "cluster.n_des": 30,
    "cluster.r_max": 5.0,
    "cluster.shape_factor": 1.0,
    "train.hidden": 64,
    "train.gamma": 2.0,
    "train.step_size": 0.1,
    "train.epochs": 100,
    "train.batch": 32,
    "eval.d_max": 3.0,
    "eval.theta_max": math.pi / 4.0,
    "eval.window": 20,
}


def _coerce(key: str, raw, default):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if str(raw).lower() in ("true", "1", "yes"):
                return True
            if str(raw).lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(str(raw))
        if isinstance(default, float):
            return float(str(raw))
        return str(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as "
                          f"{type(default).__name__}") from exc


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Resolved configuration: defaults, then the file, then overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        try:
            fh = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        with fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {lineno}: expected key = value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
                cfg[key] = _coerce(key, value, DEFAULTS[key])
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        if value is not None:
            cfg[key] = _coerce(key, value, DEFAULTS[key])
    return cfg


def memory_params(cfg: dict, policy: str | None = None) -> MemoryParams:
    return MemoryParams(
        n_wm=cfg["memory.n_wm"],
        k1=cfg["memory.k1"],
        k2_frac=cfg["memory.k2_frac"],
        m_stm=cfg["memory.m_stm"],
        tau_loop=cfg["memory.tau_loop"],
        alpha=cfg["memory.alpha"],
        policy=policy or cfg["memory.policy"],
        grid_cell=cfg["cluster.r_max"],
    )


def cluster_params(cfg: dict) -> ClusteringParams:
    return ClusteringParams(
        s_prime=cfg["cluster.s_prime"],
        s_max=cfg["cluster.s_max"],
        n_des=cfg["cluster.n_des"],
        r_max=cfg["cluster.r_max"],
        shape_factor=cfg["cluster.shape_factor"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        gamma=cfg["train.gamma"],
        step_size=cfg["train.step_size"],
        epochs=cfg["train.epochs"],
        batch=cfg["train.batch"],
        seed=cfg["seed"],
    )


def gt_thresholds(cfg: dict) -> GtThresholds:
    return GtThresholds(
        d_max=cfg["eval.d_max"],
        theta_max=cfg["eval.theta_max"],
        window=cfg["eval.window"],
    )
