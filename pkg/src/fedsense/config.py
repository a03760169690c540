"""Simulation configuration: parameter table defaults plus tuning knobs.

Configs load from a ``key = value`` text document (``#`` comments allowed);
unset keys keep their defaults.  ``desk_scale`` shrinks the scenario to a
size where a full federated run takes minutes instead of hours while
preserving the 10 microsecond sensing interval.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .channel import PathLossParams, RadioConfig
from .errors import ParseError, ValidationError
from .neuralnet import Hyperparams


@dataclass(frozen=True)
class SimulationConfig:
    # scenario scale
    settings: int = 500
    data_per_uav: int = 256          # B
    num_uavs: int = 16               # N
    # radio
    rician_k: float = 10.0
    ptx_dbm: float = 5.0
    n0_dbm: float = -93.0
    signal_len: int = 3000           # M samples per sensing window
    fs_hz: float = 300e6
    fc_hz: float = 10e9
    # geometry
    x_max_m: float = 5000.0
    y_max_m: float = 5000.0
    z_max_m: float = 120.0
    radar_alt_m: float = 40.0
    d_min_m: float = 100.0
    vmax_mps: float = 44.0
    # path loss + shadowing
    alpha: float = 3.04
    theta0_deg: float = -3.61
    beta: float = -23.29
    zeta_deg: float = 4.14
    nu0_db: float = 20.70
    eta: float = -0.41
    sigma0_db: float = 5.86
    # dataset knobs
    p_h1: float = 0.5
    test_fraction: float = 0.25
    n0_spread_db: float = 0.0        # per-device noise floor jitter half-range
    # training knobs
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 20
    early_stop_patience: int = 3
    early_stop_min_delta: float = 1e-4
    bn_momentum: float = 0.99
    # orchestration knobs
    aggregator: str = "fedsnr"
    seed: int = 0
    repeats: int = 1
    warm_start: bool = True          # False: fresh model init every round (debug)
    matern_retry_budget: int = 1000
    workers: int = 0                 # parallel client trainers; 0 = auto

    # ------------------------------------------------------------------
    def validate(self) -> "SimulationConfig":
        checks = [
            (self.settings >= 1, "settings must be >= 1"),
            (self.data_per_uav >= 0, "data_per_uav must be >= 0"),
            (self.num_uavs >= 1, "num_uavs must be >= 1"),
            (self.rician_k >= 0, "rician_k must be >= 0"),
            (self.signal_len >= 4, "signal_len must be >= 4"),
            (self.fs_hz > 0, "fs_hz must be > 0"),
            (self.fc_hz > 0, "fc_hz must be > 0"),
            (self.x_max_m > 0, "x_max_m must be > 0"),
            (self.y_max_m > 0, "y_max_m must be > 0"),
            (self.z_max_m > 0, "z_max_m must be > 0"),
            (self.radar_alt_m >= 0, "radar_alt_m must be >= 0"),
            (self.d_min_m > 0, "d_min_m must be > 0"),
            (self.vmax_mps >= 0, "vmax_mps must be >= 0"),
            (self.alpha > 0, "alpha must be > 0"),
            (self.zeta_deg != 0, "zeta_deg must be nonzero"),
            (0.0 <= self.p_h1 <= 1.0, "p_h1 must lie in [0, 1]"),
            (0.0 < self.test_fraction <= 1.0, "test_fraction must lie in (0, 1]"),
            (self.n0_spread_db >= 0, "n0_spread_db must be >= 0"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.max_epochs >= 0, "max_epochs must be >= 0"),
            (self.early_stop_patience >= 1, "early_stop_patience must be >= 1"),
            (self.early_stop_min_delta >= 0, "early_stop_min_delta must be >= 0"),
            (0.0 <= self.bn_momentum < 1.0, "bn_momentum must lie in [0, 1)"),
            (self.aggregator in ("fedavg", "fedsnr"), "aggregator must be fedavg or fedsnr"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.repeats >= 1, "repeats must be >= 1"),
            (self.matern_retry_budget >= 1, "matern_retry_budget must be >= 1"),
            (self.workers >= 0, "workers must be >= 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValidationError(message)
        # the geometry module enforces the same bound at sampling time
        if self.num_uavs > 1:
            import math

            sphere = 4.0 / 3.0 * math.pi * (self.d_min_m / 2.0) ** 3
            box = self.x_max_m * self.y_max_m * self.z_max_m
            if self.num_uavs * sphere >= box:
                raise ValidationError(
                    "num_uavs spheres of diameter d_min_m do not pack into the bounds"
                )
        return self

    # ------------------------------------------------------------------
    def radio(self) -> RadioConfig:
        return RadioConfig(
            ptx_dbm=self.ptx_dbm,
            n0_dbm=self.n0_dbm,
            fc_hz=self.fc_hz,
            fs_hz=self.fs_hz,
            m_samples=self.signal_len,
            k_rician=self.rician_k,
            vmax_mps=self.vmax_mps,
        )

    def path_loss_params(self) -> PathLossParams:
        return PathLossParams(
            alpha=self.alpha,
            beta=self.beta,
            theta0_deg=self.theta0_deg,
            zeta_deg=self.zeta_deg,
            nu0_db=self.nu0_db,
            eta=self.eta,
            sigma0_db=self.sigma0_db,
        )

    def hyperparams(self) -> Hyperparams:
        from .channel import dbm_to_watts

        return Hyperparams(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.early_stop_patience,
            min_delta=self.early_stop_min_delta,
            bn_momentum=self.bn_momentum,
            input_scale=1.0 / np.sqrt(dbm_to_watts(self.n0_dbm)),
            input_norm="rms",
        )

    def bounds(self) -> tuple[float, float, float]:
        return (self.x_max_m, self.y_max_m, self.z_max_m)

    def test_count(self) -> int:
        return max(1, round(self.data_per_uav * self.test_fraction))


def desk_scale(cfg: SimulationConfig | None = None, **overrides) -> SimulationConfig:
    """Shrink to desk scale: 40 settings, 8 UAVs, B=128, M=512 at 51.2 MHz."""
    cfg = cfg or SimulationConfig()
    desk = replace(
        cfg, settings=40, num_uavs=8, data_per_uav=128,
        signal_len=512, fs_hz=51.2e6,
    )
    return replace(desk, **overrides).validate()


_FIELD_TYPES = {f.name: f.type for f in fields(SimulationConfig)}


def _parse_value(key: str, raw: str, lineno: int):
    typ = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ParseError(f"line {lineno}: bad value {raw!r} for key {key!r}") from None


def parse_config(source: str | os.PathLike) -> SimulationConfig:
    """Build a validated config from a file path or a literal document."""
    text = source
    if isinstance(source, os.PathLike) or (
        isinstance(source, str) and "=" not in source and "\n" not in source and source.strip()
    ):
        try:
            with open(source) as f:
                text = f.read()
        except OSError as exc:
            raise ParseError(f"cannot read config {source!r}: {exc}") from None
    values = {}
    for lineno, line in enumerate(str(text).splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, lineno)
    return SimulationConfig(**values).validate()


def format_config(cfg: SimulationConfig) -> str:
    """Serialize so that parse_config(format_config(cfg)) == cfg."""
    lines = [f"{f.name} = {getattr(cfg, f.name)!r}" for f in fields(SimulationConfig)]
    return "\n".join(lines).replace("'", "") + "\n"
