"""Air-to-ground link: path loss, Rician fading, Doppler, AWGN, SNR.

Path loss follows the angle-dependent model
``10*alpha*log10(d) + beta*(theta - theta0)*exp(-(theta - theta0)/zeta) + nu0``
plus Gaussian shadowing whose standard deviation is the linear fit
``eta*theta + sigma0``.  Angles are in degrees throughout; with the default
parameter table the published loss magnitudes only come out in degrees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDistance, LengthMismatch, NegativeStd

SPEED_OF_LIGHT = 299_792_458.0  # m/s


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * np.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PathLossParams:
    alpha: float         # terrestrial path loss exponent
    beta: float          # excess path loss scaler, dB
    theta0_deg: float    # angle offset, degrees
    zeta_deg: float      # angle scaler, degrees
    nu0_db: float        # excess path loss offset, dB
    eta: float           # shadowing slope, dB/degree
    sigma0_db: float     # shadowing offset, dB

    def __post_init__(self):
        if self.zeta_deg == 0:
            raise ValueError("zeta must be nonzero")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class RadioConfig:
    ptx_dbm: float
    n0_dbm: float
    fc_hz: float
    fs_hz: float
    m_samples: int
    k_rician: float
    vmax_mps: float

    def __post_init__(self):
        if self.fs_hz <= 0:
            raise ValueError("fs_hz must be positive")
        if self.m_samples < 1:
            raise ValueError("m_samples must be >= 1")
        if self.k_rician < 0:
            raise ValueError("k_rician must be >= 0")
        if self.vmax_mps < 0:
            raise ValueError("vmax_mps must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    """One UAV's link state, frozen for a whole setting."""

    path_loss_db: float
    fading_gain: complex
    doppler_hz: float
    velocity_mps: float
    snr_linear: float     # path-loss based ratio, before small-scale fading
    rx_power_w: float
    n0_dbm: float         # this device's noise floor

    @property
    def realized_snr_linear(self) -> float:
        """SNR of the realized link, including the fading power."""
        return self.snr_linear * abs(self.fading_gain) ** 2


def path_loss_db(
    d: float,
    theta_deg: float,
    p: PathLossParams,
    rng: np.random.Generator | None = None,
    clamp_shadowing: bool = False,
) -> float:
    """Evaluate the path loss in dB at distance ``d`` and elevation ``theta``.

    With ``rng=None`` only the deterministic part is returned.  Otherwise a
    shadowing term N(0, eta*theta + sigma0) is added; a negative standard
    deviation raises NegativeStd unless ``clamp_shadowing`` floors it at 0.
    """
    if d <= 0:
        raise InvalidDistance(f"need d > 0, got {d}")
    excess = p.beta * (theta_deg - p.theta0_deg) * np.exp(
        -(theta_deg - p.theta0_deg) / p.zeta_deg
    )
    det = 10.0 * p.alpha * np.log10(d) + excess + p.nu0_db
    if rng is None:
        return float(det)
    std = p.eta * theta_deg + p.sigma0_db
    if std < 0:
        if not clamp_shadowing:
            raise NegativeStd(
                f"shadowing std {std:.3f} dB < 0 at theta={theta_deg:.2f} deg"
            )
        std = 0.0
    return float(det + rng.normal(0.0, std))


def rician_fading(
    k: float, rng: np.random.Generator, size: int | None = None
) -> complex | np.ndarray:
    """Unit-mean-power Rician gain(s): LoS phasor plus scattered CN(0,1)."""
    if k < 0:
        raise ValueError(f"need k >= 0, got {k}")
    phi = rng.uniform(0.0, 2.0 * np.pi, size=size)
    los = np.sqrt(k / (k + 1.0)) * np.exp(1j * phi)
    scatter = np.sqrt(1.0 / (k + 1.0)) * (
        rng.standard_normal(size) + 1j * rng.standard_normal(size)
    ) / np.sqrt(2.0)
    h = los + scatter
    return complex(h) if size is None else h


def doppler_hz(v_mps: float, fc_hz: float) -> float:
    """Doppler shift (v/c) * fc for closing velocity ``v``."""
    return v_mps / SPEED_OF_LIGHT * fc_hz


def snr(ptx_dbm: float, pl_db: float, n0_dbm: float) -> tuple[float, float]:
    """Received power (W) and linear SNR from powers in dBm and loss in dB."""
    rx_dbm = ptx_dbm - pl_db
    rx_power_w = dbm_to_watts(rx_dbm)
    snr_linear = db_to_linear(rx_dbm - n0_dbm)
    return rx_power_w, snr_linear


def realize_channel(
    d: float,
    theta_deg: float,
    p: PathLossParams,
    radio: RadioConfig,
    rng: np.random.Generator,
    n0_offset_db: float = 0.0,
    clamp_shadowing: bool = True,
) -> ChannelRealization:
    """Draw one setting's link state for a UAV at range ``d``, angle ``theta``.

    Shadowing, fading, and velocity are drawn once; they stay fixed for the
    whole sensing epoch.  ``n0_offset_db`` models device-to-device noise
    figure variation.
    """
    pl = path_loss_db(d, theta_deg, p, rng, clamp_shadowing=clamp_shadowing)
    h = rician_fading(radio.k_rician, rng)
    v = float(rng.uniform(0.0, radio.vmax_mps)) if radio.vmax_mps > 0 else 0.0
    fd = doppler_hz(v, radio.fc_hz)
    n0_i = radio.n0_dbm + n0_offset_db
    rx_w, snr_lin = snr(radio.ptx_dbm, pl, n0_i)
    return ChannelRealization(
        path_loss_db=pl,
        fading_gain=h,
        doppler_hz=fd,
        velocity_mps=v,
        snr_linear=snr_lin,
        rx_power_w=rx_w,
        n0_dbm=n0_i,
    )


def apply_channel(
    s: np.ndarray,
    ch: ChannelRealization,
    radio: RadioConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run a unit-power (or all-zero) baseband window through the link.

    y[n] = sqrt(P_rx) * h * s[n] * exp(j 2 pi f_d n / f_s) + CN(0, N0).
    """
    if len(s) != radio.m_samples:
        raise LengthMismatch(f"signal length {len(s)} != M={radio.m_samples}")
    m = radio.m_samples
    n = np.arange(m)
    rotation = np.exp(2j * np.pi * ch.doppler_hz * n / radio.fs_hz)
    n0_w = dbm_to_watts(ch.n0_dbm)
    noise = np.sqrt(n0_w / 2.0) * (
        rng.standard_normal(m) + 1j * rng.standard_normal(m)
    )
    return np.sqrt(ch.rx_power_w) * ch.fading_gain * s * rotation + noise
