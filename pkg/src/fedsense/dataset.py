"""Per-UAV labeled example generation and the binary cache format.

Each example is one sensing window: with probability ``p_h1`` a random
radar waveform passes through the UAV's frozen channel realization
(label 1), otherwise the window is pure receiver noise (label 0).  The
input matrix stacks the real row over the imaginary row.

Channel granularity: shadowing, fading, and velocity are drawn once per
UAV per setting (one coherence epoch); noise and the waveform are redrawn
per example.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, RadioConfig, apply_channel, realize_channel
from .config import SimulationConfig
from .errors import EmptyDataset
from .geometry import SceneGeometry
from .waveform import random_spec, synthesize


@dataclass
class Example:
    x: np.ndarray  # (2, M) float32, rows Re then Im
    label: int


@dataclass
class ClientDataset:
    uav_index: int
    train: list[Example]
    test: list[Example]
    snr_linear: float     # realized link SNR used as the aggregation weight
    sample_count: int


def make_example(
    ch: ChannelRealization,
    radio: RadioConfig,
    rng: np.random.Generator,
    p_h1: float = 0.5,
) -> Example:
    """Draw the hypothesis, synthesize the window, run it through the link."""
    if rng.random() < p_h1:
        spec = random_spec(rng, radio.m_samples, radio.fs_hz)
        s = synthesize(spec, radio.m_samples, radio.fs_hz)
        label = 1
    else:
        s = np.zeros(radio.m_samples, dtype=complex)
        label = 0
    y = apply_channel(s, ch, radio, rng)
    x = np.stack([y.real, y.imag]).astype(np.float32)
    return Example(x=x, label=label)


def make_client_dataset(
    scene: SceneGeometry,
    uav: int,
    cfg: SimulationConfig,
    rng: np.random.Generator,
) -> ClientDataset:
    """Generate one UAV's train/test batches under a fresh link realization."""
    if not 0 <= uav < scene.num_uavs:
        raise IndexError(f"uav index {uav} out of range for {scene.num_uavs} UAVs")
    if cfg.data_per_uav < 1:
        raise EmptyDataset("data_per_uav must be >= 1 to build a client dataset")
    radio = cfg.radio()
    n0_offset = (
        float(rng.uniform(-cfg.n0_spread_db, cfg.n0_spread_db))
        if cfg.n0_spread_db > 0
        else 0.0
    )
    ch = realize_channel(
        scene.distances_m[uav],
        scene.elevations_deg[uav],
        cfg.path_loss_params(),
        radio,
        rng,
        n0_offset_db=n0_offset,
    )
    train = [make_example(ch, radio, rng, cfg.p_h1) for _ in range(cfg.data_per_uav)]
    test = [make_example(ch, radio, rng, cfg.p_h1) for _ in range(cfg.test_count())]
    return ClientDataset(
        uav_index=uav,
        train=train,
        test=test,
        snr_linear=ch.realized_snr_linear,
        sample_count=cfg.data_per_uav,
    )


# ---------------------------------------------------------------------------
# cache file: header (magic, version, M, B, N, seed), then per example
# 2*M little-endian float32 row-major followed by one label byte
# ---------------------------------------------------------------------------

CACHE_MAGIC = b"FSEX"
CACHE_VERSION = 1


def save_examples(path, examples: list[Example], n_uavs: int, seed: int) -> None:
    if not examples:
        raise EmptyDataset("refusing to cache an empty example list")
    m = examples[0].x.shape[1]
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(struct.pack("<IIIIQ", CACHE_VERSION, m, len(examples), n_uavs, seed))
        for ex in examples:
            f.write(np.ascontiguousarray(ex.x, dtype="<f4").tobytes())
            f.write(struct.pack("<B", ex.label))


def load_examples(path) -> tuple[list[Example], dict]:
    with open(path, "rb") as f:
        if f.read(4) != CACHE_MAGIC:
            raise ValueError(f"{path} is not an example cache")
        version, m, count, n_uavs, seed = struct.unpack("<IIIIQ", f.read(24))
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        examples = []
        for _ in range(count):
            data = np.frombuffer(f.read(8 * m), dtype="<f4").reshape(2, m)
            (label,) = struct.unpack("<B", f.read(1))
            examples.append(Example(x=data.copy(), label=int(label)))
    header = {"m": m, "count": count, "n_uavs": n_uavs, "seed": seed}
    return examples, header
