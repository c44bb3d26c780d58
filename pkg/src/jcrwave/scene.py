"""Scenario definition, link budgets and channel-domain snapshot synthesis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import VelocityAliased
from .sparse_waveform import FrameTiming, PreambleSchedule

__all__ = [
    "SPEED_OF_LIGHT",
    "BOLTZMANN",
    "Target",
    "RadarScene",
    "CommLink",
    "SnapshotSet",
    "Scenario",
    "comm_pathloss",
    "radar_two_way_gain",
    "target_powers_and_snr",
    "thermal_noise_power",
    "max_unambiguous_velocity",
    "check_velocities",
    "snapshot_rng",
    "synth_snapshots",
    "sample_covariance",
    "comm_channel_eigenvalues",
    "equally_spaced_velocities",
]

SPEED_OF_LIGHT = 299_792_458.0
BOLTZMANN = 1.380649e-23


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class Target:
    """A point scatterer. ``power`` overrides the link-budget power when set."""

    distance: float
    velocity: float
    rcs: float = 10.0
    power: Optional[float] = None

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError("target distance must be positive")
        if self.rcs < 0:
            raise ValueError("rcs must be non-negative")

    @classmethod
    def from_dbsm(cls, distance: float, velocity: float, rcs_dbsm: float) -> "Target":
        return cls(distance, velocity, float(db2lin(rcs_dbsm)))


@dataclass(frozen=True)
class RadarScene:
    wavelength: float
    targets: tuple[Target, ...] = ()
    tx_gain: float = 1.0
    rx_gain: float = 1.0
    symbol_energy: float = 1.0
    correlation_gain: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.correlation_gain < 1:
            raise ValueError("correlation_gain must be >= 1")
        vel = [t.velocity for t in self.targets]
        if len(set(vel)) != len(vel):
            raise ValueError("target velocities must be pairwise distinct")

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([t.velocity for t in self.targets], dtype=float)

    def with_targets(self, targets: Sequence[Target]) -> "RadarScene":
        return replace(self, targets=tuple(targets))

    @classmethod
    def with_snr(cls, wavelength: float, velocities: Sequence[float], snr_db,
                 noise_power: float = 1.0, distance: float = 1.0) -> "RadarScene":
        """Scene whose targets have prescribed per-target SNRs."""
        snr = np.broadcast_to(db2lin(snr_db), (len(velocities),))
        targets = tuple(
            Target(distance, float(v), power=float(s * noise_power)) for v, s in zip(velocities, snr)
        )
        return cls(wavelength, targets, noise_power=noise_power)


@dataclass(frozen=True)
class CommLink:
    distance: float = 50.0
    pathloss_exponent: float = 2.0
    tap_powers: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        taps = tuple(float(t) for t in self.tap_powers)
        object.__setattr__(self, "tap_powers", taps)
        if self.distance <= 0:
            raise ValueError("comm distance must be positive")
        if not taps or min(taps) < 0 or abs(sum(taps) - 1.0) > 1e-12:
            raise ValueError("tap powers must be non-negative and sum to 1")

    @classmethod
    def exponential(cls, distance: float = 50.0, pathloss_exponent: float = 2.0,
                    n_taps: int = 4, decay_db: float = 3.0) -> "CommLink":
        prof = db2lin(-decay_db * np.arange(n_taps))
        prof = prof / math.fsum(prof)
        return cls(distance, pathloss_exponent, tuple(prof.tolist()))


def comm_pathloss(link: CommLink, wavelength: float, tx_gain: float = 1.0, rx_gain: float = 1.0) -> float:
    """Large-scale gain G_TX G_RX lambda^2 / ((4 pi)^2 rho^PL)."""
    return tx_gain * rx_gain * wavelength**2 / ((4 * np.pi) ** 2 * link.distance**link.pathloss_exponent)


def radar_two_way_gain(target: Target, wavelength: float, tx_gain: float = 1.0, rx_gain: float = 1.0) -> float:
    """Mean two-way radar gain G_TX G_RX lambda^2 sigma / (64 pi^3 rho^4)."""
    return tx_gain * rx_gain * wavelength**2 * target.rcs / (64 * np.pi**3 * target.distance**4)


def target_powers_and_snr(scene: RadarScene) -> tuple[np.ndarray, np.ndarray]:
    """Per-target channel power p_k = gamma^2 Es G_k and SNR p_k / sigma_n^2."""
    powers = np.empty(scene.n_targets)
    for k, t in enumerate(scene.targets):
        if t.power is not None:
            powers[k] = t.power
        else:
            g = radar_two_way_gain(t, scene.wavelength, scene.tx_gain, scene.rx_gain)
            powers[k] = scene.correlation_gain**2 * scene.symbol_energy * g
    return powers, powers / scene.noise_power


def thermal_noise_power(bandwidth: float, noise_figure_db: float = 6.0, temperature: float = 290.0) -> float:
    return BOLTZMANN * temperature * bandwidth * float(db2lin(noise_figure_db))


def max_unambiguous_velocity(wavelength: float, slot_interval: float) -> float:
    return wavelength / (4.0 * slot_interval)


def equally_spaced_velocities(n: int, vmin: float = -45.0, vmax: float = 50.0) -> np.ndarray:
    if n <= 0:
        return np.zeros(0)
    if n == 1:
        return np.array([vmin])
    return np.linspace(vmin, vmax, n)


def check_velocities(velocities, wavelength: float, slot_interval: float) -> None:
    vmax = max_unambiguous_velocity(wavelength, slot_interval)
    bad = [v for v in np.atleast_1d(velocities) if abs(v) > vmax * (1 + 1e-9)]
    if bad:
        raise VelocityAliased(f"velocities {bad} exceed the unambiguous range +/-{vmax:.6g} m/s")


@dataclass(frozen=True)
class SnapshotSet:
    schedule: PreambleSchedule
    snapshots: np.ndarray  # (eta, M)
    seed: int
    stream: tuple[int, ...] = ()

    @property
    def eta(self) -> int:
        return self.snapshots.shape[0]


def snapshot_rng(seed: int, stream: Sequence[int], index: int) -> np.random.Generator:
    """Counter-based generator for snapshot ``index`` of a stream.

    The Philox key depends only on (seed, stream); the snapshot index sets the
    high counter word, so every snapshot is an independent, order-free draw.
    """
    return _indexed_rng(_stream_key(seed, stream), index)


def _stream_key(seed: int, stream: Sequence[int]) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return ss.generate_state(2, np.uint64)


def _indexed_rng(key: np.ndarray, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(index)]))


def _cn(rng: np.random.Generator, size, var) -> np.ndarray:
    z = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return np.sqrt(np.asarray(var) / 2.0) * (z[0] + 1j * z[1])


def synth_snapshots(schedule: PreambleSchedule, scene: RadarScene, eta: int, seed: int,
                    stream: Sequence[int] = ()) -> SnapshotSet:
    """Draw ``eta`` channel vectors h = D b + w with per-snapshot Rayleigh amplitudes."""
    if eta < 1:
        raise ValueError("eta must be >= 1")
    check_velocities(scene.velocities, scene.wavelength, schedule.slot_interval)
    powers, _ = target_powers_and_snr(scene)
    q = np.asarray(schedule.positions, dtype=float)
    u = 2.0 * scene.velocities / scene.wavelength * schedule.slot_interval
    D = np.exp(-2j * np.pi * np.outer(q, u))
    K, M = scene.n_targets, schedule.size
    out = np.empty((eta, M), dtype=complex)
    key = _stream_key(seed, stream)
    for i in range(eta):
        rng = _indexed_rng(key, i)
        b = _cn(rng, K, powers)
        w = _cn(rng, M, scene.noise_power)
        out[i] = D @ b + w if K else w
    return SnapshotSet(schedule, out, int(seed), tuple(stream))


def sample_covariance(ss: SnapshotSet) -> np.ndarray:
    h = ss.snapshots
    R = h.T @ h.conj() / h.shape[0]
    return 0.5 * (R + R.conj().T)


def comm_channel_eigenvalues(link: CommLink, n: int = 512, seed: int = 0,
                             mode: str = "realization") -> np.ndarray:
    """Circulant-approximation eigenvalues |DFT_N(alpha)|^2 of the comm channel.

    ``mode="expectation"`` returns the flat profile of ones.
    """
    taps = np.asarray(link.tap_powers)
    if n < taps.size:
        raise ValueError("block size must be at least the tap count")
    if mode == "expectation":
        return np.ones(n)
    if mode != "realization":
        raise ValueError(f"unknown eigenvalue mode {mode!r}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0xC0,)))
    alpha = _cn(rng, taps.size, taps)
    return np.abs(np.fft.fft(alpha, n)) ** 2


@dataclass(frozen=True)
class Scenario:
    """Everything needed to evaluate one design point.

    ``comm_snr`` overrides the link-budget SNR Es G_c / sigma_n^2 when set.
    """

    scene: RadarScene
    link: CommLink = field(default_factory=CommLink)
    timing: FrameTiming = field(default_factory=FrameTiming)
    slot_interval: float = 25e-6
    cpi: float = 1e-3
    enforce_cpi_fit: bool = False
    eta: int = 1
    comm_block: int = 512
    comm_mode: str = "realization"
    comm_seed: int = 0
    comm_snr: Optional[float] = None

    @property
    def schedule_cpi(self) -> Optional[float]:
        return self.cpi if self.enforce_cpi_fit else None

    def comm_snr_linear(self) -> float:
        if self.comm_snr is not None:
            return self.comm_snr
        s = self.scene
        g = comm_pathloss(self.link, s.wavelength, s.tx_gain, s.rx_gain)
        return s.symbol_energy * g / s.noise_power

    def comm_eigenvalues(self) -> np.ndarray:
        return comm_channel_eigenvalues(self.link, self.comm_block, self.comm_seed, self.comm_mode)

    def with_scene(self, scene: RadarScene) -> "Scenario":
        return replace(self, scene=scene)
