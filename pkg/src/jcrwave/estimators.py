"""MUSIC-family velocity estimators and the Monte Carlo RMSE harness."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import linear_sum_assignment

from .errors import CoArrayTooSmall, DegenerateSpectrum, JcrError, NotIdentifiable, TooManyTargets
from .metrics import crb_velocity
from .scene import RadarScene, max_unambiguous_velocity, sample_covariance, synth_snapshots
from .sparse_waveform import CoWaveform, PreambleSchedule, difference_cowaveform

__all__ = [
    "DEFAULT_GRID_SIZE",
    "Method",
    "VelocityGrid",
    "VelocityEstimate",
    "RmseReport",
    "direct_music",
    "da_music",
    "lag_average",
    "augmented_covariance",
    "estimate",
    "match_estimates",
    "rmse_study",
]

DEFAULT_GRID_SIZE = 2**14


class Method(str, enum.Enum):
    DIRECT = "direct"
    DA = "da"


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform grid over one period [-v_max, v_max) of the Doppler response."""

    v_max: float
    size: int = DEFAULT_GRID_SIZE

    @classmethod
    def for_schedule(cls, schedule: PreambleSchedule, wavelength: float,
                     size: int = DEFAULT_GRID_SIZE) -> "VelocityGrid":
        return cls(max_unambiguous_velocity(wavelength, schedule.slot_interval), size)

    @property
    def step(self) -> float:
        return 2.0 * self.v_max / self.size

    @property
    def velocities(self) -> np.ndarray:
        return -self.v_max + self.step * np.arange(self.size)

    def wrap(self, v):
        return (np.asarray(v) + self.v_max) % (2.0 * self.v_max) - self.v_max


@dataclass
class VelocityEstimate:
    velocities: np.ndarray
    method: Method
    spectrum: Optional[np.ndarray] = None


def _steering(q: np.ndarray, v: np.ndarray, wavelength: float, slot_interval: float) -> np.ndarray:
    u = 2.0 * v / wavelength * slot_interval
    return np.exp(-2j * np.pi * np.outer(q, u))


def _music(R: np.ndarray, q: np.ndarray, K: int, grid: VelocityGrid, wavelength: float,
           slot_interval: float, method: Method, keep_spectrum: bool) -> VelocityEstimate:
    M = R.shape[0]
    _, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    En = V[:, : M - K]
    v = grid.velocities
    A = _steering(q, v, wavelength, slot_interval)
    denom = np.sum(np.abs(En.conj().T @ A) ** 2, axis=0)
    spec_db = -10.0 * np.log10(np.maximum(denom, 1e-300))
    # circular local maxima
    left, right = np.roll(spec_db, 1), np.roll(spec_db, -1)
    peaks = np.flatnonzero((spec_db > left) & (spec_db >= right))
    if peaks.size < K:
        raise DegenerateSpectrum(f"found {peaks.size} peaks, need {K}")
    top = peaks[np.argsort(spec_db[peaks])[::-1][:K]]
    # three-point parabolic refinement on the dB spectrum
    y0, y1, y2 = left[top], spec_db[top], right[top]
    curv = y0 - 2.0 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(curv < 0, 0.5 * (y0 - y2) / curv, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    est = grid.wrap(v[top] + delta * grid.step)
    return VelocityEstimate(np.sort(est), method, spec_db if keep_spectrum else None)


def direct_music(R: np.ndarray, schedule: PreambleSchedule, n_targets: int, wavelength: float,
                 grid: Optional[VelocityGrid] = None, keep_spectrum: bool = False) -> VelocityEstimate:
    """MUSIC on the physical (possibly sparse) schedule covariance."""
    M = schedule.size
    if n_targets >= M:
        raise TooManyTargets(f"direct MUSIC needs K < M (K={n_targets}, M={M})")
    grid = grid or VelocityGrid.for_schedule(schedule, wavelength)
    q = np.asarray(schedule.positions, dtype=float)
    return _music(R, q, n_targets, grid, wavelength, schedule.slot_interval, Method.DIRECT, keep_spectrum)


def lag_average(R: np.ndarray, schedule: PreambleSchedule, max_lag: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean of all R[a, b] with q_a - q_b = l for l = 0..max_lag, and the entry counts."""
    q = schedule.as_array()
    diff = q[:, None] - q[None, :]
    r = np.zeros(max_lag + 1, dtype=complex)
    counts = np.zeros(max_lag + 1, dtype=int)
    for lag in range(max_lag + 1):
        mask = diff == lag
        counts[lag] = mask.sum()
        if counts[lag] == 0:
            raise CoArrayTooSmall(f"lag {lag} missing from the co-waveform")
        r[lag] = R[mask].mean()
    return r, counts


def augmented_covariance(R: np.ndarray, schedule: PreambleSchedule, extent: int) -> np.ndarray:
    """Hermitian Toeplitz matrix with first column (r[0], ..., r[extent])."""
    r, _ = lag_average(R, schedule, extent)
    r[0] = r[0].real
    return toeplitz(r)


def da_music(R: np.ndarray, schedule: PreambleSchedule, n_targets: int, wavelength: float,
             co: Optional[CoWaveform] = None, grid: Optional[VelocityGrid] = None,
             keep_spectrum: bool = False) -> VelocityEstimate:
    """MUSIC on the direct-augmented co-waveform covariance."""
    co = co or difference_cowaveform(schedule)
    L = co.contiguous_extent
    if n_targets > L:
        raise CoArrayTooSmall(f"K={n_targets} exceeds the contiguous co-waveform extent {L}")
    Ra = augmented_covariance(R, schedule, L)
    grid = grid or VelocityGrid.for_schedule(schedule, wavelength)
    q = np.arange(L + 1, dtype=float)
    return _music(Ra, q, n_targets, grid, wavelength, schedule.slot_interval, Method.DA, keep_spectrum)


def estimate(method, R, schedule, n_targets, wavelength, grid=None, co=None) -> VelocityEstimate:
    method = Method(method)
    if method is Method.DIRECT:
        return direct_music(R, schedule, n_targets, wavelength, grid)
    return da_music(R, schedule, n_targets, wavelength, co, grid)


def match_estimates(estimates, truth, grid: VelocityGrid) -> np.ndarray:
    """Signed errors of estimates matched to truth by minimum total absolute (wrapped) error."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    err = grid.wrap(est[None, :] - tru[:, None])
    rows, cols = linear_sum_assignment(np.abs(err))
    out = np.empty(tru.size)
    out[rows] = err[rows, cols]
    return out


@dataclass(frozen=True)
class RmseReport:
    method: Method
    eta: int
    trials: int
    failures: int
    rmse_per_target: np.ndarray
    rmse: float
    rcrb_per_target: Optional[np.ndarray]
    rcrb: Optional[float]
    errors: np.ndarray  # (successful trials, K)

    @property
    def successes(self) -> int:
        return self.trials - self.failures

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials


def _trial(args):
    schedule, scene, method, eta, seed, stream, grid, co = args
    ss = synth_snapshots(schedule, scene, eta, seed, stream)
    R = sample_covariance(ss)
    try:
        est = estimate(method, R, schedule, scene.n_targets, scene.wavelength, grid, co)
    except (DegenerateSpectrum, np.linalg.LinAlgError):
        return None
    return match_estimates(est.velocities, scene.velocities, grid)


def rmse_study(schedule: PreambleSchedule, scene: RadarScene, method, eta: int, trials: int,
               seed: int = 0, stream: tuple[int, ...] = (), grid_size: int = DEFAULT_GRID_SIZE,
               threads: int = 1) -> RmseReport:
    """Monte Carlo RMSE of a MUSIC estimator against the CRB.

    Trial ``t`` draws its snapshots from stream ``stream + (t,)`` so results do
    not depend on thread count or evaluation order. Precondition errors of the
    estimator propagate; per-trial spectrum failures are counted and excluded.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    method = Method(method)
    K = scene.n_targets
    co = difference_cowaveform(schedule)
    if method is Method.DIRECT and K >= schedule.size:
        raise TooManyTargets(f"direct MUSIC needs K < M (K={K}, M={schedule.size})")
    if method is Method.DA and K > co.contiguous_extent:
        raise CoArrayTooSmall(f"K={K} exceeds the contiguous co-waveform extent {co.contiguous_extent}")
    grid = VelocityGrid.for_schedule(schedule, scene.wavelength, grid_size)
    jobs = [(schedule, scene, method, eta, seed, tuple(stream) + (t,), grid, co) for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(_trial, jobs))
    else:
        results = [_trial(j) for j in jobs]
    ok = [r for r in results if r is not None]
    failures = trials - len(ok)
    errors = np.array(ok).reshape(len(ok), K)
    if ok:
        per_target = np.sqrt(np.mean(errors**2, axis=0))
        rmse = float(np.sqrt(np.mean(errors**2)))
    else:
        per_target, rmse = np.full(K, np.nan), float("nan")
    try:
        crb = crb_velocity(schedule, scene, eta)
        rcrb_t = np.sqrt(np.diag(crb.crb))
        rcrb = float(np.sqrt(np.mean(np.diag(crb.crb))))
    except (NotIdentifiable, JcrError):
        rcrb_t, rcrb = None, None
    return RmseReport(method, eta, trials, failures, per_target, rmse, rcrb_t, rcrb, errors)
