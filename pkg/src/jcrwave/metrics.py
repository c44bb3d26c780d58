"""Radar CRB and communication DMMSE metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AllZeroGains, CrbDoesNotExist, NotIdentifiable
from .scene import RadarScene, target_powers_and_snr
from .sparse_waveform import Family, PreambleSchedule, difference_cowaveform

__all__ = [
    "SINGULAR_RTOL",
    "DB_PER_LOG2",
    "DopplerModel",
    "CrbResult",
    "CommMetrics",
    "doppler_model",
    "model_covariance",
    "identifiability_precheck",
    "crb_velocity",
    "crb_oracle_slepian_bangs",
    "waterfill",
    "spectral_efficiency",
    "dmmse_scalar",
    "comm_metrics",
    "radar_scalar",
    "rcrb_db_to_phi",
    "crb_to_phi",
    "dmmse_db_to_phi",
]

# inner matrix is singular when min eig < SINGULAR_RTOL * max eig
SINGULAR_RTOL = 1e-10
DB_PER_LOG2 = 10.0 * math.log10(2.0)


@dataclass(frozen=True)
class DopplerModel:
    D: np.ndarray
    Ddot: np.ndarray
    u: np.ndarray


def doppler_model(schedule: PreambleSchedule, velocities, wavelength: float) -> DopplerModel:
    """Doppler matrix exp(-j 2 pi u_k q_m) and its derivative with respect to velocity."""
    v = np.atleast_1d(np.asarray(velocities, dtype=float))
    q = np.asarray(schedule.positions, dtype=float)
    T = schedule.slot_interval
    u = 2.0 * v / wavelength * T
    D = np.exp(-2j * np.pi * np.outer(q, u))
    Ddot = D * (-4j * np.pi * T * q / wavelength)[:, None]
    return DopplerModel(D, Ddot, u)


def model_covariance(dm: DopplerModel, powers, noise_power: float) -> np.ndarray:
    """R = D P D^H + sigma^2 I."""
    p = np.atleast_1d(np.asarray(powers, dtype=float))
    M = dm.D.shape[0]
    R = (dm.D * p) @ dm.D.conj().T + noise_power * np.eye(M)
    return 0.5 * (R + R.conj().T)


@dataclass(frozen=True)
class CrbResult:
    crb: Optional[np.ndarray]
    exists: bool
    min_singular: float
    cond: float = float("nan")

    @property
    def diag(self) -> np.ndarray:
        if not self.exists:
            raise CrbDoesNotExist("CRB does not exist for this configuration")
        return np.diag(self.crb)

    @property
    def n_targets(self) -> int:
        return 0 if self.crb is None else self.crb.shape[0]


def identifiability_precheck(schedule: PreambleSchedule, n_targets: int) -> None:
    """Raise NotIdentifiable for K >= M (uniform) or 2K > |C| (hole-free sparse)."""
    K = n_targets
    if K < 1:
        raise ValueError("at least one target is required")
    if schedule.family is Family.UNIFORM:
        if K >= schedule.size:
            raise NotIdentifiable(f"uniform schedule with M={schedule.size} cannot identify K={K}")
        return
    co = difference_cowaveform(schedule)
    if co.hole_free and 2 * K > co.vp_count_one_sided:
        raise NotIdentifiable(
            f"2K={2 * K} exceeds the VP count {co.vp_count_one_sided} of {schedule.describe()}"
        )


def _inv_sqrt_herm(R: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(R)
    return (V / np.sqrt(w)) @ V.conj().T


def _khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column k is kron(A[:, k], B[:, k])."""
    return np.einsum("ik,jk->ijk", A, B).reshape(A.shape[0] * B.shape[0], A.shape[1])


def _whiten_vec(S: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Apply ((R^T)^{-1/2} kron R^{-1/2}) to the columns of G, given S = R^{-1/2}.

    Column ``vec(X)`` maps to ``vec(S X S)`` with column-major vec.
    """
    M = S.shape[0]
    X = G.reshape(M, M, -1, order="F")
    Y = np.einsum("ab,bcn,cd->adn", S, X, S)
    return Y.reshape(M * M, -1, order="F")


def _normalised(schedule: PreambleSchedule, scene: RadarScene):
    # CRB is invariant to a common scaling of P and sigma^2
    _, snr = target_powers_and_snr(scene)
    dm = doppler_model(schedule, scene.velocities, scene.wavelength)
    return dm, snr


def _from_inner(inner: np.ndarray, eta: int) -> CrbResult:
    inner = 0.5 * (inner + inner.T)
    w = np.linalg.eigvalsh(inner)
    wmax = float(w[-1]) if w.size else 0.0
    wmin = float(w[0]) if w.size else 0.0
    if wmax <= 0 or wmin < SINGULAR_RTOL * wmax:
        return CrbResult(None, False, max(wmin, 0.0), math.inf)
    crb = np.linalg.inv(inner) / eta
    crb = 0.5 * (crb + crb.T)
    return CrbResult(crb, True, wmin, wmax / wmin)


def crb_velocity(schedule: PreambleSchedule, scene: RadarScene, eta: int = 1,
                 precheck: bool = True) -> CrbResult:
    """Stochastic-model velocity CRB in the co-waveform (Khatri-Rao) form.

    CRB = (1/eta) (E^H Pi_F^perp E)^{-1} with E = W Ddot_q P, F = W [D_q, vec(I)]
    and W = (R^T kron R)^{-1/2}.
    """
    if eta < 1:
        raise ValueError("eta must be >= 1")
    if precheck:
        identifiability_precheck(schedule, scene.n_targets)
    dm, p = _normalised(schedule, scene)
    M = schedule.size
    R = model_covariance(dm, p, 1.0)
    S = _inv_sqrt_herm(R)
    Dq = _khatri_rao(dm.D.conj(), dm.D)
    Dq_dot = _khatri_rao(dm.Ddot.conj(), dm.D) + _khatri_rao(dm.D.conj(), dm.Ddot)
    ivec = np.eye(M).reshape(-1, 1, order="F")
    E = _whiten_vec(S, Dq_dot * p)
    F = _whiten_vec(S, np.hstack([Dq, ivec]))
    # Pi_F^perp E via least squares onto span(F)
    coef, *_ = np.linalg.lstsq(F, E, rcond=None)
    PE = E - F @ coef
    inner = (E.conj().T @ PE).real
    res = _from_inner(inner, eta)
    if precheck and not res.exists:
        raise NotIdentifiable("Fisher information for the velocities is numerically singular")
    return res


def crb_oracle_slepian_bangs(schedule: PreambleSchedule, scene: RadarScene, eta: int = 1,
                             precheck: bool = True) -> CrbResult:
    """Velocity block of the inverse full Fisher information over (v, p, sigma^2).

    FIM_ij = eta Tr(R^-1 dR/dtheta_i R^-1 dR/dtheta_j) with analytic derivatives.
    """
    if eta < 1:
        raise ValueError("eta must be >= 1")
    if precheck:
        identifiability_precheck(schedule, scene.n_targets)
    dm, p = _normalised(schedule, scene)
    K, M = len(p), schedule.size
    R = model_covariance(dm, p, 1.0)
    Ri = np.linalg.inv(R)
    derivs = []
    for k in range(K):
        d, dd = dm.D[:, k], dm.Ddot[:, k]
        derivs.append(p[k] * (np.outer(dd, d.conj()) + np.outer(d, dd.conj())))
    for k in range(K):
        d = dm.D[:, k]
        derivs.append(np.outer(d, d.conj()))
    derivs.append(np.eye(M, dtype=complex))
    A = [Ri @ dR for dR in derivs]
    n = len(A)
    fim = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            fim[i, j] = fim[j, i] = eta * np.trace(A[i] @ A[j]).real
    scale = 1.0 / np.sqrt(np.diag(fim))
    fim_n = fim * np.outer(scale, scale)
    w = np.linalg.eigvalsh(fim_n)
    if w[0] < SINGULAR_RTOL * w[-1]:
        if precheck:
            raise NotIdentifiable("Fisher information matrix is singular")
        return CrbResult(None, False, max(float(w[0]), 0.0), math.inf)
    cov = np.linalg.inv(fim_n) * np.outer(scale, scale)
    crb = cov[:K, :K]
    crb = 0.5 * (crb + crb.T)
    return CrbResult(crb, True, float(w[0]), float(w[-1] / w[0]))


def waterfill(gains, n: Optional[int] = None, tol: float = 1e-12) -> np.ndarray:
    """Power coefficients xi maximising sum log2(1 + g xi) s.t. mean(xi) = 1, xi >= 0."""
    g = np.asarray(gains, dtype=float)
    n = g.size if n is None else n
    if g.size != n:
        raise ValueError("gain count does not match n")
    if np.any(g < 0):
        raise ValueError("gains must be non-negative")
    pos = g > 0
    if not pos.any():
        raise AllZeroGains("at least one subchannel gain must be positive")
    inv = np.full(n, np.inf)
    inv[pos] = 1.0 / g[pos]

    def used(level):
        return np.maximum(level - inv, 0.0).sum() / n

    lo, hi = 0.0, float(inv[pos].min()) + n
    while used(hi) < 1.0:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if used(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    # exact level for the active set found by bisection
    active = inv < hi
    level = (n + inv[active].sum()) / active.sum()
    xi = np.where(active, level - inv, 0.0)
    return np.maximum(xi, 0.0)


def spectral_efficiency(snr: float, eigenvalues, xi) -> tuple[float, np.ndarray]:
    """Return r = mean log2(1 + snr lambda xi) and the per-subchannel rates."""
    lam = np.asarray(eigenvalues, dtype=float)
    r_i = np.log2(1.0 + snr * lam * np.asarray(xi, dtype=float))
    return float(r_i.mean()), r_i


@dataclass(frozen=True)
class CommMetrics:
    r: float
    r_eff: float
    mu: float
    xi: np.ndarray
    r_i: np.ndarray
    phi_c: float
    dmmse_db: float

    @property
    def dmmse_diag(self) -> np.ndarray:
        return 2.0 ** (-self.mu * self.r_i)


def dmmse_scalar(mu: float, r: float, r_i, xi=None) -> CommMetrics:
    """DMMSE = MMSE^mu with MMSE = diag(2^-r_i); scalar phi_c = -mu r (log2 units)."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    r_i = np.asarray(r_i, dtype=float)
    xi = np.ones_like(r_i) if xi is None else np.asarray(xi)
    phi_c = -mu * r
    return CommMetrics(r, mu * r, mu, xi, r_i, phi_c, DB_PER_LOG2 * phi_c)


def comm_metrics(snr: float, eigenvalues, mu: float) -> CommMetrics:
    lam = np.asarray(eigenvalues, dtype=float)
    if snr <= 0:
        xi = np.ones_like(lam)
    else:
        xi = waterfill(snr * lam)
    r, r_i = spectral_efficiency(snr, lam, xi)
    return dmmse_scalar(mu, r, r_i, xi)


def radar_scalar(crb: CrbResult) -> tuple[float, float]:
    """Scalar radar cost of a CRB matrix.

    Returns
    -------
    phi_r : float
        Mean natural log of the CRB diagonal, ``(1/K) sum ln CRB_kk``.
    rcrb_db : float
        Geometric-mean RCRB in dB re 1 m/s, ``20 log10`` of the root error,
        i.e. ``(10/K) sum log10 CRB_kk``. A CRB of 1.5e-4 (m/s)^2 maps to
        about -38.2 dB.
    """
    if not crb.exists:
        raise CrbDoesNotExist("CRB does not exist")
    d = np.diag(crb.crb)
    if np.any(d <= 0):
        raise CrbDoesNotExist("non-positive CRB diagonal")
    phi_r = float(np.mean(np.log(d)))
    rcrb_db = float(10.0 / d.size * np.sum(np.log10(d)))
    return phi_r, rcrb_db


def crb_to_phi(crb_mps2: float) -> float:
    """Radar constraint from a CRB in (m/s)^2."""
    return math.log(crb_mps2) if crb_mps2 > 0 else -math.inf


def rcrb_db_to_phi(rcrb_db: float) -> float:
    """Radar constraint from an rcrb_db value (inverse of the dB map in :func:`radar_scalar`)."""
    return rcrb_db * math.log(10.0) / 10.0


def dmmse_db_to_phi(dmmse_db: float) -> float:
    """Communication constraint in bits from a DMMSE in dB."""
    return dmmse_db / DB_PER_LOG2
