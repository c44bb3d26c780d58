"""Preamble schedules, their difference co-waveforms and overhead accounting.

Positions are integer slot indices in units of the Doppler Nyquist interval
``slot_interval`` and are always re-anchored so the first preamble sits at 0.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleBudget, OverheadExceedsCpi, ScheduleTooLong

__all__ = [
    "Family",
    "PreambleSchedule",
    "CoWaveform",
    "FrameTiming",
    "VpRuleParams",
    "build_uniform",
    "build_nested",
    "build_wichmann",
    "build_schedule",
    "from_positions",
    "wichmann_spacings",
    "difference_cowaveform",
    "vp_count_closed_form",
    "vp_count_optimal_params",
    "param_candidates",
    "vp_rule_params",
    "preamble_overhead",
]


class Family(str, enum.Enum):
    UNIFORM = "uniform"
    NESTED = "nested"
    WICHMANN = "wichmann"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PreambleSchedule:
    """Preamble slot positions within one CPI.

    ``cpi`` is the CPI duration used for the fit check; ``None`` disables the
    check (sparse apertures may then extend past the overhead CPI).
    """

    positions: tuple[int, ...]
    family: Family
    params: tuple[int, ...]
    slot_interval: float
    cpi: Optional[float] = None

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "params", tuple(int(p) for p in self.params))
        object.__setattr__(self, "family", Family(self.family))
        if len(pos) < 2:
            raise ValueError("a schedule needs at least two preambles")
        if pos[0] != 0:
            raise ValueError("schedule positions must start at 0")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("schedule positions must be strictly increasing")
        if self.slot_interval <= 0:
            raise ValueError("slot_interval must be positive")
        if self.cpi is not None and pos[-1] * self.slot_interval > self.cpi * (1 + 1e-12):
            raise ScheduleTooLong(
                f"aperture {pos[-1]} slots x {self.slot_interval:.6g} s exceeds CPI {self.cpi:.6g} s"
            )

    @property
    def size(self) -> int:
        return len(self.positions)

    @property
    def aperture(self) -> int:
        return self.positions[-1]

    @property
    def times(self) -> np.ndarray:
        """Preamble start times in seconds."""
        return np.asarray(self.positions, dtype=float) * self.slot_interval

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.int64)

    def describe(self) -> str:
        args = ",".join(str(p) for p in self.params)
        return f"{self.family.value}({args})"


@dataclass(frozen=True)
class CoWaveform:
    """Non-negative half of the difference set of a schedule."""

    lags: tuple[int, ...]
    multiplicity: tuple[int, ...]
    contiguous_extent: int
    hole_free: bool

    @property
    def vp_count_one_sided(self) -> int:
        return len(self.lags) - 1

    def count(self, lag: int) -> int:
        lag = abs(int(lag))
        try:
            return self.multiplicity[self.lags.index(lag)]
        except ValueError:
            return 0


@dataclass(frozen=True)
class FrameTiming:
    """Per-frame preamble and inter-frame-space durations.

    Defaults follow the 802.11ad single-carrier preamble (STF + CEF, 3328
    chips at 1.76 GHz) and a 3 us IFS.
    """

    preamble_symbols: int = 3328
    symbol_period: float = 1.0 / 1.76e9
    ifs: float = 3e-6

    def __post_init__(self):
        if self.preamble_symbols < 0:
            raise ValueError("preamble_symbols must be >= 0")
        if self.symbol_period <= 0:
            raise ValueError("symbol_period must be positive")
        if self.ifs < 0:
            raise ValueError("ifs must be >= 0")

    @property
    def per_frame(self) -> float:
        return self.preamble_symbols * self.symbol_period + self.ifs


def _make(positions, family, params, slot_interval, cpi) -> PreambleSchedule:
    arr = np.asarray(sorted(positions), dtype=np.int64)
    arr = arr - arr[0]
    return PreambleSchedule(tuple(arr.tolist()), family, tuple(params), slot_interval, cpi)


def build_uniform(n: int, slot_interval: float, cpi: Optional[float] = None) -> PreambleSchedule:
    if n < 2:
        raise ValueError("uniform schedule needs n >= 2")
    return _make(range(n), Family.UNIFORM, (n,), slot_interval, cpi)


def build_nested(m1: int, m2: int, slot_interval: float, cpi: Optional[float] = None) -> PreambleSchedule:
    """Two-level nested schedule {1..m1} U {k(m1+1), k=1..m2}."""
    if m1 < 1 or m2 < 1:
        raise ValueError("nested schedule needs m1 >= 1 and m2 >= 1")
    inner = list(range(1, m1 + 1))
    outer = [k * (m1 + 1) for k in range(1, m2 + 1)]
    return _make(inner + outer, Family.NESTED, (m1, m2), slot_interval, cpi)


def wichmann_spacings(p: int, q: int) -> list[int]:
    """Inter-preamble spacing template {1^p, p+1, (2p+1)^q, (4p+3)^q, (2p+2)^(p+1), 1^p}."""
    if p < 0 or q < 0:
        raise ValueError("wichmann parameters must be non-negative")
    return (
        [1] * p
        + [p + 1]
        + [2 * p + 1] * q
        + [4 * p + 3] * q
        + [2 * p + 2] * (p + 1)
        + [1] * p
    )


def build_wichmann(p: int, q: int, slot_interval: float, cpi: Optional[float] = None) -> PreambleSchedule:
    positions = np.concatenate([[0], np.cumsum(wichmann_spacings(p, q))])
    return _make(positions.tolist(), Family.WICHMANN, (p, q), slot_interval, cpi)


def from_positions(positions: Sequence[int], slot_interval: float, cpi: Optional[float] = None) -> PreambleSchedule:
    pos = sorted(set(int(p) for p in positions))
    if len(pos) != len(positions):
        raise ValueError("positions must be distinct")
    return _make(pos, Family.CUSTOM, (), slot_interval, cpi)


def build_schedule(family, params: Sequence[int], slot_interval: float,
                   cpi: Optional[float] = None) -> PreambleSchedule:
    family = Family(family)
    if family is Family.UNIFORM:
        (n,) = params
        return build_uniform(n, slot_interval, cpi)
    if family is Family.NESTED:
        m1, m2 = params
        return build_nested(m1, m2, slot_interval, cpi)
    if family is Family.WICHMANN:
        p, q = params
        return build_wichmann(p, q, slot_interval, cpi)
    raise ValueError("custom schedules are built with from_positions")


def difference_cowaveform(schedule: PreambleSchedule) -> CoWaveform:
    """Enumerate all ordered pairwise differences of the schedule positions."""
    pos = schedule.as_array()
    diffs = (pos[:, None] - pos[None, :]).ravel()
    counts = Counter(int(d) for d in diffs if d >= 0)
    lags = tuple(sorted(counts))
    extent = 0
    while extent + 1 in counts:
        extent += 1
    return CoWaveform(
        lags=lags,
        multiplicity=tuple(counts[lag] for lag in lags),
        contiguous_extent=extent,
        hole_free=extent == lags[-1],
    )


def vp_count_closed_form(family, params: Sequence[int]) -> int:
    """Closed-form one-sided VP count. Advisory only: enumeration is authoritative."""
    family = Family(family)
    if family is Family.UNIFORM:
        (n,) = params
        return n - 1
    if family is Family.NESTED:
        m1, m2 = params
        return m2 * (m1 + 1) - 1
    if family is Family.WICHMANN:
        p, q = params
        return 4 * p * (p + q + 2) + 3 * (q + 1)
    raise ValueError(f"no closed form for family {family.value}")


@dataclass(frozen=True)
class VpRuleParams:
    family: Family
    budget: int
    params: tuple[int, ...]
    element_count: int
    mismatch: bool


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def vp_count_optimal_params(family, budget: int) -> VpRuleParams:
    """Configuration parameters from the VP-count rules for a preamble budget.

    Nested: M1 = M2 = M/2 for even M, M1 = M2 + 1 for odd M.
    Wichmann: p = round((M-4)/6), q = M - 4p - 3, both clamped at 0. The
    template element count is 3p + 2q + 3, which need not equal M; the
    enumerated count and a mismatch flag are returned instead of guessing.
    """
    family = Family(family)
    if budget < 2:
        raise InfeasibleBudget(f"budget {budget} < 2")
    if family is Family.UNIFORM:
        params = (budget,)
    elif family is Family.NESTED:
        if budget % 2 == 0:
            params = (budget // 2, budget // 2)
        else:
            params = ((budget + 1) // 2, (budget - 1) // 2)
    elif family is Family.WICHMANN:
        p = max(0, _round_half_up((budget - 4) / 6))
        q = max(0, budget - 4 * p - 3)
        params = (p, q)
    else:
        raise ValueError(f"no VP rule for family {family.value}")
    count = build_schedule(family, params, 1.0).size
    if count < 2:
        raise InfeasibleBudget(f"rule for budget {budget} yields {count} elements")
    return VpRuleParams(family, budget, params, count, count != budget)


def param_candidates(family, size: int) -> list[tuple[int, ...]]:
    """All family parameters whose schedule has exactly ``size`` elements."""
    family = Family(family)
    if size < 2:
        return []
    if family is Family.UNIFORM:
        return [(size,)]
    if family is Family.NESTED:
        return [(m1, size - m1) for m1 in range(1, size)]
    if family is Family.WICHMANN:
        out = []
        for p in range(0, (size - 3) // 3 + 1):
            rest = size - 3 - 3 * p
            if rest >= 0 and rest % 2 == 0:
                out.append((p, rest // 2))
        return out
    raise ValueError(f"no parameterisation for family {family.value}")


def vp_rule_params(family, size: int) -> Optional[tuple[int, ...]]:
    """Parameters used for a VP-count-optimised schedule of exactly ``size`` elements.

    Uses the closed-form rule when it produces ``size`` hole-free elements;
    otherwise falls back to the candidate maximising the enumerated contiguous
    co-waveform extent (ties to smaller first parameter). Returns ``None`` when
    the family has no ``size``-element member.
    """
    family = Family(family)
    if family is Family.UNIFORM:
        return (size,) if size >= 2 else None
    if family is Family.NESTED:
        return vp_count_optimal_params(family, size).params if size >= 2 else None
    rule = vp_count_optimal_params(family, size) if size >= 2 else None
    if rule is not None and not rule.mismatch:
        if difference_cowaveform(build_schedule(family, rule.params, 1.0)).hole_free:
            return rule.params
    best, best_key = None, None
    for params in param_candidates(family, size):
        co = difference_cowaveform(build_schedule(family, params, 1.0))
        key = (co.hole_free, co.contiguous_extent)
        if best_key is None or key > best_key:
            best, best_key = params, key
    return best


def preamble_overhead(n_preambles, timing: FrameTiming, cpi: Optional[float] = None) -> float:
    """Fraction ``mu`` of the CPI left for communication data.

    ``n_preambles`` may be a count or a schedule (whose ``cpi`` is then the
    default CPI).
    """
    if isinstance(n_preambles, PreambleSchedule):
        cpi = n_preambles.cpi if cpi is None else cpi
        n_preambles = n_preambles.size
    if cpi is None or cpi <= 0:
        raise ValueError("a positive CPI duration is required")
    overhead = n_preambles * timing.per_frame / cpi
    if overhead > 1.0:
        raise OverheadExceedsCpi(f"preamble overhead {overhead:.4f} exceeds the CPI")
    return 1.0 - overhead
