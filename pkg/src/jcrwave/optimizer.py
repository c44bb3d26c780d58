"""Trade-off sweeps, lower-left convex hull and the three JCR design problems.

All solvers work in the scalar metric plane ``(phi_c, phi_r)``: ``phi_c`` is
the mean log2 of the DMMSE diagonal (bits, lower is better) and ``phi_r`` the
mean natural log of the CRB diagonal (lower is better).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .errors import ConstraintInfeasible, NoFeasiblePoints, NotIdentifiable, OverheadExceedsCpi, ScheduleTooLong
from .metrics import (
    DB_PER_LOG2,
    comm_metrics,
    crb_to_phi,
    crb_velocity,
    dmmse_db_to_phi,
    radar_scalar,
    rcrb_db_to_phi,
)
from .scene import Scenario
from .sparse_waveform import (
    Family,
    PreambleSchedule,
    build_schedule,
    param_candidates,
    preamble_overhead,
    vp_rule_params,
)

__all__ = [
    "ParamRule",
    "TradeoffPoint",
    "Hull",
    "Normalization",
    "DesignSolution",
    "ComparisonRow",
    "tradeoff_curve",
    "convex_hull",
    "solve_weighted",
    "solve_crb_constrained",
    "solve_dmmse_constrained",
    "compare_vp_count_vs_crb",
    "radar_constraint_to_phi",
    "comm_constraint_to_phi",
]

HULL_TOL = 1e-9  # in min-max normalised coordinates
TIE_TOL = 1e-12


class ParamRule(str, enum.Enum):
    VP = "vp"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class TradeoffPoint:
    family: Family
    params: tuple[int, ...]
    M: int
    mu: float
    phi_c: float
    dmmse_db: float
    phi_r: Optional[float] = None
    rcrb_db: Optional[float] = None
    feasible: bool = False
    on_hull: bool = False
    collinear: bool = False
    reason: str = ""

    @property
    def label(self) -> str:
        return f"{self.family.value}({','.join(map(str, self.params))})"


def _radar_eval(schedule: PreambleSchedule, scenario: Scenario):
    """(phi_r, rcrb_db) or the reason the CRB does not exist."""
    try:
        res = crb_velocity(schedule, scenario.scene, scenario.eta)
    except NotIdentifiable as exc:
        return None, str(exc) or "not identifiable"
    phi_r, rcrb_db = radar_scalar(res)
    return (phi_r, rcrb_db), ""


def _sweep_point(family: Family, M: int, scenario: Scenario, rule: ParamRule, r: float) -> TradeoffPoint:
    try:
        mu = preamble_overhead(M, scenario.timing, scenario.cpi)
    except OverheadExceedsCpi as exc:
        return TradeoffPoint(family, (), M, math.nan, math.nan, math.nan, reason=str(exc))
    phi_c = -mu * r
    base = dict(family=family, M=M, mu=mu, phi_c=phi_c, dmmse_db=DB_PER_LOG2 * phi_c)

    if rule is ParamRule.VP:
        params = vp_rule_params(family, M)
        candidates = [] if params is None else [params]
    else:
        candidates = param_candidates(family, M)
    if not candidates:
        return TradeoffPoint(params=(), reason=f"no {family.value} schedule with {M} preambles", **base)

    best = None
    reason = ""
    for params in candidates:
        try:
            sched = build_schedule(family, params, scenario.slot_interval, scenario.schedule_cpi)
        except ScheduleTooLong as exc:
            reason = reason or str(exc)
            continue
        radar, why = _radar_eval(sched, scenario)
        if radar is None:
            reason = reason or why
            continue
        # strict comparison keeps the first (smallest first parameter) on ties
        if best is None or radar[0] < best[1][0] - TIE_TOL * abs(best[1][0]):
            best = (params, radar)
    if best is None:
        return TradeoffPoint(params=candidates[0], reason=reason, **base)
    params, (phi_r, rcrb_db) = best
    return TradeoffPoint(params=params, phi_r=phi_r, rcrb_db=rcrb_db, feasible=True, **base)


def tradeoff_curve(family, scenario: Scenario, m_range: Sequence[int], param_rule="vp",
                   threads: int = 1) -> list[TradeoffPoint]:
    """Evaluate one family over a range of preamble counts.

    Parameters
    ----------
    family : Family or str
    scenario : Scenario
    m_range : sequence of int
        Preamble counts, evaluated and returned in the given order.
    param_rule : {"vp", "exhaustive"}
        ``"vp"`` uses the VP-count rule; ``"exhaustive"`` searches every
        family parameterisation with exactly ``M`` elements for the lowest CRB.
    threads : int
        Worker threads; results do not depend on it.

    Returns
    -------
    list of TradeoffPoint
        Infeasible points are kept with ``feasible=False`` and a ``reason``.
    """
    family = Family(family)
    rule = ParamRule(param_rule)
    r = comm_metrics(scenario.comm_snr_linear(), scenario.comm_eigenvalues(), 1.0).r
    ms = [int(m) for m in m_range]

    def job(M):
        return _sweep_point(family, M, scenario, rule, r)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(job, ms))
    return [job(M) for M in ms]


@dataclass(frozen=True)
class Normalization:
    """Min-max normalisation of (phi_c, phi_r) over a feasible sweep."""

    c_min: float
    c_max: float
    r_min: float
    r_max: float

    @classmethod
    def from_points(cls, points: Sequence[TradeoffPoint]) -> "Normalization":
        feas = [p for p in points if p.feasible]
        if not feas:
            raise NoFeasiblePoints("no feasible point to normalise over")
        c = [p.phi_c for p in feas]
        r = [p.phi_r for p in feas]
        return cls(min(c), max(c), min(r), max(r))

    @staticmethod
    def _scale(x, lo, hi):
        span = hi - lo
        return (x - lo) / span if span > 0 else x - lo

    def comm(self, phi_c: float) -> float:
        return self._scale(phi_c, self.c_min, self.c_max)

    def radar(self, phi_r: float) -> float:
        return self._scale(phi_r, self.r_min, self.r_max)


@dataclass(frozen=True)
class Hull:
    """Lower-left frontier of a sweep, ordered by increasing phi_c."""

    points: list[TradeoffPoint]  # full input, with on_hull/collinear flags set
    vertices: list[TradeoffPoint]
    normalization: Normalization

    @property
    def segments(self) -> list[tuple[TradeoffPoint, TradeoffPoint]]:
        return list(zip(self.vertices, self.vertices[1:]))

    @property
    def members(self) -> list[TradeoffPoint]:
        """Vertices plus collinear points lying on hull segments."""
        return [p for p in self.points if p.on_hull]

    def frontier(self, phi_c: float) -> float:
        """Frontier phi_r at ``phi_c`` (flat beyond the last vertex)."""
        v = self.vertices
        if phi_c <= v[0].phi_c:
            return v[0].phi_r if phi_c == v[0].phi_c else math.inf
        for a, b in self.segments:
            if phi_c <= b.phi_c:
                t = (phi_c - a.phi_c) / (b.phi_c - a.phi_c)
                return a.phi_r + t * (b.phi_r - a.phi_r)
        return v[-1].phi_r

    def mixture_at(self, phi_c: float) -> tuple[TradeoffPoint, TradeoffPoint, float]:
        """Time-sharing pair (A, B, w) on the frontier with w*A + (1-w)*B at ``phi_c``."""
        v = self.vertices
        if not v[0].phi_c <= phi_c <= v[-1].phi_c:
            raise ValueError("phi_c outside the hull span")
        for a, b in self.segments:
            if phi_c <= b.phi_c:
                w = (b.phi_c - phi_c) / (b.phi_c - a.phi_c)
                return a, b, float(min(1.0, max(0.0, w)))
        return v[-1], v[-1], 1.0


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Sequence[TradeoffPoint], normalization: Optional[Normalization] = None) -> Hull:
    """Lower-left convex hull of the feasible points in the (phi_c, phi_r) plane.

    The frontier runs from the smallest-phi_c point to the smallest-phi_r point
    and is convex and non-increasing. Points on a hull segment but not at a
    vertex are flagged ``collinear``. Geometry is evaluated in min-max
    normalised coordinates with tolerance 1e-9.
    """
    points = list(points)
    norm = normalization or Normalization.from_points(points)
    feas = [i for i, p in enumerate(points) if p.feasible]
    if not feas:
        raise NoFeasiblePoints("no feasible point in the sweep")
    xy = {i: (norm.comm(points[i].phi_c), norm.radar(points[i].phi_r)) for i in feas}
    # sort by x, then y, then M for determinism
    order = sorted(feas, key=lambda i: (xy[i][0], xy[i][1], points[i].M))

    lower: list[int] = []
    for i in order:
        while len(lower) >= 2 and _cross(xy[lower[-2]], xy[lower[-1]], xy[i]) <= 0.0:
            lower.pop()
        lower.append(i)
    # drop duplicates in x at the start (keep lowest y) and cut at the global minimum of y
    ymin = min(xy[i][1] for i in lower)
    cut = next(k for k, i in enumerate(lower) if xy[i][1] <= ymin + HULL_TOL)
    verts = lower[: cut + 1]

    def on_segment(i) -> bool:
        x, y = xy[i]
        for a, b in zip(verts, verts[1:]):
            (xa, ya), (xb, yb) = xy[a], xy[b]
            if xa - HULL_TOL <= x <= xb + HULL_TOL:
                t = 0.0 if xb == xa else (x - xa) / (xb - xa)
                if abs(y - (ya + t * (yb - ya))) <= HULL_TOL:
                    return True
        if len(verts) == 1:
            xa, ya = xy[verts[0]]
            return abs(x - xa) <= HULL_TOL and abs(y - ya) <= HULL_TOL
        return False

    vset = set(verts)
    out = []
    for i, p in enumerate(points):
        if not p.feasible:
            out.append(replace(p, on_hull=False, collinear=False))
        elif i in vset:
            out.append(replace(p, on_hull=True, collinear=False))
        elif on_segment(i):
            out.append(replace(p, on_hull=True, collinear=True))
        else:
            out.append(replace(p, on_hull=False, collinear=False))
    return Hull(out, [out[i] for i in verts], norm)


class ProblemKind(str, enum.Enum):
    WEIGHTED = "weighted"
    CRB_CONSTRAINED = "crb-constrained"
    DMMSE_CONSTRAINED = "dmmse-constrained"


@dataclass(frozen=True)
class DesignSolution:
    point: TradeoffPoint
    objective: float
    kind: ProblemKind
    slack: Optional[float] = None
    mixture: Optional[tuple[TradeoffPoint, TradeoffPoint, float]] = None
    omega_c: Optional[float] = None
    constraint: Optional[float] = None


def _argmin(cands, key):
    """Argmin with ties (within TIE_TOL) broken toward smaller M, then input order."""
    vals = [key(p) for p in cands]
    best = min(vals)
    tol = TIE_TOL * max(1.0, abs(best))
    tied = [p for p, v in zip(cands, vals) if v <= best + tol]
    return min(tied, key=lambda p: p.M), best


def _as_hull(curve, normalization=None) -> Hull:
    return curve if isinstance(curve, Hull) else convex_hull(curve, normalization)


def solve_weighted(curve, omega_c: float, normalization: Optional[Normalization] = None) -> DesignSolution:
    """Minimise ``(1 - omega_c) * phi_r~ + omega_c * phi_c~`` over the hull vertices.

    ``curve`` is a sweep (list of points) or a :class:`Hull`; ``~`` denotes
    min-max normalisation over the feasible sweep unless ``normalization`` is
    given (e.g. joint bounds across several families).
    """
    if not 0.0 <= omega_c <= 1.0:
        raise ValueError("omega_c must lie in [0, 1]")
    hull = _as_hull(curve, normalization)
    norm = normalization or hull.normalization
    w_r = 1.0 - omega_c

    def obj(p):
        return w_r * norm.radar(p.phi_r) + omega_c * norm.comm(p.phi_c)

    point, val = _argmin(hull.vertices, obj)
    return DesignSolution(point, float(val), ProblemKind.WEIGHTED, omega_c=omega_c)


def radar_constraint_to_phi(value: float, unit: str = "phi") -> float:
    """Convert a radar constraint given as ``phi`` (ln (m/s)^2), ``linear`` ((m/s)^2) or ``db`` (rcrb_db)."""
    if unit == "phi":
        return float(value)
    if unit == "linear":
        return crb_to_phi(value)
    if unit == "db":
        return rcrb_db_to_phi(value)
    raise ValueError(f"unknown radar constraint unit {unit!r}")


def comm_constraint_to_phi(value: float, unit: str = "phi") -> float:
    """Convert a DMMSE constraint given as ``phi`` (bits), ``db`` or ``linear`` (geometric-mean DMMSE)."""
    if unit == "phi":
        return float(value)
    if unit == "db":
        return dmmse_db_to_phi(value)
    if unit == "linear":
        return math.log2(value) if value > 0 else -math.inf
    raise ValueError(f"unknown communication constraint unit {unit!r}")


def _inclusive(limit: float) -> float:
    return limit + TIE_TOL * max(1.0, abs(limit)) if math.isfinite(limit) else limit


def solve_crb_constrained(curve, upsilon_r: float, unit: str = "phi") -> DesignSolution:
    """Among feasible points with ``phi_r <= upsilon_r`` return the one with the lowest ``phi_c``."""
    limit = radar_constraint_to_phi(upsilon_r, unit)
    pts = curve.points if isinstance(curve, Hull) else list(curve)
    ok = [p for p in pts if p.feasible and p.phi_r <= _inclusive(limit)]
    if not ok:
        raise ConstraintInfeasible(f"no feasible point meets phi_r <= {limit:.6g}")
    point, val = _argmin(ok, lambda p: p.phi_c)
    return DesignSolution(point, float(val), ProblemKind.CRB_CONSTRAINED,
                          slack=max(0.0, limit - point.phi_r), constraint=limit)


def solve_dmmse_constrained(curve, upsilon_c: float, unit: str = "phi",
                            normalization: Optional[Normalization] = None) -> DesignSolution:
    """Among hull points with ``phi_c <= upsilon_c`` return the one with the lowest ``phi_r``."""
    limit = comm_constraint_to_phi(upsilon_c, unit)
    hull = _as_hull(curve, normalization)
    ok = [p for p in hull.members if p.phi_c <= _inclusive(limit)]
    if not ok:
        raise ConstraintInfeasible(f"no hull point meets phi_c <= {limit:.6g}")
    point, val = _argmin(ok, lambda p: p.phi_r)
    return DesignSolution(point, float(val), ProblemKind.DMMSE_CONSTRAINED,
                          slack=max(0.0, limit - point.phi_c), constraint=limit)


@dataclass(frozen=True)
class ComparisonRow:
    M: int
    vp_params: Optional[tuple[int, ...]]
    vp_phi_r: Optional[float]
    crb_params: Optional[tuple[int, ...]]
    crb_phi_r: Optional[float]

    @property
    def agree(self) -> bool:
        return self.vp_params is not None and self.vp_params == self.crb_params

    @property
    def first_param_delta(self) -> Optional[int]:
        if self.vp_params is None or self.crb_params is None:
            return None
        return self.crb_params[0] - self.vp_params[0]


def compare_vp_count_vs_crb(family, scenario: Scenario, m_range: Sequence[int],
                            threads: int = 1) -> list[ComparisonRow]:
    """VP-count-rule parameters against the exhaustive CRB-optimal parameters per M.

    At fixed M the overhead, hence ``phi_c``, is fixed, so the CRB-optimal
    parameters are simply those minimising ``phi_r``.
    """
    family = Family(family)
    if family not in (Family.NESTED, Family.WICHMANN):
        raise ValueError("comparison is defined for the nested and Wichmann families")
    vp = tradeoff_curve(family, scenario, m_range, ParamRule.VP, threads)
    ex = tradeoff_curve(family, scenario, m_range, ParamRule.EXHAUSTIVE, threads)
    rows = []
    for a, b in zip(vp, ex):
        rows.append(ComparisonRow(
            M=a.M,
            vp_params=a.params or None,
            vp_phi_r=a.phi_r,
            crb_params=b.params if b.feasible else None,
            crb_phi_r=b.phi_r,
        ))
    return rows
