"""Experiment runners behind the command-line verbs.

Each runner takes a resolved configuration and returns the tables it produced
together with the series to plot; nothing here touches the file system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import build_scenario, slot_interval, target_velocities, wavelength
from .errors import CoArrayTooSmall, ConfigError, JcrError, TooManyTargets
from .estimators import rmse_study
from .metrics import identifiability_precheck
from .optimizer import (
    Normalization,
    compare_vp_count_vs_crb,
    comm_constraint_to_phi,
    convex_hull,
    radar_constraint_to_phi,
    solve_crb_constrained,
    solve_dmmse_constrained,
    solve_weighted,
    tradeoff_curve,
)
from .scene import RadarScene, max_unambiguous_velocity
from .sparse_waveform import (
    Family,
    build_schedule,
    difference_cowaveform,
    from_positions,
    preamble_overhead,
    vp_count_closed_form,
    vp_rule_params,
)
from .tables import Column, Table

__all__ = ["Result", "Problem", "run_coarray", "run_tradeoff", "run_music_rmse", "run_optimize",
           "validate", "RUNNERS"]


@dataclass
class Result:
    tables: list[Table]
    plots: dict[str, dict] = field(default_factory=dict)  # name -> {series, xlabel, ylabel}


def _params_text(params) -> str:
    return " ".join(str(p) for p in params) if params else ""


def _schedule_from(section: dict, cfg: dict):
    T = slot_interval(cfg)
    if section.get("positions") is not None:
        return from_positions(section["positions"], T)
    return build_schedule(section["family"], tuple(section["params"]), T)


def run_coarray(cfg: dict, threads: int = 1) -> Result:
    """Positions, co-waveform lags and counts for one schedule."""
    sched = _schedule_from(cfg["coarray"], cfg)
    co = difference_cowaveform(sched)
    try:
        closed = vp_count_closed_form(sched.family, sched.params)
    except ValueError:
        closed = None
    summary = Table("coarray_summary", [
        Column("family"), Column("params"), Column("M", "preambles"), Column("positions", "slots"),
        Column("aperture", "slots"), Column("contiguous_extent", "lags"), Column("hole_free"),
        Column("vp_count_enumerated", "lags"), Column("vp_count_closed_form", "lags"),
        Column("closed_form_matches"),
    ])
    summary.add(sched.family.value, _params_text(sched.params), sched.size, sched.positions,
                sched.aperture, co.contiguous_extent, co.hole_free, co.vp_count_one_sided, closed,
                None if closed is None else closed == co.vp_count_one_sided)
    lags = Table("coarray_lags", [Column("lag", "slots"), Column("multiplicity", "pairs"),
                                  Column("in_contiguous_range")])
    for lag, mult in zip(co.lags, co.multiplicity):
        lags.add(lag, mult, lag <= co.contiguous_extent)
    plot = {"series": {"multiplicity": (list(co.lags), list(co.multiplicity))},
            "xlabel": "lag [slots]", "ylabel": "multiplicity [pairs]"}
    return Result([summary, lags], {"coarray_lags": plot})


_POINT_COLUMNS = [
    Column("family"), Column("params"), Column("M", "preambles"), Column("mu", "fraction"),
    Column("phi_c", "bits"), Column("dmmse_db", "dB"), Column("phi_r", "ln (m/s)^2"),
    Column("rcrb_db", "dB re 1 m/s"), Column("feasible"), Column("on_hull"), Column("collinear"),
]


def _point_values(p):
    return (p.family.value, _params_text(p.params), p.M, p.mu, p.phi_c, p.dmmse_db, p.phi_r,
            p.rcrb_db, p.feasible, p.on_hull, p.collinear)


def _m_range(section: dict) -> range:
    return range(section["m_min"], section["m_max"] + 1)


def run_tradeoff(cfg: dict, threads: int = 1) -> Result:
    """Trade-off curves for every family and target distance, with hull flags."""
    sec = cfg["tradeoff"]
    table = Table("tradeoff", [Column("distance", "m")] + _POINT_COLUMNS + [Column("reason")])
    series = {}
    for rho in sec["distances"]:
        scenario = build_scenario(cfg, distance=rho)
        for fam in sec["families"]:
            curve = tradeoff_curve(fam, scenario, _m_range(sec), sec["param_rule"], threads)
            if any(p.feasible for p in curve):
                curve = convex_hull(curve).points
            for p in curve:
                table.add(rho, *_point_values(p), p.reason)
            feas = [p for p in curve if p.feasible]
            series[f"{fam} rho={rho:g} m"] = ([p.dmmse_db for p in feas], [p.rcrb_db for p in feas])
    plot = {"series": series, "xlabel": "DMMSE [dB]", "ylabel": "RCRB [dB re 1 m/s]"}
    return Result([table], {"tradeoff": plot})


def run_music_rmse(cfg: dict, threads: int = 1) -> Result:
    """Monte Carlo RMSE of direct- and DA-MUSIC against the RCRB."""
    sec = cfg["music_rmse"]
    if sec["trials"] < 1:
        raise ConfigError("music_rmse.trials: must be >= 1")
    sched = _schedule_from(sec, cfg)
    base = build_scenario(cfg).scene
    vel = target_velocities(cfg)
    lam = base.wavelength
    table = Table("music_rmse", [
        Column("method"), Column("schedule"), Column("eta", "snapshots"), Column("snr_db", "dB"),
        Column("target"), Column("velocity", "m/s"), Column("trials"), Column("failures"),
        Column("rmse", "m/s"), Column("rcrb", "m/s"), Column("rmse_over_rcrb_db", "dB"),
        Column("status"),
    ])
    snrs = sec["snr_db"] or [None]
    series: dict[str, tuple[list, list]] = {}
    for i_snr, snr in enumerate(snrs):
        if snr is None:
            scene = base
        else:
            scene = RadarScene.with_snr(lam, vel, snr, base.noise_power)
        for eta in sec["eta"]:
            for method in sec["methods"]:
                key = f"{method} snr={'budget' if snr is None else f'{snr:g}'}"
                try:
                    rep = rmse_study(sched, scene, method, eta, sec["trials"], cfg["seed"],
                                     stream=(i_snr, eta), grid_size=sec["grid_size"], threads=threads)
                except (TooManyTargets, CoArrayTooSmall) as exc:
                    table.add(method, sched.describe(), eta, snr, "all", None, sec["trials"],
                              sec["trials"], None, None, None, f"{type(exc).__name__}: {exc}")
                    continue
                rcrb = rep.rcrb_per_target
                for k in range(scene.n_targets):
                    rk = None if rcrb is None else float(rcrb[k])
                    ratio = None if rk is None else 20 * math.log10(rep.rmse_per_target[k] / rk)
                    table.add(method, sched.describe(), eta, snr, k, float(scene.velocities[k]), rep.trials,
                              rep.failures, float(rep.rmse_per_target[k]), rk, ratio, "ok")
                ratio = None if rep.rcrb is None else 20 * math.log10(rep.rmse / rep.rcrb)
                table.add(method, sched.describe(), eta, snr, "all", None, rep.trials, rep.failures,
                          rep.rmse, rep.rcrb, ratio, "ok")
                xs, ys = series.setdefault(key, ([], []))
                xs.append(eta)
                ys.append(20 * math.log10(rep.rmse))
    plot = {"series": series, "xlabel": "snapshots eta", "ylabel": "RMSE [dB re 1 m/s]"}
    return Result([table], {"music_rmse": plot})


def run_optimize(cfg: dict, threads: int = 1) -> Result:
    """Weighted, CRB-constrained and DMMSE-constrained designs per family."""
    sec = cfg["optimize"]
    scenario = build_scenario(cfg)
    curves = {fam: tradeoff_curve(fam, scenario, _m_range(sec), sec["param_rule"], threads)
              for fam in sec["families"]}
    joint = None
    if sec["normalization"] == "joint":
        joint = Normalization.from_points([p for c in curves.values() for p in c])
    table = Table("optimize", [
        Column("family"), Column("problem"), Column("parameter"), Column("constraint_phi", "bits or ln (m/s)^2"),
        Column("M", "preambles"), Column("params"), Column("mu", "fraction"), Column("phi_c", "bits"),
        Column("dmmse_db", "dB"), Column("phi_r", "ln (m/s)^2"), Column("rcrb_db", "dB re 1 m/s"),
        Column("objective"), Column("slack"), Column("status"),
    ])

    def add(fam, problem, parameter, limit, solve):
        try:
            sol = solve()
        except JcrError as exc:
            table.add(fam, problem, parameter, limit, None, None, None, None, None, None, None, None,
                      None, f"{type(exc).__name__}: {exc}")
            return
        p = sol.point
        table.add(fam, problem, parameter, limit, p.M, _params_text(p.params), p.mu, p.phi_c, p.dmmse_db,
                  p.phi_r, p.rcrb_db, sol.objective, sol.slack, "ok")

    w_series = {}
    for fam, curve in curves.items():
        if not any(p.feasible for p in curve):
            table.add(fam, "sweep", None, None, None, None, None, None, None, None, None, None, None,
                      "NoFeasiblePoints: no feasible point in the sweep")
            continue
        hull = convex_hull(curve, joint)
        ms = []
        for w in sec["omega_c"]:
            add(fam, "weighted", float(w), None, lambda: solve_weighted(hull, w, joint))
            ms.append(table.rows[-1][4])
        w_series[fam] = (list(map(float, sec["omega_c"])), [np.nan if m is None else m for m in ms])
        for u in sec["upsilon_r"]:
            limit = radar_constraint_to_phi(u, sec["upsilon_r_unit"])
            add(fam, "crb-constrained", float(u), limit,
                lambda: solve_crb_constrained(hull, u, sec["upsilon_r_unit"]))
        for u in sec["upsilon_c"]:
            limit = comm_constraint_to_phi(u, sec["upsilon_c_unit"])
            add(fam, "dmmse-constrained", float(u), limit,
                lambda: solve_dmmse_constrained(hull, u, sec["upsilon_c_unit"]))
    tables = [table]
    if sec["compare_vp"]:
        cmp_table = Table("vp_compare", [
            Column("family"), Column("M", "preambles"), Column("vp_params"), Column("vp_phi_r", "ln (m/s)^2"),
            Column("crb_params"), Column("crb_phi_r", "ln (m/s)^2"), Column("agree"),
            Column("first_param_delta"),
        ])
        for fam in sec["families"]:
            if fam not in (Family.NESTED.value, Family.WICHMANN.value):
                continue
            for row in compare_vp_count_vs_crb(fam, scenario, _m_range(sec), threads):
                cmp_table.add(fam, row.M, _params_text(row.vp_params), row.vp_phi_r,
                              _params_text(row.crb_params), row.crb_phi_r, row.agree, row.first_param_delta)
        tables.append(cmp_table)
    plot = {"series": w_series, "xlabel": "omega_c", "ylabel": "optimal M"}
    return Result(tables, {"optimize": plot})


RUNNERS = {
    "coarray": run_coarray,
    "tradeoff": run_tradeoff,
    "music-rmse": run_music_rmse,
    "optimize": run_optimize,
}


@dataclass(frozen=True)
class Problem:
    level: str  # "error" or "warning"
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.key}: {self.message}"


_POSITIVE = (
    "scenario.carrier_frequency", "scenario.bandwidth", "scenario.cpi", "scenario.v_max",
    "scenario.slot_interval", "scenario.noise_power", "scenario.symbol_energy", "scenario.temperature",
    "scenario.calibration_distance", "scenario.targets.distance", "scenario.comm.distance",
    "scenario.comm.pathloss_exponent",
)
_AT_LEAST_ONE = ("scenario.eta", "scenario.comm.n_taps", "scenario.comm.block", "music_rmse.trials",
                 "music_rmse.grid_size", "scenario.timing.preamble_symbols")


def _get(cfg: dict, key: str):
    node = cfg
    for part in key.split("."):
        node = node[part]
    return node


def validate(cfg: dict) -> list[Problem]:
    """Schema-independent sanity checks on a resolved configuration (no side effects)."""
    problems: list[Problem] = []
    for key in _POSITIVE:
        v = _get(cfg, key)
        if v is not None and not v > 0:
            problems.append(Problem("error", key, f"must be positive, got {v!r}"))
    for key in _AT_LEAST_ONE:
        if _get(cfg, key) < 1:
            problems.append(Problem("error", key, "must be >= 1"))
    if cfg["scenario"]["correlation_gain"] is not None and cfg["scenario"]["correlation_gain"] < 1:
        problems.append(Problem("error", "scenario.correlation_gain", "must be >= 1"))
    if cfg["scenario"]["timing"]["ifs"] < 0:
        problems.append(Problem("error", "scenario.timing.ifs", "must be >= 0"))
    if any(t < 1 for t in cfg["music_rmse"]["eta"]):
        problems.append(Problem("error", "music_rmse.eta", "snapshot counts must be >= 1"))
    for sec in ("tradeoff", "optimize"):
        if not 2 <= cfg[sec]["m_min"] <= cfg[sec]["m_max"]:
            problems.append(Problem("error", f"{sec}.m_min", "need 2 <= m_min <= m_max"))
    if any(p.level == "error" for p in problems):
        return problems

    T = slot_interval(cfg)
    lam = wavelength(cfg)
    vmax = max_unambiguous_velocity(lam, T)
    vel = target_velocities(cfg)
    if len(set(vel.tolist())) != len(vel):
        problems.append(Problem("error", "scenario.targets.velocities", "velocities must be distinct"))
    bad = [float(v) for v in vel if abs(v) > vmax * (1 + 1e-9)]
    if bad:
        problems.append(Problem("warning", "scenario.targets.velocities",
                                f"VelocityAliased: {bad} exceed the unambiguous range +/-{vmax:.6g} m/s"))
    scenario = build_scenario(cfg)
    for sec in ("tradeoff", "optimize"):
        s = cfg[sec]
        try:
            preamble_overhead(s["m_max"], scenario.timing, scenario.cpi)
        except JcrError as exc:
            problems.append(Problem("error", f"{sec}.m_max", f"CPI capacity: {exc}"))
        K = len(vel)
        for fam in s["families"]:
            feasible = 0
            too_long = 0
            for M in _m_range(s):
                params = vp_rule_params(fam, M)
                if params is None:
                    continue
                sched = build_schedule(fam, params, T)
                if sched.aperture * T > scenario.cpi:
                    too_long += 1
                try:
                    identifiability_precheck(sched, K)
                    feasible += 1
                except JcrError:
                    pass
            if feasible == 0:
                problems.append(Problem("warning", f"{sec}.families",
                                        f"no feasible {fam} point for K={K} over M in [{s['m_min']}, {s['m_max']}]"))
            if too_long and cfg["scenario"]["enforce_cpi_fit"]:
                problems.append(Problem("warning", f"{sec}.m_max",
                                        f"{too_long} {fam} schedules exceed the CPI and will be infeasible"))
    comm = cfg["scenario"]["comm"]
    if comm["block"] < comm["n_taps"]:
        problems.append(Problem("error", "scenario.comm.block", "must be at least n_taps"))
    return problems
