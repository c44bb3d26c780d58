"""Sparse preamble waveform design for joint radar-communication.

Modules
-------
sparse_waveform
    Preamble schedules (uniform, nested, Wichmann), difference co-waveforms
    and overhead accounting.
scene
    Link budgets, targets and snapshot synthesis.
metrics
    Velocity CRB, water-filling, spectral efficiency and DMMSE.
estimators
    Direct-MUSIC, DA-MUSIC and the Monte Carlo RMSE harness.
optimizer
    Trade-off sweeps, convex hull and the three design problems.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .sparse_waveform import (  # noqa: F401
    Family,
    FrameTiming,
    PreambleSchedule,
    build_nested,
    build_schedule,
    build_uniform,
    build_wichmann,
    difference_cowaveform,
    preamble_overhead,
)
from .scene import CommLink, RadarScene, Scenario, Target, synth_snapshots, sample_covariance  # noqa: F401
from .metrics import crb_velocity, crb_oracle_slepian_bangs, comm_metrics, radar_scalar, waterfill  # noqa: F401
from .estimators import da_music, direct_music, rmse_study  # noqa: F401
from .optimizer import (  # noqa: F401
    convex_hull,
    solve_crb_constrained,
    solve_dmmse_constrained,
    solve_weighted,
    tradeoff_curve,
)
