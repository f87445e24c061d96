"""Shipped experiment presets for the five paper-style scenarios.

Group azimuths follow theta_g = -pi/3 + spacing*(g-1) with per-scenario
angular spreads; the 4/8-user runs assign users to the two groups
uniformly at random. CCCP iteration budgets are trimmed where the
sublinear tail would otherwise dominate runtime.
"""
from __future__ import annotations

import numpy as np

from .channel import OneRingScenario
from .harness import ExperimentConfig
from .ipm import SolverSettings
from .optimizer import CccpSettings

DEG = np.pi / 180.0


def _cccp(max_outer=35, multistart=3, stall=1e-7):
    return CccpSettings(
        max_outer=max_outer,
        multistart=multistart,
        obj_stall_rtol=stall,
        solver=SolverSettings(),
    )


def fig3() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig3",
        K=3,
        M=3,
        schemes=("capacity", "zf", "unicast", "one-layer-rs", "rs-jd"),
        p_db_grid=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0),
        scenario=OneRingScenario(
            thetas=(-60 * DEG, -60 * DEG + 15 * DEG), delta=5 * DEG
        ),
        trials=50,
        seed=1003,
        time_budget_s=600.0,
        cccp=_cccp(),
    )


def fig4_disjoint() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig4-disjoint",
        K=4,
        M=4,
        schemes=("capacity", "unicast", "one-layer-rs", "rs-sd-selected"),
        p_db_grid=(30.0,),
        scenario=OneRingScenario(
            thetas=(-60 * DEG + 5 * DEG, -60 * DEG + 5 * DEG + 15 * DEG),
            delta=5 * DEG,
        ),
        n_sea=15,
        trials=50,
        seed=1004,
        time_budget_s=900.0,
        cccp=_cccp(max_outer=30, multistart=2),
    )


def fig4_overlap() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig4-overlap",
        K=4,
        M=4,
        schemes=("capacity", "unicast", "one-layer-rs", "rs-sd-selected"),
        p_db_grid=(30.0,),
        scenario=OneRingScenario(
            thetas=(-60 * DEG, -60 * DEG + 10 * DEG), delta=15 * DEG
        ),
        n_sea=15,
        trials=50,
        seed=1004,
        time_budget_s=900.0,
        cccp=_cccp(max_outer=30, multistart=2),
    )


def fig5() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig5",
        K=8,
        M=8,
        schemes=("unicast", "one-layer-rs", "rs-sd-selected"),
        p_db_grid=(30.0,),
        scenario=OneRingScenario(
            thetas=(-60 * DEG, -60 * DEG + 22.5 * DEG), delta=20 * DEG
        ),
        n_sea=38,
        trials=50,
        seed=1005,
        time_budget_s=3600.0,
        cccp=_cccp(max_outer=20, multistart=1, stall=1e-6),
    )


def fig6() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig6",
        K=4,
        M=4,
        schemes=("rs-sd-selected",),
        p_db_grid=(30.0,),
        sigma2_grid=(0.1, 0.3, 0.5, 0.7, 0.9),
        scenario=None,
        n_sea=15,
        trials=50,
        seed=1006,
        time_budget_s=1800.0,
        cccp=_cccp(max_outer=25, multistart=2),
    )


def fig7() -> ExperimentConfig:
    return ExperimentConfig(
        label="fig7",
        K=4,
        M=4,
        schemes=("unicast", "rs-sd-selected"),
        p_db_grid=(30.0,),
        sigma2_grid=(0.1, 0.3, 0.5, 0.7, 0.9),
        scenario=None,
        n_sea=15,
        trials=50,
        seed=1007,
        time_budget_s=1800.0,
        cccp=_cccp(max_outer=25, multistart=2),
    )


PRESETS = {
    "fig3": fig3,
    "fig4-disjoint": fig4_disjoint,
    "fig4-overlap": fig4_overlap,
    "fig5": fig5,
    "fig6": fig6,
    "fig7": fig7,
}


def get(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]()
