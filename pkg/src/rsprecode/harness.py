"""Experiment engine: scenario configs, Monte-Carlo sweeps, CSV persistence.

A config describes schemes x (SNR grid) x (CSIT-error grid) x trials;
each trial draws one channel per grid point (plus the estimate split when
sigma2 > 0), runs every scheme, and emits one CSV row per combination.
Robust schemes design on the estimate (optionally with the sigma^2 trace
regularizer) and report rates achieved on the true channel. Everything is
seeded, and rows are sorted before writing, so reruns and parallel runs
produce identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, baselines, optimizer, rng
from .channel import ChannelSet, OneRingScenario, apply_csit_error, draw_channels
from .ipm import SolverSettings
from .optimizer import CccpSettings
from .rates import (
    NOMINAL,
    PrecoderSet,
    RateAllocation,
    RobustContext,
    UtilitySpec,
    achievable_rates,
    sd_stream_rates,
    unicast_rate,
)
from .streams import StreamCollection, enumerate_streams, format_stream, stream_card

log = logging.getLogger(__name__)

SCHEMES = (
    "capacity",
    "zf",
    "unicast",
    "one-layer-rs",
    "rs-jd",
    "rs-sd-exhaustive",
    "rs-sd-selected",
)

CSV_HEADER = (
    "config_hash,seed,scheme,P_dB,sigma2,metric,utility,"
    "rates_user,rates_stream,streams,iters,ms,status"
)


@dataclass
class ExperimentConfig:
    label: str
    K: int
    M: int
    schemes: tuple[str, ...]
    p_db_grid: tuple[float, ...]
    sigma2_grid: tuple[float, ...] = (0.0,)
    scenario: OneRingScenario | None = None  # None = i.i.d. Rayleigh
    metric: str = "SR"
    weights: tuple[float, ...] | None = None
    targets: tuple[float, ...] | None = None
    n_sea: int | None = None
    trials: int = 50
    seed: int = 20240
    regularize: bool = True
    time_budget_s: float = 300.0
    cccp: CccpSettings = field(default_factory=CccpSettings)

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("at least one scheme required")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ValueError(f"unknown scheme {s!r}")
        if not self.p_db_grid or not self.sigma2_grid:
            raise ValueError("grids must be nonempty")
        if self.trials < 1:
            raise ValueError("at least one trial required")
        if any(s > 0 for s in self.sigma2_grid):
            if self.scenario is not None:
                raise ValueError("imperfect CSIT sweeps are defined for i.i.d. channels")
            bad = {"capacity", "zf", "rs-sd-exhaustive"} & set(self.schemes)
            if bad:
                raise ValueError(f"schemes {sorted(bad)} have no imperfect-CSIT variant")

    def hash(self) -> str:
        blob = json.dumps(_config_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = {
        "label": cfg.label,
        "K": cfg.K,
        "M": cfg.M,
        "schemes": list(cfg.schemes),
        "p_db_grid": list(cfg.p_db_grid),
        "sigma2_grid": list(cfg.sigma2_grid),
        "metric": cfg.metric,
        "weights": list(cfg.weights) if cfg.weights else None,
        "targets": list(cfg.targets) if cfg.targets else None,
        "n_sea": cfg.n_sea,
        "trials": cfg.trials,
        "seed": cfg.seed,
        "regularize": cfg.regularize,
        "time_budget_s": cfg.time_budget_s,
        "cccp": {
            "tol": cfg.cccp.tol,
            "max_outer": cfg.cccp.max_outer,
            "multistart": cfg.cccp.multistart,
            "obj_stall_rtol": cfg.cccp.obj_stall_rtol,
            "solver_tol": cfg.cccp.solver.tol,
        },
    }
    if cfg.scenario is None:
        d["channel"] = {"type": "iid"}
    else:
        sc = cfg.scenario
        d["channel"] = {
            "type": "one-ring",
            "thetas": list(sc.thetas),
            "delta": list(sc.deltas),
            "spacing": sc.spacing,
            "group_sizes": list(sc.group_sizes) if sc.group_sizes else None,
        }
    return d


def config_from_dict(d: dict) -> ExperimentConfig:
    ch = d.get("channel", {"type": "iid"})
    scenario = None
    if ch.get("type") == "one-ring":
        scenario = OneRingScenario(
            thetas=tuple(ch["thetas"]),
            delta=tuple(ch["delta"]) if isinstance(ch["delta"], (list, tuple)) else ch["delta"],
            spacing=ch.get("spacing", 0.5),
            group_sizes=tuple(ch["group_sizes"]) if ch.get("group_sizes") else None,
        )
    cc = d.get("cccp", {})
    cccp = CccpSettings(
        tol=cc.get("tol", 1e-5),
        max_outer=cc.get("max_outer", 100),
        multistart=cc.get("multistart", 3),
        obj_stall_rtol=cc.get("obj_stall_rtol", 1e-9),
        solver=SolverSettings(tol=cc.get("solver_tol", 1e-7)),
    )
    return ExperimentConfig(
        label=d.get("label", "experiment"),
        K=d["K"],
        M=d["M"],
        schemes=tuple(d["schemes"]),
        p_db_grid=tuple(d["p_db_grid"]),
        sigma2_grid=tuple(d.get("sigma2_grid", [0.0])),
        scenario=scenario,
        metric=d.get("metric", "SR"),
        weights=tuple(d["weights"]) if d.get("weights") else None,
        targets=tuple(d["targets"]) if d.get("targets") else None,
        n_sea=d.get("n_sea"),
        trials=d.get("trials", 50),
        seed=d.get("seed", 20240),
        regularize=d.get("regularize", True),
        time_budget_s=d.get("time_budget_s", 300.0),
        cccp=cccp,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_dict(yaml.safe_load(fh))


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        yaml.safe_dump(_config_dict(cfg), fh, sort_keys=False)


@dataclass
class TrialRecord:
    config_hash: str
    seed: int
    scheme: str
    p_db: float
    sigma2: float
    metric: str
    utility: float
    rates_user: list[float]
    rates_stream: list[float]
    streams: list[str]
    iters: int
    ms: float
    status: str

    def csv_row(self) -> list:
        return [
            self.config_hash,
            self.seed,
            self.scheme,
            f"{self.p_db:g}",
            f"{self.sigma2:g}",
            self.metric,
            f"{self.utility:.12g}",
            ";".join(f"{r:.12g}" for r in self.rates_user),
            ";".join(f"{r:.12g}" for r in self.rates_stream),
            ";".join(self.streams),
            self.iters,
            f"{self.ms:.1f}",
            self.status,
        ]


def achieved_allocation(scheme: str, res, truth: ChannelSet):
    """Rates a CCCP result actually delivers on the (true) channel."""
    Q = res.precoders
    if scheme == "rs-jd":
        return achievable_rates(truth, Q, "jd", UtilitySpec("SR"))
    caps = sd_stream_rates(truth, Q, res.orders)
    alloc = RateAllocation(dict(caps))
    return alloc, alloc.sum_rate


def run_scheme(
    scheme: str,
    design: ChannelSet,
    truth: ChannelSet,
    budget: float,
    sigma2: float,
    regularize: bool,
    config: ExperimentConfig,
):
    """One scheme at one grid point.

    Returns (utility, per-user rates, per-stream rates, outer iterations);
    the utility is always the achieved value of the returned precoder on
    the true channel, which also makes every CSV row reproducible from its
    stored precoder."""
    K = config.K
    robust = RobustContext(sigma2 if (sigma2 > 0 and regularize) else 0.0)
    settings = config.cccp
    if scheme == "capacity":
        r = baselines.sum_capacity(truth, budget)
        return r.sum_rate, list(r.user_rates), {}, 0
    if scheme == "zf":
        r = baselines.zf_scheme(truth, budget)
        return r.sum_rate, list(r.user_rates), {}, 0
    if scheme == "unicast":
        res = baselines.unicast_scheme(design, budget, settings, robust).cccp
        rates = [unicast_rate(truth, res.precoders, k) for k in range(K)]
        caps = {1 << k: rates[k] for k in range(K)}
        return float(sum(rates)), rates, caps, res.outer_iters
    if scheme == "one-layer-rs":
        res = baselines.one_layer_rs(design, budget, settings, robust).cccp
    elif scheme == "rs-jd":
        res = optimizer.cccp(
            UtilitySpec("SR"), "jd", design, budget, enumerate_streams(K), robust, settings
        )
    elif scheme == "rs-sd-exhaustive":
        res = optimizer.exhaustive_sd(design, budget, settings)
    elif scheme == "rs-sd-selected":
        n_sea = config.n_sea if config.n_sea is not None else 2**K - 1
        res = optimizer.selected_sd(UtilitySpec("SR"), design, budget, n_sea, robust, settings)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    alloc, util = achieved_allocation(scheme, res, truth)
    return (
        util,
        [alloc.user_rate(k) for k in range(K)],
        dict(alloc.stream_rates),
        res.outer_iters,
    )


def _run_trial(args) -> list[TrialRecord]:
    cfg, trial = args
    chash = cfg.hash()
    out = []
    t_start = time.perf_counter()
    seed = int(rng.stream(cfg.seed, "trial", trial).integers(0, 2**31 - 1))
    for si, sigma2 in enumerate(cfg.sigma2_grid):
        if sigma2 > 0:
            split = apply_csit_error(cfg.K, cfg.M, sigma2, seed + 7919 * si)
            design, truth = split.H_est, split.H_true
        else:
            truth = draw_channels(cfg.scenario, cfg.K, cfg.M, seed)
            design = truth
        for p_db in cfg.p_db_grid:
            budget = 10.0 ** (p_db / 10.0)
            for scheme in cfg.schemes:
                elapsed = time.perf_counter() - t_start
                if elapsed > cfg.time_budget_s:
                    out.append(
                        TrialRecord(chash, seed, scheme, p_db, sigma2, cfg.metric,
                                    float("nan"), [], [], [], 0, 0.0, "timeout")
                    )
                    continue
                t0 = time.perf_counter()
                try:
                    util, user, caps, iters = run_scheme(
                        scheme, design, truth, budget, sigma2, cfg.regularize, cfg
                    )
                    ms = 1e3 * (time.perf_counter() - t0)
                    labels = [format_stream(s) for s in sorted(caps, key=lambda s: (bin(s).count('1'), s))]
                    vals = [caps[s] for s in sorted(caps, key=lambda s: (bin(s).count('1'), s))]
                    out.append(
                        TrialRecord(chash, seed, scheme, p_db, sigma2, cfg.metric,
                                    util, user, vals, labels, iters, ms, "ok")
                    )
                except Exception as exc:  # record, keep sweeping
                    ms = 1e3 * (time.perf_counter() - t0)
                    log.exception("scheme %s failed (trial %d)", scheme, trial)
                    out.append(
                        TrialRecord(chash, seed, scheme, p_db, sigma2, cfg.metric,
                                    float("nan"), [], [], [], 0, ms,
                                    f"error:{type(exc).__name__}")
                    )
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, out_dir=None):
    """All trials of a config; returns (records, summary).

    Rows are sorted before writing so the output is independent of worker
    scheduling. summary maps (scheme, P_dB, sigma2) to mean/std/count of
    the utility over ok rows.
    """
    t0 = time.perf_counter()
    tasks = [(cfg, t) for t in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_trial, tasks))
    else:
        chunks = [_run_trial(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.seed, r.sigma2, r.p_db, r.scheme))

    summary = {}
    for r in records:
        if r.status != "ok":
            continue
        key = (r.scheme, r.p_db, r.sigma2)
        summary.setdefault(key, []).append(r.utility)
    summary = {
        k: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)}
        for k, v in sorted(summary.items())
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(records, out / "results.csv")
        manifest = {
            "config": _config_dict(cfg),
            "config_hash": cfg.hash(),
            "version": __version__,
            "rng": rng.GENERATOR_VERSION,
            "rows": len(records),
            "runtime_s": time.perf_counter() - t0,
            "summary": {f"{k[0]}@P{k[1]:g}dB@s{k[2]:g}": v for k, v in summary.items()},
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return records, summary


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER.split(","))
        for r in records:
            w.writerow(r.csv_row())


def compare_regularization(cfg: ExperimentConfig, jobs: int = 1, out_dir=None):
    """Mean achieved sum rate with and without the sigma^2 regularizer.

    Both sweeps reuse the config's seeds, so per-trial channels match
    pairwise; returns one row per sigma2 with the regularized /
    unregularized ratio."""
    if not any(s > 0 for s in cfg.sigma2_grid):
        raise ValueError("compare_regularization needs a sigma2 > 0 grid")
    _, summary_on = run_experiment(replace(cfg, regularize=True), jobs)
    _, summary_off = run_experiment(replace(cfg, regularize=False), jobs)
    table = []
    for sigma2 in cfg.sigma2_grid:
        for scheme in cfg.schemes:
            for p_db in cfg.p_db_grid:
                a = summary_on.get((scheme, p_db, sigma2))
                b = summary_off.get((scheme, p_db, sigma2))
                if a is None or b is None:
                    continue
                table.append(
                    {
                        "scheme": scheme,
                        "P_dB": p_db,
                        "sigma2": sigma2,
                        "mean_regularized": a["mean"],
                        "mean_unregularized": b["mean"],
                        "ratio": a["mean"] / b["mean"] if b["mean"] > 0 else float("inf"),
                        "n": min(a["n"], b["n"]),
                    }
                )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "regularization_gain.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(table[0].keys()))
            w.writeheader()
            w.writerows(table)
    return table
