"""Fast end-to-end checks runnable from the CLI (`rs-precode selftest`).

These cover the cheap acceptance surface: single-user exactness across
schemes, the combinatorics census, the SD telescoping identity, the
one-ring quadrature oracle, and a toy solver problem. The pytest
acceptance suite reuses them and adds the long Monte-Carlo criteria.
"""
from __future__ import annotations

import numpy as np

from . import baselines, channel, ipm, optimizer, rates, streams


def check_single_user(M: int = 2, budget: float = 10.0, seed: int = 7) -> dict:
    """Every scheme collapses to log2(1 + P ||h||^2) for K = 1."""
    ch = channel.draw_channels(None, 1, M, seed)
    cap = float(np.log2(1.0 + budget * np.linalg.norm(ch.h(0)) ** 2))
    st = optimizer.CccpSettings(multistart=2, init_modes=("scaled-identity", "mmse"))
    vals = {
        "capacity": baselines.sum_capacity(ch, budget).sum_rate,
        "zf": baselines.zf_scheme(ch, budget).sum_rate,
        "unicast": baselines.unicast_scheme(ch, budget, st).sum_rate,
        "one-layer-rs": baselines.one_layer_rs(ch, budget, st).sum_rate,
        "rs-jd": optimizer.cccp(
            rates.UtilitySpec("SR"), "jd", ch, budget, streams.enumerate_streams(1), settings=st
        ).utility,
        "rs-sd": optimizer.exhaustive_sd(ch, budget, st).utility,
    }
    return {"expected": cap, "values": vals, "max_err": max(abs(v - cap) for v in vals.values())}


def check_census() -> dict:
    """Paper constraint/variable counts and the 5-user selection example."""
    ch = channel.draw_channels(None, 3, 3, 1)
    active = streams.enumerate_streams(3)
    sub = optimizer.build_subproblem(
        rates.UtilitySpec("SR"), "jd", ch, {s: np.zeros((3, 3)) for s in active},
        active, budget=10.0,
    )
    S = streams.StreamCollection.of(
        [0b00001, 0b00010, 0b00100, 0b01000, 0b10000,
         0b00011, 0b00110, 0b01100, 0b11000, 0b00111, 0b11100]
    )
    U = streams.max_nonoverlapping_collections(S)
    return {
        "jd_constraints": sub.num_rate_constraints,
        "jd_expected": 45,
        "variables": sub.num_variables,
        "variables_expected": (3 * 3 + 1) * 7,
        "collections": len(U),
        "collections_expected": 6,
    }


def check_telescoping(seed: int = 3) -> dict:
    """Sum of SD stream rates equals the full-set JD bound per user."""
    ch = channel.draw_channels(None, 3, 3, seed)
    gen = np.random.default_rng(seed)
    Q = {}
    for s in streams.enumerate_streams(3):
        A = gen.standard_normal((3, 3)) + 1j * gen.standard_normal((3, 3))
        Q[s] = A @ A.conj().T / 10
    ps = rates.PrecoderSet(Q)
    worst = 0.0
    for k in range(3):
        order = tuple(sorted(ps.collection().for_user(k), key=lambda s: -streams.stream_card(s)))
        orders = {k: order}
        total = sum(
            rates.sd_stream_rate(ch, ps, orders, k, n) for n in range(len(order))
        )
        jd = rates.jd_rhs(ch, ps, k, order)
        worst = max(worst, abs(total - jd))
    return {"max_telescoping_err": worst}


def check_one_ring() -> dict:
    """Quadrature against an independent adaptive-quadrature oracle."""
    from scipy.integrate import quad

    theta, delta, D = 0.0, 5 * np.pi / 180, 0.5
    re = quad(lambda a: np.cos(2 * np.pi * D * np.sin(a)), theta - delta, theta + delta,
              epsabs=1e-12)[0]
    im = quad(lambda a: -np.sin(2 * np.pi * D * np.sin(a)), theta - delta, theta + delta,
              epsabs=1e-12)[0]
    oracle = (re + 1j * im) / (2 * delta)
    R = channel.one_ring_covariance(theta, delta, D, 2)
    return {"oracle_err": abs(R[1, 0] - oracle), "diag_err": float(np.max(np.abs(np.diag(R) - 1)))}


def check_toy_solver(budget: float = 10.0) -> dict:
    """max t s.t. t <= log2(1+q), 0 <= q <= P has optimum log2(1+P)."""
    logc = ipm.LogIneq(0.0, np.array([1.0, 0.0]), 1.0, np.array([0.0, 1.0]))
    lin = [
        ipm.LinearIneq(0.0, np.array([0.0, -1.0])),
        ipm.LinearIneq(-budget, np.array([0.0, 1.0])),
    ]
    sub = ipm.ConvexSubproblem(
        M=1, blocks=(), scalar_keys=(("t",), ("q",)), maximize=True,
        obj_const=0.0, obj_coef=np.array([1.0, 0.0]), lin=lin, logs=[logc],
        x0=np.array([0.1, 1.0]),
    )
    res = ipm.solve(sub)
    return {"objective": res.objective, "expected": float(np.log2(1 + budget)),
            "err": abs(res.objective - np.log2(1 + budget))}


CHECKS = {
    "single-user": (check_single_user, lambda r: r["max_err"] < 1e-4),
    "census": (
        check_census,
        lambda r: r["jd_constraints"] == r["jd_expected"]
        and r["variables"] == r["variables_expected"]
        and r["collections"] == r["collections_expected"],
    ),
    "telescoping": (check_telescoping, lambda r: r["max_telescoping_err"] < 1e-10),
    "one-ring": (check_one_ring, lambda r: r["oracle_err"] < 1e-9 and r["diag_err"] < 1e-12),
    "toy-solver": (check_toy_solver, lambda r: r["err"] < 1e-6),
}


def run(verbose: bool = True) -> bool:
    ok = True
    for name, (fn, passes) in CHECKS.items():
        try:
            result = fn()
            good = passes(result)
        except Exception as exc:  # a crash is a failure, not an abort
            result = {"error": repr(exc)}
            good = False
        ok = ok and good
        if verbose:
            print(f"[{'PASS' if good else 'FAIL'}] {name}: {result}")
    return ok
