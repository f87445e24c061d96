"""Reference schemes: sum capacity, zero forcing, unicast, and 1-layer RS.

Unicast and 1-layer RS are CCCP-optimized like the general scheme (same
machinery, restricted stream sets), so comparisons are apples to apples;
capacity and ZF have closed-form or first-order solutions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import optimizer
from .optimizer import CccpResult, CccpSettings
from .rates import NOMINAL, PrecoderSet, RobustContext, UtilitySpec
from .streams import StreamCollection, enumerate_streams


@dataclass
class BaselineResult:
    scheme: str
    sum_rate: float
    user_rates: np.ndarray
    precoders: PrecoderSet | None = None
    powers: np.ndarray | None = None
    details: dict = field(default_factory=dict)
    cccp: CccpResult | None = None


def _simplex_project(p: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum p <= budget}."""
    q = np.maximum(p, 0.0)
    if q.sum() <= budget:
        return q
    # project onto the simplex sum = budget (sorted-threshold method)
    u = np.sort(p)[::-1]
    css = np.cumsum(u) - budget
    rho = np.nonzero(u - css / (np.arange(len(p)) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(p - theta, 0.0)


def sum_capacity(channels, budget: float, tol: float = 1e-7) -> BaselineResult:
    """MAC-BC duality sum capacity: maximize log2 det(I + sum_k P_k h_k h_k^H)
    over the power simplex, by projected gradient with backtracking.

    The support-function gap over the simplex certifies optimality."""
    if budget <= 0:
        raise ValueError("power budget must be positive")
    H = channels.H
    M, K = channels.M, channels.K
    outer = np.einsum("mk,nk->kmn", H, H.conj())
    p = np.full(K, budget / K)

    def fval(p):
        A = np.eye(M) + np.tensordot(p, outer, axes=1)
        sign, ld = np.linalg.slogdet(A)
        return ld / np.log(2.0)

    def grad(p):
        A = np.eye(M) + np.tensordot(p, outer, axes=1)
        Ainv = np.linalg.inv(A)
        return np.real(np.einsum("kmn,nm->k", outer, Ainv)) / np.log(2.0)

    step = budget / 4.0
    f = fval(p)
    for _ in range(5000):
        g = grad(p)
        gap = budget * max(float(g.max()), 0.0) - float(g @ p)
        if gap < tol:
            break
        while step > 1e-18:
            cand = _simplex_project(p + step * g, budget)
            fc = fval(cand)
            if fc >= f + 1e-4 * float(g @ (cand - p)):
                p, f = cand, fc
                step *= 1.6
                break
            step *= 0.5

    rates = np.array([np.log2(1.0 + p[k] * np.linalg.norm(H[:, k]) ** 2) for k in range(K)])
    return BaselineResult(
        scheme="capacity",
        sum_rate=float(f),
        user_rates=rates,  # per-user split of C_sum is not unique; these are informational
        powers=p,
        details={"gap": gap},
    )


def zf_scheme(channels, budget: float) -> BaselineResult:
    """Zero forcing with water-filled per-user powers.

    Precoder (H^H)^dagger has unit-gain columns, so user k gets rate
    log2(1 + p_k) at cost p_k * [(H^H H)^-1]_kk; the weighted water-fill
    has the closed form p_k = max(0, mu / w_k - 1)."""
    H = channels.H
    M, K = channels.M, channels.K
    if np.linalg.matrix_rank(H) < K:
        raise ValueError("ZF needs a full-column-rank channel matrix")
    G = np.linalg.inv(H.conj().T @ H)
    w = np.real(np.diag(G)).copy()

    # active-set sweep: try serving the n cheapest users, water level from
    # the budget equation sum_active (mu - w_k) = budget
    order = np.argsort(w)
    best = None
    for n in range(1, K + 1):
        act = order[:n]
        mu = (budget + w[act].sum()) / n
        p = mu / w[act] - 1.0
        if p.min() < 0:
            continue
        rate = float(np.sum(np.log2(1.0 + p)))
        if best is None or rate > best[0]:
            pk = np.zeros(K)
            pk[act] = p
            best = (rate, pk)
    rate, p = best
    return BaselineResult(
        scheme="zf",
        sum_rate=rate,
        user_rates=np.log2(1.0 + p),
        powers=p,
        details={"weights": w},
    )


def unicast_scheme(
    channels,
    budget: float,
    settings: CccpSettings | None = None,
    robust: RobustContext = NOMINAL,
) -> BaselineResult:
    """Treat-interference-as-noise with CCCP-optimized covariances."""
    K = channels.K
    singles = StreamCollection.of(1 << k for k in range(K))
    res = optimizer.cccp(
        UtilitySpec("SR"), "jd", channels, budget, singles, robust, settings
    )
    rates = np.array([res.rates.stream_rates.get(1 << k, 0.0) for k in range(K)])
    return BaselineResult(
        scheme="unicast",
        sum_rate=res.utility,
        user_rates=rates,
        precoders=res.precoders,
        cccp=res,
    )


def one_layer_rs_orders(K: int) -> dict[int, tuple[int, ...]]:
    full = (1 << K) - 1
    if K == 1:
        return {0: (1,)}
    return {k: (full, 1 << k) for k in range(K)}


def one_layer_rs(
    channels,
    budget: float,
    settings: CccpSettings | None = None,
    robust: RobustContext = NOMINAL,
    extra_starts=(),
) -> BaselineResult:
    """K private streams plus one common stream for everyone, decoded first."""
    K = channels.K
    full = (1 << K) - 1
    active = StreamCollection.of([1 << k for k in range(K)] + [full])
    res = optimizer.cccp(
        UtilitySpec("SR"),
        "sd",
        channels,
        budget,
        active,
        robust,
        settings,
        orders=one_layer_rs_orders(K),
        extra_starts=extra_starts,
    )
    user = np.array(
        [
            res.rates.stream_rates.get(1 << k, 0.0)
            + res.rates.stream_rates.get(full, 0.0) / K
            for k in range(K)
        ]
        if K > 1
        else [res.rates.stream_rates.get(1, 0.0)]
    )
    return BaselineResult(
        scheme="one-layer-rs",
        sum_rate=res.utility,
        user_rates=user,
        precoders=res.precoders,
        cccp=res,
    )
