"""Rate expressions for the rate-splitting downlink.

All rates are bits per channel use (log base 2) with noise normalized to
unit variance. The joint-decoding (JD) region bounds each sub-collection
of a user's streams by a MAC-style constraint; successive decoding (SD)
rates follow a per-user decoding order with undecoded streams treated as
noise. Robust variants replace h by the channel estimate and augment
every interference covariance Q by sigma^2 * tr(Q), a provable lower
bound under symmetric estimation error.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .streams import (
    StreamCollection,
    canonical_key,
    format_stream,
    stream_card,
    stream_users,
)

HERMITIAN_TOL = 1e-10
PSD_EIG_TOL = 1e-8


@dataclass(frozen=True)
class RobustContext:
    """CSIT error variance; sigma2 = 0 means nominal (perfect CSIT)."""

    sigma2: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 >= 0):
            raise ValueError("sigma2 must be finite and nonnegative")

    @property
    def is_robust(self) -> bool:
        return self.sigma2 > 0


NOMINAL = RobustContext(0.0)


@dataclass(frozen=True)
class UtilitySpec:
    """Performance metric: SR, WSR (with weights), WUR, or PM (with targets)."""

    metric: str = "SR"
    weights: tuple[float, ...] | None = None
    targets: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.metric not in ("SR", "WSR", "WUR", "PM"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.metric == "WSR":
            if self.weights is None or any(
                not np.isfinite(w) or w < 0 for w in self.weights
            ):
                raise ValueError("WSR needs finite nonnegative weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.metric == "PM":
            if self.targets is None or any(
                not np.isfinite(r) or r < 0 for r in self.targets
            ):
                raise ValueError("PM needs finite nonnegative target rates")
            object.__setattr__(self, "targets", tuple(float(r) for r in self.targets))

    def value(self, user_rates: np.ndarray) -> float:
        if self.metric == "SR":
            return float(np.sum(user_rates))
        if self.metric == "WSR":
            return float(np.dot(self.weights, user_rates))
        if self.metric == "WUR":
            return float(np.min(user_rates))
        raise ValueError("PM has no rate utility; its objective is transmit power")


class PrecoderSet:
    """One Hermitian PSD covariance per active stream, keyed by stream bitmask."""

    def __init__(self, Q: dict[int, np.ndarray], validate: bool = True):
        self._Q = {int(s): np.asarray(m, dtype=complex) for s, m in Q.items()}
        if not self._Q:
            raise ValueError("precoder set needs at least one stream")
        shapes = {m.shape for m in self._Q.values()}
        if len(shapes) != 1 or any(s[0] != s[1] for s in shapes):
            raise ValueError("all covariances must be square with equal size")
        if validate:
            self.check()

    def check(self):
        for s, m in self._Q.items():
            if not np.all(np.isfinite(m.view(float))):
                raise ValueError(f"covariance of stream {format_stream(s)} not finite")
            if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
                raise ValueError(f"covariance of stream {format_stream(s)} not Hermitian")
            if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -PSD_EIG_TOL:
                raise ValueError(f"covariance of stream {format_stream(s)} not PSD")

    @property
    def streams(self) -> tuple[int, ...]:
        return tuple(sorted(self._Q, key=canonical_key))

    @property
    def M(self) -> int:
        return next(iter(self._Q.values())).shape[0]

    @property
    def total_power(self) -> float:
        return float(sum(np.trace(m).real for m in self._Q.values()))

    def __getitem__(self, s: int) -> np.ndarray:
        return self._Q[int(s)]

    def __contains__(self, s) -> bool:
        return int(s) in self._Q

    def items(self):
        return ((s, self._Q[s]) for s in self.streams)

    def collection(self) -> StreamCollection:
        return StreamCollection.of(self._Q)

    def scaled(self, factor: float) -> "PrecoderSet":
        return PrecoderSet({s: factor * m for s, m in self._Q.items()}, validate=False)


@dataclass
class RateAllocation:
    """Aggregated per-stream rates, optionally with per-user splits.

    splits maps (user, stream) -> rate; when present, the splits of a
    stream sum to its aggregated rate.
    """

    stream_rates: dict[int, float]
    splits: dict[tuple[int, int], float] | None = None

    def __post_init__(self):
        for s, r in self.stream_rates.items():
            if r < -1e-9:
                raise ValueError(f"negative rate for stream {format_stream(s)}")
        if self.splits is not None:
            for (k, s), r in self.splits.items():
                if r < -1e-9:
                    raise ValueError("negative split rate")
                if not s >> k & 1:
                    raise ValueError("split assigned to a user outside the stream")
            for s, r in self.stream_rates.items():
                tot = sum(v for (k, s2), v in self.splits.items() if s2 == s)
                if abs(tot - r) > 1e-6:
                    raise ValueError(
                        f"splits of stream {format_stream(s)} sum to {tot}, expected {r}"
                    )

    def user_rate(self, k: int) -> float:
        if self.splits is not None:
            return sum(v for (j, s), v in self.splits.items() if j == k)
        # equal split across a stream's members is always a valid assignment
        return sum(
            r / stream_card(s) for s, r in self.stream_rates.items() if s >> k & 1
        )

    def user_rates(self, K: int) -> np.ndarray:
        return np.array([self.user_rate(k) for k in range(K)])

    @property
    def sum_rate(self) -> float:
        return float(sum(self.stream_rates.values()))


def quad_form(h: np.ndarray, Q: np.ndarray) -> float:
    """Real received power h^H Q h of a Hermitian covariance."""
    return float(np.real(h.conj() @ Q @ h))


def _interference(channels, Q: PrecoderSet, k: int, robust: RobustContext) -> float:
    """Total interference power at user k: streams not containing k,
    each augmented by sigma^2 tr(Q) in the robust model."""
    h = channels.h(k)
    tot = 0.0
    for s, m in Q.items():
        if not s >> k & 1:
            tot += quad_form(h, m) + robust.sigma2 * float(np.trace(m).real)
    return tot


def unicast_rate(channels, Q: PrecoderSet, k: int) -> float:
    """Treat-interference-as-noise rate of user k under singleton precoding."""
    if any(stream_card(s) != 1 for s in Q.streams):
        raise ValueError("unicast rate needs a singleton-only precoder set")
    own = 1 << k
    if own not in Q:
        raise ValueError(f"missing singleton stream for user {k + 1}")
    h = channels.h(k)
    sig = quad_form(h, Q[own])
    interf = sum(quad_form(h, m) for s, m in Q.items() if s != own)
    return float(np.log2(1.0 + sig / (1.0 + interf)))


def jd_rhs(channels, Q: PrecoderSet, k: int, subset, robust: RobustContext = NOMINAL) -> float:
    """Joint-decoding bound on the rate sum of a sub-collection of user k's streams.

    log2(1 + sum_{S in subset} h^H Q_S h / (1 + interference)). Robust
    mode evaluates at the estimate and adds sigma^2 tr(Q) to each
    interference term only.
    """
    subset = tuple(subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    if any(not s >> k & 1 for s in subset):
        raise ValueError("subset contains a stream not intended for the user")
    h = channels.h(k)
    sig = sum(quad_form(h, Q[s]) for s in subset)
    interf = _interference(channels, Q, k, robust)
    return float(np.log2(1.0 + sig / (1.0 + interf)))


def sd_stream_rate(
    channels,
    Q: PrecoderSet,
    orders: dict[int, tuple[int, ...]],
    k: int,
    n: int,
    robust: RobustContext = NOMINAL,
) -> float:
    """Rate at which user k decodes the n-th stream of its order (0-based).

    Streams later in the order and streams not intended for k are noise;
    the robust model augments every noise covariance by sigma^2 tr(Q).
    """
    order = orders[k]
    if not 0 <= n < len(order):
        raise IndexError(f"round {n} out of range for user {k + 1}")
    h = channels.h(k)
    sig = quad_form(h, Q[order[n]])
    noise = _interference(channels, Q, k, robust)
    for later in order[n + 1 :]:
        m = Q[later]
        noise += quad_form(h, m) + robust.sigma2 * float(np.trace(m).real)
    return float(np.log2(1.0 + sig / (1.0 + noise)))


def sd_stream_rates(
    channels, Q: PrecoderSet, orders: dict[int, tuple[int, ...]], robust: RobustContext = NOMINAL
) -> dict[int, float]:
    """Aggregated SD rate per stream: the minimum over its decoding users."""
    out: dict[int, float] = {}
    for k, order in orders.items():
        for n, s in enumerate(order):
            r = sd_stream_rate(channels, Q, orders, k, n, robust)
            out[s] = min(out.get(s, np.inf), r)
    return out


def _split_lp(channels, stream_caps: dict[int, float], metric: UtilitySpec, K: int):
    """Distribute fixed per-stream rate budgets over per-user splits to
    maximize the utility. Solved with the shared interior-point core."""
    from . import ipm

    sub = ipm.split_allocation_subproblem(stream_caps, metric, K)
    res = ipm.solve(sub, ipm.SolverSettings())
    splits = {
        (key[1], key[2]): max(0.0, float(v))
        for key, v in res.scalars.items()
        if key[0] == "r"
    }
    return splits, float(res.objective)


def achievable_rates(
    channels,
    Q: PrecoderSet,
    mode: str = "jd",
    metric: UtilitySpec = UtilitySpec("SR"),
    orders: dict[int, tuple[int, ...]] | None = None,
    robust: RobustContext = NOMINAL,
) -> tuple[RateAllocation, float]:
    """Best rate allocation and utility achievable with a fixed precoder.

    mode "sd": each stream's rate is the minimum of its users' decode
    rates under `orders` (which must cover all active streams); mode
    "jd": solves the linear program over the JD region at Q. PM is not a
    rate utility and is rejected here.
    """
    if metric.metric == "PM":
        raise ValueError("power minimization is not an achieved-rate utility")
    K = channels.K
    active = Q.streams

    if mode == "sd":
        if orders is None:
            raise ValueError("SD extraction needs a decoding order")
        covered = set()
        for k in range(K):
            expected = {s for s in active if s >> k & 1}
            got = set(orders.get(k, ()))
            if got != expected:
                raise ValueError(f"order of user {k + 1} must cover exactly its streams")
            covered |= got
        caps = sd_stream_rates(channels, Q, orders, robust)
        if metric.metric == "SR":
            alloc = RateAllocation(dict(caps))
            return alloc, alloc.sum_rate
        splits, util = _split_lp(channels, caps, metric, K)
        rates = {
            s: sum(v for (k, s2), v in splits.items() if s2 == s) for s in caps
        }
        return RateAllocation(rates, splits), util

    if mode != "jd":
        raise ValueError(f"unknown mode {mode!r}")

    from . import ipm

    sub = ipm.jd_rate_lp(channels, Q, metric, robust)
    res = ipm.solve(sub, ipm.SolverSettings())
    vals = {key: max(0.0, float(v)) for key, v in res.scalars.items()}
    if metric.metric == "SR":
        rates = {s: vals.get(("R", s), 0.0) for s in active}
        return RateAllocation(rates), float(res.objective)
    splits = {(key[1], key[2]): v for key, v in vals.items() if key[0] == "r"}
    for s in active:  # streams excluded from the LP carry zero rate
        for k in range(K):
            if s >> k & 1:
                splits.setdefault((k, s), 0.0)
    rates = {s: sum(v for (k, s2), v in splits.items() if s2 == s) for s in active}
    return RateAllocation(rates, splits), float(res.objective)


def jd_constraint_census(K: int) -> int:
    """Number of JD rate constraints for the full collection: K(2^(2^(K-1)) - 1)."""
    return K * (2 ** (2 ** (K - 1)) - 1)


def enumerate_jd_constraints(active: StreamCollection, K: int):
    """Yield (k, subset) for every user and nonempty sub-collection of its streams."""
    for k in range(K):
        mine = active.for_user(k)
        for size in range(1, len(mine) + 1):
            for combo in itertools.combinations(mine, size):
                yield k, combo
