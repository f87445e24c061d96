"""CCCP precoder design for the rate-splitting downlink.

The nonconvex rate constraints are differences of convex functions: the
concave part (log of total noise power) is linearized at the previous
iterate, which yields a convex inner approximation solved by the
interior-point core; iterating refines the approximation and the
objective improves monotonically while every iterate stays feasible for
the original constraints. On top of that single loop sit the
decoding-order exhaustive search, the stream-selection search over
maximum non-overlapping collections, and power minimization.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import ipm
from .ipm import ConvexSubproblem, LinearIneq, LogIneq, SolverSettings
from .rates import NOMINAL, PrecoderSet, RateAllocation, RobustContext, UtilitySpec
from .streams import (
    StreamCollection,
    decoding_order,
    enumerate_streams,
    format_stream,
    max_nonoverlapping_collections,
    sea_reduce,
    stream_card,
    user_collection,
)

log = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

#: Guard for the exhaustive decoding-order search, (2^(K-1)!)^K combinations.
EXHAUSTIVE_K_MAX = 3

solve_convex = ipm.solve


# ---------------------------------------------------------------------------
# Linearization of the concave noise terms


@dataclass
class AffineForm:
    """First-order expansion of log2(1 + noise power) around an anchor.

    value(Q) = constant + sum_s <grad_s, Q_s - anchor_s> with the real
    trace inner product; by concavity it over-estimates the expanded
    function everywhere on the PSD cone.
    """

    constant: float
    grads: dict[int, np.ndarray]
    anchor: dict[int, np.ndarray]

    def value(self, Q) -> float:
        val = self.constant
        for s, G in self.grads.items():
            D = Q[s] - self.anchor[s]
            val += float(np.real(np.trace(G.conj().T @ D)))
        return val


def _noise_value(channels, Q, k, streams_in_noise, sigma2):
    h = channels.h(k)
    tot = 0.0
    for s in streams_in_noise:
        m = Q[s]
        tot += float(np.real(h.conj() @ m @ h)) + sigma2 * float(np.trace(m).real)
    return tot


def _linearize(channels, k, Q_prev, streams_in_noise, robust: RobustContext) -> AffineForm:
    h = channels.h(k)
    s_prev = _noise_value(channels, Q_prev, k, streams_in_noise, robust.sigma2)
    scale = 1.0 / ((1.0 + s_prev) * LN2)
    base = np.outer(h, h.conj()) * scale
    if robust.sigma2 > 0:
        base = base + robust.sigma2 * scale * np.eye(channels.M)
    grads = {s: base.copy() for s in streams_in_noise}
    anchor = {s: np.array(Q_prev[s]) for s in streams_in_noise}
    return AffineForm(float(np.log2(1.0 + s_prev)), grads, anchor)


def linearize_concave_jd(
    channels, k: int, Q_prev, active: StreamCollection, robust: RobustContext = NOMINAL
) -> AffineForm:
    """Tangent over-estimate of user k's interference log-term at Q_prev."""
    noise = [s for s in active if not s >> k & 1]
    return _linearize(channels, k, Q_prev, noise, robust)


def linearize_concave_sd(
    channels,
    k: int,
    n: int,
    orders: dict[int, tuple[int, ...]],
    Q_prev,
    active: StreamCollection,
    robust: RobustContext = NOMINAL,
) -> AffineForm:
    """Tangent over-estimate of the SD noise log-term at decode round n of user k
    (external interference plus the streams user k has not decoded yet)."""
    order = orders[k]
    noise = [s for s in active if not s >> k & 1] + list(order[n + 1 :])
    return _linearize(channels, k, Q_prev, noise, robust)


# ---------------------------------------------------------------------------
# Linearized convex subproblems


class SubproblemFamily:
    """Fixed structure of the linearized subproblems for one design problem.

    All affine coefficient rows (signal, noise, rate indicators) depend
    only on (channels, metric, mode, active collection, robustness), so
    they are built once; `at(Q_prev)` produces the convex subproblem of
    the current CCCP iteration by refreshing the tangent constants.
    """

    def __init__(
        self,
        channels,
        metric: UtilitySpec,
        active: StreamCollection,
        robust: RobustContext = NOMINAL,
        mode: str = "jd",
        orders: dict[int, tuple[int, ...]] | None = None,
        budget: float | None = None,
    ):
        if metric.metric != "PM" and budget is None:
            raise ValueError("rate maximization needs a power budget")
        self.channels = channels
        self.metric = metric
        self.active = active
        self.robust = robust
        self.mode = mode
        self.orders = orders
        self.budget = budget

        M, K = channels.M, channels.K
        self.M, self.K = M, K
        self.blocks = tuple(active.streams)
        self.msize = M * M
        self.nmat = len(self.blocks) * self.msize
        self.block_index = {s: b for b, s in enumerate(self.blocks)}

        if mode == "sd":
            if orders is None:
                raise ValueError("SD mode needs per-user decoding orders")
            for k in range(K):
                if set(orders.get(k, ())) != set(active.for_user(k)):
                    raise ValueError(
                        f"order of user {k + 1} must cover exactly its active streams"
                    )
        elif mode != "jd":
            raise ValueError(f"unknown mode {mode!r}")

        # scalar variables
        if metric.metric == "SR":
            keys = [("R", s) for s in self.blocks]
        else:
            keys = [("r", k, s) for s in self.blocks for k in range(K) if s >> k & 1]
            if metric.metric == "WUR":
                keys.append(("y",))
        self.scalar_keys = tuple(keys)
        self.n = self.nmat + len(keys)
        self._key_index = {key: self.nmat + i for i, key in enumerate(keys)}

        # per (user, block) quadratic-form rows and per-block traces
        qrow = {}
        trow = np.zeros((len(self.blocks), self.n))
        for b, s in enumerate(self.blocks):
            sl = slice(b * self.msize, (b + 1) * self.msize)
            trow[b, sl] = ipm.trace_coeffs(M)
            for k in range(K):
                row = np.zeros(self.n)
                row[sl] = ipm.quad_coeffs(channels.h(k))
                qrow[(k, s)] = row
        self.trace_row = trow.sum(axis=0)

        # constraint rows
        labels = []
        rate_rows, sig_rows, noise_rows = [], [], []
        for k in range(K):
            mine = active.for_user(k)
            ext = [s for s in active if not s >> k & 1]
            if mode == "jd":
                noise_streams_list = [ext] * 0  # placeholder, built per row below
                subsets = []
                for size in range(1, len(mine) + 1):
                    subsets.extend(itertools.combinations(mine, size))
                row_iter = [(("jd", k, sub), sub, ext) for sub in subsets]
            else:
                order = orders[k]
                row_iter = [
                    (("sd", k, n), (order[n],), ext + list(order[n + 1 :]))
                    for n in range(len(order))
                ]
            for label, signal, noise in row_iter:
                sig = np.zeros(self.n)
                for s in signal:
                    sig += qrow[(k, s)]
                noi = np.zeros(self.n)
                for s in noise:
                    noi += qrow[(k, s)]
                    if robust.sigma2 > 0:
                        noi += robust.sigma2 * trow[self.block_index[s]]
                rr = np.zeros(self.n)
                for s in signal:
                    if metric.metric == "SR":
                        rr[self._key_index[("R", s)]] = 1.0
                    else:
                        for j in range(K):
                            if s >> j & 1:
                                rr[self._key_index[("r", j, s)]] = 1.0
                labels.append(label)
                rate_rows.append(rr)
                sig_rows.append(sig)
                noise_rows.append(noi)
        self.row_labels = labels
        self.rate_rows = np.array(rate_rows)
        self.noise_rows = np.array(noise_rows)
        self.z_rows = self.noise_rows + np.array(sig_rows)

        # fixed linear constraints
        self.lin: list[LinearIneq] = []
        if metric.metric != "PM":
            self.lin.append(LinearIneq(-float(budget), self.trace_row.copy(), ("power",)))
        for key in self.scalar_keys:
            if key[0] in ("R", "r"):
                w = np.zeros(self.n)
                w[self._key_index[key]] = -1.0
                self.lin.append(LinearIneq(0.0, w, ("nonneg", key)))
        if metric.metric == "WUR":
            yi = self._key_index[("y",)]
            for k in range(K):
                w = np.zeros(self.n)
                w[yi] = 1.0
                for s in active.for_user(k):
                    w[self._key_index[("r", k, s)]] = -1.0
                self.lin.append(LinearIneq(0.0, w, ("wur", k)))
        if metric.metric == "PM":
            for k in range(K):
                w = np.zeros(self.n)
                for s in active.for_user(k):
                    w[self._key_index[("r", k, s)]] = -1.0
                self.lin.append(LinearIneq(float(metric.targets[k]), w, ("target", k)))

        # objective
        obj = np.zeros(self.n)
        if metric.metric == "SR":
            for s in self.blocks:
                obj[self._key_index[("R", s)]] = 1.0
        elif metric.metric == "WSR":
            for key in self.scalar_keys:
                obj[self._key_index[key]] = metric.weights[key[1]]
        elif metric.metric == "WUR":
            obj[self._key_index[("y",)]] = 1.0
        else:  # PM minimizes transmit power
            obj = self.trace_row.copy()
        self.obj = obj
        self.maximize = metric.metric != "PM"

    # -- packing ------------------------------------------------------------

    def pack_matrices(self, Q: dict[int, np.ndarray] | PrecoderSet) -> np.ndarray:
        x = np.zeros(self.n)
        for b, s in enumerate(self.blocks):
            x[b * self.msize : (b + 1) * self.msize] = ipm.herm_to_vec(np.asarray(Q[s]))
        return x

    def true_rhs(self, x: np.ndarray) -> np.ndarray:
        """Original (nonconvex) rate bound per constraint row at the point x."""
        z = self.z_rows @ x
        s = self.noise_rows @ x
        return np.log2(1.0 + z) - np.log2(1.0 + s)

    def violation(self, x: np.ndarray) -> float:
        """Worst original-constraint violation at x (positive = infeasible)."""
        viol = float(np.max(self.rate_rows @ x - self.true_rhs(x)))
        if self.budget is not None:
            viol = max(viol, float(self.trace_row @ x - self.budget))
        for c in self.lin:
            if c.label and c.label[0] in ("nonneg", "wur", "target"):
                viol = max(viol, float(c.const + c.coef @ x))
        return viol

    def _start_scalars(self, margins: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
        """Rates (and slack) strictly inside the linearized rows given their
        per-row headroom; previous values are kept where they still fit."""
        counts = self.rate_rows.sum(axis=1)
        per_row = margins / np.maximum(counts, 1.0) / 2.0
        vals = np.full(len(self.scalar_keys), 1e-9)
        for i, key in enumerate(self.scalar_keys):
            if key[0] not in ("R", "r"):
                continue
            col = self.rate_rows[:, self.nmat + i]
            hit = col > 0
            cap = float(per_row[hit].min()) if np.any(hit) else 1e-3
            cap = max(min(1e-3, cap), 1e-300)
            if prev is not None:
                cap = max(min(float(prev[i]), 2e5 * cap), 0.25 * cap)
            vals[i] = cap
        if self.metric.metric == "WUR":
            sums = [
                sum(
                    vals[i]
                    for i, key in enumerate(self.scalar_keys)
                    if key[0] == "r" and key[1] == k
                )
                for k in range(self.K)
            ]
            vals[-1] = 0.5 * min(sums) if min(sums) > 0 else -1.0
        return vals

    def _scalars_feasible(self, logs_const, logs_coef, x0: np.ndarray) -> bool:
        g = logs_const + logs_coef @ x0 - np.log2(1.0 + self.z_rows @ x0)
        if g.size and g.max() >= -1e-300:
            return False
        for c in self.lin:
            if c.const + c.coef @ x0 >= -1e-300:
                return False
        return True

    def at(
        self,
        Q_prev: dict[int, np.ndarray] | PrecoderSet,
        scalars: np.ndarray | None = None,
        lift: float = 1e-4,
    ) -> ConvexSubproblem:
        """The convex subproblem linearized at Q_prev.

        The tangent anchor is exactly Q_prev; the solver's starting point
        is nudged toward a scaled identity (barrier centering is fast
        from a well-conditioned interior point, slow from the nearly
        singular blocks a converged precoder typically has).
        """
        x_mat = self.pack_matrices(Q_prev)
        sp = self.noise_rows @ x_mat
        scale = 1.0 / ((1.0 + sp) * LN2)
        coefs = self.rate_rows + self.noise_rows * scale[:, None]
        consts = np.log2(1.0 + sp) - sp * scale
        logs = [
            LogIneq(float(consts[i]), coefs[i], 1.0, self.z_rows[i], self.row_labels[i])
            for i in range(len(consts))
        ]
        logs_const = np.asarray(consts, dtype=float)
        logs_coef = coefs

        total = float(self.trace_row @ x_mat)
        # keep the neutral point well off the power wall; x0 only seeds the
        # barrier and the wall is where centering goes blind
        rho = 0.5 * (self.budget if self.budget is not None else max(total, 1e-6)) / (
            len(self.blocks) * self.M
        )
        neutral = self.pack_matrices(
            {s: rho * np.eye(self.M, dtype=complex) for s in self.blocks}
        )
        x0 = None
        for gamma in (1.0, 0.3, 0.03, lift, 0.0):
            x0_mat = (1.0 - gamma) * x_mat + gamma * neutral
            margins = -(logs_const + logs_coef @ x0_mat - np.log2(1.0 + self.z_rows @ x0_mat))
            if margins.size and margins.min() <= 0:
                continue
            cand = np.concatenate([x0_mat[: self.nmat], self._start_scalars(margins, scalars)])
            if self._scalars_feasible(logs_const, logs_coef, cand):
                x0 = cand
                break
        if x0 is None:
            if scalars is not None:
                # the previous iterate itself (always strictly feasible)
                x0 = np.concatenate([x_mat[: self.nmat], np.asarray(scalars, dtype=float)])
            else:
                # anchor with fresh tiny rates is feasible by tangency
                margins = self.true_rhs(x_mat)
                x0 = np.concatenate([x_mat[: self.nmat], self._start_scalars(margins, None)])
        return ConvexSubproblem(
            M=self.M,
            blocks=self.blocks,
            scalar_keys=self.scalar_keys,
            maximize=self.maximize,
            obj_const=0.0,
            obj_coef=self.obj.copy(),
            lin=list(self.lin),
            logs=logs,
            x0=x0,
        )


def build_subproblem(
    metric: UtilitySpec,
    mode: str,
    channels,
    Q_prev,
    active: StreamCollection,
    robust: RobustContext = NOMINAL,
    budget: float | None = None,
    orders: dict[int, tuple[int, ...]] | None = None,
) -> ConvexSubproblem:
    """Assemble one linearized convex subproblem at the anchor Q_prev."""
    fam = SubproblemFamily(channels, metric, active, robust, mode, orders, budget)
    return fam.at(Q_prev)


# ---------------------------------------------------------------------------
# Initial precoders


def _embed(Q: dict[int, np.ndarray], active, M: int, budget: float) -> dict[int, np.ndarray]:
    """Extend a partial precoder to all active streams, leaving every block
    strictly inside the cone and the total comfortably inside the budget.

    Only the solver start moves; the subproblem still contains the
    unscaled point, so warm-start objectives are not sacrificed."""
    floor = budget * 1e-6 / (len(active) * M)
    out = {}
    total_old = 0.0
    for s in active:
        if s in Q:
            total_old += float(np.trace(Q[s]).real)
    headroom = budget * 0.995 - floor * M * len(active)
    fac = 1.0 if total_old <= headroom else headroom / total_old
    for s in active:
        base = fac * np.asarray(Q[s]) if s in Q else np.zeros((M, M), dtype=complex)
        out[s] = base + floor * np.eye(M)
    return out


def _init_scaled_identity(channels, active, budget: float) -> dict[int, np.ndarray]:
    M = channels.M
    val = 0.99 * budget / (len(active) * M)
    return {s: val * np.eye(M, dtype=complex) for s in active}


def _init_mmse(channels, active, budget: float) -> dict[int, np.ndarray]:
    M, K = channels.M, channels.K
    H = channels.H
    A = np.linalg.inv(H @ H.conj().T + (K / max(budget, 1e-12)) * np.eye(M))
    Q = {}
    singles = [s for s in active if stream_card(s) == 1]
    for s in singles:
        k = s.bit_length() - 1
        d = A @ H[:, k]
        nrm = np.linalg.norm(d)
        v = d / nrm if nrm > 1e-300 else np.eye(M)[:, 0]
        Q[s] = (0.98 * budget / len(singles)) * np.outer(v, v.conj())
    return _embed(Q, active, M, budget)


def _init_unicast_warm(channels, active, budget, robust, settings) -> dict[int, np.ndarray]:
    # a rough unicast point is plenty for warm starting; don't over-converge
    singles = StreamCollection.of(1 << k for k in range(channels.K))
    inner = replace(
        settings,
        multistart=1,
        init_modes=("mmse",),
        max_outer=12,
        obj_stall_rtol=1e-6,
        solver=replace(settings.solver, tol=1e-6),
    )
    res = cccp(UtilitySpec("SR"), "jd", channels, budget, singles, robust, inner)
    Q = {s: res.precoders[s] for s in singles}
    return _embed(Q, active, channels.M, budget)


# ---------------------------------------------------------------------------
# CCCP driver


@dataclass
class CccpSettings:
    """Outer-loop tuning: tolerance on the variable step norm, iteration
    budget, and the multi-start schedule."""

    tol: float = 1e-5
    max_outer: int = 100
    multistart: int = 3
    init_modes: tuple[str, ...] = ("scaled-identity", "mmse", "unicast-warm")
    #: stop when the objective improves by less than this (relative); the
    #: step-norm criterion cannot fall below the inner solver's resolution
    obj_stall_rtol: float = 1e-9
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("CCCP tolerance must be positive")


@dataclass
class CccpResult:
    precoders: PrecoderSet
    rates: RateAllocation
    utility: float
    trace: list[float]
    outer_iters: int
    status: str
    y: float | None = None
    orders: dict[int, tuple[int, ...]] | None = None
    collection: StreamCollection | None = None
    max_violation: float = 0.0
    wallclock_s: float = 0.0
    start_label: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _stack_norm(family, Qa, xa_sc, Qb, xb_sc) -> float:
    """Convergence metric: Euclidean norm of the stacked variable step."""
    tot = 0.0
    for s in family.blocks:
        tot += float(np.sum(np.abs(Qa[s] - Qb[s]) ** 2))
    tot += float(np.sum((xa_sc - xb_sc) ** 2))
    return float(np.sqrt(tot))


def _allocation_from(family, scalars: dict) -> tuple[RateAllocation, float | None]:
    if family.metric.metric == "SR":
        rates = {s: max(0.0, float(scalars[("R", s)])) for s in family.blocks}
        return RateAllocation(rates), None
    splits = {
        (key[1], key[2]): max(0.0, float(v))
        for key, v in scalars.items()
        if key[0] == "r"
    }
    rates = {
        s: sum(v for (k, s2), v in splits.items() if s2 == s) for s in family.blocks
    }
    y = float(scalars[("y",)]) if family.metric.metric == "WUR" else None
    return RateAllocation(rates, splits), y


def _run_cccp_once(family, Q0, settings: CccpSettings, label: str, scalars0=None) -> CccpResult:
    t_start = time.perf_counter()
    Q_prev = {s: np.asarray(Q0[s], dtype=complex) for s in family.blocks}
    scalars_vec = scalars0
    prev = None  # (Qdict, scalar vector, result)
    trace: list[float] = []
    max_viol = -np.inf
    status = "max-iter"
    iters = 0
    better = (lambda a, b: a > b) if family.maximize else (lambda a, b: a < b)
    for i in range(1, settings.max_outer + 1):
        sub = family.at(Q_prev, scalars_vec)
        try:
            res = ipm.solve(sub, settings.solver)
        except (ipm.InfeasibleStart, ipm.NumericalFailure) as exc:
            if prev is None:
                raise
            log.warning("CCCP stopped on solver failure at iteration %d: %s", i, exc)
            status = "infeasible-subproblem"
            break
        iters = i
        max_viol = max(max_viol, family.violation(res.x))
        if trace and not better(res.objective, trace[-1]):
            # progress below solver resolution: keep the previous iterate
            status = "converged"
            break
        trace.append(res.objective)
        x_sc = res.x[family.nmat :]
        done = False
        if prev is not None:
            J = _stack_norm(family, res.matrices, x_sc, prev[0], prev[1])
            done = J <= settings.tol
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < settings.obj_stall_rtol * (
            1.0 + abs(trace[-1])
        ):
            done = True  # progress is below the inner solver's resolution
        prev = (res.matrices, x_sc, res)
        if done:
            status = "converged"
            break
        Q_prev = res.matrices
        # power minimization must restart from target-feasible splits; the
        # rate variables of the max problems re-center fastest from scratch
        scalars_vec = x_sc if family.metric.metric == "PM" else None
    Qd, _, res = prev
    alloc, y = _allocation_from(family, res.scalars)
    return CccpResult(
        precoders=PrecoderSet(Qd, validate=False),
        rates=alloc,
        utility=trace[-1],
        trace=trace,
        outer_iters=iters,
        status=status,
        y=y,
        orders=family.orders,
        max_violation=max(max_viol, 0.0),
        wallclock_s=time.perf_counter() - t_start,
        start_label=label,
    )


def _starts(channels, active, budget, robust, settings: CccpSettings, extra):
    names = list(settings.init_modes)[: max(1, settings.multistart)]
    singles_only = all(stream_card(s) == 1 for s in active)
    out = []
    for name in names:
        if name == "scaled-identity":
            out.append((name, _init_scaled_identity(channels, active, budget)))
        elif name == "mmse":
            out.append((name, _init_mmse(channels, active, budget)))
        elif name == "unicast-warm":
            if singles_only:
                continue  # would recurse into itself; mmse covers this case
            out.append((name, _init_unicast_warm(channels, active, budget, robust, settings)))
        else:
            raise ValueError(f"unknown init mode {name!r}")
    for j, Q in enumerate(extra):
        out.append((f"explicit-{j}", _embed({s: Q[s] for s in Q.streams if s in active}
                                            if isinstance(Q, PrecoderSet) else dict(Q),
                                            active, channels.M, budget)))
    return out


def cccp(
    metric: UtilitySpec,
    mode: str,
    channels,
    budget: float | None,
    active: StreamCollection,
    robust: RobustContext = NOMINAL,
    settings: CccpSettings | None = None,
    orders: dict[int, tuple[int, ...]] | None = None,
    extra_starts=(),
) -> CccpResult:
    """Multi-start CCCP for one metric / decoding mode / active collection.

    Returns the best stationary point found; its objective trace is
    monotone and every recorded iterate satisfies the original
    constraints (inner approximation).
    """
    settings = settings or CccpSettings()
    if metric.metric == "PM":
        raise ValueError("use minimize_power for the power objective")
    family = SubproblemFamily(channels, metric, active, robust, mode, orders, budget)
    best: CccpResult | None = None
    failures = []
    for label, Q0 in _starts(channels, active, budget, robust, settings, extra_starts):
        try:
            run = _run_cccp_once(family, Q0, settings, label)
        except (ipm.InfeasibleStart, ipm.NumericalFailure) as exc:
            failures.append((label, exc))
            continue
        if best is None or run.utility > best.utility:
            best = run
    if best is None:
        raise RuntimeError(f"all CCCP starts failed: {failures}")
    return best


# ---------------------------------------------------------------------------
# Decoding-order and stream-selection searches


def _all_orders(K: int):
    """Every decoding-order tuple: one permutation of K^(k) per user."""
    per_user = [
        list(itertools.permutations(user_collection(K, k))) for k in range(K)
    ]
    for combo in itertools.product(*per_user):
        yield {k: combo[k] for k in range(K)}


def exhaustive_sd(
    channels,
    budget: float,
    settings: CccpSettings | None = None,
    metric: UtilitySpec | None = None,
    allow_large: bool = False,
) -> CccpResult:
    """Exhaustive search over all (2^(K-1)!)^K successive-decoding orders."""
    K = channels.K
    if K > EXHAUSTIVE_K_MAX and not allow_large:
        raise ValueError(
            f"exhaustive order search is guarded to K <= {EXHAUSTIVE_K_MAX}"
        )
    metric = metric or UtilitySpec("SR")
    active = enumerate_streams(K)
    best: CccpResult | None = None
    for orders in _all_orders(K):
        run = cccp(metric, "sd", channels, budget, active, settings=settings, orders=orders)
        if best is None or run.utility > best.utility:
            best = run
    return best


def selected_sd(
    metric: UtilitySpec,
    channels,
    budget: float,
    n_sea: int,
    robust: RobustContext = NOMINAL,
    settings: CccpSettings | None = None,
    sea_mode: str = "power-rank",
) -> CccpResult:
    """Stream selection then CCCP per maximum non-overlapping collection.

    SEA trims the candidate streams to at most n_sea, every maximum
    non-overlapping collection is enumerated, and each is optimized under
    its (unique) descending-cardinality decoding order; the best sum
    rate wins, first canonical candidate on ties.
    """
    S = sea_reduce(channels, budget, n_sea, mode=sea_mode)
    best: CccpResult | None = None
    for S_tilde in max_nonoverlapping_collections(S):
        orders = {k: decoding_order(S_tilde, k) for k in range(channels.K)}
        run = cccp(metric, "sd", channels, budget, S_tilde, robust, settings, orders)
        run.collection = S_tilde
        if best is None or run.utility > best.utility:
            best = run
    return best


# ---------------------------------------------------------------------------
# Power minimization


def _pm_initial(channels, targets, active, robust) -> tuple[dict, dict]:
    """Feasible start for power minimization: load the all-users common
    stream so every target is met with margin."""
    M, K = channels.M, channels.K
    full = (1 << K) - 1
    if full not in active:
        raise ValueError("power minimization start needs the all-users stream active")
    norms = [float(np.linalg.norm(channels.h(k)) ** 2) for k in range(K)]
    if min(norms) <= 0:
        raise ValueError("infeasible targets: a user has a zero channel")
    total = sum(targets)
    c = (2.0 ** (1.1 * total + 1.0) - 1.0) / min(norms)
    # robust regularization shrinks the bound; inflate against it
    c *= 1.0 + robust.sigma2 * M
    Q = {s: np.zeros((M, M), dtype=complex) for s in active}
    Q[full] = c * np.eye(M)
    floor = 1e-9 * c
    for s in active:
        if s != full:
            Q[s] = floor * np.eye(M)
    scalars = {}
    for s in active:
        for k in range(K):
            if s >> k & 1:
                scalars[("r", k, s)] = (
                    targets[k] * (1.0 + 1e-6) + 1e-9 if s == full else 1e-12
                )
    return Q, scalars


def minimize_power(
    targets,
    channels,
    active: StreamCollection | None = None,
    robust: RobustContext = NOMINAL,
    settings: CccpSettings | None = None,
    mode: str = "jd",
    orders: dict[int, tuple[int, ...]] | None = None,
) -> CccpResult:
    """CCCP power minimization under per-user rate targets (joint decoding)."""
    settings = settings or CccpSettings()
    K = channels.K
    targets = tuple(float(r) for r in targets)
    if len(targets) != K:
        raise ValueError("one target rate per user required")
    active = active or enumerate_streams(K)
    metric = UtilitySpec("PM", targets=targets)
    family = SubproblemFamily(channels, metric, active, robust, mode, orders, None)
    Q0, sc0 = _pm_initial(channels, targets, active, robust)
    scalars0 = np.array([sc0[key] for key in family.scalar_keys])
    run = _run_cccp_once(family, Q0, settings, "pm-common", scalars0)
    return run


def sum_rate_surrogate(channels, budget: float, collection: StreamCollection) -> float:
    """Cheap sum-rate score for stream elimination: one linearized solve
    from the scaled-identity start under a fixed descending-card order."""
    orders = {
        k: tuple(sorted(collection.for_user(k), key=lambda s: (-stream_card(s), s)))
        for k in range(channels.K)
    }
    fam = SubproblemFamily(
        channels, UtilitySpec("SR"), collection, NOMINAL, "sd", orders, budget
    )
    sub = fam.at(_init_scaled_identity(channels, collection, budget))
    return ipm.solve(sub, SolverSettings(tol=1e-4)).objective
