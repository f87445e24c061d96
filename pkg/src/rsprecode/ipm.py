"""Primal log-barrier interior-point core.

Every convex program in this package (linearized CCCP subproblems, the
joint-decoding achieved-rate LP, split allocation) is expressed over one
flat real vector holding

  * one M x M Hermitian PSD block per active stream, parameterized by
    its M real diagonal entries followed by (Re, Im) of each
    upper-triangle entry in lexicographic order, and
  * scalar variables (stream rates, per-user splits, the worst-user
    slack), identified by hashable keys.

Two inequality families cover all constraints:

  LinearIneq:  c + w.x <= 0
  LogIneq:     c + w.x - log2(zc + zw.x) <= 0

where the affine argument zc + zw.x of every log stays positive on the
PSD cone (it is 1 + a nonnegative combination of h h^H quadratic forms
and traces). The barrier is

  phi(x) = -sum_b log det(Q_b + eps I) - sum_i log(-g_i(x)),

minimized by damped Newton with Armijo backtracking (0.3 / 0.5); the
path parameter t starts where t * ||grad f|| balances ||grad phi|| and
grows tenfold per stage until nu (the total barrier parameter) over t
certifies the requested duality gap. Iterates are strictly feasible
throughout, so returned points satisfy every constraint exactly (PSD up
to the -eps shift).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

LN2 = float(np.log(2.0))


class InfeasibleStart(Exception):
    """The supplied starting point is not strictly feasible."""


class NumericalFailure(Exception):
    """Newton centering failed to converge within the iteration budget."""


# ---------------------------------------------------------------------------
# Hermitian block parameterization


def herm_pairs(M: int) -> list[tuple[int, int]]:
    return [(m, p) for m in range(M) for p in range(m + 1, M)]


def herm_to_vec(Q: np.ndarray) -> np.ndarray:
    M = Q.shape[0]
    v = np.empty(M * M)
    v[:M] = np.real(np.diag(Q))
    for t, (m, p) in enumerate(herm_pairs(M)):
        v[M + 2 * t] = Q[m, p].real
        v[M + 2 * t + 1] = Q[m, p].imag
    return v


def vec_to_herm(v: np.ndarray, M: int) -> np.ndarray:
    Q = np.zeros((M, M), dtype=complex)
    Q[np.arange(M), np.arange(M)] = v[:M]
    for t, (m, p) in enumerate(herm_pairs(M)):
        Q[m, p] = v[M + 2 * t] + 1j * v[M + 2 * t + 1]
        Q[p, m] = v[M + 2 * t] - 1j * v[M + 2 * t + 1]
    return Q


def quad_coeffs(h: np.ndarray) -> np.ndarray:
    """Real coefficients w with w . vec(Q) = h^H Q h for Hermitian Q."""
    M = h.shape[0]
    w = np.empty(M * M)
    w[:M] = np.abs(h) ** 2
    for t, (m, p) in enumerate(herm_pairs(M)):
        a = np.conj(h[m]) * h[p]
        w[M + 2 * t] = 2 * a.real
        w[M + 2 * t + 1] = -2 * a.imag
    return w


def trace_coeffs(M: int) -> np.ndarray:
    w = np.zeros(M * M)
    w[:M] = 1.0
    return w


def _extract_rows(A: np.ndarray, M: int, pairs) -> np.ndarray:
    """Map a stack of Hermitian matrices to rows of tr(A E_j) coefficients."""
    J = A.shape[0]
    out = np.empty((J, M * M))
    out[:, :M] = np.real(A[:, np.arange(M), np.arange(M)])
    for t, (m, p) in enumerate(pairs):
        out[:, M + 2 * t] = 2 * A[:, m, p].real
        out[:, M + 2 * t + 1] = 2 * A[:, m, p].imag
    return out


def logdet_grad_hess(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and Hessian of -log det(Q + eps I) at S = (Q + eps I)^-1,
    in the Hermitian real parameterization."""
    M = S.shape[0]
    pairs = herm_pairs(M)
    grad = -_extract_rows(S[None, :, :], M, pairs)[0]
    # T[m, p] = s_m s_p^H with s_m the m-th column of S
    T = np.einsum("im,jp->mpij", S, S.conj())
    A = np.empty((M * M, M, M), dtype=complex)
    A[:M] = T[np.arange(M), np.arange(M)]
    for t, (m, p) in enumerate(pairs):
        A[M + 2 * t] = T[m, p] + T[p, m]
        A[M + 2 * t + 1] = 1j * (T[m, p] - T[p, m])
    hess = _extract_rows(A, M, pairs)
    return grad, hess


# ---------------------------------------------------------------------------
# Subproblem description


@dataclass
class LinearIneq:
    """c + w.x <= 0"""

    const: float
    coef: np.ndarray
    label: tuple = ()


@dataclass
class LogIneq:
    """c + w.x - log2(zc + zw.x) <= 0"""

    const: float
    coef: np.ndarray
    log_const: float
    log_coef: np.ndarray
    label: tuple = ()

    def value(self, x: np.ndarray) -> float:
        return float(
            self.const
            + self.coef @ x
            - np.log2(self.log_const + self.log_coef @ x)
        )


@dataclass
class ConvexSubproblem:
    """A convex program over Hermitian PSD blocks plus scalars."""

    M: int
    blocks: tuple[int, ...]
    scalar_keys: tuple
    maximize: bool
    obj_const: float
    obj_coef: np.ndarray
    lin: list[LinearIneq]
    logs: list[LogIneq]
    x0: np.ndarray

    @property
    def n_mat(self) -> int:
        return len(self.blocks) * self.M * self.M

    @property
    def num_variables(self) -> int:
        return self.n_mat + len(self.scalar_keys)

    @property
    def num_psd_blocks(self) -> int:
        return len(self.blocks)

    @property
    def num_rate_constraints(self) -> int:
        return len(self.logs)

    def scalar_index(self, key) -> int:
        return self.n_mat + self.scalar_keys.index(key)

    def matrices(self, x: np.ndarray) -> dict[int, np.ndarray]:
        ms = self.M * self.M
        return {
            s: vec_to_herm(x[b * ms : (b + 1) * ms], self.M)
            for b, s in enumerate(self.blocks)
        }

    def scalars(self, x: np.ndarray) -> dict:
        return dict(zip(self.scalar_keys, x[self.n_mat :]))


@dataclass
class SolverSettings:
    """Interior-point tuning knobs; defaults match the package contract."""

    tol: float = 1e-7
    barrier_mu: float = 10.0
    max_newton: int = 200
    eps_psd: float = 1e-9
    armijo_c: float = 0.3
    armijo_shrink: float = 0.5
    # slacks at tight stages carry ~1e-15 absolute noise, so decrements
    # below ~1e-11 are unreachable; 1e-9 leaves margin and still certifies
    newton_tol: float = 1e-9
    max_stages: int = 60
    t0: float | None = None

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class IpmResult:
    x: np.ndarray
    objective: float
    matrices: dict[int, np.ndarray]
    scalars: dict
    gap: float
    t_final: float
    newton_iters: int
    stages: int


def _solve_spd(H: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # Jacobi scaling: barrier Hessians mix block curvatures ~1/eps^2 with
    # rate curvatures ~1; equilibration keeps Cholesky accurate across that
    d = np.sqrt(np.maximum(np.abs(np.diag(H)), 1e-300))
    Hs = H / np.outer(d, d)
    rs = rhs / d
    ridge = 0.0
    for _ in range(8):
        try:
            cf = scipy.linalg.cho_factor(
                Hs + ridge * np.eye(H.shape[0]) if ridge else Hs,
                lower=True,
                check_finite=False,
            )
            return scipy.linalg.cho_solve(cf, rs, check_finite=False) / d
        except scipy.linalg.LinAlgError:
            ridge = 1e-13 if ridge == 0.0 else ridge * 100.0
    raise NumericalFailure("Newton system not positive definite")


def solve(sub: ConvexSubproblem, settings: SolverSettings | None = None) -> IpmResult:
    """Barrier-solve the subproblem from its strictly feasible x0."""
    settings = settings or SolverSettings()
    M = sub.M
    msize = M * M
    nmat = len(sub.blocks)
    n = sub.num_variables
    eps = settings.eps_psd
    eye = np.eye(M)

    sign = -1.0 if sub.maximize else 1.0
    cobj = sign * np.asarray(sub.obj_coef, dtype=float)

    n_lin, n_log = len(sub.lin), len(sub.logs)
    Wlin = np.array([c.coef for c in sub.lin]).reshape(n_lin, n) if n_lin else np.zeros((0, n))
    clin = np.array([c.const for c in sub.lin]) if n_lin else np.zeros(0)
    Wlog = np.array([c.coef for c in sub.logs]).reshape(n_log, n) if n_log else np.zeros((0, n))
    clog = np.array([c.const for c in sub.logs]) if n_log else np.zeros(0)
    Zlog = np.array([c.log_coef for c in sub.logs]).reshape(n_log, n) if n_log else np.zeros((0, n))
    zc = np.array([c.log_const for c in sub.logs]) if n_log else np.zeros(0)

    def evaluate(x):
        """Constraint values and block Cholesky factors; None if out of domain."""
        glin = clin + Wlin @ x
        if glin.size and glin.max() >= 0:
            return None
        z = zc + Zlog @ x
        if z.size and z.min() <= 0:
            return None
        glog = clog + Wlog @ x - np.log2(z) if n_log else np.zeros(0)
        if glog.size and glog.max() >= 0:
            return None
        chols = []
        for b in range(nmat):
            Qb = vec_to_herm(x[b * msize : (b + 1) * msize], M) + eps * eye
            try:
                chols.append(np.linalg.cholesky(Qb))
            except np.linalg.LinAlgError:
                return None
        return glin, glog, z, chols

    def barrier(ev):
        glin, glog, z, chols = ev
        val = 0.0
        if glin.size:
            val -= float(np.sum(np.log(-glin)))
        if glog.size:
            val -= float(np.sum(np.log(-glog)))
        for L in chols:
            val -= 2.0 * float(np.sum(np.log(np.real(np.diag(L)))))
        return val

    def barrier_grad_hess(x, ev):
        glin, glog, z, chols = ev
        g = np.zeros(n)
        H = np.zeros((n, n))
        if n_lin:
            inv = 1.0 / (-glin)
            g += Wlin.T @ inv
            H += (Wlin * (inv**2)[:, None]).T @ Wlin
        if n_log:
            Geff = Wlog - Zlog / (z * LN2)[:, None]
            inv = 1.0 / (-glog)
            g += Geff.T @ inv
            H += (Geff * (inv**2)[:, None]).T @ Geff
            H += (Zlog * (inv / (LN2 * z**2))[:, None]).T @ Zlog
        for b in range(nmat):
            L = chols[b]
            Sinv = scipy.linalg.cho_solve((L, True), eye.astype(complex), check_finite=False)
            Sinv = (Sinv + Sinv.conj().T) / 2.0
            gb, Hb = logdet_grad_hess(Sinv)
            sl = slice(b * msize, (b + 1) * msize)
            g[sl] += gb
            H[sl, sl] += Hb
        return g, H

    x = np.asarray(sub.x0, dtype=float).copy()
    ev = evaluate(x)
    if ev is None:
        raise InfeasibleStart("starting point is not strictly feasible")

    nu = n_lin + n_log + M * nmat
    if settings.t0 is not None:
        t = float(settings.t0)
    else:
        # Balance t * ||grad f|| against ||grad phi||, discounted by how well
        # the barrier gradient already points along the central-path direction
        # -grad f; a misaligned (e.g. nearly-singular-block) gradient must not
        # inflate t or warm starts overshoot the new central path.
        g0, _ = barrier_grad_hess(x, ev)
        cnorm = max(float(np.linalg.norm(cobj)), 1e-12)
        gnorm = float(np.linalg.norm(g0))
        align = max(float(-cobj @ g0) / (cnorm * max(gnorm, 1e-300)), 1e-3)
        t = float(np.clip(align * (1.0 + gnorm) / (1.0 + cnorm), 1e-3, 1e9))

    def step_delta(ev, d, wlin_d, wlog_d, zlog_d, cobj_d, t, x, alpha):
        """F(x + alpha d) - F(x) in cancellation-free form, or None if the
        trial point leaves the domain. At tight stages F is ~t*|obj| while
        the decrements being chased are ~1/t, far below float resolution of
        F itself; differences of log terms via log1p keep full precision."""
        glin_x, glog_x, z_x, _ = ev
        dglin = alpha * wlin_d
        if dglin.size and np.max(glin_x + dglin) >= 0:
            return None, None
        dz = alpha * zlog_d
        if dz.size:
            z_c = z_x + dz
            if np.min(z_c) <= 0:
                return None, None
            dglog = alpha * wlog_d - np.log1p(dz / z_x) / LN2
            if np.max(glog_x + dglog) >= 0:
                return None, None
        else:
            dglog = np.zeros(0)
        dphi = 0.0
        if dglin.size:
            u = dglin / glin_x
            if np.min(u) <= -1.0:
                return None, None
            dphi -= float(np.sum(np.log1p(u)))
        if dglog.size:
            u = dglog / glog_x
            if np.min(u) <= -1.0:
                return None, None
            dphi -= float(np.sum(np.log1p(u)))
        chols_c = []
        xc = x + alpha * d
        for b in range(nmat):
            Qb = vec_to_herm(xc[b * msize : (b + 1) * msize], M) + eps * eye
            try:
                L = np.linalg.cholesky(Qb)
            except np.linalg.LinAlgError:
                return None, None
            chols_c.append(L)
        for Lc, Lx in zip(chols_c, ev[3]):
            dphi -= 2.0 * float(
                np.sum(np.log(np.real(np.diag(Lc)))) - np.sum(np.log(np.real(np.diag(Lx))))
            )
        return t * alpha * cobj_d + dphi, chols_c

    def center(x, ev, t):
        """Damped Newton to the central point at t; returns final decrement."""
        nonlocal total_newton
        decrement = np.inf
        for it in range(settings.max_newton):
            g, H = barrier_grad_hess(x, ev)
            g = g + t * cobj
            d = _solve_spd(H, -g)
            lam2 = float(-g @ d)
            decrement = lam2 / 2.0
            if lam2 <= 0 or decrement <= settings.newton_tol:
                break
            if it >= 40 and decrement > 1e3:
                break  # hopelessly far from this t's center; caller backs off
            total_newton += 1
            wlin_d = Wlin @ d
            wlog_d = Wlog @ d
            zlog_d = Zlog @ d
            cobj_d = float(cobj @ d)
            gd = float(g @ d)
            alpha = 1.0
            moved = False
            while alpha > 1e-16:
                dF, _ = step_delta(ev, d, wlin_d, wlog_d, zlog_d, cobj_d, t, x, alpha)
                if dF is not None and dF <= settings.armijo_c * alpha * gd:
                    x = x + alpha * d
                    ev = evaluate(x)
                    moved = ev is not None
                    break
                alpha *= settings.armijo_shrink
            if not moved:
                break
        return x, ev, decrement

    total_newton = 0
    stages = 0
    retries = 0
    while True:
        stages += 1
        if stages > settings.max_stages:
            raise NumericalFailure("barrier stage budget exhausted")
        x, ev, last_decrement = center(x, ev, t)
        if last_decrement > 1e-4:  # a decrement this small still certifies nu/t to ~1%
            retries += 1
            if retries > 10 or t <= 1e-6:
                raise NumericalFailure(
                    f"centering failed (decrement {last_decrement:.2e} at t={t:.2e})"
                )
            t = max(t / 10.0, 1e-6)
            continue
        if nu / t < settings.tol:
            break
        t *= settings.barrier_mu

    objective = float(sub.obj_const + np.asarray(sub.obj_coef) @ x)
    return IpmResult(
        x=x,
        objective=objective,
        matrices=sub.matrices(x),
        scalars=sub.scalars(x),
        gap=nu / t,
        t_final=t,
        newton_iters=total_newton,
        stages=stages,
    )


# ---------------------------------------------------------------------------
# Rate-only LPs shared with the rates module


def _metric_objective(scalar_keys, metric, K):
    coef = np.zeros(len(scalar_keys))
    if metric.metric == "SR":
        for i, key in enumerate(scalar_keys):
            if key[0] in ("R", "r"):
                coef[i] = 1.0
    elif metric.metric == "WSR":
        for i, key in enumerate(scalar_keys):
            if key[0] == "r":
                coef[i] = metric.weights[key[1]]
    elif metric.metric == "WUR":
        coef[scalar_keys.index(("y",))] = 1.0
    else:
        raise ValueError(f"metric {metric.metric} has no rate objective")
    return coef


def _rate_lp(scalar_keys, rows, metric, K, caps_like=True):
    """Assemble an LP over rate scalars: each row is (indices, rhs) meaning
    sum of the indexed variables <= rhs. Adds nonnegativity and, for WUR,
    the slack lower-bound rows."""
    nv = len(scalar_keys)
    lin: list[LinearIneq] = []
    rhs_floor = np.inf
    for idx, rhs in rows:
        w = np.zeros(nv)
        w[idx] = 1.0
        lin.append(LinearIneq(-float(rhs), w))
        if idx:
            rhs_floor = min(rhs_floor, rhs / (2.0 * len(idx)))
    for i, key in enumerate(scalar_keys):
        if key[0] in ("R", "r"):
            w = np.zeros(nv)
            w[i] = -1.0
            lin.append(LinearIneq(0.0, w))
    if metric.metric == "WUR":
        yi = scalar_keys.index(("y",))
        for k in range(K):
            w = np.zeros(nv)
            w[yi] = 1.0
            for i, key in enumerate(scalar_keys):
                if key[0] == "r" and key[1] == k:
                    w[i] = -1.0
            lin.append(LinearIneq(0.0, w))
    x0 = np.zeros(nv)
    feas = 0.4 * rhs_floor if np.isfinite(rhs_floor) else 1e-3
    feas = max(min(feas, 1.0), 1e-12)
    for i, key in enumerate(scalar_keys):
        if key[0] in ("R", "r"):
            x0[i] = feas
    if metric.metric == "WUR":
        per_user = [
            sum(x0[i] for i, key in enumerate(scalar_keys) if key[0] == "r" and key[1] == k)
            for k in range(K)
        ]
        x0[scalar_keys.index(("y",))] = 0.5 * min(per_user) if min(per_user) > 0 else -1.0
    coef = _metric_objective(scalar_keys, metric, K)
    return ConvexSubproblem(
        M=1,
        blocks=(),
        scalar_keys=scalar_keys,
        maximize=True,
        obj_const=0.0,
        obj_coef=coef,
        lin=lin,
        logs=[],
        x0=x0,
    )


def jd_rate_lp(channels, Q, metric, robust):
    """LP over the joint-decoding rate region evaluated at a fixed precoder."""
    from .rates import enumerate_jd_constraints, jd_rhs

    K = channels.K
    active = Q.collection()
    # streams with (numerically) zero single-stream bound carry zero rate;
    # excluding them keeps the LP interior nonempty
    dead = set()
    for s in active:
        users = [k for k in range(K) if s >> k & 1]
        if min(jd_rhs(channels, Q, k, (s,), robust) for k in users) < 1e-12:
            dead.add(s)
    live = [s for s in active if s not in dead]

    if metric.metric == "SR":
        scalar_keys = tuple(("R", s) for s in live)
    else:
        scalar_keys = tuple(
            ("r", k, s) for s in live for k in range(K) if s >> k & 1
        )
        if metric.metric == "WUR":
            scalar_keys = scalar_keys + (("y",),)

    rows = []
    for k, subset in enumerate_jd_constraints(active, K):
        rhs = jd_rhs(channels, Q, k, subset, robust)
        if metric.metric == "SR":
            idx = [scalar_keys.index(("R", s)) for s in subset if s in live]
        else:
            idx = [
                i
                for i, key in enumerate(scalar_keys)
                if key[0] == "r" and key[2] in subset
            ]
        if idx:  # rows over excluded (zero-rate) streams only are vacuous
            rows.append((idx, rhs))
    return _rate_lp(scalar_keys, rows, metric, K)


def split_allocation_subproblem(stream_caps: dict[int, float], metric, K: int):
    """Distribute fixed per-stream budgets over per-user splits."""
    live = [s for s, cap in stream_caps.items() if cap > 1e-12]
    scalar_keys = tuple(("r", k, s) for s in sorted(live) for k in range(K) if s >> k & 1)
    if metric.metric == "WUR":
        scalar_keys = scalar_keys + (("y",),)
    rows = []
    for s in sorted(live):
        idx = [i for i, key in enumerate(scalar_keys) if key[0] == "r" and key[2] == s]
        rows.append((idx, stream_caps[s]))
    return _rate_lp(scalar_keys, rows, metric, K)
