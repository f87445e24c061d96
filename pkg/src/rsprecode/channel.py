"""Channel generation: i.i.d. Rayleigh fading, one-ring correlated groups,
and the imperfect-CSIT split used by the robust design path.

The base station has M antennas; each of the K single-antenna users sees
a complex channel vector (column of H). Noise is normalized to unit
variance so powers are SNR-scaled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .rng import complex_normal, stream

#: One-ring eigenvalues at or below this are treated as zero.
EIG_THRESHOLD = 1e-10
#: Most-negative eigenvalue tolerated before PSD clipping is refused.
PSD_TOLERANCE = 1e-8
#: Quadrature refinement target (max entrywise change between refinements).
QUAD_TOL = 1e-10


@dataclass(frozen=True)
class ChannelSet:
    """Complex M x K channel matrix; column k is user k's vector h_k."""

    H: np.ndarray
    groups: tuple[int, ...] | None = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise ValueError(f"H must be a nonempty 2-D matrix, got shape {H.shape}")
        if not np.all(np.isfinite(H.view(float))):
            raise ValueError("channel matrix has non-finite entries")
        object.__setattr__(self, "H", H)
        if self.groups is not None and len(self.groups) != H.shape[1]:
            raise ValueError("group assignment length must equal K")

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    def h(self, k: int) -> np.ndarray:
        return self.H[:, k]


@dataclass(frozen=True)
class OneRingScenario:
    """Uniform-linear-array one-ring scattering with G user groups.

    thetas: per-group azimuth (radians); delta: angular spread, shared or
    per group; spacing: antenna spacing in carrier wavelengths;
    group_sizes: fixed K_g per group, or None for uniform random
    assignment of each user to a group.
    """

    thetas: tuple[float, ...]
    delta: float | tuple[float, ...] = 5 * np.pi / 180
    spacing: float = 0.5
    group_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        if not self.thetas:
            raise ValueError("at least one group azimuth required")
        deltas = self.deltas
        if any(not 0 < d < np.pi / 2 for d in deltas):
            raise ValueError("angular spread must lie in (0, pi/2)")
        if not self.spacing > 0:
            raise ValueError("antenna spacing must be positive")
        if self.group_sizes is not None:
            sizes = tuple(int(s) for s in self.group_sizes)
            if len(sizes) != len(self.thetas) or any(s < 0 for s in sizes):
                raise ValueError("group_sizes must give one nonnegative count per group")
            object.__setattr__(self, "group_sizes", sizes)

    @property
    def G(self) -> int:
        return len(self.thetas)

    @property
    def deltas(self) -> tuple[float, ...]:
        if isinstance(self.delta, (tuple, list)):
            if len(self.delta) != len(self.thetas):
                raise ValueError("per-group delta must match the number of groups")
            return tuple(float(d) for d in self.delta)
        return (float(self.delta),) * len(self.thetas)


@dataclass(frozen=True)
class CsitSplit:
    """True channel, its estimate at the transmitter, and the error variance."""

    H_true: ChannelSet
    H_est: ChannelSet
    sigma2: float

    def __post_init__(self):
        if self.H_true.H.shape != self.H_est.H.shape:
            raise ValueError("true and estimated channels must share dimensions")
        if not 0.0 <= self.sigma2 <= 1.0:
            raise ValueError("sigma2 must lie in [0, 1]")


def one_ring_covariance(theta: float, delta: float, spacing: float, M: int) -> np.ndarray:
    """Toeplitz one-ring covariance for a ULA.

    [R]_{m,p} = (1/2*delta) * integral_{theta-delta}^{theta+delta}
                exp(-j*2*pi*spacing*(m-p)*sin(a)) da,
    evaluated by composite Gauss-Legendre quadrature, panels doubled until
    successive estimates agree to 1e-10 per entry. The result is clipped
    to the PSD cone (eigenvalues above -1e-8 floored at zero).
    """
    for name, val in (("theta", theta), ("delta", delta), ("spacing", spacing)):
        if not np.isfinite(val):
            raise ValueError(f"{name} must be finite")
    if delta <= 0:
        raise ValueError("angular spread must be positive")
    if M < 1:
        raise ValueError("M must be at least 1")

    lags = np.arange(M)
    nodes, weights = leggauss(16)

    def estimate(panels: int) -> np.ndarray:
        # panel geometry in offset coordinates so tiny spreads keep full precision
        edges = np.linspace(-delta, delta, panels + 1)
        half = np.diff(edges) / 2.0
        mid = theta + (edges[:-1] + edges[1:]) / 2.0
        # alpha[i, j]: node j of panel i, w[i, j]: its weight
        alpha = mid[:, None] + half[:, None] * nodes[None, :]
        w = half[:, None] * weights[None, :]
        phase = np.exp(-1j * 2 * np.pi * spacing * np.outer(lags, np.sin(alpha).ravel()))
        return phase @ w.ravel() / (2 * delta)

    panels = 1
    prev = estimate(panels)
    while True:
        panels *= 2
        cur = estimate(panels)
        if np.max(np.abs(cur - prev)) < QUAD_TOL:
            break
        if panels > 1 << 16:
            raise ArithmeticError("one-ring quadrature failed to converge")
        prev = cur

    first_col = cur
    R = np.empty((M, M), dtype=complex)
    for m in range(M):
        for p in range(M):
            d = m - p
            R[m, p] = first_col[d] if d >= 0 else np.conj(first_col[-d])

    eigvals = np.linalg.eigvalsh(R)
    if eigvals[0] < -PSD_TOLERANCE:
        raise ArithmeticError(
            f"one-ring covariance indefinite beyond tolerance (min eig {eigvals[0]:.3e})"
        )
    if eigvals[0] < 0:
        w_, V = np.linalg.eigh(R)
        R = (V * np.clip(w_, 0.0, None)) @ V.conj().T
        R = (R + R.conj().T) / 2.0
    return R


def group_eigenbasis(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a group covariance with eigenvalues above threshold.

    Returns (U, lam) with U of shape M x r, lam descending, r >= 1.
    """
    w, V = np.linalg.eigh(R)
    keep = w > EIG_THRESHOLD
    if not np.any(keep):
        raise ValueError("group covariance has no eigenvalues above threshold")
    idx = np.argsort(w[keep])[::-1]
    return V[:, keep][:, idx], w[keep][idx]


def draw_channels(scenario: OneRingScenario | None, K: int, M: int, seed: int) -> ChannelSet:
    """Draw one channel realization, deterministically from the seed.

    scenario None means i.i.d. CN(0,1) entries. With a OneRingScenario,
    user k in group g gets h_k = U_g diag(sqrt(lam_g)) w_k over the
    retained eigenpairs of the group covariance.
    """
    if K < 1 or M < 1:
        raise ValueError("K and M must be positive")
    if scenario is None:
        rng = stream(seed, "channel")
        return ChannelSet(complex_normal(rng, (M, K)))

    if scenario.group_sizes is not None:
        if sum(scenario.group_sizes) != K:
            raise ValueError("fixed group sizes must sum to K")
        assignment = np.repeat(np.arange(scenario.G), scenario.group_sizes)
    else:
        assignment = stream(seed, "groups").integers(0, scenario.G, size=K)

    deltas = scenario.deltas
    bases = {}
    for g in sorted(set(int(a) for a in assignment)):
        R = one_ring_covariance(scenario.thetas[g], deltas[g], scenario.spacing, M)
        bases[g] = group_eigenbasis(R)

    rng = stream(seed, "channel")
    H = np.empty((M, K), dtype=complex)
    for k in range(K):
        U, lam = bases[int(assignment[k])]
        w = complex_normal(rng, len(lam))
        H[:, k] = U @ (np.sqrt(lam) * w)
    return ChannelSet(H, groups=tuple(int(a) for a in assignment))


def apply_csit_error(K: int, M: int, sigma2: float, seed: int) -> CsitSplit:
    """Draw an i.i.d. channel together with its imperfect transmitter-side estimate.

    The estimate has CN(0, 1-sigma2) entries and the error CN(0, sigma2),
    drawn from two independent streams of the seeded generator; the true
    channel is their sum (unit total variance).
    """
    if not 0.0 <= sigma2 <= 1.0:
        raise ValueError("sigma2 must lie in [0, 1]")
    est = complex_normal(stream(seed, "csit-est"), (M, K), var=1.0 - sigma2)
    err = complex_normal(stream(seed, "csit-err"), (M, K), var=sigma2)
    return CsitSplit(ChannelSet(est + err), ChannelSet(est.copy()), float(sigma2))
