"""Stream-set combinatorics for rate splitting.

A stream is the nonempty set of users that must decode it, encoded as a
bitmask over 0-based user indices (bit k set <=> user k+1 in the 1-based
external notation). All enumerations use one canonical order, ascending
cardinality then ascending bitmask, so results are reproducible
byte-for-byte.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

#: Bitmask streams are kept inside a 16-bit word by default.
K_MAX = 16


def stream_card(s: int) -> int:
    """Number of users the stream serves."""
    return int(s).bit_count()


def stream_users(s: int) -> tuple[int, ...]:
    """0-based user indices of a stream bitmask, ascending."""
    return tuple(k for k in range(int(s).bit_length()) if s >> k & 1)


def canonical_key(s: int) -> tuple[int, int]:
    return (stream_card(s), s)


def format_stream(s: int) -> str:
    """Serialize as a sorted 1-based user list, e.g. "{1,3,4}"."""
    return "{" + ",".join(str(u + 1) for u in stream_users(s)) + "}"


def parse_stream(text: str) -> int:
    users = [int(tok) for tok in text.strip().strip("{}").split(",") if tok]
    if not users or min(users) < 1:
        raise ValueError(f"invalid stream serialization: {text!r}")
    mask = 0
    for u in users:
        mask |= 1 << (u - 1)
    return mask


@dataclass(frozen=True)
class StreamCollection:
    """An ordered, duplicate-free set of streams with a per-cardinality view."""

    streams: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.streams)) != len(self.streams):
            raise ValueError("duplicate streams in collection")
        if any(s <= 0 for s in self.streams):
            raise ValueError("streams must be nonempty user subsets")
        if list(self.streams) != sorted(self.streams, key=canonical_key):
            raise ValueError("collection not in canonical order; use StreamCollection.of")

    @classmethod
    def of(cls, streams) -> "StreamCollection":
        return cls(tuple(sorted(set(int(s) for s in streams), key=canonical_key)))

    def layers(self) -> dict[int, tuple[int, ...]]:
        """Partition by cardinality; layer c holds the streams serving c users."""
        out: dict[int, list[int]] = {}
        for s in self.streams:
            out.setdefault(stream_card(s), []).append(s)
        return {c: tuple(v) for c, v in out.items()}

    def for_user(self, k: int) -> tuple[int, ...]:
        """Streams that user k (0-based) must decode, canonical order."""
        return tuple(s for s in self.streams if s >> k & 1)

    def __iter__(self):
        return iter(self.streams)

    def __len__(self):
        return len(self.streams)

    def __contains__(self, s):
        return s in self.streams

    def serialize(self) -> list[str]:
        return [format_stream(s) for s in self.streams]


def enumerate_streams(K: int) -> StreamCollection:
    """All 2^K - 1 nonempty user subsets in canonical order."""
    if not 1 <= K <= K_MAX:
        raise ValueError(f"K must be in [1, {K_MAX}], got {K}")
    return StreamCollection.of(range(1, 2**K))


def user_collection(K: int, k: int) -> StreamCollection:
    """The 2^(K-1) subsets containing user k (0-based)."""
    if not 0 <= k < K:
        raise ValueError(f"user index {k} out of range for K={K}")
    full = enumerate_streams(K)
    return StreamCollection.of(full.for_user(k))


def _mmse_stream_gains(H: np.ndarray, P: float, collection) -> dict[int, float]:
    """Heuristic per-stream beam gains under an equal-power MMSE-style precoder.

    Each stream K gets the unit beam along the regularized inverse applied
    to the sum of its members' channels; the gain is the total received
    signal power sum_{k in K} |h_k^H v_K|^2 at power P/len(collection).
    """
    M, K = H.shape
    A = np.linalg.inv(H @ H.conj().T + (K / max(P, 1e-12)) * np.eye(M))
    p_each = P / len(collection)
    gains = {}
    for s in collection:
        users = stream_users(s)
        d = A @ H[:, list(users)].sum(axis=1)
        nrm = np.linalg.norm(d)
        if nrm < 1e-300:
            gains[s] = 0.0
            continue
        v = d / nrm
        gains[s] = float(p_each * sum(abs(H[:, u].conj() @ v) ** 2 for u in users))
    return gains


def sea_reduce(channels, P: float, n_sea: int, mode: str = "power-rank") -> StreamCollection:
    """Reduce the 2^K - 1 candidate streams to at most n_sea survivors.

    All K singleton streams always survive. `power-rank` drops the
    non-singleton streams with the weakest heuristic beam gain until the
    budget is met; `greedy-reopt` repeatedly removes the non-singleton
    whose removal least hurts a one-shot optimized sum-rate surrogate.
    Deterministic given (channels, P, n_sea, mode).
    """
    H = channels.H
    K = channels.K
    if n_sea < K:
        raise ValueError(f"n_sea={n_sea} below the user count {K}; singletons must survive")
    full = enumerate_streams(K)
    if len(full) <= n_sea:
        return full

    if mode == "power-rank":
        gains = _mmse_stream_gains(H, P, full)
        keep = [s for s in full if stream_card(s) == 1]
        common = [s for s in full if stream_card(s) > 1]
        # strongest first; canonical key breaks exact ties reproducibly
        common.sort(key=lambda s: (-gains[s], canonical_key(s)))
        keep += common[: n_sea - K]
        return StreamCollection.of(keep)

    if mode == "greedy-reopt":
        from . import optimizer  # deferred: optimizer depends on this module

        current = list(full.streams)
        while len(current) > n_sea:
            candidates = [s for s in current if stream_card(s) > 1]
            best = None
            for s in candidates:
                trial = StreamCollection.of(c for c in current if c != s)
                val = optimizer.sum_rate_surrogate(channels, P, trial)
                if best is None or val > best[0] + 1e-12:
                    best = (val, s)
            current.remove(best[1])
        return StreamCollection.of(current)

    raise ValueError(f"unknown SEA mode {mode!r}")


@lru_cache(maxsize=4096)
def _maximal_disjoint(cands: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    """All maximal pairwise-disjoint sub-collections of one cardinality layer.

    Bron-Kerbosch on the disjointness graph: a maximal clique there is
    exactly a pairwise-disjoint set to which no further candidate can be
    added without overlap.
    """
    results: list[tuple[int, ...]] = []

    def bk(chosen: list[int], allowed: list[int], excluded: list[int]):
        if not allowed and not excluded:
            results.append(tuple(sorted(chosen, key=canonical_key)))
            return
        for v in list(allowed):
            bk(
                chosen + [v],
                [u for u in allowed if u & v == 0],
                [u for u in excluded if u & v == 0],
            )
            allowed.remove(v)
            excluded.append(v)

    bk([], sorted(cands, key=canonical_key), [])
    return tuple(sorted(results))


def max_nonoverlapping_collections(S: StreamCollection) -> tuple[StreamCollection, ...]:
    """Enumerate every maximum non-overlapping sub-collection of S.

    Per cardinality layer, list all maximal pairwise-disjoint choices;
    the result is the cross-product across layers (empty layers
    contribute the single empty choice).
    """
    if len(S) == 0:
        raise ValueError("empty stream collection")
    layers = S.layers()
    per_layer = [_maximal_disjoint(tuple(layers[c])) for c in sorted(layers)]
    out = []
    for combo in itertools.product(*per_layer):
        out.append(StreamCollection.of(itertools.chain.from_iterable(combo)))
    return tuple(out)


def decoding_order(S_tilde: StreamCollection, k: int) -> tuple[int, ...]:
    """User k's successive-decoding order: its streams by descending cardinality.

    Requires at most one stream per layer containing k, which every
    maximum non-overlapping collection guarantees.
    """
    mine = [s for s in S_tilde if s >> k & 1]
    cards = [stream_card(s) for s in mine]
    if len(set(cards)) != len(cards):
        raise ValueError(
            f"user {k + 1} appears in two streams of equal cardinality; "
            "collection is not non-overlapping"
        )
    return tuple(sorted(mine, key=lambda s: -stream_card(s)))
