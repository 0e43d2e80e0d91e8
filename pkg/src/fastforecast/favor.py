"""FAVOR+ linear attention: positive orthogonal random features.

The softmax kernel exp(xᵀy) is estimated by E[φ(x)ᵀφ(y)] with the positive
feature map

    φ(x) = r^{-1/2} · exp(-‖x‖²/2) · [exp(ω_iᵀ x)]_{i=1..r}

where the projection rows ω_i are Gaussian directions, orthogonalised in
blocks of d_k rows (Gram–Schmidt) with norms re-sampled from the χ
distribution of a standard d_k-dimensional Gaussian.  Queries and keys are
scaled by d_k^{-1/4} before the map, so the estimated attention matrix is
exp(q_i k_jᵀ/√d_k) — the same kernel the exact path computes.

Both attention variants stay linear in sequence length: the bidirectional
form contracts K̂ᵀV and K̂ᵀ1 first; the causal form carries running prefix
sums.  No L×L buffer is ever materialised.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import EXP_CLAMP, Tensor

# denominators φ(q)ᵀz are mathematically positive; this floor only guards
# against float underflow, and trips the diagnostics counter when hit
DENOM_FLOOR = 1e-30


@dataclass
class Diagnostics:
    """Counters for numerical guard rails (per process, best effort)."""

    exp_clamped: int = 0
    denom_floored: int = 0

    def reset(self) -> None:
        self.exp_clamped = 0
        self.denom_floored = 0


DIAGNOSTICS = Diagnostics()


@dataclass(frozen=True)
class FavorConfig:
    """Random-feature attention settings."""

    r: int
    d_k: int
    seed: int
    causal: bool = False
    redraw_interval: int | None = None

    def __post_init__(self):
        if self.r < 1:
            raise ConfigError("random-feature count r must be >= 1")
        if self.d_k < 1:
            raise ConfigError("d_k must be >= 1")
        if self.redraw_interval is not None and self.redraw_interval < 1:
            raise ConfigError("redraw_interval must be >= 1 when set")


@dataclass(frozen=True)
class RandomFeatureMap:
    """Frozen projection matrix Ω (r × d_k) plus its normaliser 1/√r."""

    omega: np.ndarray

    @property
    def r(self) -> int:
        return self.omega.shape[0]

    @property
    def d_k(self) -> int:
        return self.omega.shape[1]


def _gram_schmidt(block: np.ndarray) -> np.ndarray:
    """Orthonormalise the rows of a square block (modified Gram–Schmidt)."""
    q = block.copy()
    n = q.shape[0]
    for i in range(n):
        for j in range(i):
            q[i] -= (q[i] @ q[j]) * q[j]
        norm = np.linalg.norm(q[i])
        if norm < 1e-12:
            raise ConfigError("degenerate Gaussian block during orthogonalisation")
        q[i] /= norm
    return q


def draw_features(cfg: FavorConfig) -> RandomFeatureMap:
    """Sample Ω: blockwise-orthogonal Gaussian directions with χ-resampled norms.

    Deterministic for a given seed.  For r <= d_k all rows are pairwise
    orthogonal; for larger r each consecutive block of d_k rows is.
    """
    rng = np.random.default_rng(cfg.seed)
    blocks = []
    remaining = cfg.r
    while remaining > 0:
        g = rng.standard_normal((cfg.d_k, cfg.d_k))
        q = _gram_schmidt(g)
        take = min(remaining, cfg.d_k)
        blocks.append(q[:take])
        remaining -= take
    directions = np.vstack(blocks)
    # norms of independent standard Gaussians keep the χ marginal
    norms = np.linalg.norm(rng.standard_normal((cfg.r, cfg.d_k)), axis=1)
    return RandomFeatureMap(directions * norms[:, None])


def phi_positive(x: Tensor, fm: RandomFeatureMap) -> Tensor:
    """Apply φ row-wise: (L, d_k) -> (L, r), strictly positive output.

    Exponents are clamped at EXP_CLAMP; a clamp event is counted in
    DIAGNOSTICS.exp_clamped (it indicates inputs far outside the intended
    scale).
    """
    if x.data.ndim != 2 or x.shape[1] != fm.d_k:
        raise ShapeError(f"phi expects (L, {fm.d_k}), got {x.shape}")
    proj = T.matmul(x, Tensor(fm.omega.T))  # (L, r)
    sq_half = T.scale(T.rowsum(T.mul(x, x)), 0.5)  # (L, 1)
    arg = T.add_rowwise(proj, -sq_half)
    clamped = int(np.count_nonzero(arg.data >= EXP_CLAMP))
    if clamped:
        DIAGNOSTICS.exp_clamped += clamped
    return T.scale(T.exp_clamped(arg), 1.0 / math.sqrt(fm.r))


def _check_favor_inputs(q: Tensor, k: Tensor, v: Tensor, fm: RandomFeatureMap) -> None:
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("favor attention expects rank-2 Q, K, V")
    if q.shape[1] != fm.d_k or k.shape[1] != fm.d_k:
        raise ShapeError(f"Q/K width must equal feature-map d_k = {fm.d_k}")
    if not (q.shape[0] == k.shape[0] == v.shape[0]):
        raise ShapeError("Q, K, V must share the sequence length")


def _features(q: Tensor, k: Tensor, fm: RandomFeatureMap):
    scale = fm.d_k ** -0.25
    q_hat = phi_positive(T.scale(q, scale), fm)
    k_hat = phi_positive(T.scale(k, scale), fm)
    return q_hat, k_hat


def _floor_denominator(den: Tensor) -> Tensor:
    floored = int(np.count_nonzero(den.data <= DENOM_FLOOR))
    if floored:
        DIAGNOSTICS.denom_floored += floored
    return T.clip_min(den, DENOM_FLOOR)


def favor_bidirectional(q: Tensor, k: Tensor, v: Tensor, fm: RandomFeatureMap) -> Tensor:
    """D̂⁻¹ (Q̂ (K̂ᵀ V)); O(L·r·d) time, no L×L intermediate."""
    _check_favor_inputs(q, k, v, fm)
    q_hat, k_hat = _features(q, k, fm)
    kv = T.matmul(T.transpose(k_hat), v)  # (r, d_v)
    num = T.matmul(q_hat, kv)  # (L, d_v)
    z = T.transpose(T.colsum(k_hat))  # (r, 1) = K̂ᵀ·1
    den = _floor_denominator(T.matmul(q_hat, z))  # (L, 1)
    return T.scale_rowwise(num, T.recip(den))


def favor_unidirectional(q: Tensor, k: Tensor, v: Tensor, fm: RandomFeatureMap) -> Tensor:
    """Causal linear attention via running prefix sums.

    Carries S_i = Σ_{j<=i} φ(k_j) v_jᵀ (r × d_v) and z_i = Σ_{j<=i} φ(k_j);
    output row i is (φ(q_i)ᵀ S_i) / (φ(q_i)ᵀ z_i).  O(L·r·d) time with an
    O(r·d) rolling state.
    """
    _check_favor_inputs(q, k, v, fm)
    q_hat, k_hat = _features(q, k, fm)
    length = q.shape[0]
    rows = []
    s_state = None  # (r, d_v)
    z_state = None  # (r, 1)
    for i in range(length):
        k_row = T.slice_rows(k_hat, i, i + 1)  # (1, r)
        v_row = T.slice_rows(v, i, i + 1)  # (1, d_v)
        q_row = T.slice_rows(q_hat, i, i + 1)  # (1, r)
        outer = T.matmul(T.transpose(k_row), v_row)  # (r, d_v)
        k_col = T.transpose(k_row)  # (r, 1)
        s_state = outer if s_state is None else T.add(s_state, outer)
        z_state = k_col if z_state is None else T.add(z_state, k_col)
        num = T.matmul(q_row, s_state)  # (1, d_v)
        den = _floor_denominator(T.matmul(q_row, z_state))  # (1, 1)
        rows.append(T.scale_rowwise(num, T.recip(den)))
    return T.concat(rows, axis=0) if length > 1 else rows[0]


# ---------------------------------------------------------------------------
# complexity probe
# ---------------------------------------------------------------------------

PROBE_COLUMNS = ("mode", "L", "d_k", "r", "rep", "wall_ns", "peak_bytes_estimate")


@dataclass
class ProbeRow:
    mode: str
    L: int
    d_k: int
    r: int
    rep: int
    wall_ns: int
    peak_bytes_estimate: int


def complexity_probe(mode: str, lengths, d_k: int, r: int, reps: int,
                     seed: int = 0) -> list[ProbeRow]:
    """Time one attention forward pass per (L, rep) and log allocations.

    ``mode`` selects the exact or the random-feature bidirectional kernel.
    The byte figure sums every intermediate tensor the kernel creates — for
    the exact kernel that includes the L×L attention matrix, for FAVOR+ it
    stays linear in L by construction.
    """
    from .attention import exact_bidirectional  # local import avoids a cycle

    if mode not in ("exact", "favor"):
        raise ConfigError(f"unknown probe mode '{mode}'")
    rng = np.random.default_rng(seed)
    rows = []
    for length in lengths:
        q = Tensor(rng.standard_normal((length, d_k)))
        k = Tensor(rng.standard_normal((length, d_k)))
        v = Tensor(rng.standard_normal((length, d_k)))
        fm = draw_features(FavorConfig(r=r, d_k=d_k, seed=seed))

        def run():
            if mode == "exact":
                return exact_bidirectional(q, k, v)
            return favor_bidirectional(q, k, v, fm)

        run()  # warm-up: page in buffers, trigger lazy BLAS init
        for rep in range(reps):
            with T.track_allocations() as log:
                start = time.perf_counter_ns()
                run()
                wall = time.perf_counter_ns() - start
            rows.append(ProbeRow(mode, int(length), d_k, r, rep, int(wall),
                                 int(log.total_bytes)))
    return rows


def probe_shapes(mode: str, length: int, d_k: int, r: int, seed: int = 0):
    """Shapes of every intermediate a single kernel invocation allocates."""
    from .attention import exact_bidirectional

    rng = np.random.default_rng(seed)
    q = Tensor(rng.standard_normal((length, d_k)))
    k = Tensor(rng.standard_normal((length, d_k)))
    v = Tensor(rng.standard_normal((length, d_k)))
    with T.track_allocations() as log:
        if mode == "exact":
            exact_bidirectional(q, k, v)
        else:
            fm = draw_features(FavorConfig(r=r, d_k=d_k, seed=seed))
            favor_bidirectional(q, k, v, fm)
    return list(log.shapes)


def loglog_slope(rows: list[ProbeRow]) -> float:
    """Fitted slope of log(median wall time) against log(L)."""
    by_length: dict[int, list[int]] = {}
    for row in rows:
        by_length.setdefault(row.L, []).append(row.wall_ns)
    lengths = sorted(by_length)
    if len(lengths) < 2:
        raise ConfigError("need at least two lengths to fit a slope")
    medians = [float(np.median(by_length[L])) for L in lengths]
    coeffs = np.polyfit(np.log(np.asarray(lengths, dtype=float)), np.log(medians), 1)
    return float(coeffs[0])


def write_probe_csv(rows: list[ProbeRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROBE_COLUMNS)
        for row in rows:
            writer.writerow([row.mode, row.L, row.d_k, row.r, row.rep,
                             row.wall_ns, row.peak_bytes_estimate])
