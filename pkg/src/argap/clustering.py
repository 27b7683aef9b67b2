"""k-medoids clustering of stable AR filters and the reference curve.

The distance matrix is asymmetric: entry D[u, v] is the mismatch distance
of predicting a psi_u-generated process with psi_v, so rows index the
data-generating (center) filter and columns the predicting filter.  A
point u is assigned to the center c minimizing D[c, u].

The reference curve value at M is the expected within-cluster sum of
distances per filter, plus the unit noise-variance floor:
W_M = mean_batches(WCSD / F) + 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arcore import ArFilter, _moments_from_coeffs, is_stable
from .errors import ArgapError, InvalidInputError
from .sampler import FilterBatch, sample_batch
from .seeding import subrng

CACHE_FORMAT_VERSION = 1

DEFAULT_DELTA = 1e-4


@dataclass(frozen=True)
class Clustering:
    """Centers (indices into the batch), assignment and within-cluster sum of distances."""

    centers: np.ndarray
    assignment: np.ndarray = field(repr=False)
    wcsd: float = 0.0


def build_distance_matrix(batch: FilterBatch | list[ArFilter]) -> np.ndarray:
    """F x F matrix of pairwise mismatch distances D[u, v] = D(psi_u, psi_v).

    Row-wise vectorization of the covariance-form distance: one stationary
    covariance solve per generating filter, then a batched quadratic form.
    """
    filters = batch.filters if isinstance(batch, FilterBatch) else batch
    F = len(filters)
    L = max(f.order for f in filters)
    coeffs = np.zeros((F, L))
    for u, f in enumerate(filters):
        coeffs[u, : f.order] = f.coeffs
    D = np.empty((F, F))
    for u, f in enumerate(filters):
        if not is_stable(f.padded(L), 1.0):
            raise InvalidInputError(f"filter {u} is not stable inside the unit circle")
        try:
            cov = _moments_from_coeffs(coeffs[u], f.noise_variance).cov
        except ArgapError as exc:
            raise type(exc)(f"filter {u}: {exc}") from exc
        diff = coeffs - coeffs[u]
        D[u] = np.einsum("fi,ij,fj->f", diff, cov, diff)
        D[u, u] = 0.0
    np.maximum(D, 0.0, out=D)
    return D


def _assign(D: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest-center assignment (ties to the lowest center index) and its WCSD."""
    sub = D[centers]
    assignment = np.argmin(sub, axis=0)
    wcsd = float(sub[assignment, np.arange(D.shape[1])].sum())
    return assignment, wcsd


def seed_centers(D: np.ndarray, M: int, rng: np.random.Generator) -> np.ndarray:
    """k-medoids++-style seeding: distance-to-nearest-chosen proportional draws."""
    F = D.shape[0]
    centers = [int(rng.integers(F))]
    best = D[centers[0]].copy()
    while len(centers) < M:
        best[centers] = 0.0
        total = best.sum()
        if total <= 0:
            pool = np.setdiff1d(np.arange(F), centers)
            centers.append(int(rng.choice(pool)))
        else:
            centers.append(int(rng.choice(F, p=best / total)))
        np.minimum(best, D[centers[-1]], out=best)
    return np.array(centers)


def greedy_init(D: np.ndarray, M: int) -> np.ndarray:
    """Deterministic greedy seeding: each added center maximizes the WCSD drop."""
    centers = [int(np.argmin(D.sum(axis=1)))]
    best = D[centers[0]].copy()
    while len(centers) < M:
        gains = np.maximum(best[None, :] - D, 0.0).sum(axis=1)
        gains[centers] = -1.0
        centers.append(int(np.argmax(gains)))
        np.minimum(best, D[centers[-1]], out=best)
    return np.array(centers)


def cluster(
    D: np.ndarray,
    M: int,
    rng: np.random.Generator,
    delta: float = DEFAULT_DELTA,
    n_restarts: int = 10,
) -> Clustering:
    """Best of several swap-search runs: one greedy seed plus k-medoids++ restarts.

    A single k-medoids++ seed leaves the member-restricted swap search in a
    poor local minimum on a noticeable fraction of small instances; the
    restart ensemble restores near-optimal quality.
    """
    runs = [k_medoids(D, M, greedy_init(D, M), delta)]
    runs += [k_medoids(D, M, seed_centers(D, M, rng), delta) for _ in range(n_restarts - 1)]
    return min(runs, key=lambda c: c.wcsd)


def k_medoids(D: np.ndarray, M: int, init: np.ndarray, delta: float = DEFAULT_DELTA) -> Clustering:
    """Swap-search k-medoids on a precomputed (possibly asymmetric) distance matrix.

    For each cluster in turn, every member is tried as the new center; a
    swap is accepted when the full reassignment strictly lowers the WCSD,
    and the scan of that (updated) cluster restarts.  The outer loop stops
    once a full sweep improves the WCSD by a factor below delta.
    """
    F = D.shape[0]
    if not 1 <= M <= F:
        raise InvalidInputError("need 1 <= M <= F")
    if not 0 < delta < 1:
        raise InvalidInputError("delta must lie in (0, 1)")
    centers = np.asarray(init, dtype=int).copy()
    if centers.size != M or np.unique(centers).size != M:
        raise InvalidInputError("init must supply M distinct center indices")
    assignment, w = _assign(D, centers)
    while True:
        w_prev = w
        for m in range(M):
            members = np.flatnonzero(assignment == m)
            # nearest distance over the other centers, for O(F) candidate scoring
            if M > 1:
                others = np.delete(centers, m)
                other_best = D[others].min(axis=0)
            else:
                other_best = np.full(F, np.inf)
            k = 0
            while k < members.size:
                cand = members[k]
                if cand == centers[m]:
                    k += 1
                    continue
                w_cand = float(np.minimum(other_best, D[cand]).sum())
                if w_cand < w:
                    centers[m] = cand
                    assignment, w = _assign(D, centers)
                    members = np.flatnonzero(assignment == m)
                    k = 0
                else:
                    k += 1
        if w <= 0 or (w_prev - w) <= delta * w_prev:
            break
    return Clustering(centers=centers, assignment=assignment, wcsd=w)


def _warm_start_curve(D: np.ndarray, M_max: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """WCSD for M = 1..M_max, warm-starting the M-center init from the (M-1)-solution."""
    F = D.shape[0]
    wcsds = np.empty(M_max)
    clust = k_medoids(D, 1, seed_centers(D, 1, rng), delta)
    wcsds[0] = clust.wcsd
    for M in range(2, M_max + 1):
        percenter = D[clust.centers[clust.assignment], np.arange(F)]
        percenter[clust.centers] = -np.inf  # keep init indices distinct
        extra = int(np.argmax(percenter))
        init = np.append(clust.centers, extra)
        clust = k_medoids(D, M, init, delta)
        # warm start guarantees non-increasing wcsd; guard against float noise
        wcsds[M - 1] = min(clust.wcsd, wcsds[M - 2])
    return wcsds


def reference_curve(
    L: int,
    r: float,
    M_max: int,
    F: int = 1000,
    iters: int = 32,
    delta: float = DEFAULT_DELTA,
    seed: int = 0,
    cache_dir: str | Path | None = None,
) -> np.ndarray:
    """Reference values W_M for M = 1..M_max, averaged over `iters` batches.

    r is rounded to 2 decimals (the cache key granularity) before sampling.
    Results are cached as versioned JSON when a cache directory is given.
    """
    if min(L, M_max, F, iters) < 1 or M_max > F:
        raise InvalidInputError("reference curve parameters must be positive with M_max <= F")
    r = round(r, 2)
    if not 0 < r <= 1:
        raise InvalidInputError("radius must lie in (0, 1]")
    cache_path = None
    if cache_dir is not None:
        key = f"refcurve_L{L}_r{r:.2f}_F{F}_iter{iters}_delta{delta:g}_seed{seed}"
        cache_path = Path(cache_dir) / f"{key}.json"
        if cache_path.exists():
            payload = json.loads(cache_path.read_text())
            W = np.asarray(payload["W"])
            if W.size >= M_max:
                return W[:M_max]
    acc = np.zeros(M_max)
    for ell in range(iters):
        batch = sample_batch(L, r, F, seed=int(subrng(seed, "refcurve-batch", ell).integers(2**63)))
        D = build_distance_matrix(batch)
        rng = subrng(seed, "refcurve-init", ell)
        acc += _warm_start_curve(D, M_max, delta, rng) / F
    W = acc / iters + 1.0
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "format_version": CACHE_FORMAT_VERSION,
            "L": L,
            "r": r,
            "F": F,
            "iter": iters,
            "delta": delta,
            "seed": seed,
            "W": W.tolist(),
        }
        tmp = cache_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True))
        tmp.replace(cache_path)
    return W


def reference_point(
    L: int,
    r: float,
    M: int,
    F: int,
    iters: int,
    delta: float = DEFAULT_DELTA,
    seed: int = 0,
) -> float:
    """Single reference value W_M (last point of the warm-started curve)."""
    return float(reference_curve(L, r, M, F, iters, delta, seed)[M - 1])
