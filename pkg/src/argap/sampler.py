"""Uniform sampling of stable AR filters with root radius bounded by r.

The sampler runs a Levinson-Durbin-style coefficient recursion whose k-th
reflection coefficient alpha_k = 2 beta_k - 1 is drawn from a Beta law
chosen so that the resulting coefficient vector is uniformly distributed
on the stability region R_L(r).  Stability holds by construction: every
|alpha_k| < 1 almost surely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arcore import ArFilter, roots
from .errors import InvalidInputError
from .seeding import subrng


@dataclass(frozen=True)
class FilterBatch:
    """A seeded batch of independent uniform draws from R_L(r)."""

    order: int
    radius: float
    filters: list[ArFilter] = field(repr=False)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.filters)

    @property
    def coeff_matrix(self) -> np.ndarray:
        """F x L matrix of filter coefficients."""
        return np.array([f.coeffs for f in self.filters])


def sample_filter(L: int, r: float, rng: np.random.Generator) -> ArFilter:
    """One uniform draw from R_L(r).

    For k = 1..L draw beta_k ~ Beta(floor(k/2)+1, floor((k+1)/2)) via two
    integer-shape Gamma variates, set the reflection coefficient
    alpha_k = 2 beta_k - 1, and extend the coefficient vector by

        lambda_{i,k} = lambda_{i,k-1} + lambda_{k,k} lambda_{k-i,k-1} / r^(2k-2i)

    with lambda_{k,k} = r^k alpha_k.
    """
    if L < 1:
        raise InvalidInputError("order must be >= 1")
    if not 0 < r <= 1:
        raise InvalidInputError("radius must lie in (0, 1]")
    lam = np.empty(0)
    for k in range(1, L + 1):
        a = k // 2 + 1
        b = (k + 1) // 2
        while True:
            g1 = rng.gamma(a)
            g2 = rng.gamma(b)
            alpha = 2.0 * g1 / (g1 + g2) - 1.0
            if abs(alpha) < 1.0:  # measure-zero boundary draw: redraw
                break
        lam_kk = r**k * alpha
        if k == 1:
            lam = np.array([lam_kk])
        else:
            i = np.arange(1, k)
            lam = np.append(lam + lam_kk * lam[::-1] / r ** (2 * (k - i)), lam_kk)
    return ArFilter(lam)


def sample_coeff_matrix(L: int, r: float, F: int, rng: np.random.Generator) -> np.ndarray:
    """F x L coefficient matrix of independent uniform draws from R_L(r).

    Same recursion as sample_filter, vectorised over the batch axis so that
    large Monte-Carlo batches stay cheap.
    """
    if L < 1:
        raise InvalidInputError("order must be >= 1")
    if not 0 < r <= 1:
        raise InvalidInputError("radius must lie in (0, 1]")
    if F < 1:
        raise InvalidInputError("batch size must be >= 1")
    lam = np.empty((F, 0))
    for k in range(1, L + 1):
        a = k // 2 + 1
        b = (k + 1) // 2
        g1 = rng.gamma(a, size=F)
        g2 = rng.gamma(b, size=F)
        alpha = 2.0 * g1 / (g1 + g2) - 1.0
        bad = ~(np.abs(alpha) < 1.0)  # measure-zero boundary draws: redraw
        while np.any(bad):
            g1 = rng.gamma(a, size=int(bad.sum()))
            g2 = rng.gamma(b, size=int(bad.sum()))
            alpha[bad] = 2.0 * g1 / (g1 + g2) - 1.0
            bad = ~(np.abs(alpha) < 1.0)
        lam_kk = (r**k * alpha)[:, None]
        i = np.arange(1, k)
        lam = np.hstack((lam + lam_kk * lam[:, ::-1] / r ** (2 * (k - i)), lam_kk))
    return lam


def sample_batch(L: int, r: float, F: int, seed: int) -> FilterBatch:
    """F independent uniform draws from R_L(r); bit-identical under the same seed."""
    rng = subrng(seed, "sampler")
    coeffs = sample_coeff_matrix(L, r, F, rng)
    filters = [ArFilter(row) for row in coeffs]
    if __debug__ and F <= 64:
        assert all(np.max(np.abs(roots(f))) < r + 1e-9 for f in filters)
    return FilterBatch(order=L, radius=r, filters=filters, seed=seed)
