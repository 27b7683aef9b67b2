"""Markov-switching autoregressive model: simulation, EM fitting, MSPE.

The model has M hidden states following a first-order Markov chain; while
in state m the observation obeys the AR(L) law

    x(n) + gamma_m0 + sum_l gamma_ml x(n-l) = eps(n),  eps ~ N(0, sigma_m^2).

The likelihood is conditional on L fixed warmup values x(-L+1..0)
(zeros by default).  The E-step is a scaled forward-backward recursion
returning pairwise state posteriors; the M-step is per-state weighted
least squares, weighted residual variances and row-normalized transition
counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arcore import ArFilter
from .errors import InvalidInputError, NumericalFailureError

MODEL_FORMAT_VERSION = 1

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 500

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SwitchingArModel:
    """M AR filters (with intercepts and variances), transition matrix, initial law."""

    filters: list[ArFilter]
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        T = np.asarray(self.transition, dtype=float)
        a = np.asarray(self.initial, dtype=float)
        M = len(self.filters)
        if M < 1:
            raise InvalidInputError("need at least one state")
        if len({f.order for f in self.filters}) != 1:
            raise InvalidInputError("all state filters must share the AR order")
        if T.shape != (M, M) or np.any(T < 0) or np.max(np.abs(T.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidInputError("transition matrix must be M x M row-stochastic")
        if a.shape != (M,) or np.any(a < 0) or abs(a.sum() - 1.0) > 1e-10:
            raise InvalidInputError("initial distribution must be a length-M probability vector")
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "initial", a)

    @property
    def n_states(self) -> int:
        return len(self.filters)

    @property
    def order(self) -> int:
        return self.filters[0].order

    @property
    def variances(self) -> np.ndarray:
        return np.array([f.noise_variance for f in self.filters])

    def gamma_matrix(self) -> np.ndarray:
        """M x (L+1) matrix of [intercept, psi_1..psi_L] rows."""
        return np.array([np.concatenate(([f.intercept], f.coeffs)) for f in self.filters])

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "n_states": self.n_states,
            "order": self.order,
            "filters": [
                {
                    "coeffs": f.coeffs.tolist(),
                    "intercept": f.intercept,
                    "noise_variance": f.noise_variance,
                }
                for f in self.filters
            ],
            "transition": self.transition.tolist(),
            "initial": self.initial.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchingArModel":
        filters = [
            ArFilter(np.asarray(f["coeffs"]), f.get("intercept", 0.0), f.get("noise_variance", 1.0))
            for f in d["filters"]
        ]
        return cls(filters, np.asarray(d["transition"]), np.asarray(d["initial"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SwitchingArModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PosteriorWeights:
    """Pairwise posteriors w[n, m, m'] = P(y(n-1)=m, y(n)=m' | X) and marginals g."""

    w: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)


@dataclass
class FitResult:
    model: SwitchingArModel
    loglik_trace: list[float]
    mspe: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    ridge_used: bool = False
    weights: PosteriorWeights | None = field(default=None, repr=False)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def _check_series(series: np.ndarray) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 1 or not np.all(np.isfinite(x)):
        raise InvalidInputError("series must be a finite 1-d vector")
    return x


def design_matrix(series: np.ndarray, L: int, warmup: np.ndarray | None = None) -> np.ndarray:
    """N x (L+1) regressor rows [1, x(n-1), ..., x(n-L)], warmup-padded."""
    x = _check_series(series)
    if warmup is None:
        warmup = np.zeros(L)
    warmup = np.asarray(warmup, dtype=float)
    if warmup.shape != (L,):
        raise InvalidInputError(f"warmup must supply exactly L={L} values")
    xlag = np.concatenate((warmup, x))
    N = x.size
    X = np.ones((N, L + 1))
    for l in range(1, L + 1):
        X[:, l] = xlag[L - l : L - l + N]
    return X


def simulate(
    model: SwitchingArModel,
    N: int,
    warmup: np.ndarray | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generate a length-N series; the hidden state path is returned for ground truth."""
    if N < 1:
        raise InvalidInputError("N must be >= 1")
    L, M = model.order, model.n_states
    if warmup is None:
        warmup = np.zeros(L)
    warmup = np.asarray(warmup, dtype=float)
    rng = np.random.default_rng(seed)
    gam = model.gamma_matrix()
    sig = np.sqrt(model.variances)
    # pre-draw the state path
    states = np.empty(N, dtype=int)
    states[0] = rng.choice(M, p=model.initial)
    for n in range(1, N):
        states[n] = rng.choice(M, p=model.transition[states[n - 1]])
    eps = rng.standard_normal(N)
    xlag = np.concatenate((warmup, np.empty(N)))
    for n in range(N):
        m = states[n]
        mean = -gam[m, 0] - gam[m, 1:] @ xlag[n + L - 1 :: -1][:L]
        xlag[L + n] = mean + sig[m] * eps[n]
    return xlag[L:], states


def _log_emissions(model: SwitchingArModel, X: np.ndarray, x: np.ndarray) -> np.ndarray:
    """N x M matrix of per-state Gaussian AR log densities."""
    gam = model.gamma_matrix()
    resid = x[:, None] + X @ gam.T  # N x M
    var = model.variances
    return -0.5 * (_LOG_2PI + np.log(var)[None, :] + resid**2 / var[None, :])


def e_step(
    model: SwitchingArModel,
    series: np.ndarray,
    warmup: np.ndarray | None = None,
) -> tuple[PosteriorWeights, float]:
    """Scaled forward-backward pass: pairwise posteriors and the exact log-likelihood.

    The first slice of the pairwise tensor has no predecessor state; it is
    stored with uniform rows so that column sums reproduce the time-1 state
    posterior and the tensor normalizes to one at every n.
    """
    x = _check_series(series)
    L, M, N = model.order, model.n_states, x.size
    if N <= L:
        raise InvalidInputError("series must be longer than the AR order")
    X = design_matrix(x, L, warmup)
    logb = _log_emissions(model, X, x)
    shift = logb.max(axis=1)
    b = np.exp(logb - shift[:, None])  # row-max scaled emissions

    T = model.transition
    alpha = np.empty((N, M))
    c = np.empty(N)
    a = model.initial * b[0]
    c[0] = a.sum()
    if c[0] <= 0 or not np.isfinite(c[0]):
        raise NumericalFailureError("zero emission probability at time index 0")
    alpha[0] = a / c[0]
    for n in range(1, N):
        a = (alpha[n - 1] @ T) * b[n]
        c[n] = a.sum()
        if c[n] <= 0 or not np.isfinite(c[n]):
            raise NumericalFailureError(f"zero emission probability at time index {n}")
        alpha[n] = a / c[n]

    beta = np.empty((N, M))
    beta[N - 1] = 1.0
    for n in range(N - 2, -1, -1):
        beta[n] = (T @ (b[n + 1] * beta[n + 1])) / c[n + 1]

    w = np.empty((N, M, M))
    for n in range(1, N):
        w[n] = alpha[n - 1][:, None] * T * (b[n] * beta[n])[None, :] / c[n]
    g1 = alpha[0] * beta[0]
    w[0] = np.full((M, 1), 1.0 / M) * g1[None, :]
    g = w.sum(axis=1)

    loglik = float(np.sum(np.log(c)) + np.sum(shift))
    return PosteriorWeights(w=w, g=g), loglik


def brute_force_posteriors(
    model: SwitchingArModel,
    series: np.ndarray,
    warmup: np.ndarray | None = None,
) -> tuple[PosteriorWeights, float]:
    """Exhaustive path-sum posteriors; test oracle, exponential in N."""
    x = _check_series(series)
    L, M, N = model.order, model.n_states, x.size
    X = design_matrix(x, L, warmup)
    logb = _log_emissions(model, X, x)
    w = np.zeros((N, M, M))
    g1 = np.zeros(M)
    total = 0.0
    for idx in np.ndindex(*([M] * N)):
        logp = math.log(model.initial[idx[0]]) if model.initial[idx[0]] > 0 else -math.inf
        for n in range(1, N):
            t = model.transition[idx[n - 1], idx[n]]
            logp += math.log(t) if t > 0 else -math.inf
        logp += sum(logb[n, idx[n]] for n in range(N))
        p = math.exp(logp)
        total += p
        g1[idx[0]] += p
        for n in range(1, N):
            w[n, idx[n - 1], idx[n]] += p
    w /= total
    g1 /= total
    w[0] = np.full((M, 1), 1.0 / M) * g1[None, :]
    g = w.sum(axis=1)
    return PosteriorWeights(w=w, g=g), math.log(total)


def m_step(
    weights: PosteriorWeights,
    series: np.ndarray,
    L: int,
    warmup: np.ndarray | None = None,
) -> tuple[SwitchingArModel, bool]:
    """Closed-form parameter update from the pairwise posteriors.

    Per state: weighted least squares on [1, x(n-1)..x(n-L)], weighted
    residual variance, then row-normalized transition counts; the initial
    law is set to the time-1 state posterior.  Returns the model and a
    flag marking whether the ridge fallback fired.
    """
    x = _check_series(series)
    g = weights.g
    N, M = g.shape
    X = design_matrix(x, L, warmup)
    ridge_used = False
    filters = []
    for m in range(M):
        wn = g[:, m]
        Xw = X * wn[:, None]
        gram = X.T @ Xw
        rhs = Xw.T @ x
        try:
            gamma = -np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            lam = max(1e-8 * np.trace(gram) / (L + 1), 1e-8)
            gamma = -np.linalg.solve(gram + lam * np.eye(L + 1), rhs)
            ridge_used = True
        resid = x + X @ gamma
        mass = wn.sum()
        sigma2 = float(wn @ resid**2 / mass) if mass > 0 else 1e-12
        if not sigma2 > 0:  # empty or perfectly fit state
            sigma2 = 1e-12
        filters.append(ArFilter(gamma[1:], intercept=float(gamma[0]), noise_variance=sigma2))
    counts = weights.w[1:].sum(axis=0)
    rows = counts.sum(axis=1, keepdims=True)
    T = np.where(rows > 0, counts / np.where(rows > 0, rows, 1.0), 1.0 / M)
    T /= T.sum(axis=1, keepdims=True)
    initial = g[0] / g[0].sum()
    return SwitchingArModel(filters, T, initial), ridge_used


def fit_em(
    series: np.ndarray,
    M: int,
    L: int,
    init: SwitchingArModel,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    warmup: np.ndarray | None = None,
) -> FitResult:
    """EM fit from a given initial model.

    Stops when the relative observed log-likelihood gain drops below tol.
    A state whose total posterior mass collapses is re-seeded once by
    splitting the heaviest state; a second collapse marks the fit as
    not converged.
    """
    x = _check_series(series)
    N = x.size
    if N <= max(L + 1, M * (L + 2)):
        raise InvalidInputError("series too short for the requested model size")
    if init.n_states != M or init.order != L:
        raise InvalidInputError("init model shape does not match (M, L)")
    model = init
    trace: list[float] = []
    converged = False
    ridge_used = False
    reseeded = False
    weights = None
    for it in range(max_iter):
        weights, ll = e_step(model, x, warmup)
        trace.append(ll)
        mass = weights.g.sum(axis=0)
        dead = np.flatnonzero(mass < M * 1e-6 * N)
        if dead.size:
            if reseeded:
                converged = False
                break
            reseeded = True
            model = _split_reseed(model, dead, int(np.argmax(mass)))
            continue
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol * abs(trace[-2]):
            converged = True
            break
        model, ridge = m_step(weights, x, L, warmup)
        ridge_used = ridge_used or ridge
    result = FitResult(
        model=model,
        loglik_trace=trace,
        n_iter=len(trace),
        converged=converged,
        ridge_used=ridge_used,
        weights=weights,
    )
    result.mspe = observed_mspe(result, x, warmup)
    return result


def _split_reseed(model: SwitchingArModel, dead: np.ndarray, heaviest: int) -> SwitchingArModel:
    """Replace collapsed states by perturbed copies of the heaviest state."""
    filters = list(model.filters)
    src = filters[heaviest]
    for j, m in enumerate(dead):
        bump = 1e-2 * (j + 1)
        filters[m] = ArFilter(
            src.coeffs * (1.0 - bump),
            intercept=src.intercept + bump,
            noise_variance=src.noise_variance,
        )
    M = model.n_states
    T = np.full((M, M), 1.0 / M)
    initial = np.full(M, 1.0 / M)
    return SwitchingArModel(filters, T, initial)


def observed_mspe(
    fit: FitResult,
    series: np.ndarray,
    warmup: np.ndarray | None = None,
) -> float:
    """Posterior-weighted in-sample one-step squared prediction error."""
    x = _check_series(series)
    model = fit.model
    if fit.weights is not None and fit.weights.g.shape[0] == x.size:
        g = fit.weights.g
    else:
        g = e_step(model, x, warmup)[0].g
    X = design_matrix(x, model.order, warmup)
    resid = x[:, None] + X @ model.gamma_matrix().T
    return float(np.mean(np.sum(g * resid**2, axis=1)))


def init_split(
    series: np.ndarray,
    L: int,
    M_max: int,
    N0: int | None = None,
    seed: int = 0,
) -> list[SwitchingArModel]:
    """Sliding-window split initialization for M = 1..M_max.

    Least-squares AR estimates over every length-N0 window are clustered
    by k-means (Euclidean, on [intercept, psi] vectors); the M-state init
    extends the (M-1)-state filter set with the cluster center farthest
    in summed Euclidean distance from the filters already chosen.  The
    transition matrix starts uniform at 1/M.
    """
    from sklearn.cluster import KMeans

    x = _check_series(series)
    N = x.size
    if N0 is None:
        N0 = max(50, 5 * (L + 1))
    if not 5 * (L + 1) <= N0 <= N:
        raise InvalidInputError("need 5(L+1) <= N0 <= N")
    X = design_matrix(x, L)
    n_win = N - N0 + 1
    xi = np.empty((n_win, L + 1))
    s2 = np.empty(n_win)
    for n in range(n_win):
        Xw = X[n : n + N0]
        xw = x[n : n + N0]
        gamma, *_ = np.linalg.lstsq(Xw, -xw, rcond=None)
        xi[n] = gamma
        resid = xw + Xw @ gamma
        dof = max(N0 - (L + 1), 1)
        s2[n] = max(float(resid @ resid) / dof, 1e-12)

    def _model(gammas: np.ndarray, sig2: np.ndarray) -> SwitchingArModel:
        M = gammas.shape[0]
        filters = [
            ArFilter(gammas[m, 1:], intercept=float(gammas[m, 0]), noise_variance=float(sig2[m]))
            for m in range(M)
        ]
        return SwitchingArModel(filters, np.full((M, M), 1.0 / M), np.full(M, 1.0 / M))

    # global least-squares fit for the single-state init
    gamma1, *_ = np.linalg.lstsq(X, -x, rcond=None)
    resid1 = x + X @ gamma1
    sig1 = max(float(resid1 @ resid1) / max(N - (L + 1), 1), 1e-12)
    chosen_g = gamma1[None, :]
    chosen_s = np.array([sig1])
    models = [_model(chosen_g, chosen_s)]

    for M in range(2, M_max + 1):
        km = KMeans(n_clusters=M, n_init=10, random_state=seed).fit(xi)
        centers = km.cluster_centers_
        cvars = np.array(
            [
                max(float(np.mean(s2[km.labels_ == m])), 1e-12) if np.any(km.labels_ == m) else sig1
                for m in range(M)
            ]
        )
        # farthest center from the filters already chosen
        dist = np.array([np.sum(np.linalg.norm(chosen_g - c[None, :], axis=1)) for c in centers])
        k = int(np.argmax(dist))
        chosen_g = np.vstack((chosen_g, centers[k]))
        chosen_s = np.append(chosen_s, cvars[k])
        models.append(_model(chosen_g, chosen_s))
    return models
