"""Gap-statistic selection of the number of AR states, with AIC/BIC baselines.

For each candidate M the model is fitted by EM and its posterior-weighted
in-sample MSPE is logged; the reference curve gives the expected log-MSPE
under uniformly random stable filters at the data-driven radius.  The
selected M is the smallest one at which the gap between the two curves
stops growing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, switching
from .arcore import ArFilter, roots
from .errors import ArgapError, InvalidInputError
from .sampler import sample_filter
from .seeding import subrng

RADIUS_FLOOR = 0.05

SCENARIOS = {
    1: {"L": 4, "M_true": 3, "r": 1.0},
    2: {"L": 1, "M_true": 4, "r": 0.8},
    3: {"L": 2, "M_true": 2, "r": 0.6},
}

METHODS = ("gap-b", "gap-u", "aic", "bic")


@dataclass
class SelectConfig:
    """Knobs of the end-to-end selection pipeline."""

    variant: str = "B"  # "B": data-driven radius; "U": unit circle
    iters: int = 32
    F: int | None = None  # reference batch size, defaults to min(N, 1000)
    delta: float = clustering.DEFAULT_DELTA
    seed: int = 0
    max_iter: int = switching.DEFAULT_MAX_ITER
    tol: float = switching.DEFAULT_TOL
    N0: int | None = None
    cache_dir: str | Path | None = None

    def __post_init__(self):
        if self.variant not in ("B", "U"):
            raise InvalidInputError("variant must be 'B' or 'U'")


@dataclass
class GapCurves:
    """Observed and reference log-MSPE curves and the selected state count."""

    M_max: int
    observed: np.ndarray
    reference: np.ndarray
    r_used: float
    selected_M: int
    argmax_gap: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def gap(self) -> np.ndarray:
        return self.reference - self.observed

    def to_dict(self) -> dict:
        return {
            "M_max": self.M_max,
            "observed_log_mspe": self.observed.tolist(),
            "reference_log_mspe": self.reference.tolist(),
            "gap": self.gap.tolist(),
            "r_used": self.r_used,
            "selected_M": self.selected_M,
            "argmax_gap": self.argmax_gap,
            "warnings": list(self.warnings),
        }


def estimate_radius(fit_at_Mmax: switching.FitResult) -> float:
    """Data-driven sampling radius: max state root modulus, capped at 1, floored at 0.05."""
    r_max = 0.0
    for f in fit_at_Mmax.model.filters:
        r_max = max(r_max, float(np.max(np.abs(roots(f)))))
    return max(min(r_max, 1.0), RADIUS_FLOOR)


def fit_all(
    series: np.ndarray,
    L: int,
    M_max: int,
    config: SelectConfig,
) -> list[switching.FitResult]:
    """EM fits for M = 1..M_max from the split initialization."""
    inits = switching.init_split(series, L, M_max, N0=config.N0, seed=config.seed)
    return [
        switching.fit_em(series, M, L, inits[M - 1], max_iter=config.max_iter, tol=config.tol)
        for M in range(1, M_max + 1)
    ]


def _smallest_gap_M(gap: np.ndarray) -> int:
    for M in range(1, gap.size):
        if gap[M - 1] >= gap[M]:
            return M
    return gap.size


def gap_curves(
    fits: list[switching.FitResult],
    L: int,
    N: int,
    config: SelectConfig,
) -> GapCurves:
    """Gap statistic from precomputed fits (shared with the AIC/BIC baselines)."""
    M_max = len(fits)
    observed = np.log([f.mspe for f in fits])
    r = 1.0 if config.variant == "U" else estimate_radius(fits[-1])
    F = config.F if config.F is not None else min(N, 1000)
    reference = np.log(
        clustering.reference_curve(
            L, r, M_max, F=F, iters=config.iters, delta=config.delta,
            seed=config.seed, cache_dir=config.cache_dir,
        )
    )
    gap = reference - observed
    warnings = [f"fit at M={i + 1} did not converge" for i, f in enumerate(fits) if not f.converged]
    return GapCurves(
        M_max=M_max,
        observed=observed,
        reference=reference,
        r_used=round(r, 2),
        selected_M=_smallest_gap_M(gap),
        argmax_gap=int(np.argmax(gap)) + 1,
        warnings=warnings,
    )


def select(series: np.ndarray, L: int, M_max: int, config: SelectConfig | None = None) -> GapCurves:
    """End-to-end gap-statistic selection on a series."""
    if config is None:
        config = SelectConfig()
    if M_max < 1:
        raise InvalidInputError("M_max must be >= 1")
    series = np.asarray(series, dtype=float)
    fits = fit_all(series, L, M_max, config)
    return gap_curves(fits, L, series.size, config)


def n_parameters(M: int, L: int) -> int:
    """Free parameters: M filters (with intercept) + variances + transition + initial."""
    return M * (L + 2) + M * (M - 1) + (M - 1)


def aic_bic(fits: list[switching.FitResult], N: int, L: int) -> tuple[int, int]:
    """AIC- and BIC-minimizing state counts (ties to the smaller M)."""
    lls = np.array([f.loglik for f in fits])
    p = np.array([n_parameters(M, L) for M in range(1, len(fits) + 1)])
    aic = -2.0 * lls + 2.0 * p
    bic = -2.0 * lls + p * math.log(N)
    return int(np.argmin(aic)) + 1, int(np.argmin(bic)) + 1


@dataclass
class BenchmarkReport:
    """Histogram of selected state counts per method, plus run provenance."""

    scenario: dict
    n_instances: int
    N: int
    M_max: int
    master_seed: int
    methods: tuple[str, ...]
    histogram: dict[str, list[int]]
    argmax_histogram: dict[str, list[int]] = field(default_factory=dict)
    skipped: int = 0
    errors: list[str] = field(default_factory=list)

    def accuracy(self, method: str) -> float:
        done = self.n_instances - self.skipped
        if done <= 0:
            return float("nan")
        return self.histogram[method][self.scenario["M_true"] - 1] / done

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "n_instances": self.n_instances,
            "N": self.N,
            "M_max": self.M_max,
            "master_seed": self.master_seed,
            "methods": list(self.methods),
            "histogram": self.histogram,
            "argmax_gap_histogram": self.argmax_histogram,
            "skipped": self.skipped,
            "errors": list(self.errors),
        }


def make_instance_model(
    L: int, M_true: int, r: float, rng: np.random.Generator
) -> switching.SwitchingArModel:
    """Random benchmark model: uniform filters from R_L(r), means uniform on [-4, 4].

    State means are converted to intercepts by psi_0 = -mu (1 + sum psi_l);
    noise variances are 1 and the transition matrix has 0.98 self-loops.
    """
    filters = []
    for _ in range(M_true):
        f = sample_filter(L, r, rng)
        mu = rng.uniform(-4.0, 4.0)
        psi0 = -mu * (1.0 + float(np.sum(f.coeffs)))
        filters.append(ArFilter(f.coeffs, intercept=psi0, noise_variance=1.0))
    if M_true == 1:
        T = np.array([[1.0]])
    else:
        off = 0.02 / (M_true - 1)
        T = np.full((M_true, M_true), off)
        np.fill_diagonal(T, 0.98)
    initial = np.full(M_true, 1.0 / M_true)
    return switching.SwitchingArModel(filters, T, initial)


def _run_instance(args) -> dict:
    scenario, N, M_max, master_seed, idx, methods, config_kwargs = args
    rng = subrng(master_seed, "benchmark-instance", idx)
    model = make_instance_model(scenario["L"], scenario["M_true"], scenario["r"], rng)
    series, _ = switching.simulate(model, N, seed=int(rng.integers(2**63)))
    config = SelectConfig(seed=master_seed, **config_kwargs)
    fits = fit_all(series, scenario["L"], M_max, config)
    out: dict = {}
    if "gap-b" in methods or "gap-u" in methods:
        if "gap-b" in methods:
            config.variant = "B"
            gc = gap_curves(fits, scenario["L"], N, config)
            out["gap-b"] = (gc.selected_M, gc.argmax_gap)
        if "gap-u" in methods:
            config.variant = "U"
            gc = gap_curves(fits, scenario["L"], N, config)
            out["gap-u"] = (gc.selected_M, gc.argmax_gap)
    if "aic" in methods or "bic" in methods:
        a, b = aic_bic(fits, N, scenario["L"])
        out["aic"] = (a, a)
        out["bic"] = (b, b)
    return out


def run_benchmark(
    scenario: int | dict,
    n_instances: int,
    N: int = 1000,
    M_max: int = 6,
    master_seed: int = 0,
    methods: tuple[str, ...] = METHODS,
    jobs: int = 1,
    **config_kwargs,
) -> BenchmarkReport:
    """Selection histograms over seeded random instances of a scenario."""
    if isinstance(scenario, int):
        if scenario not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {scenario}; pick one of {sorted(SCENARIOS)}")
        scen = dict(SCENARIOS[scenario], id=scenario)
    else:
        scen = dict(scenario)
        if not {"L", "M_true", "r"} <= scen.keys():
            raise InvalidInputError("custom scenario needs keys L, M_true, r")
    for meth in methods:
        if meth not in METHODS:
            raise InvalidInputError(f"unknown method {meth!r}")
    hist = {m: [0] * M_max for m in methods}
    arg_hist = {m: [0] * M_max for m in methods}
    skipped = 0
    errors: list[str] = []
    tasks = [
        (scen, N, M_max, master_seed, idx, tuple(methods), dict(config_kwargs))
        for idx in range(n_instances)
    ]
    if jobs > 1 and n_instances > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_instance_safe, tasks))
    else:
        results = [_run_instance_safe(t) for t in tasks]
    for idx, res in enumerate(results):
        if isinstance(res, str):
            skipped += 1
            errors.append(f"instance {idx}: {res}")
            continue
        for meth in methods:
            sel, amax = res[meth]
            hist[meth][sel - 1] += 1
            arg_hist[meth][amax - 1] += 1
    return BenchmarkReport(
        scenario=scen,
        n_instances=n_instances,
        N=N,
        M_max=M_max,
        master_seed=master_seed,
        methods=tuple(methods),
        histogram=hist,
        argmax_histogram=arg_hist,
        skipped=skipped,
        errors=errors,
    )


def _run_instance_safe(args):
    try:
        return _run_instance(args)
    except ArgapError as exc:
        return f"{type(exc).__name__}: {exc}"
