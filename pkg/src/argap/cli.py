"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
Every subcommand accepts ``--config FILE`` (JSON mapping of flag names to
values; explicit flags win) and is fully deterministic given its seed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import clustering, fileio, gapselect, switching
from .arcore import ArFilter, distance_cov, distance_full, distance_mc, distance_roots
from .errors import ArgapError, InvalidInputError, NumericalFailureError
from .sampler import sample_batch
from .switching import SwitchingArModel


def _apply_config(ctx: click.Context, config_path: str | None, params: dict) -> dict:
    """Resolve defaults < config file < explicit flags."""
    resolved = dict(params)
    if config_path:
        try:
            overrides = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config {config_path}: {exc}")
        for key, value in overrides.items():
            pykey = key.replace("-", "_")
            if pykey not in resolved:
                raise click.UsageError(f"unknown config key {key!r}")
            src = ctx.get_parameter_source(pykey)
            if src is not None and src.name != "DEFAULT":
                continue  # explicit flag wins
            resolved[pykey] = value
    return resolved


def _run(func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except InvalidInputError as exc:
        raise click.UsageError(str(exc))
    except NumericalFailureError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    except ArgapError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


@click.group()
def main():
    """Gap-statistic state-count selection for switching AR time series."""


@main.command("gen-filters")
@click.option("--order", "-L", type=int, required=True, help="AR order L.")
@click.option("--radius", "-r", type=float, default=1.0, show_default=True)
@click.option("--count", "-F", type=int, required=True, help="Number of filters.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def gen_filters(ctx, order, radius, count, seed, out, config_path):
    """Sample uniform stable filters into a CSV (columns psi_1..psi_L)."""
    cfg = _apply_config(ctx, config_path, dict(order=order, radius=radius, count=count, seed=seed))
    batch = _run(sample_batch, cfg["order"], cfg["radius"], cfg["count"], cfg["seed"])
    coeffs = batch.coeff_matrix
    fileio.write_csv(
        out,
        [f"psi_{i}" for i in range(1, cfg["order"] + 1)],
        [coeffs[:, i] for i in range(cfg["order"])],
        dict(cfg, subcommand="gen-filters"),
    )
    click.echo(f"wrote {len(batch)} filters to {out}")


@main.command("distance")
@click.option("--filter-a", "fa", required=True, help="Comma-separated psi_1..psi_L of A.")
@click.option("--filter-b", "fb", required=True, help="Comma-separated psi_1..psi_L of B.")
@click.option("--intercept-a", type=float, default=0.0, show_default=True)
@click.option("--intercept-b", type=float, default=0.0, show_default=True)
@click.option("--variance-a", type=float, default=1.0, show_default=True)
@click.option("--mc-samples", type=int, default=0, help="Also run the Monte-Carlo oracle.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def distance(ctx, fa, fb, intercept_a, intercept_b, variance_a, mc_samples, seed, out, config_path):
    """Mismatch distance D(A, B) via the covariance form (and optionally MC)."""
    cfg = _apply_config(
        ctx,
        config_path,
        dict(
            filter_a=fa, filter_b=fb, intercept_a=intercept_a, intercept_b=intercept_b,
            variance_a=variance_a, mc_samples=mc_samples, seed=seed,
        ),
    )
    try:
        ca = np.array([float(v) for v in str(cfg["filter_a"]).split(",")])
        cb = np.array([float(v) for v in str(cfg["filter_b"]).split(",")])
    except ValueError as exc:
        raise click.UsageError(f"cannot parse filter coefficients: {exc}")
    A = _run(ArFilter, ca, cfg["intercept_a"], cfg["variance_a"])
    B = _run(ArFilter, cb, cfg["intercept_b"])
    result = {"distance": _run(distance_full, A, B)}
    result["distance_zero_mean"] = _run(distance_cov, A, B)
    try:
        result["distance_roots"] = distance_roots(A, B)
    except ArgapError:
        pass
    if cfg["mc_samples"]:
        est, se = _run(distance_mc, A, B, cfg["mc_samples"], cfg["seed"])
        result["mc_estimate"], result["mc_std_error"] = est, se
    click.echo(json.dumps(result, sort_keys=True))
    if out:
        fileio.write_json(out, result, dict(cfg, subcommand="distance"))


def _scenario_model(scenario: str, seed: int):
    from .seeding import subrng

    if scenario == "fig3":
        # 3 zero-mean AR(4) states, unit variances, 0.98 self-transitions
        rng = subrng(seed, "scenario-fig3")
        filters = [
            ArFilter(gapselect.sample_filter(4, 1.0, rng).coeffs, 0.0, 1.0) for _ in range(3)
        ]
        T = np.full((3, 3), 0.01)
        np.fill_diagonal(T, 0.98)
        return SwitchingArModel(filters, T, np.full(3, 1.0 / 3.0))
    if scenario in ("1", "2", "3"):
        params = gapselect.SCENARIOS[int(scenario)]
        rng = subrng(seed, f"scenario-{scenario}")
        return gapselect.make_instance_model(params["L"], params["M_true"], params["r"], rng)
    raise click.UsageError(f"unknown scenario {scenario!r} (choose fig3, 1, 2 or 3)")


@main.command("simulate")
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scenario", type=str, default=None, help="Shorthand: fig3, 1, 2 or 3.")
@click.option("--n", type=int, required=True, help="Series length.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def simulate(ctx, model_path, scenario, n, seed, out, config_path):
    """Simulate a switching AR series to CSV (t,x,state)."""
    cfg = _apply_config(
        ctx, config_path, dict(model=model_path, scenario=scenario, n=n, seed=seed)
    )
    if (cfg["model"] is None) == (cfg["scenario"] is None):
        raise click.UsageError("exactly one of --model / --scenario is required")
    if cfg["model"]:
        model = _run(SwitchingArModel.load, cfg["model"])
    else:
        model = _scenario_model(str(cfg["scenario"]), cfg["seed"])
    x, states = _run(switching.simulate, model, cfg["n"], None, cfg["seed"])
    t = np.arange(1, cfg["n"] + 1)
    fileio.write_csv(
        out,
        ["t", "x", "state"],
        [t, x, states],
        dict(cfg, subcommand="simulate"),
        fmts=["%d", "%.17g", "%d"],
    )
    click.echo(f"wrote {cfg['n']} samples to {out}")


@main.command("fit")
@click.option("--series", "series_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--order", "-L", type=int, required=True)
@click.option("--states", "-M", type=int, required=True)
@click.option("--max-iter", type=int, default=switching.DEFAULT_MAX_ITER, show_default=True)
@click.option("--tol", type=float, default=switching.DEFAULT_TOL, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def fit(ctx, series_path, order, states, max_iter, tol, seed, out, config_path):
    """EM-fit an M-state AR(L) model to a series; writes the model JSON."""
    cfg = _apply_config(
        ctx,
        config_path,
        dict(series=series_path, order=order, states=states, max_iter=max_iter, tol=tol, seed=seed),
    )
    x, _ = _run(fileio.read_series_csv, cfg["series"])
    inits = _run(switching.init_split, x, cfg["order"], cfg["states"], None, cfg["seed"])
    res = _run(
        switching.fit_em, x, cfg["states"], cfg["order"], inits[-1],
        max_iter=cfg["max_iter"], tol=cfg["tol"],
    )
    payload = {
        "model": res.model.to_dict(),
        "loglik": res.loglik,
        "mspe": res.mspe,
        "n_iter": res.n_iter,
        "converged": res.converged,
    }
    fileio.write_json(out, payload, dict(cfg, subcommand="fit"))
    click.echo(f"loglik={res.loglik:.6f} mspe={res.mspe:.6f} converged={res.converged}")


@main.command("select")
@click.option("--series", "series_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--order", "-L", type=int, required=True)
@click.option("--m-max", type=int, default=6, show_default=True)
@click.option("--variant", type=click.Choice(["B", "U"]), default="B", show_default=True)
@click.option("--iters", type=int, default=32, show_default=True)
@click.option("--ref-size", "-F", type=int, default=None, help="Reference batch size.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="GapCurves JSON.")
@click.option("--curves-prefix", type=str, default=None, help="Also write <prefix>_{observed,reference}.csv.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def select(ctx, series_path, order, m_max, variant, iters, ref_size, seed, cache_dir, out,
           curves_prefix, config_path):
    """Gap-statistic selection of the state count; prints selected_M."""
    cfg = _apply_config(
        ctx,
        config_path,
        dict(
            series=series_path, order=order, m_max=m_max, variant=variant, iters=iters,
            ref_size=ref_size, seed=seed, cache_dir=cache_dir, curves_prefix=curves_prefix,
        ),
    )
    x, _ = _run(fileio.read_series_csv, cfg["series"])
    config = gapselect.SelectConfig(
        variant=cfg["variant"], iters=cfg["iters"], F=cfg["ref_size"],
        seed=cfg["seed"], cache_dir=cfg["cache_dir"],
    )
    curves = _run(gapselect.select, x, cfg["order"], cfg["m_max"], config)
    fileio.write_json(out, curves.to_dict(), dict(cfg, subcommand="select"))
    if cfg["curves_prefix"]:
        M = np.arange(1, curves.M_max + 1)
        conf = dict(cfg, subcommand="select")
        fileio.write_csv(f"{cfg['curves_prefix']}_observed.csv", ["M", "log_mspe"],
                         [M, curves.observed], conf, fmts=["%d", "%.17g"])
        fileio.write_csv(f"{cfg['curves_prefix']}_reference.csv", ["M", "log_mspe"],
                         [M, curves.reference], conf, fmts=["%d", "%.17g"])
    for warning in curves.warnings:
        click.echo(f"warning: {warning}", err=True)
    click.echo(f"selected_M={curves.selected_M}")


@main.command("refcurve")
@click.option("--order", "-L", type=int, required=True)
@click.option("--radius", "-r", type=float, required=True)
@click.option("--m-max", type=int, default=6, show_default=True)
@click.option("--ref-size", "-F", type=int, default=1000, show_default=True)
@click.option("--iters", type=int, default=32, show_default=True)
@click.option("--delta", type=float, default=clustering.DEFAULT_DELTA, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def refcurve(ctx, order, radius, m_max, ref_size, iters, delta, seed, cache_dir, out, config_path):
    """Compute the reference curve W_M and write it as (M, log W) CSV."""
    cfg = _apply_config(
        ctx,
        config_path,
        dict(order=order, radius=radius, m_max=m_max, ref_size=ref_size, iters=iters,
             delta=delta, seed=seed, cache_dir=cache_dir),
    )
    W = _run(
        clustering.reference_curve, cfg["order"], cfg["radius"], cfg["m_max"],
        cfg["ref_size"], cfg["iters"], cfg["delta"], cfg["seed"], cfg["cache_dir"],
    )
    M = np.arange(1, cfg["m_max"] + 1)
    fileio.write_csv(out, ["M", "log_W"], [M, np.log(W)],
                     dict(cfg, subcommand="refcurve"), fmts=["%d", "%.17g"])
    click.echo(f"wrote reference curve to {out}")


@main.command("benchmark")
@click.option("--scenario", type=click.Choice(["1", "2", "3"]), required=True)
@click.option("--instances", type=int, required=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--m-max", type=int, default=6, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--methods", type=str, default="gap-b,gap-u,aic,bic", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Report JSON.")
@click.option("--table", type=click.Path(dir_okay=False), default=None, help="Histogram CSV.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def benchmark(ctx, scenario, instances, n, m_max, seed, methods, jobs, cache_dir, out, table,
              config_path):
    """Head-to-head Gap/AIC/BIC benchmark over random instances of a scenario."""
    cfg = _apply_config(
        ctx,
        config_path,
        dict(scenario=scenario, instances=instances, n=n, m_max=m_max, seed=seed,
             methods=methods, jobs=jobs, cache_dir=cache_dir),
    )
    method_list = tuple(m.strip() for m in str(cfg["methods"]).split(",") if m.strip())
    for meth in method_list:
        if meth not in gapselect.METHODS:
            raise click.UsageError(f"unknown method {meth!r}")
    report = _run(
        gapselect.run_benchmark,
        int(cfg["scenario"]),
        cfg["instances"],
        N=cfg["n"],
        M_max=cfg["m_max"],
        master_seed=cfg["seed"],
        methods=method_list,
        jobs=cfg["jobs"],
        cache_dir=cfg["cache_dir"],
    )
    fileio.write_json(out, report.to_dict(), dict(cfg, subcommand="benchmark"))
    if table:
        cols = [np.arange(1, cfg["m_max"] + 1)]
        header = ["M"]
        for meth in method_list:
            header.append(meth)
            cols.append(np.array(report.histogram[meth]))
        fileio.write_csv(table, header, cols, dict(cfg, subcommand="benchmark"),
                         fmts=["%d"] * len(cols))
    if report.skipped:
        click.echo(f"skipped {report.skipped} instances", err=True)
    for meth in method_list:
        click.echo(f"{meth}: accuracy={report.accuracy(meth):.2f} histogram={report.histogram[meth]}")


if __name__ == "__main__":
    main()
