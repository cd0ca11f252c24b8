"""Command-line front end: run experiments, re-certify records, fit rates."""

from __future__ import annotations

import json
import sys

import click

from ipd.certificates import fit_loglog_slope
from ipd.experiments import (
    ALGORITHMS,
    PROBLEMS,
    ExperimentConfig,
    ExperimentError,
    certify_record,
    read_csv,
    run_experiment,
)


def _parse_size(text: str):
    try:
        r, c = text.lower().split("x")
        rows, cols = int(r), int(c)
    except ValueError:
        raise click.BadParameter(f"expected RxC, got {text!r}")
    if rows <= 0 or cols <= 0:
        raise click.BadParameter("size must be positive")
    return rows, cols


@click.group()
def main():
    """Inexact primal-dual solvers for TV deblurring with error certificates."""


@main.command()
@click.option("--problem", type=click.Choice(PROBLEMS), default="tvl1",
              show_default=True)
@click.option("--algorithm", type=click.Choice(sorted(ALGORITHMS)),
              default="ipd-reduced", show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True,
              help="Polynomial decay exponent of the inner precision.")
@click.option("--q", type=float, default=0.9, show_default=True,
              help="Geometric decay ratio (smooth variant).")
@click.option("--mode", type=click.Choice(["worst-case", "practical"]),
              default="practical", show_default=True)
@click.option("--lambda", "lam", type=float, default=0.1, show_default=True,
              help="Total-variation weight.")
@click.option("--gamma", type=float, default=1e-3, show_default=True,
              help="Quadratic smoothing weight (tvl2_smooth only).")
@click.option("--n-outer", type=int, default=500, show_default=True)
@click.option("--max-inner", type=int, default=500, show_default=True)
@click.option("--image", default="synth:shapes", show_default=True,
              help="PGM path or synth:{shapes,ramp,constant}.")
@click.option("--size", default="64x64", show_default=True,
              help="Synthetic image size RxC.")
@click.option("--blur-fwhm", type=float, default=3.0, show_default=True,
              help="Gaussian blur FWHM in pixels; 0 disables blurring.")
@click.option("--noise", default="saltpepper:0.5", show_default=True,
              help="saltpepper:P, gaussian:S, or none.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gt-iters", type=int, default=20000, show_default=True,
              help="Iterations of the exact baseline defining ground truth.")
@click.option("--out", "output", type=click.Path(), default=None,
              help="CSV output path; a .json summary is written alongside.")
@click.option("--paper-literal", is_flag=True, default=False,
              help="TV-L1 dual update without the data shift.")
@click.option("--beta", type=float, default=0.0, show_default=True,
              help="Gradient-error slack in the basic step condition.")
def run(problem, algorithm, alpha, q, mode, lam, gamma, n_outer, max_inner,
        image, size, blur_fwhm, noise, seed, gt_iters, output, paper_literal,
        beta):
    """Run one deblurring experiment and write its convergence record."""
    config = ExperimentConfig(
        problem=problem,
        algorithm=algorithm,
        lam=lam,
        gamma_smooth=gamma,
        alpha=alpha,
        q=q,
        n_outer=n_outer,
        max_inner=max_inner,
        mode=mode.replace("-", "_"),
        blur_fwhm=blur_fwhm,
        noise=noise,
        image=image,
        size=_parse_size(size),
        seed=seed,
        ground_truth_iters=gt_iters,
        output=output,
        paper_literal=paper_literal,
        beta=beta,
    )
    try:
        record, summary = run_experiment(config)
    except ExperimentError as exc:
        raise click.ClickException(str(exc))
    last = record.entries[-1]
    click.echo(
        f"{algorithm} on {problem}: {len(record.entries)} iterations, "
        f"final F = {last.primal_energy:.10g}"
    )
    if summary["slope"] is not None:
        click.echo(f"fitted slope {summary['slope']:.4f} (r2 {summary['r2']:.4f})")
    if summary["bound_ok"] is not None:
        click.echo(f"bound_ok: {summary['bound_ok']}")
    if output:
        click.echo(f"wrote {output} and {output}.json")


@main.command()
@click.option("--record", "record_path", type=click.Path(exists=True),
              required=True, help="CSV record written by 'ipd run'.")
def certify(record_path):
    """Re-check every stored bound inequality; exit 0 iff all hold."""
    try:
        verdict = certify_record(record_path)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot certify {record_path}: {exc}")
    click.echo(json.dumps(verdict, indent=2, sort_keys=True))
    if not verdict["ok"]:
        sys.exit(1)


@main.command()
@click.option("--record", "record_path", type=click.Path(exists=True),
              required=True)
@click.option("--from", "n_from", type=int, required=True)
@click.option("--to", "n_to", type=int, required=True)
@click.option("--semilog", is_flag=True, default=False,
              help="Fit log(value) against n instead of log(n).")
@click.option("--metric", type=click.Choice(["relerr", "erg_relerr", "lag_gap"]),
              default="erg_relerr", show_default=True)
def rates(record_path, n_from, n_to, semilog, metric):
    """Fit the observed convergence rate over an iteration window."""
    cols = read_csv(record_path)
    try:
        slope, r2 = fit_loglog_slope(
            cols["n"], cols[metric], n_range=(n_from, n_to), semilog=semilog
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps({"slope": slope, "r2": r2, "metric": metric,
                           "from": n_from, "to": n_to, "semilog": semilog}))


if __name__ == "__main__":
    main()
