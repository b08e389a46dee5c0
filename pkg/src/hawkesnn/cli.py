"""Command-line interface.

Batch work (studies, training) runs in-process; ``estimate`` and
``bootstrap`` can instead call a running service with ``--server``.
"""
from __future__ import annotations

import logging
import sys

import click
import numpy as np
import yaml

from . import __version__
from .estimator import EstimatorBundle, TrainingSet, bootstrap, estimate, fit_estimator, generate_training_sets
from .harness import (StudyConfig, emit_histograms, lag_diagnostics, load_counts_csv, predictive_bands,
                      preset, run_study, save_counts_csv)
from .harness.outputs import coarsen
from .harness.presets import PRESETS
from .neural import TrainConfig
from .process import HawkesParams, ModelFamily
from .simulate import censor, make_grid, simulate_path
from .summary import summary_statistic


def _load_yaml(path):
    with open(path) as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise click.UsageError(f"{path}: expected a mapping")
    return d


def _study_config(config, preset_name, seed=None, **over) -> StudyConfig:
    if bool(config) == bool(preset_name):
        raise click.UsageError("give exactly one of --config or --preset")
    cfg = StudyConfig.load(config) if config else preset(preset_name)
    kw = {k: v for k, v in over.items() if v is not None}
    if seed is not None:
        kw["seed"] = seed
    return cfg.replace(**kw) if kw else cfg


def _params(path) -> HawkesParams:
    d = _load_yaml(path)
    if "theta" in d:
        return ModelFamily.from_dict(d["model"]).make(d["theta"])
    return HawkesParams.from_dict(d)


def _grid(horizon, width, widths):
    if widths:
        return make_grid(horizon, [float(w) for w in widths.split(",")])
    return make_grid(horizon, width)


def _echo(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _seed(ctx, seed, default=0):
    """Command-level seed, else the global one, else ``default``."""
    if seed is not None:
        return seed
    return ctx.obj["seed"] if ctx.obj["seed"] is not None else default


def _threads(ctx, threads):
    return threads if threads is not None else ctx.obj["threads"]


seed_opt = click.option("--seed", type=int, default=None, help="Master seed (overrides the global one).")
threads_opt = click.option("--threads", type=int, default=None, help="Worker processes.")


@click.group()
@click.version_option(__version__)
@click.option("--seed", type=int, default=None, help="Master seed for all randomness [default: 0, or the config's].")
@click.option("--threads", type=int, default=1, show_default=True, help="Maximum worker processes.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, seed, threads, verbose):
    """Neural estimation of Hawkes processes from interval-censored counts."""
    if threads < 1:
        raise click.BadParameter("must be at least 1", param_hint="--threads")
    ctx.obj = {"seed": seed, "threads": threads}
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@cli.command()
@click.option("--params", "params_path", type=click.Path(exists=True), help="Parameter YAML.")
@click.option("--preset", "preset_name", type=click.Choice(sorted(PRESETS)), help="Use a preset's truth and grid.")
@click.option("--horizon", type=float)
@click.option("--width", type=float, default=1.0, show_default=True)
@click.option("--widths", help="Comma-separated width pattern, tiled to the horizon.")
@click.option("--out", type=click.Path(), help="Counts CSV (stdout if omitted).")
@click.option("--events", type=click.Path(), help="Also write the event times here.")
@seed_opt
@click.pass_context
def simulate(ctx, params_path, preset_name, horizon, width, widths, out, events, seed):
    """Simulate a path and its interval counts."""
    if bool(params_path) == bool(preset_name):
        raise click.UsageError("give exactly one of --params or --preset")
    if preset_name:
        cfg = preset(preset_name)
        params = cfg.truth_params
        grid = cfg.grid if horizon is None else _grid(horizon, width, widths)
    else:
        if horizon is None:
            raise click.UsageError("--horizon is required with --params")
        params, grid = _params(params_path), _grid(horizon, width, widths)
    path = simulate_path(params, grid.horizon, _seed(ctx, seed))
    counts = censor(path, grid)
    if events:
        np.savetxt(events, path.times, header="time", comments="")
    if out:
        save_counts_csv(counts, out)
    else:
        click.echo("interval_end_time,count")
        for t, n in zip(grid.times[1:], counts.counts):
            click.echo(f"{t!r},{n}")


@cli.command()
@click.argument("counts_csv", type=click.Path(exists=True))
@click.option("--config", type=click.Path(exists=True))
@click.option("--preset", "preset_name", type=click.Choice(sorted(PRESETS)))
@click.option("--out", type=click.Path())
@seed_opt
@click.pass_context
def summarize(ctx, counts_csv, config, preset_name, out, seed):
    """Summary statistic of a count series (one row per lag setting)."""
    cfg = _study_config(config, preset_name, _seed(ctx, seed, None))
    counts = load_counts_csv(counts_csv)
    lines = []
    for sc in cfg.summary_configs():
        s = summary_statistic(counts, sc)
        lines.append(",".join(s.names))
        lines.append(",".join(f"{v:.10g}" for v in s.values))
    _echo("\n".join(lines) + "\n", out)


@cli.command("make-training-set")
@click.option("--config", type=click.Path(exists=True))
@click.option("--preset", "preset_name", type=click.Choice(sorted(PRESETS)))
@click.option("--counts", "counts_csv", type=click.Path(exists=True),
              help="Observed series: centres the prior and fixes the grid.")
@click.option("-M", "--M", "M", type=int, help="Training rows (overrides the config).")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@seed_opt
@threads_opt
@click.pass_context
def make_training_set(ctx, config, preset_name, counts_csv, M, out, seed, threads):
    """Simulate a training set; one subdirectory per lag setting."""
    cfg = _study_config(config, preset_name, _seed(ctx, seed, None), M=M)
    data = load_counts_csv(counts_csv) if counts_csv else None
    grid = data.grid if data is not None else cfg.grid
    sets = generate_training_sets(cfg.prior_config(data), grid, cfg.summary_configs(), cfg.M,
                                  cfg.seed, _threads(ctx, threads))
    for ts in sets:
        d = out if len(sets) == 1 else f"{out}/p{ts.summary.p}"
        ts.save(d)
        click.echo(f"wrote {ts.M} rows to {d}")


@cli.command()
@click.argument("training_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--config", type=click.Path(exists=True), help="YAML with a 'train' section.")
@click.option("--epochs", type=int)
@click.option("--out", type=click.Path(), required=True, help="Bundle file to write.")
@seed_opt
@click.pass_context
def train(ctx, training_dir, config, epochs, out, seed):
    """Fit the network to a saved training set."""
    t = dict(_load_yaml(config).get("train", {})) if config else {}
    if epochs is not None:
        t["epochs"] = epochs
    s = _seed(ctx, seed, None)
    if s is not None:
        t["seed"] = s
    ts = TrainingSet.load(training_dir)
    bundle = fit_estimator(ts, TrainConfig.from_dict(t), log_fn=logging.getLogger(__name__).info)
    bundle.save(out)
    h = bundle.history
    click.echo(f"best epoch {h.best_epoch}, validation loss {min(h.val):.5f}; wrote {out}")


def _post(server, route, payload):
    import httpx
    r = httpx.post(server.rstrip("/") + route, json=payload, timeout=600)
    if r.status_code != 200:
        raise click.ClickException(f"server returned {r.status_code}: {r.text}")
    return r.json()


def _counts_payload(counts, bundle_name):
    return {"bundle": bundle_name, "counts": counts.counts.tolist(),
            "grid": {"times": counts.grid.times.tolist()}}


@cli.command("estimate")
@click.argument("bundle", type=str)
@click.argument("counts_csv", type=click.Path(exists=True))
@click.option("--server", help="Service URL; BUNDLE is then the bundle name on the server.")
def estimate_cmd(bundle, counts_csv, server):
    """Point estimate for one count series."""
    counts = load_counts_csv(counts_csv)
    if server:
        r = _post(server, "/estimate", _counts_payload(counts, bundle))
        names, theta = r["names"], r["theta"]
    else:
        b = EstimatorBundle.load(bundle)
        names, theta = b.names, estimate(b, counts)
    click.echo("name,est")
    for n, v in zip(names, theta):
        click.echo(f"{n},{v:.6g}")


@cli.command("bootstrap")
@click.argument("bundle", type=str)
@click.argument("counts_csv", type=click.Path(exists=True))
@click.option("-B", "--B", "B", type=int, default=200, show_default=True)
@click.option("--server")
@click.option("--out", type=click.Path())
@seed_opt
@threads_opt
@click.pass_context
def bootstrap_cmd(ctx, bundle, counts_csv, B, server, out, seed, threads):
    """Estimate with bootstrap SE, bias correction and 95% intervals."""
    counts = load_counts_csv(counts_csv)
    seed = _seed(ctx, seed)
    if server:
        r = _post(server, "/bootstrap", {**_counts_payload(counts, bundle), "B": B, "seed": seed})
        lines = ["name,est,bce,se,ci_lo,ci_hi"]
        for i, n in enumerate(r["names"]):
            vals = [r[k][i] for k in ("theta_hat", "theta_bce", "se_hat", "ci_lo", "ci_hi")]
            lines.append(n + "," + ",".join(f"{v:.6g}" for v in vals))
        text = "\n".join(lines) + "\n"
    else:
        b = EstimatorBundle.load(bundle)
        theta = estimate(b, counts)
        text = bootstrap(b, theta, B, seed, grid=counts.grid, threads=_threads(ctx, threads)).to_text()
    _echo(text, out)


@cli.command()
@click.option("--config", type=click.Path(exists=True))
@click.option("--preset", "preset_name", type=click.Choice(sorted(PRESETS)))
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@click.option("-M", "--M", "M", type=int)
@click.option("-J", "--J", "J", type=int)
@click.option("-B", "--B", "B", type=int)
@click.option("--no-reuse", is_flag=True, help="Recompute even if the directory holds this config.")
@seed_opt
@threads_opt
@click.pass_context
def study(ctx, config, preset_name, out, M, J, B, no_reuse, seed, threads):
    """Run a simulation study and print its table(s)."""
    cfg = _study_config(config, preset_name, _seed(ctx, seed, None), M=M, J=J, B=B)
    res = run_study(cfg, out, _threads(ctx, threads), log=lambda m: click.echo(m, err=True),
                    reuse=not no_reuse)
    for t in res.tables:
        click.echo(f"# {cfg.name} {t.label} (J={t.J}, config hash {cfg.hash})")
        click.echo(t.to_text(), nl=False)


@cli.command()
@click.option("--params", "params_path", type=click.Path(exists=True), required=True)
@click.option("--horizon", type=float, required=True)
@click.option("--width", type=float, default=1.0, show_default=True)
@click.option("--n-sims", type=int, default=1000, show_default=True)
@click.option("--period", type=float, default=52.0, show_default=True)
@click.option("--out", type=click.Path())
@seed_opt
@click.pass_context
def bands(ctx, params_path, horizon, width, n_sims, period, out, seed):
    """Per-week predictive median and 95% band."""
    b = predictive_bands(_params(params_path), make_grid(horizon, width), n_sims, period, _seed(ctx, seed))
    _echo(b.to_text(), out)


@cli.command()
@click.argument("replicates_csv", type=click.Path(exists=True))
@click.option("--prefix", default="bce", show_default=True, help="Column prefix to histogram.")
@click.option("--bins", type=int, default=30, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
def hist(replicates_csv, prefix, bins, out):
    """Density histograms (lo,hi,density) of replicate columns."""
    with open(replicates_csv) as fh:
        cols = fh.readline().strip().split(",")
    X = np.loadtxt(replicates_csv, delimiter=",", skiprows=1, ndmin=2)
    idx = [i for i, c in enumerate(cols) if c.startswith(prefix + "_")]
    if not idx:
        raise click.UsageError(f"no columns starting with {prefix}_ in {replicates_csv}")
    names = [cols[i][len(prefix) + 1:] for i in idx]
    for p in emit_histograms(X[:, idx], names, out, bins, prefix):
        click.echo(p)


@cli.command()
@click.argument("counts_csv", type=click.Path(exists=True))
@click.option("--p", "lags", default="1,2,3,6,12", show_default=True, help="Comma-separated lag counts.")
@click.option("--offset-mode", default="unit", show_default=True,
              type=click.Choice(["unit", "interval-width"]))
@click.option("--coarsen", "factor", type=int, default=1, show_default=True,
              help="Merge this many adjacent intervals first.")
def lags(counts_csv, lags, offset_mode, factor):
    """NBAR coefficients across lag counts, to guide the choice of p."""
    counts = load_counts_csv(counts_csv)
    if factor > 1:
        counts = coarsen(counts, factor)
    click.echo(lag_diagnostics(counts, [int(p) for p in lags.split(",")], offset_mode), nl=False)


@cli.command()
@click.option("--bundle", "bundles", multiple=True, help="name=path (repeatable).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(bundles, host, port):
    """Serve trained bundles over HTTP."""
    import uvicorn
    from .service.app import create_app, parse_bundle_env
    app = create_app(parse_bundle_env(",".join(bundles)) if bundles else None)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return e.exit_code or 1
    except Exception as e:
        click.echo(f"error: {type(e).__name__}: {e}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
