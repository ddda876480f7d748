"""Command-line entry point: ``open-ns <subcommand> [options]``.

Subcommands: collect, evaluate, sweep, ablate, demo, plot.  All of them read
the same configuration (profile, optional TOML file, ``--set`` overrides,
``--seed``) and write into ``--out``.  The exit status is 0 unless some
result row failed for a reason other than an ineffective sample.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import estimators as est
from .config import build_config
from .envs import EnvConfig, EnvError, make_policy
from .forecast import ForecastError, predict
from .harness import (
    ABLATION_PARAMS,
    PROFILES,
    ConfigError,
    ExperimentConfig,
    SweepResult,
    _failure_tag,
    _streams,
    ablation_sweep,
    collect,
    figure_demo,
    ground_truth,
    resolve_jobs,
    run_sweep,
    trial_seed,
)
from .plotting import Panel, PlotError, Series, plot_results, render
from .policies import PolicyError

NON_FATAL = {"failed:ineffective-sample"}


def _fatal(flags: Iterable[str]) -> list[str]:
    return [f for f in flags if f.startswith("failed:") and f not in NON_FATAL]


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _r(x: float) -> str:
    return repr(float(x))


def _cell_args(config: ExperimentConfig, args: argparse.Namespace) -> tuple[str, float]:
    domain = args.domain or config.domains[0]
    speed = config.speeds[0] if args.speed is None else args.speed
    return domain, float(speed)


# ------------------------------------------------------------ subcommands

def cmd_collect(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    domain, speed = _cell_args(config, args)
    episodes_ss, _, env_seed = _streams(trial_seed(config.base_seed, args.trial))
    env = config.env_config(domain, speed, env_seed)
    pi, beta = config.policies(env)
    dataset, snap = collect(env, beta, config.n_episodes, episodes_ss, pis=[pi])
    dataset.to_csv(out / "dataset.csv")
    (out / "snapshot.bin").write_bytes(snap)
    est.build_performance_series(dataset, pi).to_csv(out / "series.csv")
    meta = {"env": env.to_dict(), "pi": pi.name, "beta": beta.name, "trial": args.trial,
            "config": config.to_dict()}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"collected {len(dataset)} episodes of {domain} at speed {speed:g} into {out}")
    return 0


def cmd_evaluate(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    data = Path(args.data)
    try:
        meta = json.loads((data / "meta.json").read_text())
        dataset = est.Dataset.from_csv(data / "dataset.csv")
        snap = (data / "snapshot.bin").read_bytes()
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read collected data in {data}: {exc}") from None
    env = EnvConfig.from_dict(meta["env"])
    pi = make_policy(config.pi_preset or meta["pi"], env)
    _, clones_ss, _ = _streams(trial_seed(config.base_seed, int(meta.get("trial", 0))))
    truth, truth_se = ground_truth(snap, pi, config.L, config.n_future_clones, clones_ss)
    first = len(dataset) + 1
    per_episode, records, fatal = [], [], []
    for algorithm in config.algorithms:
        try:
            fc = predict(algorithm, dataset, pi, config.algo, config.L)
        except ForecastError as exc:
            tag = _failure_tag(exc)
            records.append({"algorithm": algorithm, "total": None, "flags": [tag]})
            fatal += _fatal([tag])
            continue
        per_episode += [(algorithm, first + k, _r(v)) for k, v in enumerate(fc.per_episode)]
        records.append({"algorithm": algorithm, "total": fc.total, "error": fc.total - truth,
                        "flags": list(fc.flags)})
    _write_csv(out / "forecasts.csv", ["algorithm", "episode_index", "predicted_J"], per_episode)
    summary = {"truth": truth, "truth_se": truth_se, "L": config.L, "pi": pi.name, "forecasts": records}
    (out / "forecasts.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for rec in records:
        total = "failed" if rec["total"] is None else f"{rec['total']:.6g}"
        print(f"{rec['algorithm']:8s} total={total} flags={','.join(rec['flags']) or '-'}")
    print(f"truth    total={truth:.6g} (se {truth_se:.3g})")
    return 1 if fatal else 0


def _finish_sweep(result: SweepResult, out: Path) -> int:
    rp, sp = result.write(out)
    plots = plot_results(sp, out / "plots")
    fatal = _fatal(r.flags for r in result.rows)
    print(f"wrote {rp}, {sp} and {len(plots)} plot(s); {len(fatal)} fatal failure row(s)")
    return 1 if fatal else 0


def cmd_sweep(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    return _finish_sweep(run_sweep(config, resolve_jobs(args.jobs)), out)


def cmd_ablate(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated integers, got {args.values!r}") from None
    return _finish_sweep(ablation_sweep(config, args.param, values, resolve_jobs(args.jobs)), out)


def cmd_demo(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    domain = args.domain or "RoboToyActive"
    speed = 2.0 if args.speed is None else args.speed
    demo = figure_demo(config, domain, speed, args.trial)
    n, L = demo.n, len(demo.forecast)
    episodes = np.arange(1, n + L + 1)
    _write_csv(out / "true_performance.csv", ["episode", "J", "deployed"],
               ((int(i), _r(v), int(i > n)) for i, v in zip(episodes, demo.true_j)))
    _write_csv(out / "estimates.csv", ["episode", "j_hat"],
               ((i + 1, _r(v)) for i, v in enumerate(demo.j_hat)))
    rows = [(int(i), "denoised", _r(v)) for i, v in zip(demo.denoised_index, demo.denoised)]
    rows += [(n + k + 1, "forecast", _r(v)) for k, v in enumerate(demo.forecast)]
    _write_csv(out / "denoised_forecast.csv", ["episode", "kind", "value"], rows)

    future = np.arange(n + 1, n + L + 1)
    panels = {
        "true_performance.svg": Panel(f"{domain}: true performance of pi", "episode", "J",
                                      [Series("J", list(episodes), list(demo.true_j))], [n]),
        "estimates.svg": Panel(f"{domain}: per-episode importance sampling estimates", "episode", "J hat",
                               [Series("J hat", list(range(1, n + 1)), list(demo.j_hat), style="scatter")], [n]),
        "denoised_forecast.svg": Panel(f"{domain}: denoised series and forecast", "episode", "J", [
            Series("denoised", list(map(float, demo.denoised_index)), list(demo.denoised)),
            Series("forecast", list(map(float, future)), list(demo.forecast), dashed=True),
            Series("J", list(map(float, episodes)), list(demo.true_j), color="#999999"),
        ], [n]),
    }
    for name, panel in panels.items():
        (out / name).write_text(render([panel]))
    sd_denoised, sd_raw = demo.residual_sd()
    print(f"residual sd: denoised {sd_denoised:.4g}, raw {sd_raw:.4g}")
    print(f"slope per episode: past estimates {demo.past_slope:.4g}, forecast {demo.forecast_slope:.4g}")
    return 0


def cmd_plot(config: ExperimentConfig, args: argparse.Namespace, out: Path) -> int:
    written = plot_results(args.results, out)
    for path in written:
        print(path)
    return 0


COMMANDS = {"collect": cmd_collect, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
            "ablate": cmd_ablate, "demo": cmd_demo, "plot": cmd_plot}


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML experiment file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--profile", choices=sorted(PROFILES), help="scale profile (default: desk)")
    common.add_argument("--seed", type=_seed, help="base seed (unsigned 64-bit)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable (e.g. algo.open_p=100)")
    common.add_argument("--jobs", type=int, help="worker processes (default: $OPEN_NS_JOBS or 1)")

    parser = argparse.ArgumentParser(prog="open-ns", description="Forecast off-policy performance "
                                     "in non-stationary episodic environments.")
    sub = parser.add_subparsers(dest="command", required=True)
    cell = argparse.ArgumentParser(add_help=False)
    cell.add_argument("--domain", help="domain id (default: first configured domain)")
    cell.add_argument("--speed", type=float, help="non-stationarity speed")
    cell.add_argument("--trial", type=int, default=0, help="trial index for seed derivation")

    sub.add_parser("collect", parents=[common, cell], help="log behaviour-policy data and a snapshot")
    p = sub.add_parser("evaluate", parents=[common], help="forecast from collected data and compare to clones")
    p.add_argument("--data", required=True, help="directory written by 'collect'")
    sub.add_parser("sweep", parents=[common], help="speed sweep over domains, algorithms and trials")
    p = sub.add_parser("ablate", parents=[common], help="sweep with one hyper-parameter varied")
    p.add_argument("--param", required=True, choices=ABLATION_PARAMS)
    p.add_argument("--values", required=True, help="comma-separated integers, e.g. 100,200,400")
    sub.add_parser("demo", parents=[common, cell], help="true, estimated, denoised and forecast series")
    p = sub.add_parser("plot", parents=[common], help="bias and MSE panels from results or summary CSV")
    p.add_argument("--results", required=True, help="results.csv or summary.csv")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = build_config(args.config, profile=args.profile, overrides=args.overrides, seed=args.seed)
        if args.jobs is not None:
            resolve_jobs(args.jobs)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](config, args, out)
    except (ConfigError, PlotError, EnvError, PolicyError, est.EstimatorError) as exc:
        print(f"open-ns {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
