"""Batch command-line interface.

    bridgemde simulate --config run.json --out results/
    bridgemde estimate --config run.json --out results/ --workers 4
    bridgemde limit    --config run.json --out results/
    bridgemde compare  --config run.json --out results/ --seed 7

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import FORMAT_VERSION, RunConfig, load_config
from .dynamics import simulate_sde
from .errors import BridgeMDEError, ConfigError
from .limit_law import LimitLawSpec, fisher_info, sample_limit_distribution
from .montecarlo import run_limit_comparison, run_replications, stream

log = logging.getLogger("bridgemde")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _single_eps(cfg: RunConfig) -> float:
    eps = cfg.experiment.eps_list
    if len(eps) != 1:
        raise ConfigError("eps_list", "this command needs exactly one eps value")
    return eps[0]


def cmd_simulate(cfg: RunConfig, out: Path, workers: int) -> Path:
    exp = cfg.experiment
    eps = _single_eps(cfg)
    model, grid, _ = exp.setup()
    theta = np.array(exp.theta_star)
    rows = []
    for rep in range(exp.reps):
        X = simulate_sde(model, theta, eps, grid, stream(exp.base_seed, 0, rep, "path"))
        rows.extend((str(rep), _fmt(t), _fmt(x)) for t, x in zip(grid.points, X.values))
    path = out / "paths.csv"
    _write_csv(path, ("rep", "t", "X"), rows)
    return path


def cmd_estimate(cfg: RunConfig, out: Path, workers: int) -> Path:
    records = run_replications(cfg.experiment, workers)
    records.sort(key=lambda r: (r.eps, r.rep))
    rows = []
    for r in records:
        for j in range(cfg.experiment.p):
            rows.append((_fmt(r.eps), str(r.rep), str(j), _fmt(r.theta_hat[j]),
                         _fmt(r.rescaled_error[j]), str(int(r.zero_pattern[j])),
                         _fmt(r.contrast), str(int(r.converged))))
    path = out / "estimates.csv"
    _write_csv(path, ("eps", "rep", "coord", "theta_hat", "rescaled_error", "is_zero",
                      "contrast", "converged"), rows)
    return path


def cmd_limit(cfg: RunConfig, out: Path, workers: int) -> Path:
    exp = cfg.experiment
    model, grid, mu = exp.setup()
    theta = np.array(exp.theta_star)
    spec = LimitLawSpec(theta, fisher_info(model, theta, mu, grid), exp.gamma,
                        exp.lambda_rule.limit_lambda0(exp.gamma))
    samples = sample_limit_distribution(model, theta, mu, grid, spec, cfg.n_limit,
                                        stream(exp.base_seed, 0, 0, "limit"))
    rows = [(str(i), str(j), _fmt(samples[i, j]))
            for i in range(samples.shape[0]) for j in range(samples.shape[1])]
    path = out / "limit_samples.csv"
    _write_csv(path, ("draw", "coord", "u_star"), rows)
    return path


def cmd_compare(cfg: RunConfig, out: Path, workers: int) -> Path:
    exp = cfg.experiment
    if not _single_eps(cfg) > 0:
        raise ConfigError("eps_list", "compare needs a positive eps")
    report, _, _ = run_limit_comparison(exp, cfg.n_limit, workers)
    body = report.to_dict()
    null = [j for j, v in enumerate(exp.theta_star) if v == 0.0]
    nonnull = [body["zero_fraction"][j] for j in range(exp.p) if j not in null]
    body["null_coords"] = null
    body["false_zero_rate"] = max(nonnull) if nonnull else 0.0
    body["config"] = cfg.raw
    body["tool_version"] = __version__
    body["format_version"] = FORMAT_VERSION
    path = out / "report.json"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(json.dumps(body, indent=2, sort_keys=True, allow_nan=False) + "\n")
    return path


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "limit": cmd_limit,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgemde", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config out_dir or .)")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes for replications")
        opt = p.add_argument_group("optimizer overrides")
        opt.add_argument("--starts", type=int, default=None, help="multi-start points")
        opt.add_argument("--max-evals", type=int, default=None, help="evaluations per start")
        opt.add_argument("--tol", type=float, default=None, help="simplex diameter tolerance")
        opt.add_argument("--optimizer-seed", type=int, default=None,
                         help="seed for the Latin-hypercube starts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        cfg = load_config(args.config, args.seed,
                          {"starts": args.starts, "max_evals": args.max_evals, "tol": args.tol,
                           "seed": args.optimizer_seed})
        out = Path(args.out or cfg.out_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        path = COMMANDS[args.command](cfg, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BridgeMDEError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
