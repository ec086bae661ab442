"""Experiment orchestration and the ``maarp`` command line tool."""

from __future__ import annotations

import argparse
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config
from .dynamics import NoiseModel, NumericalFailure, Schedule, run, validate_schedule
from .game import (
    GameParams,
    check_slater,
    check_strict_monotonicity,
    compute_bound_constants,
    constraint_eval,
    generate_random_game,
    uniform_constraints,
)
from .geometry import Regularizer
from .metrics import percentile_bands
from .numerics import RngStream
from .oracle import OracleError, VneSolution, solve_vne

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ORACLE = 0, 1, 2, 3
GAME_STREAM = 0x6A3E  # stream id for game generation under game.seed
ORACLE_FILE = "vne.json"


def build_problem(cfg: ExperimentConfig):
    g = cfg.game
    params = GameParams(C_scale=g.C_scale, c=g.c)
    spec = generate_random_game(RngStream(g.seed, GAME_STREAM), g.N, g.D, params)
    cspec = uniform_constraints(g.D, cfg.constraints.d, cfg.constraints.A_scale)
    return spec, cspec


@dataclass(frozen=True)
class Job:
    index: int
    algorithm: str
    mirror: str
    sample: int


def jobs_for(cfg: ExperimentConfig) -> list[Job]:
    out = []
    for alg in cfg.run.algorithms:
        for mirror in cfg.run.mirror_map:
            for s in range(cfg.run.samples):
                out.append(Job(len(out), alg, mirror, s))
    return out


def _run_job(args):
    cfg, spec, cspec, oracle, job = args
    schedule = Schedule(cfg.schedule.gamma0, cfg.schedule.p, cfg.schedule.alpha)
    noise = NoiseModel(cfg.noise.kind, cfg.noise.sigma)
    reg = Regularizer(job.mirror, spec.D)
    try:
        res = run(job.algorithm, spec, cspec, schedule, noise, reg, cfg.run.iters,
                  rng=RngStream(cfg.run.master_seed, job.index), record_every=cfg.record_every,
                  oracle=oracle)
    except (NumericalFailure, ValueError, FloatingPointError) as e:
        return job, None, f"{type(e).__name__}: {e}"
    keep = {"iter": res.series["iter"]}
    for m in cfg.output.emit:
        keep[m] = res.series[m]
    return job, keep, None


def _fmt(v) -> str:
    return "%.17g" % v


def _write_single(path: Path, iters, values):
    lines = ["iter,value"] + [f"{int(n)},{_fmt(v)}" for n, v in zip(iters, values)]
    path.write_text("\n".join(lines) + "\n")


def _write_samples(path: Path, iters, per_sample: dict[int, np.ndarray]):
    lines = ["sample,iter,value"]
    for s in sorted(per_sample):
        lines += [f"{s},{int(n)},{_fmt(v)}" for n, v in zip(iters, per_sample[s])]
    path.write_text("\n".join(lines) + "\n")


def _write_bands(path: Path, iters, bands: dict[str, np.ndarray]):
    cols = ["mean", "p25", "p50", "p75", "p90"]
    lines = ["iter," + ",".join(cols)]
    for j, n in enumerate(iters):
        lines.append(f"{int(n)}," + ",".join(_fmt(bands[c][j]) for c in cols))
    path.write_text("\n".join(lines) + "\n")


def execute(cfg: ExperimentConfig, out_dir=None, log=print) -> int:
    """Run every (algorithm, mirror, sample) job and write CSVs plus a manifest.

    Job k draws its noise from ``RngStream(master_seed, k)``. Output order
    depends on job indices only, so worker count does not change any byte.
    """
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    spec, cspec = build_problem(cfg)
    oracle = None
    if cfg.output.oracle:
        sol = VneSolution.load(cfg.output.oracle)
        oracle = (sol.x, sol.lam)

    jobs = jobs_for(cfg)
    payload = [(cfg, spec, cspec, oracle, j) for j in jobs]
    if cfg.run.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.run.workers) as pool:
            results = list(pool.map(_run_job, payload))
    else:
        results = [_run_job(p) for p in payload]
    results.sort(key=lambda r: r[0].index)

    failures = []
    files = []
    for alg in cfg.run.algorithms:
        for mirror in cfg.run.mirror_map:
            group = [(j, s) for j, s, err in results if j.algorithm == alg and j.mirror == mirror and err is None]
            if not group:
                continue
            iters = group[0][1]["iter"]
            for metric in cfg.output.emit:
                stem = f"{metric}__{alg}__{mirror}"
                if cfg.run.samples == 1:
                    _write_single(out / f"{stem}.csv", iters, group[0][1][metric])
                    files.append(f"{stem}.csv")
                    continue
                per = {j.sample: s[metric] for j, s in group}
                _write_samples(out / f"{stem}.csv", iters, per)
                files.append(f"{stem}.csv")
                if len(per) >= 2:
                    _write_bands(out / f"{stem}__bands.csv", iters, percentile_bands(list(per.values())))
                    files.append(f"{stem}__bands.csv")
    for j, _, err in results:
        if err is not None:
            failures.append({"job": j.index, "algorithm": j.algorithm, "mirror": j.mirror, "sample": j.sample, "error": err})
            log(f"sample failed: {j.algorithm}/{j.mirror}/#{j.sample}: {err}")

    manifest = {
        "config": cfg.to_dict(execution=False),
        "config_sha256": cfg.digest(),
        "game_seed": cfg.game.seed,
        "master_seed": cfg.run.master_seed,
        "jobs": [{"job": j.index, "algorithm": j.algorithm, "mirror": j.mirror, "sample": j.sample,
                  "stream": [cfg.run.master_seed, j.index]} for j in jobs],
        "failures": failures,
        "files": files,
        "versions": {"maarp": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return EXIT_RUNTIME if failures else EXIT_OK


def oracle_command(cfg: ExperimentConfig, out_dir=None, log=print) -> int:
    """Solve for the VNE at tol 1e-8 and store it as ``vne.json``."""
    spec, cspec = build_problem(cfg)
    try:
        sol = solve_vne(spec, cspec, tol=1e-8)
    except OracleError as e:
        log(f"oracle failed: {e}")
        return EXIT_ORACLE
    out = Path(out_dir or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    sol.save(out / ORACLE_FILE)
    g = constraint_eval(cspec, sol.x)
    log(f"residual {sol.residual:.3e} after {sol.iterations} iterations")
    log(f"max load {g.max():.3e}, complementarity max |lam_r g_r| {np.max(np.abs(sol.lam * g)):.3e}")
    log(f"wrote {out / ORACLE_FILE}")
    return EXIT_OK


def validate_command(cfg: ExperimentConfig, log=print) -> int:
    spec, cspec = build_problem(cfg)
    mono = check_strict_monotonicity(spec)
    slater = check_slater(spec, cspec)
    log(f"strict monotonicity: min eigenvalue {mono:.4g} ({'ok' if mono > 0 else 'FAILS'})")
    log(f"Slater at barycenter: max load {slater.margin:.4g} ({'ok' if slater.satisfied else 'not shown'})")
    schedule = Schedule(cfg.schedule.gamma0, cfg.schedule.p, cfg.schedule.alpha)
    for mirror in cfg.run.mirror_map:
        bc = compute_bound_constants(spec, cspec, Regularizer(mirror, spec.D), samples=1000, vertex_limit=512)
        rep = validate_schedule(schedule, bc)
        log(f"[{mirror}] C1={bc.C1:.4g} C2={bc.C2:.4g} C3={bc.C3:.4g} K={bc.K:g}")
        log(f"[{mirror}] summability={rep.summability} ergodic={rep.ergodic} "
            f"alpha_sufficient={rep.alpha_sufficient} (threshold {rep.alpha_threshold:.4g}) "
            f"trackable_from={rep.trackable_from}")
        for note in rep.notes:
            log(f"[{mirror}] note: {note}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maarp", description="Simulate priced mirror-ascent dynamics on coupled-constraint games.")
    p.add_argument("--config", required=True, help="config file path or shipped preset name")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="master seed (overrides run.master_seed)")
    p.add_argument("--samples", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--algorithm", action="append", help="repeatable; replaces run.algorithms")
    p.add_argument("--mirror", choices=("entropy", "euclidean"), action="append", help="repeatable; replaces run.mirror_map")
    p.add_argument("--record-every", type=int)
    p.add_argument("--workers", type=int)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--oracle", action="store_true", help="solve for the equilibrium and store it")
    mode.add_argument("--validate", action="store_true", help="report game and schedule checks only")
    return p


def apply_overrides(cfg: ExperimentConfig, ns) -> ExperimentConfig:
    if ns.out is not None:
        cfg.output.directory = ns.out
    if ns.seed is not None:
        cfg.run.master_seed = ns.seed
    if ns.samples is not None:
        cfg.run.samples = ns.samples
    if ns.iters is not None:
        cfg.run.iters = ns.iters
    if ns.algorithm:
        cfg.run.algorithms = list(ns.algorithm)
    if ns.mirror:
        cfg.run.mirror_map = list(ns.mirror)
    if ns.record_every is not None:
        cfg.run.record_every = ns.record_every
    if ns.workers is not None:
        cfg.run.workers = ns.workers
    return cfg.validate()


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    try:
        cfg = apply_overrides(parse_config(ns.config), ns)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if ns.validate:
        return validate_command(cfg)
    if ns.oracle:
        return oracle_command(cfg)
    try:
        return execute(cfg)
    except (OSError, OracleError, ValueError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
