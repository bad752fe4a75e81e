"""Command-line front-end: ``hris-dfrc {optimize,sweep,beampattern,validate}``.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 non-convergence (artifacts are still written).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .baselines import BaselineKind, SystemResult, solve_system
from .beampattern import (bs_pattern, direction, hris_pattern, to_db, write_pattern_csv)
from .bs_opt import CommInfeasibleError
from .config import (ConfigError, ExperimentConfig, SweepKind, bundled_config_path, load_config,
                     parse_systems)
from .model import Beamformer, HrisConfig, SinrReport
from .orchestrator import IterationRecord, RunResult, initial_beamformer, run
from .scene import ChannelModel, build_channels
from .units import DB_FLOOR, linear_to_db
from . import validation

log = logging.getLogger("hris_dfrc")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2, 3

REPORT_BASE = ["iter", "f"]
SWEEP_HEADER = ["system", "p_t_db", "gamma_c_db", "eta_r_db", "min_eta_c_db", "converged",
                "outer_iters", "wall_ms"]
TRACE_HEADER = ["iteration", "f_value", "eta_r_db", "min_eta_c_db"]
TRIAL_HEADER = ["gamma_r_trial", "status", "margin", "iterations"]


def _fmt(x) -> str:
    """Fixed-precision text for floats so output files are reproducible byte-for-byte."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def _db(x) -> float:
    return linear_to_db(x, floor=DB_FLOOR)


# -- report files -------------------------------------------------------------

def report_header(num_users: int) -> List[str]:
    return (REPORT_BASE + ["eta_r_db"] + [f"eta_c_db_user{k + 1}" for k in range(num_users)]
            + ["gamma_r_star_db", "rank_ratios"])


def _report_row(it: int, f: float, report: SinrReport, gamma_r_star: float, ratios) -> list:
    ratios = np.atleast_1d(np.asarray(ratios, float))
    return ([it, _fmt(f), _fmt(_db(report.eta_r))] + [_fmt(_db(e)) for e in report.eta_c]
            + [_fmt(_db(gamma_r_star)) if np.isfinite(gamma_r_star) else "nan",
               ";".join(_fmt(r) for r in ratios)])


def record_row(rec: IterationRecord) -> list:
    return _report_row(rec.iteration, rec.f_value, rec.report, rec.gamma_r_star, rec.rank_ratios)


def write_report(path: Path, records: Sequence[IterationRecord], num_users: int) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(report_header(num_users))
        for rec in records:
            w.writerow(record_row(rec))


def write_system_report(path: Path, results: Sequence[SystemResult], num_users: int) -> None:
    """Per-iteration rows for every system; single-shot systems get one row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["system"] + report_header(num_users))
        for res in results:
            if res.records:
                for rec in res.records:
                    w.writerow([res.kind.value] + record_row(rec))
            else:
                w.writerow([res.kind.value] + _report_row(1, float("nan"), res.report,
                                                          res.report.eta_r, []))


def write_trace(path: Path, rec: IterationRecord) -> None:
    """Descent trace of one HRIS step, with the SINRs of each iterate."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        if rec.hris_path is None or rec.hris_context is None:
            return
        eta_r, eta_c = rec.hris_context.sinrs(rec.hris_path)
        min_c = eta_c.min(axis=-1)
        for i, f in enumerate(rec.hris_trace):
            w.writerow([i, _fmt(f), _fmt(_db(eta_r[i])), _fmt(_db(min_c[i]))])


def write_trials(path: Path, rec: IterationRecord) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRIAL_HEADER)
        if rec.bisection is None:
            return
        for t in rec.bisection.trials:
            w.writerow([_fmt(t.gamma_r), t.status.value, _fmt(t.margin), t.iterations])


def design_dict(cfg: ExperimentConfig, beta, bf: Beamformer, report: SinrReport,
                converged: bool, iterations: int, system: str = "HRIS") -> dict:
    beta = None if beta is None else [float(b) for b in np.asarray(beta)]
    return {
        "beta": beta,
        "W_real": np.real(bf.W).tolist(),
        "W_imag": np.imag(bf.W).tolist(),
        "meta": {
            "system": system, "seed": cfg.seed, "p_t_db": cfg.scene.p_t_db,
            "gamma_c_db": cfg.optimizer.gamma_c_db, "num_antennas": bf.num_antennas,
            "num_users": bf.num_users, "num_elements": None if beta is None else len(beta),
            "eta_r_db": _db(report.eta_r), "min_eta_c_db": _db(report.min_eta_c),
            "converged": bool(converged), "outer_iterations": int(iterations),
        },
    }


def load_design(path: Path):
    """(beta, Beamformer) from a design file; raises ConfigError when unusable."""
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError("--design", f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("--design", f"invalid JSON at line {e.lineno}: {e.msg}") from None
    try:
        W = np.asarray(obj["W_real"], float) + 1j * np.asarray(obj["W_imag"], float)
        beta = obj.get("beta")
        beta = None if beta is None else np.asarray(beta, float)
        bf = Beamformer.from_matrix(W)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("--design", f"malformed design file: {e}") from None
    return beta, bf


def _summary(cfg: ExperimentConfig, res: RunResult, others: Sequence[SystemResult]) -> str:
    rep = res.report
    lines = [
        "HRIS-assisted DFRC joint beamforming",
        f"seed                 {cfg.seed}",
        f"per-antenna power    {cfg.scene.p_t_db:g} dB",
        f"comm threshold       {cfg.optimizer.gamma_c_db:g} dB",
        f"antennas / elements / users   {cfg.scene.num_antennas} / {cfg.scene.num_elements} / "
        f"{len(cfg.scene.users)}",
        f"outer iterations     {res.iterations} ({'converged' if res.converged else 'NOT converged'})",
        f"radar SINR           {_db(rep.eta_r):.4f} dB",
    ]
    for k, e in enumerate(rep.eta_c):
        lines.append(f"user {k + 1} SINR          {_db(e):.4f} dB")
    lines.append(f"comm constraints     {'met' if rep.comm_satisfied(1e-3) else 'VIOLATED'}")
    lines.append("power split beta     " + " ".join(f"{b:.4f}" for b in res.beta))
    for o in others:
        lines.append(f"{o.kind.value:<20} radar {_db(o.report.eta_r):.4f} dB, "
                     f"min comm {_db(o.report.min_eta_c):.4f} dB")
    return "\n".join(lines) + "\n"


# -- commands -------------------------------------------------------------------

def cmd_optimize(cfg: ExperimentConfig, out: Path, trace: bool = True) -> int:
    out.mkdir(parents=True, exist_ok=True)
    scene = cfg.build_scene()
    channels = build_channels(scene)
    ocfg = cfg.build_optimizer()
    res = run(scene, ocfg, channels)
    write_report(out / "report.csv", res.records, scene.num_users)
    (out / "design.json").write_text(json.dumps(
        design_dict(cfg, res.beta, res.beamformer, res.report, res.converged, res.iterations),
        indent=2) + "\n")
    if trace:
        for rec in res.records:
            write_trace(out / f"hris_trace_iter{rec.iteration:02d}.csv", rec)
            write_trials(out / f"bisection_iter{rec.iteration:02d}.csv", rec)
    others = []
    for kind in cfg.systems:
        if kind is BaselineKind.HRIS:
            continue
        try:
            others.append(solve_system(kind, scene, ocfg, ga=cfg.ga_params(), channels=channels))
        except CommInfeasibleError as e:
            log.warning("%s: %s", kind.value, e)
    if others:
        write_system_report(out / "baselines.csv", others, scene.num_users)
    (out / "summary.txt").write_text(_summary(cfg, res, others))
    log.info("wrote %s", out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _sweep_points(cfg: ExperimentConfig):
    """(p_t_db, gamma_c_db) per listed sweep value, plus the processing order.

    Power sweeps run from low to high power and threshold sweeps from the
    tightest threshold down, so the previous design of the same system stays
    admissible and serves as a warm start.
    """
    vals = list(cfg.sweep.values_db)
    if cfg.sweep.kind is SweepKind.POWER:
        pts = [(v, cfg.optimizer.gamma_c_db) for v in vals]
        order = sorted(range(len(vals)), key=lambda i: vals[i])
    else:
        pts = [(cfg.scene.p_t_db, v) for v in vals]
        order = sorted(range(len(vals)), key=lambda i: -vals[i])
    return pts, order


def sweep_system(cfg: ExperimentConfig, kind: BaselineKind, timing: bool = False) -> List[list]:
    """All sweep rows for one system, in listed order."""
    pts, order = _sweep_points(cfg)
    rows: List[Optional[list]] = [None] * len(pts)
    warm: Optional[SystemResult] = None
    for i in order:
        p_db, g_db = pts[i]
        scene = cfg.build_scene(p_t_db=p_db)
        ocfg = cfg.build_optimizer(gamma_c_db=g_db)
        try:
            res = solve_system(kind, scene, ocfg, warm=warm, ga=cfg.ga_params())
        except (CommInfeasibleError, FloatingPointError, ValueError) as e:
            status = "infeasible" if isinstance(e, CommInfeasibleError) else "error"
            log.warning("%s at p_t=%g dB, gamma_c=%g dB: %s", kind.value, p_db, g_db, e)
            rows[i] = [kind.value, _fmt(p_db), _fmt(g_db), "nan", "nan", status, 0, ""]
            continue
        warm = res
        rows[i] = [kind.value, _fmt(p_db), _fmt(g_db), _fmt(_db(res.report.eta_r)),
                   _fmt(_db(res.report.min_eta_c)), "true" if res.converged else "false",
                   res.outer_iters, f"{res.wall_ms:.1f}" if timing else ""]
    return rows


def cmd_sweep(cfg: ExperimentConfig, out: Path, parallel: int = 1, timing: bool = False) -> int:
    if cfg.sweep.kind is SweepKind.NONE:
        raise ConfigError("sweep.kind", "select 'power' or 'threshold' to run a sweep")
    out.mkdir(parents=True, exist_ok=True)
    kinds = list(cfg.systems)
    if parallel > 1 and len(kinds) > 1:
        with ProcessPoolExecutor(max_workers=min(parallel, len(kinds))) as pool:
            parts = list(pool.map(sweep_system, [cfg] * len(kinds), kinds, [timing] * len(kinds)))
    else:
        parts = [sweep_system(cfg, k, timing) for k in kinds]
    path = out / f"sweep_{cfg.sweep.kind.value}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_HEADER)
        for rows in parts:
            w.writerows(rows)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_beampattern(cfg: ExperimentConfig, out: Path, design: Path, step_deg: float = 0.5,
                    thetas: Sequence[float] = (0.0, 15.0, 30.0)) -> int:
    beta, bf = load_design(design)
    scene = cfg.build_scene()
    channels = build_channels(scene)
    if bf.num_antennas != channels.num_antennas or bf.num_users != channels.num_users:
        raise ConfigError("--design", f"W is {bf.num_antennas}x{bf.num_users + 1}, the scene needs "
                          f"{channels.num_antennas}x{channels.num_users + 1}")
    out.mkdir(parents=True, exist_ok=True)
    phi = np.arange(0.0, 360.0, step_deg)
    if beta is not None:
        if beta.shape != (channels.num_elements,):
            raise ConfigError("--design", f"beta has {beta.size} entries, the scene has "
                              f"{channels.num_elements} elements")
        hris = HrisConfig(np.clip(beta, 0.0, 1.0))
        P, T = np.meshgrid(phi, np.asarray(thetas, float), indexing="xy")
        power = hris_pattern(scene.hris, channels, hris, bf, direction(P.ravel(), T.ravel()))
        write_pattern_csv(out / "hris_pattern.csv", P.ravel(), T.ravel(), to_db(power))
    theta0 = np.zeros_like(phi)
    power = bs_pattern(scene.bs, bf, direction(phi, theta0))
    for i in range(bf.num_users + 1):
        name = "radar" if i == bf.num_users else f"user{i + 1}"
        write_pattern_csv(out / f"bs_pattern_{name}.csv", phi, theta0, to_db(power[:, i]))
    log.info("wrote patterns to %s", out)
    return EXIT_OK


def validation_suites(cfg: ExperimentConfig, cases: int = 50, mc_samples: Optional[int] = None,
                      corrupt_c2: bool = False) -> List[validation.CheckResult]:
    """The invariant suites on the configured scene's geometry."""
    scene = cfg.build_scene()
    base = build_channels(scene)
    rng = np.random.default_rng(cfg.seed)
    if scene.channel_model is ChannelModel.RAYLEIGH:
        def factory(r):
            return build_channels(scene.replace(seed=int(r.integers(2 ** 31))))
    else:
        def factory(r):
            return base
    # Unit-scaled entries keep the absolute identity tolerance meaningful.
    scale = 1.0 / np.sqrt(base.num_antennas * base.num_elements)

    def scaled(r):
        ch = factory(r)
        return dataclasses.replace(ch, G=ch.G * scale)

    out = []
    out += validation.proposition_equivalence(factory, rng, cases, scene.noise_power)
    out += validation.quadratic_identities(scaled, rng, cases, corrupt_c2=corrupt_c2)
    out.append(validation.gradient_check(factory, rng, cases, sigma2=scene.noise_power))
    bf = initial_beamformer(base, scene.per_antenna_power)
    hris = HrisConfig(rng.random(base.num_elements))
    n = cfg.monte_carlo_samples if mc_samples is None else mc_samples
    out += validation.monte_carlo_check(base, bf, hris, scene.noise_power, n, seed=cfg.seed)
    return out


def cmd_validate(cfg: ExperimentConfig, corrupt_c2: bool = False, stream=None) -> int:
    stream = sys.stdout if stream is None else stream
    results = validation_suites(cfg, corrupt_c2=corrupt_c2)
    for r in results:
        print(r.line(), file=stream)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed", file=stream)
    return EXIT_VALIDATION if failed else EXIT_OK


# -- argument handling ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON experiment file (default: bundled table1.cfg)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--systems", default=None,
                        help="comma-separated subset of HRIS,BS_ONLY,BS_RIS,HRIS_GA,HRIS_AGD_NO_FGS")
    common.add_argument("--parallel", type=int, default=1, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="hris-dfrc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    o = sub.add_parser("optimize", parents=[common], help="run the alternating optimization once")
    o.add_argument("--no-trace", action="store_true", help="skip per-iteration trace files")
    s = sub.add_parser("sweep", parents=[common], help="power or threshold trade-off sweep")
    s.add_argument("--timing", action="store_true",
                   help="fill the wall_ms column (makes output run-dependent)")
    b = sub.add_parser("beampattern", parents=[common], help="pattern CSVs for a saved design")
    b.add_argument("--design", type=Path, default=None, help="design.json (default: OUT/design.json)")
    b.add_argument("--step", type=float, default=0.5, help="angular step in degrees")
    v = sub.add_parser("validate", parents=[common], help="run the invariant suites")
    v.add_argument("--corrupt-c2", action="store_true", help=argparse.SUPPRESS)
    return p


def _setup_logging() -> None:
    level = os.environ.get("DFRC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config if args.config is not None else bundled_config_path())
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be >= 0")
        cfg = cfg.with_seed(args.seed)
    if args.systems is not None:
        cfg = dataclasses.replace(cfg, systems=parse_systems(args.systems))
    if args.parallel < 1:
        raise ConfigError("--parallel", "must be >= 1")
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = args.out if args.out is not None else Path(cfg.output_dir)
        if args.command == "optimize":
            return cmd_optimize(cfg, out, trace=not args.no_trace)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.parallel, args.timing)
        if args.command == "beampattern":
            return cmd_beampattern(cfg, out, args.design or out / "design.json", args.step)
        return cmd_validate(cfg, corrupt_c2=args.corrupt_c2)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
