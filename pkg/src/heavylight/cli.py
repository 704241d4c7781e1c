"""Command-line entry point: ``heavylight {constants,sweep,decoherence,decay,commutators}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import WeightOverflowError, commutator_r2_probe, commutator_x0_probe, dispersive_decay_probe
from .config import ConfigError, SystemConfig, load_config, to_dict
from .decoherence import DensityError, two_packet_experiment
from .grid import BoundaryTailError, SpatialGrid, make_gaussian
from .potentials import (AssumptionError, DivergenceError, IntegrabilityError, PotentialSpec,
                         born_constants, potential_norms, smallness_thresholds)
from .propagators import HamiltonianSpec

log = logging.getLogger("heavylight")

COMMANDS = ("constants", "sweep", "decoherence", "decay", "commutators")
SWEEP_COLUMNS = ("epsilon", "t", "err_psi_a", "err_zeta", "slope", "ci_lo", "ci_hi")
EXIT_OK, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, MemoryError, DensityError, BoundaryTailError,
                    WeightOverflowError, IntegrabilityError)


def jsonable(obj):
    """Plain JSON structure for dataclasses, numpy values, complex numbers and non-finite floats."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": jsonable(float(obj.real)), "im": jsonable(float(obj.imag))}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------------------
# commands


def constants_report(cfg: SystemConfig) -> dict:
    norms = potential_norms(cfg.potential)
    ineq = {k: {"value": v, "bound": b, "holds": v <= b} for k, (v, b) in norms.inequalities().items()}
    small = smallness_thresholds(cfg.potential, cfg.K, cfg.alpha, norms)
    try:
        born = jsonable(born_constants(cfg.potential, cfg.K, cfg.alpha, N=cfg.N, norms=norms))
    except DivergenceError as exc:
        born = {"diverges": str(exc)}
    return {"kato": norms.kato, "rollnik": norms.rollnik, "norms": jsonable(norms),
            "inequalities": ineq, "smallness": jsonable(small), "born": born}


def sweep_rows(result) -> list:
    rows = []
    for r in result.records:
        fit = result.fits.get(r.t)
        slope, (lo, hi) = (fit.slope, fit.ci) if fit else (math.nan, (math.nan, math.nan))
        rows.append([fmt(v) for v in (r.epsilon, r.t, r.err_psi_a, r.err_zeta, slope, lo, hi)])
    return rows


def run_sweep(cfg: SystemConfig, out: Path, jobs: int, partial: list) -> dict:
    from .asymptotics import run_epsilon_sweep

    live = out / "sweep.partial.csv"
    write_csv(live, ("epsilon", "t", "err_psi_a", "err_zeta"), [])

    def on_record(rec):
        partial.append(rec)
        with open(live, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                [fmt(v) for v in (rec.epsilon, rec.t, rec.err_psi_a, rec.err_zeta)])
        log.info("eps=%g t=%g err=%.4g", rec.epsilon, rec.t, rec.err_psi_a)

    res = run_epsilon_sweep(cfg, jobs=jobs, on_record=on_record)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, sweep_rows(res))
    live.unlink(missing_ok=True)
    return jsonable(res)


def run_decoherence(cfg: SystemConfig, out: Path) -> dict:
    rep = two_packet_experiment(cfg)
    write_csv(out / "decoherence.csv", ("R", "R_prime", "overlap_re", "overlap_im"),
              [[fmt(R), fmt(Rp), fmt(v.real), fmt(v.imag)] for R, Rp, v in rep.overlap_kernel_samples])
    return jsonable(rep)


def run_decay(cfg: SystemConfig, out: Path) -> dict:
    d = cfg.decay
    dim = 3 if cfg.dim_mode == "radial_3d" else 1
    g = SpatialGrid(dim, d.points, d.half_width, ("r1",))
    chi = make_gaussian(g, 0.0, 0.0, d.width)
    if cfg.alpha == 0:
        ham = HamiltonianSpec("free_light")
    else:
        ham = HamiltonianSpec("light_parametric", alpha=cfg.alpha, potential=cfg.potential,
                              heavy_positions=(d.R_samples[0],))
    fit = dispersive_decay_probe(ham, chi, d.R_samples, d.t_grid)
    write_csv(out / "decay.csv", ("t", "sup_norm"),
              [[fmt(t), fmt(s)] for t, s in zip(fit.times, fit.sup_norms)])
    return jsonable(fit)


def run_commutators(cfg: SystemConfig, out: Path) -> dict:
    c = cfg.commutators
    U = PotentialSpec(c.family, c.amplitude, c.range, sign_constraint=False)
    g = SpatialGrid(1, c.points, c.half_width, ("R1",))
    f = make_gaussian(g, 0.0, 0.0, c.f_width)
    x0 = commutator_x0_probe(U, f, c.t_grid, c.horizon)
    r2 = commutator_r2_probe(U, f, c.t_grid, c.horizon)
    rows = []
    for p in (x0, r2, r2.composed):
        rows += [[p.kind, fmt(t), fmt(n), fmt(t * p.bound_constant * p.reference_norm)]
                 for t, n in zip(p.times, p.norms)]
    write_csv(out / "commutators.csv", ("probe", "t", "norm", "bound"), rows)
    return {"x0": jsonable(x0), "r2": jsonable(r2)}


def run(command: str, cfg: SystemConfig, out: Path, jobs: int = 1, partial=None) -> dict:
    partial = [] if partial is None else partial
    if command == "constants":
        return constants_report(cfg)
    if command == "sweep":
        return run_sweep(cfg, out, jobs, partial)
    if command == "decoherence":
        return run_decoherence(cfg, out)
    if command == "decay":
        return run_decay(cfg, out)
    if command == "commutators":
        return run_commutators(cfg, out)
    raise ValueError(f"unknown command {command!r}")


def _report(cmd, cfg, constants, results, started, error=None) -> dict:
    rep = {"command": cmd, "config_echo": to_dict(cfg) if cfg is not None else None,
           "constants": constants, "results": results,
           "provenance": {"version": __version__, "wall_time_s": time.perf_counter() - started}}
    if error is not None:
        rep["error"] = error
    return rep


def _write_report(out: Path, rep: dict):
    with open(out / "report.json", "w") as fh:
        json.dump(jsonable(rep), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heavylight", description=__doc__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="TOML experiment file (defaults if omitted)")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.perf_counter()
    args.out.mkdir(parents=True, exist_ok=True)
    cfg, constants, partial = None, None, []
    try:
        cfg = load_config(args.config) if args.config else SystemConfig()
        constants = constants_report(cfg) if cfg.alpha > 0 or args.command == "constants" else None
        results = run(args.command, cfg, args.out, args.jobs, partial)
    except (AssumptionError, ConfigError) as exc:
        label = getattr(exc, "label", "config")
        _write_report(args.out, _report(args.command, cfg, constants, None, started,
                                        {"kind": "assumption", "label": label, "message": str(exc)}))
        print(f"heavylight {args.command}: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NUMERICAL_ERRORS as exc:
        _write_report(args.out, _report(args.command, cfg, constants, {"partial": jsonable(partial)},
                                        started, {"kind": type(exc).__name__, "message": str(exc)}))
        print(f"heavylight {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _write_report(args.out, _report(args.command, cfg, constants, results, started))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
