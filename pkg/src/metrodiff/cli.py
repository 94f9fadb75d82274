"""Experiment runner: weak-convergence, equilibrium and density studies.

Subcommands:

    models --list                         builtin model labels
    simulate    --config C --out DIR      ensemble means per (scheme, f, h)
    convergence --config C --out DIR      means, errors and fitted orders
    equilibrium --config C --out DIR      occupancy and effective-D tables
    fpe         --config C --out DIR      density solve and expectations

Exit codes: 0 success, 2 configuration error, 3 runtime numeric error.
"""

import argparse
import sys
import time

import numpy as np

from . import __version__, backend
from .config import load_config
from .errors import ConfigError, MetrodiffError
from .fpe import Grid1D, field_expectation, solve_fpe, uniform_field
from .integrator import (ensemble_final_positions, simulate_trajectory,
                         steps_for_horizon)
from .models import builtin_models
from .output import (CONVERGENCE_COLUMNS, EQUILIBRIUM_COLUMNS, FPE_COLUMNS,
                     MEANS_COLUMNS, ensure_dir, format_number, write_csv,
                     write_report)
from .rng import RngStream, derive_seed
from .stats import (ConvergenceReport, effective_diffusion, fit_order,
                    occupancy_table)

_SCHEME_TAG = {"mh": 0, "em": 1}


def _h_bits(h):
    return int(np.float64(h).view(np.uint64))


def _ensemble_seed(base_seed, scheme, h):
    """Per-(scheme, h) seed so every ensemble is an independent stream set."""
    return derive_seed(base_seed, _SCHEME_TAG[scheme], _h_bits(h))


def _apply_f(func, positions):
    vals = np.asarray(func(positions), dtype=float)
    if vals.shape != positions.shape:
        vals = np.full(positions.shape, float(vals))
    return vals


def _run_ensembles(cfg, h_values, threads):
    """mean/stderr per (scheme, h, f) from one set of final positions each."""
    table = {}
    for scheme in cfg.schemes:
        for h in h_values:
            n_steps = steps_for_horizon(cfg.T, h)
            seed = _ensemble_seed(cfg.base_seed, scheme, h)
            pos = ensemble_final_positions(cfg.model, scheme, cfg.x0, h,
                                           n_steps, cfg.n_traj, seed,
                                           threads=threads)
            for label, func in zip(cfg.f_labels, cfg.f_funcs):
                vals = _apply_f(func, pos)
                mean = float(np.mean(vals))
                se = float(np.std(vals, ddof=1) / np.sqrt(cfg.n_traj))
                table[(scheme, h, label)] = (mean, se)
    return table


def _fpe_reference(cfg):
    ref = cfg.reference
    grid = Grid1D(float(ref.get("x_min", -1.0)), float(ref.get("x_max", 1.0)),
                  int(ref["n_cells"]))
    rho = solve_fpe(cfg.model, grid, float(ref.get("x0", cfg.x0)), cfg.T,
                    float(ref["dt"]))
    return {label: field_expectation(rho, func)
            for label, func in zip(cfg.f_labels, cfg.f_funcs)}


def run_convergence(cfg, out_dir, threads=1):
    """Errors versus h against the configured reference, with fitted orders."""
    t_start = time.perf_counter()
    rtype = cfg.reference["type"]
    h_values = sorted(set(cfg.h_list), reverse=True)
    if rtype == "self":
        h_values = sorted({*h_values, *(h / 2.0 for h in cfg.h_list)},
                          reverse=True)
    table = _run_ensembles(cfg, h_values, threads)

    exact = {}
    if rtype == "exact":
        given = cfg.reference.get("values", {})
        for label in cfg.f_labels:
            exact[label] = float(given[label]) if label in given else \
                float(cfg.model.exact_moments[label](cfg.T, cfg.x0))
    elif rtype == "fpe":
        exact = _fpe_reference(cfg)

    rows = []
    fits = {}
    for scheme in cfg.schemes:
        fits[scheme] = {}
        for label in cfg.f_labels:
            fit_rows = []
            for h in sorted(cfg.h_list, reverse=True):
                mean, se = table[(scheme, h, label)]
                if rtype == "self":
                    mean_half, se_half = table[(scheme, h / 2.0, label)]
                    err = abs(mean - mean_half)
                    err_se = float(np.hypot(se, se_half))
                    reference = mean_half
                else:
                    reference = exact[label]
                    err = abs(mean - reference)
                    err_se = se
                rows.append((scheme, label, h, mean, se, reference, err))
                fit_rows.append((h, err, err_se))
            slope, slope_se = fit_order(fit_rows, min_snr=cfg.min_error_snr)
            used = [h for h, e, se in fit_rows
                    if e > 0 and e > cfg.min_error_snr * se]
            rep = ConvergenceReport(rows=fit_rows, slope=slope,
                                    slope_stderr=slope_se, used=used)
            fits[scheme][label] = {"slope": rep.slope,
                                   "slope_stderr": rep.slope_stderr,
                                   "used_h": rep.used,
                                   "rows": rep.rows}

    ensure_dir(out_dir)
    write_csv(f"{out_dir}/convergence.csv", "convergence",
              CONVERGENCE_COLUMNS, rows,
              notes=[f"reference: {rtype}",
                     "stderr: ensemble sample std / sqrt(M); for self "
                     "references the error column carries the combined "
                     "stderr of both ensembles"])
    report = {
        "command": "convergence",
        "config": cfg.echo(),
        "backend": backend.active_backend(),
        "version": __version__,
        "seed": cfg.base_seed,
        "fits": fits,
        "reference_values": exact,
        "wall_clock_s": time.perf_counter() - t_start,
    }
    write_report(f"{out_dir}/report.json", report)
    return report


def run_simulate(cfg, out_dir, threads=1):
    """Ensemble means only (no reference needed)."""
    t_start = time.perf_counter()
    table = _run_ensembles(cfg, sorted(set(cfg.h_list), reverse=True), threads)
    rows = [(scheme, label, h, *table[(scheme, h, label)])
            for scheme in cfg.schemes
            for label in cfg.f_labels
            for h in sorted(cfg.h_list, reverse=True)]
    ensure_dir(out_dir)
    write_csv(f"{out_dir}/means.csv", "means", MEANS_COLUMNS, rows)
    report = {
        "command": "simulate",
        "config": cfg.echo(),
        "backend": backend.active_backend(),
        "version": __version__,
        "seed": cfg.base_seed,
        "wall_clock_s": time.perf_counter() - t_start,
    }
    write_report(f"{out_dir}/report.json", report)
    return report


def run_equilibrium(cfg, out_dir, threads=1):
    """Long-run occupancy density and effective-D tables per (scheme, h)."""
    if not cfg.equilibrium:
        raise ConfigError("config has no equilibrium section")
    t_start = time.perf_counter()
    eq = cfg.equilibrium
    lo, hi = (float(v) for v in eq["range"])
    edges = np.linspace(lo, hi, int(eq["bins"]) + 1)
    files = []
    ensure_dir(out_dir)
    for scheme in cfg.schemes:
        for h in [float(v) for v in eq["h"]]:
            n_steps = steps_for_horizon(float(eq["T"]), h)
            seed = derive_seed(cfg.base_seed, 1000 + _SCHEME_TAG[scheme],
                               _h_bits(h))
            traj = simulate_trajectory(cfg.model, scheme, cfg.x0, h, n_steps,
                                       RngStream(seed, 0))
            dens = occupancy_table(traj, edges)
            deff = effective_diffusion(traj, h, edges)
            rows = [(edges[i], edges[i + 1], dens.value[i], dens.stderr[i],
                     deff.value[i], deff.stderr[i])
                    for i in range(len(edges) - 1)]
            name = f"equilibrium_{scheme}_h{format_number(h)}.csv"
            write_csv(f"{out_dir}/{name}", "equilibrium",
                      EQUILIBRIUM_COLUMNS, rows,
                      notes=["stderr: 20 contiguous batch means",
                             f"T={format_number(float(eq['T']))} "
                             f"h={format_number(h)} scheme={scheme}",
                             "empty bins carry nan"])
            files.append(name)
    report = {
        "command": "equilibrium",
        "config": cfg.echo(),
        "backend": backend.active_backend(),
        "version": __version__,
        "seed": cfg.base_seed,
        "files": files,
        "wall_clock_s": time.perf_counter() - t_start,
    }
    write_report(f"{out_dir}/report.json", report)
    return report


def run_fpe(cfg, out_dir):
    """Density solve to time T plus requested expectations."""
    if not cfg.fpe:
        raise ConfigError("config has no fpe section")
    t_start = time.perf_counter()
    sec = cfg.fpe
    grid = Grid1D(float(sec.get("x_min", -1.0)), float(sec.get("x_max", 1.0)),
                  int(sec["n_cells"]))
    ic = sec.get("ic", {"type": "delta", "x0": 0.0})
    if ic.get("type") == "uniform":
        start = uniform_field(grid)
    elif ic.get("type") == "delta":
        start = float(ic.get("x0", 0.0))
    else:
        raise ConfigError(f"unknown fpe ic {ic!r}")
    rho = solve_fpe(cfg.model, grid, start, float(sec["T"]), float(sec["dt"]))
    ensure_dir(out_dir)
    rows = list(zip(grid.centers.tolist(), rho.values.tolist()))
    write_csv(f"{out_dir}/fpe.csv", "fpe", FPE_COLUMNS, rows,
              notes=[f"T={format_number(float(sec['T']))} "
                     f"dt={format_number(float(sec['dt']))} "
                     f"n_cells={int(sec['n_cells'])}"])
    expectations = {label: field_expectation(rho, func)
                    for label, func in zip(cfg.f_labels, cfg.f_funcs)}
    report = {
        "command": "fpe",
        "config": cfg.echo(),
        "backend": backend.active_backend(),
        "version": __version__,
        "seed": cfg.base_seed,
        "expectations": expectations,
        "mass": rho.mass,
        "wall_clock_s": time.perf_counter() - t_start,
    }
    write_report(f"{out_dir}/report.json", report)
    return report


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="metrodiff",
        description="Metropolized SDE integration experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    models = sub.add_parser("models", help="list builtin models")
    models.add_argument("--list", action="store_true", default=True)

    for name, help_text in [
            ("simulate", "run ensembles, write means"),
            ("convergence", "weak-error study with fitted orders"),
            ("equilibrium", "occupancy density and effective-D tables"),
            ("fpe", "density solve and expectations")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config base_seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for trajectory blocks")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "models":
        for m in builtin_models():
            print(f"{m.label}: {m.description}")
        return 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.base_seed = int(args.seed)
            cfg.raw["base_seed"] = int(args.seed)
        if args.command == "simulate":
            run_simulate(cfg, args.out, threads=args.threads)
        elif args.command == "convergence":
            run_convergence(cfg, args.out, threads=args.threads)
        elif args.command == "equilibrium":
            run_equilibrium(cfg, args.out, threads=args.threads)
        elif args.command == "fpe":
            run_fpe(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MetrodiffError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
