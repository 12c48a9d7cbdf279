"""Command-line pipeline over the library.

Five subcommands share one config document: analyze reports the invariant
structure, simulate writes an occupation histogram, solve writes the
stationary density with its residuals, asymptotics reports predicted and
measured behavior at critical points, validate cross-checks every route and
fails loudly on disagreement.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 validation failure. Errors go to stderr as one-line JSON.
"""

from __future__ import annotations

import argparse
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .asymptotics import (classify_asymptotics, extrapolate_to_zero,
                          fit_exponent, linearize_at_critical)
from .checks import appendix_identity_check, representation_check
from .config import (RunConfig, build_grid_spec, build_sim_config,
                     build_system, config_to_dict, load_config)
from .errors import (ConfigError, DegenerateModelError, SwitchdensError,
                     UnsupportedCaseError, ValidationFailure)
from .flux_solver import DensityGrid, GridSpec, solve_flux_ode
from .pf_solver import (density_grid_from_functions, fixed_point_certificate,
                        iterate_to_fixed_point, perron_frobenius_step,
                        uniform_density_grid)
from .reports import (SCHEMA_VERSION, HISTOGRAM_HEADER, dump_json, emit_error,
                      grid_from_density_rows, read_density_csv,
                      write_density_csv, write_histogram_csv)
from .simulate import estimate_density
from .structure import (classify_critical_point, existence_criterion,
                        minimal_invariant_sets)
from .system import SwitchingSystem

__all__ = ["main"]

GL8_X, GL8_W = np.polynomial.legendre.leggauss(8)

# coarse resample for transfer-step work: the step quadrature is O(n^2) in
# node count, and these tolerances sit far above the resample error floor
_RESAMPLE = GridSpec(min_offset_rel=1e-6, ratio=1.2)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; route them through the config path
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="switchdens",
                     description="stationary densities of randomly switched flows")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("analyze", "invariant structure of the configured system"),
            ("simulate", "occupation histogram from the event-driven sampler"),
            ("solve", "stationary density with residual diagnostics"),
            ("asymptotics", "critical-point behavior, predicted and measured"),
            ("validate", "cross-route comparison with pass/fail checks")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML or JSON run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config)")
        p.add_argument("--seed", type=int, default=None, help="override the simulate seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-interval fan-out")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering, keep only tables and JSON")
        if name == "validate":
            p.add_argument("--density", default=None,
                           help="validate a previously written density table")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg = replace(cfg, simulate=replace(cfg.simulate, seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, output=args.out)
    return cfg


def _map_work(fn, items, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros(nodes.size)
    h = np.diff(nodes)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _grid_l1(a: DensityGrid, b: DensityGrid) -> float:
    """Relative L1 distance, b evaluated on a's nodes."""
    w = _trapezoid_weights(a.nodes)
    num = 0.0
    den = 0.0
    for i in range(a.n):
        other = np.asarray(b.rho_at(i, a.nodes), dtype=float)
        num += float(w @ np.abs(a.rho[i] - other))
        den += float(w @ np.abs(a.rho[i]))
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _resample(system: SwitchingSystem, grid: DensityGrid, window) -> DensityGrid:
    fns = [(lambda i: (lambda x: grid.rho_at(i, x)))(i) for i in range(grid.n)]
    return density_grid_from_functions(system, grid.interval, fns,
                                       _RESAMPLE, window=window)


def _step_residual(system: SwitchingSystem, grid: DensityGrid, horizon,
                   window) -> tuple[float, list[str]]:
    """One-step L1 defect of the transfer step on a coarse resample."""
    notes: list[str] = []
    coarse = _resample(system, grid, window)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        nxt = perron_frobenius_step(system, coarse, T=horizon)
    for item in caught:
        notes.append(str(item.message))
    w = _trapezoid_weights(coarse.nodes)
    num = sum(float(w @ np.abs(nxt.rho[i] - coarse.rho[i])) for i in range(grid.n))
    den = sum(float(w @ np.abs(coarse.rho[i])) for i in range(grid.n))
    return (num / den if den > 0.0 else math.inf), notes


def _identity_probes(system: SwitchingSystem, grid: DensityGrid):
    """Candidate probe positions framed by an attracting critical point."""
    lo, hi = grid.interval
    span = hi - lo
    anchors = list(grid.special_points) + [lo, hi]
    for xi in dict.fromkeys(anchors):
        for side in (1, -1):
            for frac in (0.05, 0.005):
                eta = xi + side * frac * span
                if lo < eta < hi:
                    yield eta


def _local_identity_values(system: SwitchingSystem, grid: DensityGrid):
    for eta in _identity_probes(system, grid):
        try:
            rep = representation_check(system, grid, eta)
            bal = appendix_identity_check(system, grid, eta)
        except (UnsupportedCaseError, ConfigError, DegenerateModelError):
            continue
        if math.isfinite(rep) and math.isfinite(bal):
            return eta, rep, bal
    return None, None, None


def _set_to_dict(s) -> dict:
    def _finite(x):
        return float(x) if math.isfinite(x) else None
    return {"kind": s.kind, "left": _finite(s.left), "right": _finite(s.right),
            "left_is_critical": s.left_is_critical,
            "right_is_critical": s.right_is_critical,
            "left_truncated": s.left_truncated,
            "right_truncated": s.right_truncated,
            "left_edge": s.left_edge, "right_edge": s.right_edge}


def _anchor_sides(system: SwitchingSystem, sets, window):
    """Critical points paired with the interval side(s) they face.

    An endpoint looks into its interval, an interior point is analyzed on
    the canonical right side, a point inside a support gap likewise.
    """
    lo, hi = window
    tol = 1e-9 * max(hi - lo, 1.0)
    points: list[float] = []
    for i in range(system.n):
        pts, _ = system.critical_points(i, window)
        points.extend(float(p) for p in pts)
    points = sorted(points)
    merged: list[float] = []
    for p in points:
        if not merged or p - merged[-1] > tol:
            merged.append(p)
    singles = {s.left for s in sets if s.kind == "singleton"}
    out: list[tuple[float, int]] = []
    for xi in merged:
        if any(abs(xi - q) <= tol for q in singles):
            continue
        sides: list[int] = []
        for s in sets:
            if s.kind != "open_interval":
                continue
            if abs(xi - s.left) <= tol:
                sides.append(1)
            elif abs(xi - s.right) <= tol:
                sides.append(-1)
            elif s.left + tol < xi < s.right - tol:
                sides.append(1)
        if not sides:
            sides = [1]
        for side in dict.fromkeys(sides):
            out.append((xi, side))
    return out


def _classified_anchors(system, sets, window):
    out = []
    for xi, side in _anchor_sides(system, sets, window):
        side_name = "right" if side == 1 else "left"
        try:
            case = classify_critical_point(system, xi, sets, side=side_name,
                                           window=window)
        except (DegenerateModelError, UnsupportedCaseError) as exc:
            out.append((xi, side, None, str(exc)))
            continue
        out.append((xi, side, case, None))
    return out


# -- analyze ---------------------------------------------------------------

def cmd_analyze(cfg: RunConfig, out_dir: str, args) -> None:
    system = build_system(cfg)
    sets = minimal_invariant_sets(system, cfg.window)
    cases = []
    for xi, side, case, failure in _classified_anchors(system, sets, cfg.window):
        if case is None:
            cases.append({"point": xi, "analysis_side": "right" if side == 1 else "left",
                          "case": None, "note": failure})
            continue
        cases.append({"point": case.point, "field_index": case.field_index,
                      "case": case.case, "side": case.side,
                      "analysis_side": case.analysis_side, "mirrored": case.mirrored})
    existence = existence_criterion(system)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "window": list(cfg.window),
        "invariant_sets": [_set_to_dict(s) for s in sets],
        "critical_points": cases,
        "existence": {
            "jump_chain_stationary": list(existence.jump_chain_stationary),
            "contraction_coefficients": list(existence.contraction_coefficients),
            "mean_contraction": existence.mean_contraction,
            "exists": existence.exists,
            "notes": list(existence.notes),
        },
        "config": config_to_dict(cfg),
    }
    dump_json(os.path.join(out_dir, "structure.json"), report)
    if not args.no_figures:
        from .figures import render_fields
        render_fields(os.path.join(out_dir, "structure.png"), system, cfg.window, sets)


# -- simulate --------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out_dir: str, args) -> None:
    system = build_system(cfg)
    sim = cfg.simulate
    csv_path = os.path.join(out_dir, "histogram.csv")
    if sim.t_max == sim.burn_in:
        warnings.warn("t_max equals burn_in: the estimate has no samples",
                      RuntimeWarning, stacklevel=2)
        with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(HISTOGRAM_HEADER + "\n")
        dump_json(os.path.join(out_dir, "provenance.json"), {
            "schema_version": SCHEMA_VERSION, "command": "simulate",
            "config": config_to_dict(cfg),
            "summary": {"total_switches": 0, "exit_count": 0, "total_time": 0.0,
                        "method": None,
                        "notes": ["empty estimate: t_max equals burn_in"]},
        })
        return
    sim_config = build_sim_config(cfg)
    lo, hi = cfg.window
    x0 = sim.start_position if sim.start_position is not None else 0.5 * (lo + hi)
    if not lo <= x0 <= hi:
        raise ConfigError("start_position lies outside the window")
    if not 0 <= sim.start_state < system.n:
        raise ConfigError("start_state out of range")
    edges = np.linspace(lo, hi, sim.bins + 1)
    hist, stats = estimate_density(system, x0, sim.start_state, sim_config,
                                   edges, cfg.window, method=sim.method)
    write_histogram_csv(csv_path, hist)
    dump_json(os.path.join(out_dir, "provenance.json"), {
        "schema_version": SCHEMA_VERSION, "command": "simulate",
        "config": config_to_dict(cfg),
        "summary": {"total_switches": stats.total_switches,
                    "exit_count": stats.exit_count,
                    "total_time": hist.total_time,
                    "time_below_range": float(hist.below.sum()),
                    "time_above_range": float(hist.above.sum()),
                    "method": stats.method},
    })
    if not args.no_figures:
        from .figures import render_histogram
        render_histogram(os.path.join(out_dir, "histogram.png"), hist)


# -- solve -----------------------------------------------------------------

def _solve_intervals(system, sets, spec, window, threads):
    intervals = [s for s in sets if s.kind == "open_interval"]

    def run(interval):
        return solve_flux_ode(system, interval, spec, window=window)

    return _map_work(run, intervals, threads)


def _inflow_at(system, grid, jc, xi, side) -> float:
    """Neighbor inflow sum just off the critical point.

    The grid evaluator cannot be probed exactly at a zero of the field, so
    the continuous neighbor densities are read a hair inside the interval.
    """
    span = grid.interval[1] - grid.interval[0]
    x = xi + side * 1e-6 * span
    lam_in = system.rates.flux_matrix[jc].copy()
    lam_in[jc] = 0.0
    return float(sum(lam_in[j] * float(grid.rho_at(j, x))
                     for j in range(system.n) if lam_in[j] > 0.0))


def _asymptotic_forms(system, sets, grids, window):
    """Predicted local form at each classified critical point."""
    holding = system.rates.holding
    entries = []
    for xi, side, case, failure in _classified_anchors(system, sets, window):
        if case is None or case.case == "A":
            continue
        grid = next((g for g in grids
                     if g.interval[0] - 1e-12 <= xi <= g.interval[1] + 1e-12), None)
        try:
            lin = linearize_at_critical(system, xi, side=side, window=window)
        except (DegenerateModelError, UnsupportedCaseError) as exc:
            entries.append({"point": xi, "case": case.case, "kind": None,
                            "note": str(exc)})
            continue
        rho_bar0 = None
        if grid is not None:
            rho_bar0 = _inflow_at(system, grid, lin.crit_index, xi, side)
        try:
            form = classify_asymptotics(float(holding[lin.crit_index]), lin.a,
                                        case.case, system.all_analytic,
                                        rho_bar0=rho_bar0)
        except (UnsupportedCaseError, DegenerateModelError) as exc:
            entries.append({"point": xi, "case": case.case, "kind": "rejected",
                            "note": str(exc)})
            continue
        entries.append({
            "point": xi, "analysis_side": "right" if side == 1 else "left",
            "field_index": lin.crit_index, "case": form.case,
            "holding_rate": float(holding[lin.crit_index]),
            "contraction": lin.a, "kind": form.kind,
            "exponent": form.exponent, "value": form.value,
            "bounded": form.bounded, "resonant": form.resonant_critical,
            "inconclusive": form.inconclusive, "notes": list(form.notes),
        })
    return entries


def cmd_solve(cfg: RunConfig, out_dir: str, args) -> None:
    system = build_system(cfg)
    spec = build_grid_spec(cfg)
    sets = minimal_invariant_sets(system, cfg.window)
    grids = _solve_intervals(system, sets, spec, cfg.window, args.threads)
    write_density_csv(os.path.join(out_dir, "density.csv"), grids)

    tol = cfg.solve.tolerances
    residuals = []
    for grid in grids:
        step, step_notes = _step_residual(system, grid, cfg.solve.horizon, cfg.window)
        certificate = fixed_point_certificate(system, grid)
        probe, rep, bal = _local_identity_values(system, grid)
        flux_dev = float(grid.diagnostics.get("flux_sum_dev", math.nan))
        entry = {
            "interval": [grid.interval[0], grid.interval[1]],
            "masses": [float(m) for m in grid.masses],
            "flux_sum_deviation": flux_dev,
            "step_residual": step,
            "stationarity_residual": certificate,
            "probe_position": probe,
            "local_representation_residual": rep,
            "local_balance_residual": bal,
            "notes": step_notes + list(grid.diagnostics.get("notes", [])),
        }
        ok = (flux_dev <= tol.flux_sum and step <= tol.certificate
              and certificate <= tol.certificate)
        if rep is not None:
            ok = ok and rep <= tol.identity and bal <= tol.identity
        entry["within_tolerance"] = bool(ok)
        residuals.append(entry)

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "window": list(cfg.window),
        "intervals": residuals,
        "point_masses": [{"at": s.left} for s in sets if s.kind == "singleton"],
        "asymptotics": _asymptotic_forms(system, sets, grids, cfg.window),
        "tolerances": tol.to_dict(),
        "config": config_to_dict(cfg),
    }
    dump_json(os.path.join(out_dir, "residuals.json"), report)
    if not args.no_figures and grids:
        from .figures import render_density
        render_density(os.path.join(out_dir, "density.png"), grids)


# -- asymptotics -----------------------------------------------------------

def _fit_anchor(system, grid, xi, side, form, lin, fit_window, n_extrap):
    """Measured tail behavior of the solved density approaching xi."""
    lo_fit, hi_fit = fit_window
    span = grid.interval[1] - grid.interval[0]
    hi_cap = min(hi_fit, 0.9 * lin.delta, 0.45 * span)
    lo_cap = max(lo_fit, 2e-8 * span)
    if not lo_cap < hi_cap:
        return {"note": "fit window collapses inside the local frame"}
    etas = np.geomspace(lo_cap, hi_cap, 80)
    xs = xi + side * etas
    values = np.asarray(grid.rho_at(lin.crit_index, xs), dtype=float)
    out: dict = {"eta_range": [float(etas[0]), float(etas[-1])]}
    try:
        fit = fit_exponent(etas, values, fit_window=(lo_cap, hi_cap))
        out["exponent"] = fit.exponent
        out["exponent_stderr"] = fit.stderr
        out["preferred_model"] = fit.preferred
        out["drift"] = fit.drift
    except SwitchdensError as exc:
        out["note"] = f"exponent fit failed: {exc}"
    if form is not None and form.kind == "constant":
        try:
            limit, err = extrapolate_to_zero(etas, values, n_points=n_extrap)
            out["limit"] = limit
            out["limit_error"] = err
        except SwitchdensError as exc:
            out["note"] = f"extrapolation failed: {exc}"
    if form is not None and form.kind in ("log", "log_bounded_band"):
        ratio = values / (-np.log(etas))
        mean = float(np.mean(ratio))
        out["log_ratio_mean"] = mean
        out["log_ratio_spread"] = (float(np.max(ratio) - np.min(ratio)) / abs(mean)
                                   if mean != 0.0 else math.inf)
    return out


def cmd_asymptotics(cfg: RunConfig, out_dir: str, args) -> None:
    system = build_system(cfg)
    spec = build_grid_spec(cfg)
    sets = minimal_invariant_sets(system, cfg.window)
    grids = _solve_intervals(system, sets, spec, cfg.window, args.threads)
    holding = system.rates.holding

    entries = []
    for xi, side, case, failure in _classified_anchors(system, sets, cfg.window):
        if case is None:
            entries.append({"point": xi, "case": None, "note": failure})
            continue
        if case.case == "A":
            entries.append({"point": xi, "case": "A",
                            "note": "faces a support gap; no density to analyze"})
            continue
        grid = next((g for g in grids
                     if g.interval[0] - 1e-12 <= xi <= g.interval[1] + 1e-12), None)
        try:
            lin = linearize_at_critical(system, xi, side=side, window=cfg.window)
        except (DegenerateModelError, UnsupportedCaseError) as exc:
            entries.append({"point": xi, "case": case.case, "note": str(exc)})
            continue
        rho_bar0 = None
        if grid is not None:
            rho_bar0 = _inflow_at(system, grid, lin.crit_index, xi, side)
        predicted: dict
        form = None
        try:
            form = classify_asymptotics(float(holding[lin.crit_index]), lin.a,
                                        case.case, system.all_analytic,
                                        rho_bar0=rho_bar0)
            predicted = {"kind": form.kind, "exponent": form.exponent,
                         "value": form.value, "bounded": form.bounded,
                         "resonant": form.resonant_critical,
                         "inconclusive": form.inconclusive,
                         "notes": list(form.notes)}
        except (UnsupportedCaseError, DegenerateModelError) as exc:
            predicted = {"kind": "rejected", "note": str(exc)}
        measured = None
        if grid is not None and predicted.get("kind") != "rejected":
            measured = _fit_anchor(system, grid, xi, side, form, lin,
                                   cfg.asymptotics.fit_window,
                                   cfg.asymptotics.extrapolation_points)
        entries.append({"point": xi, "analysis_side": "right" if side == 1 else "left",
                        "field_index": lin.crit_index, "case": case.case,
                        "holding_rate": float(holding[lin.crit_index]),
                        "contraction": lin.a, "clearance": lin.delta,
                        "predicted": predicted, "measured": measured})

    dump_json(os.path.join(out_dir, "asymptotics.json"), {
        "schema_version": SCHEMA_VERSION,
        "command": "asymptotics",
        "window": list(cfg.window),
        "fit_window": list(cfg.asymptotics.fit_window),
        "points": entries,
        "config": config_to_dict(cfg),
    })
    if not args.no_figures and grids:
        from .figures import render_density
        render_density(os.path.join(out_dir, "asymptotics.png"), grids)


# -- validate --------------------------------------------------------------

def _bin_reference_masses(grid: DensityGrid, edges: np.ndarray) -> np.ndarray:
    """Per-state mass of the solved density in each histogram bin."""
    lo, hi = grid.interval
    out = np.zeros((grid.n, edges.size - 1))
    for b in range(edges.size - 1):
        a = max(float(edges[b]), lo)
        c = min(float(edges[b + 1]), hi)
        if c <= a:
            continue
        mid = 0.5 * (a + c)
        half = 0.5 * (c - a)
        xs = mid + half * GL8_X
        wq = half * GL8_W
        for i in range(grid.n):
            out[i, b] = float(wq @ np.asarray(grid.rho_at(i, xs), dtype=float))
    return out


def _check(name, interval, measured, reference, tolerance, passed, detail=None):
    entry = {"name": name, "interval": [interval[0], interval[1]],
             "measured": measured, "reference": reference,
             "tolerance": tolerance, "passed": bool(passed)}
    if detail:
        entry["detail"] = detail
    return entry


def _validate_tail_checks(system, grid, sets, cfg, checks):
    """Exponent, limit and flatness checks at each critical anchor."""
    tol = cfg.solve.tolerances
    holding = system.rates.holding
    for xi, side, case, failure in _classified_anchors(system, sets, cfg.window):
        if case is None or case.case == "A":
            continue
        if not (grid.interval[0] - 1e-12 <= xi <= grid.interval[1] + 1e-12):
            continue
        try:
            lin = linearize_at_critical(system, xi, side=side, window=cfg.window)
        except (DegenerateModelError, UnsupportedCaseError):
            continue
        rho_bar0 = _inflow_at(system, grid, lin.crit_index, xi, side)
        try:
            form = classify_asymptotics(float(holding[lin.crit_index]), lin.a,
                                        case.case, system.all_analytic,
                                        rho_bar0=rho_bar0)
        except (UnsupportedCaseError, DegenerateModelError) as exc:
            checks.append(_check(f"classification@{xi:g}", grid.interval,
                                 None, None, None, True, detail=str(exc)))
            continue
        measured = _fit_anchor(system, grid, xi, side, form, lin,
                               cfg.asymptotics.fit_window,
                               cfg.asymptotics.extrapolation_points)
        label = f"x={xi:g},side={'+' if side == 1 else '-'}"
        if form.kind == "power" and "exponent" in measured:
            target = float(form.exponent)
            got = float(measured["exponent"])
            scale = max(abs(target), 0.5)
            checks.append(_check(f"tail_exponent[{label}]", grid.interval,
                                 got, target, tol.exponent,
                                 abs(got - target) <= scale * tol.exponent))
        elif form.kind == "constant" and "limit" in measured:
            target = form.value
            got = float(measured["limit"])
            if target is None or target == 0.0:
                checks.append(_check(f"tail_limit[{label}]", grid.interval,
                                     got, target, tol.limit, True,
                                     detail="no predicted value available"))
            else:
                rel = abs(got - float(target)) / abs(float(target))
                checks.append(_check(f"tail_limit[{label}]", grid.interval,
                                     got, float(target), tol.limit,
                                     rel <= tol.limit))
        elif form.kind in ("log", "log_bounded_band") and "log_ratio_spread" in measured:
            spread = float(measured["log_ratio_spread"])
            checks.append(_check(f"log_flatness[{label}]", grid.interval,
                                 spread, 0.0, tol.log_flatness,
                                 spread <= tol.log_flatness,
                                 detail="spread of rho/(-ln eta) over the fit window"))
        elif form.kind == "zero":
            checks.append(_check(f"tail_zero[{label}]", grid.interval,
                                 None, None, None, True,
                                 detail="density vanishes faster than any stated rate"))


def _flux_sum_deviation(grid: DensityGrid) -> float:
    total = grid.flux.sum(axis=0)
    scale = max(float(np.max(np.abs(grid.flux))), 1e-300)
    return float(np.max(np.abs(total - np.median(total)))) / scale


def cmd_validate(cfg: RunConfig, out_dir: str, args) -> None:
    system = build_system(cfg)
    spec = build_grid_spec(cfg)
    tol = cfg.solve.tolerances
    sets = minimal_invariant_sets(system, cfg.window)
    grids = _solve_intervals(system, sets, spec, cfg.window, args.threads)
    if not grids:
        raise ConfigError("window contains no invariant interval to validate")

    checks: list[dict] = []
    tabulated = None
    if getattr(args, "density", None):
        nodes, rho, flux = read_density_csv(args.density)
        tabulated = grid_from_density_rows(system, nodes, rho, flux)
        reference = next((g for g in grids
                          if abs(g.interval[0] - tabulated.interval[0]) < 0.05 * (
                              g.interval[1] - g.interval[0])), grids[0])
        gap = _grid_l1(tabulated, reference)
        diffs = np.abs(tabulated.rho
                       - np.vstack([reference.rho_at(i, tabulated.nodes)
                                    for i in range(system.n)]))
        worst = np.unravel_index(int(np.argmax(diffs)), diffs.shape)
        checks.append(_check("table_vs_solve_l1", tabulated.interval, gap, 0.0,
                             tol.route_l1,
                             gap <= tol.route_l1,
                             detail=f"largest deviation at state {worst[0]}, "
                                    f"eta={tabulated.nodes[worst[1]]:.6g}"))
        step, step_notes = _step_residual(system, tabulated, cfg.solve.horizon,
                                          cfg.window)
        checks.append(_check("table_step_residual", tabulated.interval, step, 0.0,
                             tol.certificate, step <= tol.certificate,
                             detail="; ".join(step_notes) if step_notes else None))
        probe, rep, bal = _local_identity_values(system, tabulated)
        if rep is not None:
            checks.append(_check("table_local_representation", tabulated.interval,
                                 rep, 0.0, tol.identity, rep <= tol.identity,
                                 detail=f"probe at eta={probe:.6g}"))
            checks.append(_check("table_local_balance", tabulated.interval,
                                 bal, 0.0, tol.identity, bal <= tol.identity,
                                 detail=f"probe at eta={probe:.6g}"))
        dev = _flux_sum_deviation(tabulated)
        checks.append(_check("table_flux_sum", tabulated.interval, dev, 0.0,
                             tol.flux_sum, dev <= tol.flux_sum))

    pf_results = []
    hist = None
    if tabulated is None:
        for grid in grids:
            # route 1 invariant: total flux constant along the grid
            dev = float(grid.diagnostics.get("flux_sum_dev", math.nan))
            checks.append(_check("flux_sum", grid.interval, dev, 0.0,
                                 tol.flux_sum, dev <= tol.flux_sum))

            step, step_notes = _step_residual(system, grid, cfg.solve.horizon,
                                              cfg.window)
            checks.append(_check("step_residual", grid.interval, step, 0.0,
                                 tol.certificate, step <= tol.certificate,
                                 detail="; ".join(step_notes) if step_notes else None))

            cert = fixed_point_certificate(system, grid)
            checks.append(_check("stationarity_residual", grid.interval, cert, 0.0,
                                 tol.certificate, cert <= tol.certificate))

            # route 2: transfer-operator fixed point from a flat start
            flat = uniform_density_grid(system, grid.interval, _RESAMPLE,
                                        window=cfg.window)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fixed = iterate_to_fixed_point(system, flat, T=cfg.solve.horizon,
                                               tol=tol.fixed_point,
                                               max_iters=cfg.solve.max_sweeps)
            pf_results.append(fixed)
            gap = _grid_l1(fixed, grid)
            sweeps = fixed.diagnostics.get("sweeps")
            checks.append(_check("fixed_point_route_l1", grid.interval, gap, 0.0,
                                 tol.route_l1, gap <= tol.route_l1,
                                 detail=f"{sweeps} sweeps"))

            probe, rep, bal = _local_identity_values(system, grid)
            if rep is not None:
                checks.append(_check("local_representation", grid.interval, rep,
                                     0.0, tol.identity, rep <= tol.identity,
                                     detail=f"probe at eta={probe:.6g}"))
                checks.append(_check("local_balance", grid.interval, bal, 0.0,
                                     tol.identity, bal <= tol.identity,
                                     detail=f"probe at eta={probe:.6g}"))

            _validate_tail_checks(system, grid, sets, cfg, checks)

        # route 3: occupation histogram against the solved density
        sim = cfg.simulate
        lo, hi = cfg.window
        x0 = sim.start_position if sim.start_position is not None else 0.5 * (lo + hi)
        holder = [g for g in grids if g.interval[0] <= x0 <= g.interval[1]]
        if len(holder) == 1 and sim.t_max > sim.burn_in:
            grid = holder[0]
            edges = np.linspace(grid.interval[0], grid.interval[1], sim.bins + 1)
            hist, stats = estimate_density(system, x0, sim.start_state,
                                           build_sim_config(cfg), edges,
                                           cfg.window, method=sim.method)
            ref_masses = _bin_reference_masses(grid, edges)
            est_masses = hist.density() * hist.widths[None, :]
            gap = float(np.abs(est_masses - ref_masses).sum())
            checks.append(_check("monte_carlo_route_l1", grid.interval, gap, 0.0,
                                 tol.monte_carlo_l1, gap <= tol.monte_carlo_l1,
                                 detail=f"{stats.total_switches} switch events, "
                                        f"method {stats.method}"))

    passed = all(c["passed"] for c in checks)
    for c in checks:
        verdict = "PASS" if c["passed"] else "FAIL"
        measured = c["measured"]
        shown = "n/a" if measured is None else f"{measured:.6g}"
        tol_shown = "n/a" if c["tolerance"] is None else f"{c['tolerance']:.6g}"
        line = f"{verdict} {c['name']}: measured={shown} tolerance={tol_shown}"
        if c.get("detail"):
            line += f" ({c['detail']})"
        print(line)
    print(f"{'PASS' if passed else 'FAIL'} overall: "
          f"{sum(c['passed'] for c in checks)}/{len(checks)} checks passed")

    dump_json(os.path.join(out_dir, "validation.json"), {
        "schema_version": SCHEMA_VERSION,
        "command": "validate",
        "window": list(cfg.window),
        "checks": checks,
        "passed": passed,
        "tolerances": tol.to_dict(),
        "config": config_to_dict(cfg),
    })
    if not args.no_figures:
        from .figures import render_comparison
        shown_grids = [tabulated] if tabulated is not None else grids
        render_comparison(os.path.join(out_dir, "comparison.png"),
                          shown_grids, pf_results, hist)
    if not passed:
        failed = [c["name"] for c in checks if not c["passed"]]
        raise ValidationFailure("failed checks: " + ", ".join(failed))


_COMMANDS = {
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "asymptotics": cmd_asymptotics,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out_dir = cfg.output
        os.makedirs(out_dir, exist_ok=True)
        _COMMANDS[args.command](cfg, out_dir, args)
        return 0
    except ValidationFailure as exc:
        emit_error(exc)
        return 3
    except (ConfigError, DegenerateModelError) as exc:
        emit_error(exc)
        return 1
    except SwitchdensError as exc:
        emit_error(exc)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
