"""Artifact emission: delimited density tables and structured JSON reports.

Every number is written with 17 significant digits so a reparse recovers the
exact binary value and byte-level diffs of two runs are meaningful. Nothing
here records wall-clock time; identical inputs give identical bytes.
"""

from __future__ import annotations

import sys

import numpy as np

from .errors import ConfigError
from .flux_solver import DensityGrid
from .simulate import OccupationHistogram
from .system import SwitchingSystem

__all__ = [
    "HISTOGRAM_HEADER",
    "DENSITY_HEADER",
    "SCHEMA_VERSION",
    "dump_json",
    "emit_error",
    "format_number",
    "grid_from_density_rows",
    "read_density_csv",
    "write_density_csv",
    "write_histogram_csv",
]

SCHEMA_VERSION = "1"

HISTOGRAM_HEADER = "state,bin_left,bin_right,occupation_time,density_estimate"
DENSITY_HEADER = "state,eta,rho,flux"


def format_number(x) -> str:
    """Decimal form that reparses to the same float (17 significant digits)."""
    x = float(x)
    if x != x:
        return "nan"
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _emit(obj, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for k, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise ConfigError("JSON report keys must be strings")
            out.append(f'{pad}  "{key}": ')
            _emit(value, indent + 1, out)
            out.append(",\n" if k + 1 < len(obj) else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for k, value in enumerate(seq):
            out.append(pad + "  ")
            _emit(value, indent + 1, out)
            out.append(",\n" if k + 1 < len(seq) else "\n")
        out.append(pad + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan literals; a null is at least parseable
        out.append("null" if x != x or x in (float("inf"), float("-inf"))
                   else format(x, ".17g"))
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"')
                   .replace("\n", "\\n").replace("\t", "\\t") + '"')
    else:
        raise ConfigError(f"JSON report cannot hold {type(obj).__name__}")


def render_json(obj) -> str:
    out: list[str] = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


def dump_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_json(obj))


def emit_error(exc: BaseException, stream=None) -> None:
    """Machine-readable one-line error report on stderr."""
    stream = stream or sys.stderr
    payload = {"schema_version": SCHEMA_VERSION,
               "error": type(exc).__name__,
               "message": str(exc)}
    line = render_json(payload).replace("\n", " ").strip()
    print(line, file=stream)


def write_histogram_csv(path, hist: OccupationHistogram) -> None:
    density = hist.density()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(HISTOGRAM_HEADER + "\n")
        for i in range(hist.occupation.shape[0]):
            for b in range(hist.occupation.shape[1]):
                fh.write(f"{i},{format_number(hist.edges[b])},"
                         f"{format_number(hist.edges[b + 1])},"
                         f"{format_number(hist.occupation[i, b])},"
                         f"{format_number(density[i, b])}\n")


def write_density_csv(path, grids: list[DensityGrid]) -> None:
    """One row per state per node, intervals concatenated in position order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(DENSITY_HEADER + "\n")
        for grid in sorted(grids, key=lambda g: g.interval[0]):
            for i in range(grid.rho.shape[0]):
                for k, eta in enumerate(grid.nodes):
                    fh.write(f"{i},{format_number(eta)},"
                             f"{format_number(grid.rho[i, k])},"
                             f"{format_number(grid.flux[i, k])}\n")


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a density table back into (nodes, rho, flux) arrays.

    Every state must be sampled on the same node set; a single solved
    interval is assumed (the validate negative control reads one table).
    """
    rows: dict[int, list[tuple[float, float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != DENSITY_HEADER:
            raise ConfigError(f"density table must start with '{DENSITY_HEADER}'")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ConfigError(f"density table line {lineno}: expected 4 columns")
            try:
                state = int(parts[0])
                eta, rho, flux = (float(p) for p in parts[1:])
            except ValueError as exc:
                raise ConfigError(f"density table line {lineno}: {exc}") from exc
            rows.setdefault(state, []).append((eta, rho, flux))
    if not rows:
        raise ConfigError("density table has no data rows")
    states = sorted(rows)
    if states != list(range(len(states))):
        raise ConfigError("density table states must be 0..n-1")
    nodes = np.array([r[0] for r in rows[0]], dtype=float)
    if nodes.shape[0] < 2 or np.any(np.diff(nodes) <= 0.0):
        raise ConfigError("density table nodes must be increasing per state")
    rho = np.empty((len(states), nodes.shape[0]))
    flux = np.empty_like(rho)
    for i in states:
        block = rows[i]
        if len(block) != nodes.shape[0]:
            raise ConfigError(f"density table state {i} has a different node count")
        if not np.allclose([r[0] for r in block], nodes, rtol=0.0, atol=0.0):
            raise ConfigError("density table states must share one node set")
        rho[i] = [r[1] for r in block]
        flux[i] = [r[2] for r in block]
    return nodes, rho, flux


def grid_from_density_rows(system: SwitchingSystem, nodes: np.ndarray,
                           rho: np.ndarray, flux: np.ndarray) -> DensityGrid:
    """Wrap tabulated density rows as a grid with spline evaluators."""
    from scipy.interpolate import CubicSpline

    if rho.shape[0] != system.n:
        raise ConfigError(f"density table has {rho.shape[0]} states, system has {system.n}")
    rho_splines = [CubicSpline(nodes, rho[i]) for i in range(system.n)]
    weights = np.zeros_like(nodes)
    weights[:-1] += 0.5 * np.diff(nodes)
    weights[1:] += 0.5 * np.diff(nodes)
    masses = rho @ weights
    lo, hi = float(nodes[0]), float(nodes[-1])
    specials = []
    for i in range(system.n):
        pts, _ = system.critical_points(i, (lo, hi))
        specials.extend(float(p) for p in pts if lo < p < hi)

    def rho_eval(i, x):
        return rho_splines[i](x)

    def flux_eval(x):
        xs = np.asarray(x, dtype=float)
        vals = np.vstack([np.asarray(rho_splines[i](xs), dtype=float) *
                          np.asarray(system.u(i, xs), dtype=float)
                          for i in range(system.n)])
        return vals[:, 0] if xs.ndim == 0 else vals

    return DensityGrid(
        nodes=nodes.copy(), rho=rho.copy(), flux=flux.copy(),
        normalization=float(masses.sum()), interval=(lo, hi),
        masses=masses,
        special_points=tuple(sorted(set(specials))),
        diagnostics={"source": "tabulated"},
        rho_eval=rho_eval, flux_eval=flux_eval,
    )
