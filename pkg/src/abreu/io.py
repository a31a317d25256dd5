"""CSV data files and JSON provenance records.

Floats are written with 17 significant digits so a file read back gives
the same doubles.
"""

from __future__ import annotations

import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

__all__ = [
    "RADIAL_COLUMNS",
    "GRID_COLUMNS",
    "package_version",
    "write_table",
    "read_table",
    "write_radial_csv",
    "write_grid_csv",
    "provenance_path",
    "write_provenance",
    "read_provenance",
    "radial_solution_from_table",
    "grid_solution_from_table",
]

RADIAL_COLUMNS = ("r", "g", "v", "w", "det")
GRID_COLUMNS = ("x", "y", "u", "w", "det")
_FMT = "%.17g"


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def write_table(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.asarray(rows, dtype=float).reshape(-1, len(columns))
    np.savetxt(path, rows, fmt=_FMT, delimiter=",", header=",".join(columns), comments="")
    return path


def read_table(path, expect=None):
    """Return ``(columns, rows)``; checks the header when ``expect`` is given."""
    path = Path(path)
    with path.open() as fh:
        header = tuple(fh.readline().strip().split(","))
    if expect is not None and header != tuple(expect):
        raise ValueError(f"{path}: expected columns {','.join(expect)}, found {','.join(header)}")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, rows


def write_radial_csv(path, solution) -> Path:
    return write_table(path, RADIAL_COLUMNS,
                       np.column_stack([solution.r, solution.slope, solution.v,
                                        solution.w, solution.det]))


def write_grid_csv(path, solution) -> Path:
    return write_table(path, GRID_COLUMNS, solution.records())


def provenance_path(data_path) -> Path:
    return Path(data_path).with_suffix(".json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if np.isfinite(val) else repr(val)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_provenance(path, record: dict) -> Path:
    """Write ``record`` plus tool version, interpreter and timestamp as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    full = {
        "tool": "abreu",
        "version": package_version(),
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": np.__version__,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        **record,
    }
    path.write_text(json.dumps(_jsonable(full), indent=2, sort_keys=True) + "\n")
    return path


def read_provenance(path) -> dict:
    return json.loads(Path(path).read_text())


def radial_solution_from_table(rows, record: dict):
    """Rebuild a RadialSolution from ``r,g,v,w,det`` rows and its provenance."""
    from .radial import RadialProblem, RadialSolution

    prob = record["problem"]
    problem = RadialProblem(int(prob["n"]), float(prob["p"]), int(prob["f_sign"]),
                            float(prob["psi"]), float(prob.get("phi", 0.0)))
    rows = np.asarray(rows, dtype=float)
    return RadialSolution(problem, float(rows[-1, 1]), rows[:, 0], rows[:, 1], rows[:, 2],
                          rows[:, 3], rows[:, 4])


def grid_solution_from_table(rows, record: dict):
    """Rebuild a GridSolution from ``x,y,u,w,det`` rows and its provenance.

    The lattice is regenerated from the recorded mesh width and the node
    coordinates are required to match it exactly.
    """
    from .disk import GridField, build_disk_grid
    from .grid_solver import GridSolution, SolveReport, SolverConfig
    from .operators import RhsModel

    rows = np.asarray(rows, dtype=float)
    grid = build_disk_grid(float(record["h"]))
    if rows.shape[0] != grid.size or not np.array_equal(rows[:, :2], grid.points):
        raise ValueError("node coordinates do not match the recorded lattice")
    model = RhsModel.from_dict(record["model"])
    config = SolverConfig(**record["solver"])
    u = GridField(grid, rows[:, 2].copy(), float(record["phi"]))
    w = GridField(grid, rows[:, 3].copy(), float(record["psi"]))
    return GridSolution(u, w, SolveReport(converged=True), model, config)
