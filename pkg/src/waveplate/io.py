"""CSV/JSON serialization of trajectories, energy series, bases and operators."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import ENERGY_COLUMNS, EnergyReport
from .integrator import Trajectory

_FMT = "%.17g"


def trajectory_columns(n_wave: int, n_plate: int) -> list[str]:
    cols = ["t"]
    cols += [f"u_{j}" for j in range(1, n_wave + 1)]
    cols += [f"du_{j}" for j in range(1, n_wave + 1)]
    cols += [f"w_{j}" for j in range(1, n_plate + 1)]
    cols += [f"dw_{j}" for j in range(1, n_plate + 1)]
    return cols


def write_trajectory_csv(traj: Trajectory, path):
    header = ",".join(trajectory_columns(traj.n_wave, traj.n_plate))
    data = np.column_stack([traj.times, traj.vectors])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=_FMT)


def read_trajectory_csv(path, dt: float | None = None, stride: int = 1, scheme: str = "rk4"):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_wave = sum(c.startswith("u_") for c in header)
    n_plate = sum(c.startswith("w_") for c in header)
    times = data[:, 0]
    if dt is None:
        dt = float(times[1] - times[0]) / stride if len(times) > 1 else 0.0
    return Trajectory.from_vectors(times, data[:, 1:], n_wave, n_plate, dt=dt, stride=stride,
                                   scheme=scheme)


def write_energy_csv(report: EnergyReport, path):
    np.savetxt(path, report.rows(), delimiter=",", header=",".join(ENERGY_COLUMNS),
               comments="", fmt=_FMT)


def read_energy_csv(path) -> EnergyReport:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return EnergyReport(*[data[:, k] for k in range(len(ENERGY_COLUMNS))])


def write_basis_csv(ops, path):
    """One row per mode: family, index, eigenvalue, normalization constant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "index", "eigenvalue", "normalization"])
        for mode in ops.wave_basis:
            writer.writerow(["wave", " ".join(map(str, mode.index)), repr(mode.eigenvalue),
                             repr(mode.amplitude)])
        for pair, diag in zip(ops.plate_basis.modes, np.diag(ops.plate_bending)):
            norm = float(np.prod([m.norm_const for m in pair]))
            writer.writerow(["plate", " ".join(str(m.index) for m in pair), repr(float(diag)),
                             repr(norm)])


def write_operators(ops, out_dir):
    """Dump the assembled matrices as individual CSV files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mats = {
        "wave_stiffness": np.atleast_2d(ops.wave_stiffness).T,
        "plate_mass": ops.plate_mass,
        "plate_bending": ops.plate_bending,
        "plate_damping": ops.plate_damping,
        "coupling": ops.coupling,
    }
    for name, mat in mats.items():
        np.savetxt(out / f"{name}.csv", mat, delimiter=",", fmt=_FMT)
    return sorted(mats)


def write_table_csv(rows: list[dict], path):
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
