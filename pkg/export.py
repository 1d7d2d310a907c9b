"""
CSV / JSON writers for configurations, couplings, curves, histograms and scans.
Curves get a JSON sidecar next to the CSV carrying their metadata.
"""

import csv
import json
from pathlib import Path

import numpy as np

from couplings import CouplingMatrix
from dynamics import RelaxationCurve, SpinHistogram, TimeGrid
from ensemble import BallGeometry, SpinConfiguration


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_to_builtin)
        f.write("\n")
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def _write_sidecar(path, provenance: dict | None, meta: dict | None = None):
    if provenance is None and not meta:
        return
    payload = dict(meta or {})
    if provenance is not None:
        payload["run_config"] = provenance
    write_json(sidecar_path(path), payload)


# --- configurations ---

def configuration_to_dict(config: SpinConfiguration) -> dict:
    g = config.geometry
    return {"d": g.d, "r0": g.r0, "rb": g.rb, "seed": config.seed,
            "positions": config.positions.tolist()}


def configuration_from_dict(data: dict) -> SpinConfiguration:
    geometry = BallGeometry(int(data["d"]), float(data["r0"]), float(data["rb"]))
    return SpinConfiguration(geometry, np.array(data["positions"], dtype=float), int(data["seed"]))


def write_configuration_csv(config: SpinConfiguration, path, provenance: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = config.geometry
    header = (f"d={g.d} r0={g.r0!r} rb={g.rb!r} seed={config.seed}\n"
              + ",".join(f"x{i + 1}" for i in range(g.d)))
    np.savetxt(path, config.positions, delimiter=",", header=header, fmt="%.17g")
    _write_sidecar(path, provenance)
    return path


def read_configuration_csv(path) -> SpinConfiguration:
    with open(path) as f:
        first = f.readline().lstrip("#").split()
    fields = dict(item.split("=", 1) for item in first)
    geometry = BallGeometry(int(fields["d"]), float(fields["r0"]), float(fields["rb"]))
    positions = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return SpinConfiguration(geometry, positions, int(fields["seed"]))


def write_matrix_csv(matrix: CouplingMatrix, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, matrix.values, delimiter=",", fmt="%.17g")
    return path


# --- curves ---

def write_curve(curve: RelaxationCurve, path, provenance: dict | None = None) -> Path:
    """Columns tau, jnn_tau, value, stderr plus a metadata sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    stderr = curve.stderr if curve.stderr is not None else np.zeros(len(curve.grid))
    table = np.column_stack([curve.times, curve.grid.scaled, curve.values, stderr])
    np.savetxt(path, table, delimiter=",", header="tau,jnn_tau,value,stderr", fmt="%.17g")
    meta = dict(curve.meta, observable=curve.observable)
    if provenance is not None:
        meta["run_config"] = provenance
    write_json(sidecar_path(path), meta)
    return path


def read_curve(path) -> RelaxationCurve:
    path = Path(path)
    table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    with open(sidecar_path(path)) as f:
        meta = json.load(f)
    observable = meta.pop("observable")
    meta.pop("run_config", None)
    unit = meta.get("jnn_unit")
    grid = TimeGrid(table[:, 0], unit)
    return RelaxationCurve(grid, table[:, 2], observable, table[:, 3], meta)


def write_spin_samples(
    times, jnn_times, spins: np.ndarray, strongest: np.ndarray, path,
    provenance: dict | None = None, meta: dict | None = None,
) -> Path:
    """Per-spin <sigma_x^i> traces, one column per spin, with each spin's
    strongest coupling in the header for colour coding. Run provenance and
    `meta` go to a JSON sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = ["tau", "jnn_tau"] + [f"spin_{i}" for i in range(spins.shape[0])]
    header = ("nn_coupling=" + ",".join(f"{c:.17g}" for c in strongest) + "\n"
              + ",".join(columns))
    table = np.column_stack([times, jnn_times, spins.T])
    np.savetxt(path, table, delimiter=",", header=header, fmt="%.17g")
    _write_sidecar(path, provenance, meta)
    return path


def write_histograms(
    histograms: list[SpinHistogram], path, jnn: float | None = None,
    provenance: dict | None = None, meta: dict | None = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["tau", "jnn_tau", "bin_low", "bin_high", "count", "n_spins"])
        for hist in histograms:
            scaled = hist.time * jnn if jnn else hist.time
            for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
                writer.writerow([repr(hist.time), repr(scaled), repr(float(lo)),
                                 repr(float(hi)), int(count), hist.n_spins])
    _write_sidecar(path, provenance, meta)
    return path


# --- scans ---

def write_scan(scan, directory, stem: str) -> list[Path]:
    """One CSV row per scan point (columns listed in the header comment) and
    the full result as JSON."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns = []
    for row in scan.rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    csv_path = directory / f"{stem}.csv"
    with open(csv_path, "w", newline="") as f:
        f.write(f"# mode={scan.mode} columns: {' '.join(columns)}\n")
        if "run_config" in scan.meta:
            f.write(f"# run_config={json.dumps(scan.meta['run_config'], sort_keys=True, default=_to_builtin)}\n")
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in scan.rows:
            writer.writerow({k: json.dumps(v, default=_to_builtin) if isinstance(v, (list, dict)) else v
                             for k, v in row.items()})
    json_path = write_json(directory / f"{stem}.json", {
        "mode": scan.mode, "meta": scan.meta, "summary": scan.summary, "rows": scan.rows,
    })
    return [csv_path, json_path]
