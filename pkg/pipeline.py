"""
Glassy Ising pipeline: config loading, run orchestration and the command line.

    python3 pipeline.py simulate --d 3 --alpha 6 --N 1300 --Ns 200 --x 0.005 --seed 42
    python3 pipeline.py analytic --d 3 --alpha 3 --anisotropy dipolar
    python3 pipeline.py scan --mode beta-vs-N --d 3 --alpha 6
"""

import argparse
import copy
import json
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

import database as db
from analytic import (
    ModelParameters,
    analytic_curve,
    anisotropy_chi,
    dephasing_plateau,
    median_nn_coupling_continuum,
    rates,
)
from couplings import CouplingModel, coupling_matrix, get_anisotropy, nn_couplings
from dynamics import (
    MAGNETIZATION,
    PURITY,
    RENYI2,
    EnsembleTask,
    TimeGrid,
    calibrate_jnn,
    ensemble_average,
    moment_name,
    spin_histogram,
    spin_magnetizations,
)
from ensemble import BallGeometry, rb_for_disorder, sample_rsa
from errors import DomainError, GlassyIsingError, PackingFailure
from export import (
    write_configuration_csv,
    write_curve,
    write_histograms,
    write_json,
    write_scan,
    write_spin_samples,
)
from fitting import (
    ScanSettings,
    default_cases,
    fit_stretched_exponential,
    scan_beta_vs_disorder,
    scan_beta_vs_n,
    scan_p_table,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_PACKING = 3


def load_config(path: str = None) -> dict:
    if path is None:
        path = str(Path(__file__).parent / "config.yaml")
    with open(path) as f:
        return yaml.safe_load(f) or {}


def merge_config(base: dict, override: dict) -> dict:
    """Nested dicts are merged key by key, everything else is replaced."""
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


# --- validated run configuration ---

class PTableEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    N: list[int] = Field(min_length=3)
    N_s: int = Field(ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: Literal["simulate", "analytic", "scan"]
    d: int = Field(3, ge=1)
    alpha: float = Field(6.0, gt=0)
    c_alpha: float = Field(1.0, gt=0)
    r0: float = Field(1.0, gt=0)
    anisotropy: Literal["isotropic", "dipolar"] = "isotropic"

    n: int = Field(100, ge=1)
    n_samples: int = Field(200, ge=1)
    x: Optional[float] = Field(None, ge=0)
    rb: Optional[float] = Field(None, ge=0)
    seed: int = Field(42, ge=0)
    threads: int = Field(1, ge=1)
    calibration: int = Field(16, ge=1)
    max_attempts_per_spin: int = Field(1000, ge=1)

    grid_start: float = Field(0.01, gt=0)
    grid_stop: float = Field(100.0, gt=0)
    grid_points: int = Field(200, ge=2)

    moments: list[int] = []
    histogram_times: list[float] = []
    histogram_bins: int = Field(40, ge=2)
    sample_spins: int = Field(50, ge=0)
    density: Optional[float] = Field(None, gt=0)

    mode: Literal["beta-vs-x", "beta-vs-N", "p-table"] = "beta-vs-x"
    x_values: list[float] = []
    n_values: list[int] = []
    max_alpha: int = Field(10, ge=1)
    p_table: dict[int, dict[str, PTableEntry]] = {}

    out: str = "output"
    database: str = "runs.db"

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.x is not None and self.rb is not None:
            raise ValueError("give either x or rb, not both")
        if self.grid_stop <= self.grid_start:
            raise ValueError(f"grid stop {self.grid_stop} must exceed start {self.grid_start}")
        if any(j < 1 for j in self.moments):
            raise ValueError(f"moment orders must be >= 1, got {self.moments}")
        if any(t <= 0 for t in self.histogram_times):
            raise ValueError("histogram times must be positive")
        # raises ValueError for rb >= 2 r0 or unsupported d
        BallGeometry(self.d, self.r0, self.exclusion_radius)
        if self.anisotropy == "dipolar" and self.d > 3:
            raise ValueError(f"dipolar anisotropy factor is defined for d <= 3, got d={self.d}")
        if self.command == "analytic" and self.alpha < self.d:
            raise ValueError(f"closed forms need alpha >= d, got alpha={self.alpha}, d={self.d}")
        if self.command == "scan":
            if self.mode == "beta-vs-x" and not self.x_values:
                raise ValueError("beta-vs-x scan needs x_values")
            if self.mode == "beta-vs-N" and len(self.n_values) < 3:
                raise ValueError("beta-vs-N scan needs at least 3 N values")
            if self.mode == "p-table":
                missing = [d for d, _ in default_cases(self.max_alpha) if d not in self.p_table]
                if missing:
                    raise ValueError(f"p_table has no entry for d={sorted(set(missing))}")
        return self

    @property
    def exclusion_radius(self) -> float:
        if self.rb is not None:
            return self.rb
        return rb_for_disorder(self.x or 0.0, self.n, self.d, self.r0)

    @property
    def geometry(self) -> BallGeometry:
        return BallGeometry(self.d, self.r0, self.exclusion_radius)

    @property
    def max_attempts(self) -> int:
        return self.max_attempts_per_spin * self.n

    def provenance(self) -> dict:
        """Everything needed to re-run this output exactly."""
        return self.model_dump(mode="json", exclude={"database"})


def run_config_from(cfg: dict, command: str) -> RunConfig:
    model, grid, ens = cfg.get("model", {}), cfg.get("grid", {}), cfg.get("ensemble", {})
    sim, an, sc = cfg.get("simulate", {}), cfg.get("analytic", {}), cfg.get("scan", {})
    out = cfg.get("output", {})
    fields = {
        "command": command,
        "d": model.get("d"), "alpha": model.get("alpha"), "c_alpha": model.get("c_alpha"),
        "r0": model.get("r0"), "anisotropy": model.get("anisotropy"),
        "grid_start": grid.get("start"), "grid_stop": grid.get("stop"), "grid_points": grid.get("points"),
        "n": ens.get("N"), "n_samples": ens.get("N_s"), "seed": ens.get("seed"),
        "threads": ens.get("threads"), "calibration": ens.get("calibration"),
        "max_attempts_per_spin": ens.get("max_attempts_per_spin"),
        "out": out.get("dir"), "database": out.get("database"),
    }
    if command == "simulate":
        fields.update(
            x=sim.get("x"), rb=sim.get("rb"), moments=sim.get("moments"),
            histogram_times=sim.get("histogram_times"), histogram_bins=sim.get("histogram_bins"),
            sample_spins=sim.get("sample_spins"),
        )
    elif command == "analytic":
        fields.update(moments=an.get("moments"), density=an.get("density"))
    else:
        fields.update(
            mode=sc.get("mode"), x_values=sc.get("x_values"), n_values=sc.get("N_values"),
            max_alpha=sc.get("max_alpha"), p_table=sc.get("p_table"),
        )
    return RunConfig(**{k: v for k, v in fields.items() if v is not None})


# --- commands ---

def _time_grid(config: RunConfig, jnn: float | None) -> TimeGrid:
    return TimeGrid.logspace(config.grid_start, config.grid_stop, config.grid_points, unit_scale=jnn)


def _fit_or_error(curve) -> dict:
    try:
        return fit_stretched_exponential(curve).to_dict()
    except (GlassyIsingError, ValueError) as exc:
        logger.warning("[Fit] %s: %s", curve.observable, exc)
        return {"error": str(exc)}


def cmd_simulate(config: RunConfig) -> tuple[list, dict]:
    out = Path(config.out)
    provenance = config.provenance()
    geometry = config.geometry
    anisotropy = get_anisotropy(None if config.anisotropy == "isotropic" else config.anisotropy)
    model = CouplingModel(config.alpha, config.c_alpha, anisotropy)

    # a single spin has no coupling to set the time unit
    jnn = None
    if config.n >= 2:
        jnn = calibrate_jnn(config.n, geometry, model, config.seed, config.calibration, config.max_attempts)
    grid = _time_grid(config, jnn)

    observables = (MAGNETIZATION, PURITY, RENYI2) + tuple(moment_name(j) for j in config.moments)
    task = EnsembleTask(
        config.n, geometry, config.alpha, grid, observables, config.c_alpha, anisotropy, config.max_attempts,
    )
    result = ensemble_average(task, config.n_samples, config.seed, threads=config.threads)

    files = [write_curve(curve, out / f"{name}.csv", provenance) for name, curve in result.curves.items()]

    if config.alpha >= config.d:
        params = ModelParameters.from_ensemble(config.n, geometry, config.alpha, config.c_alpha)
        chi = anisotropy_chi(anisotropy, config.d, config.alpha)
        for name in (MAGNETIZATION, PURITY):
            files.append(write_curve(analytic_curve(params, grid, name, chi), out / f"analytic_{name}.csv", provenance))
        if config.n >= 2:
            # same N as the ensemble, cutoffs removed
            finite = analytic_curve(params, grid, MAGNETIZATION, chi, n_prime=config.n)
            files.append(write_curve(finite, out / "analytic_finite_size_magnetization.csv", provenance))

    # first realization, for per-spin traces and histograms
    sample = sample_rsa(config.n, geometry, result.seeds[0], config.max_attempts)
    matrix = coupling_matrix(sample, model)
    files.append(write_configuration_csv(sample, out / "configuration_0.csv", provenance))
    if config.n >= 2 and config.sample_spins > 0:
        count = min(config.sample_spins, config.n)
        spins = spin_magnetizations(matrix, grid.values)[:count]
        files.append(write_spin_samples(
            grid.values, grid.scaled, spins, nn_couplings(matrix)[:count], out / "spin_samples.csv",
            provenance, meta={"realization_seed": sample.seed},
        ))
    if config.histogram_times:
        histograms = [spin_histogram(matrix, t / jnn if jnn else t, config.histogram_bins)
                      for t in config.histogram_times]
        files.append(write_histograms(
            histograms, out / "histograms.csv", jnn, provenance, meta={"realization_seed": sample.seed},
        ))

    fits = {name: _fit_or_error(result.curves[name]) for name in (MAGNETIZATION, PURITY)}
    summary = {"jnn": jnn, "x": task.x, "rb": geometry.rb, "fits": fits}
    if config.alpha >= config.d:
        summary["d_over_alpha"] = config.d / config.alpha
    files.append(write_json(out / "summary.json", dict(summary, run_config=provenance)))
    return files, summary


def cmd_analytic(config: RunConfig) -> tuple[list, dict]:
    out = Path(config.out)
    provenance = config.provenance()
    density = config.density or BallGeometry(config.d, config.r0).density(config.n)
    params = ModelParameters(config.d, config.alpha, density, config.c_alpha)
    anisotropy = get_anisotropy(None if config.anisotropy == "isotropic" else config.anisotropy)

    prediction = rates(params, anisotropy, config.moments)
    jnn = median_nn_coupling_continuum(params)
    plateaus = {j: dephasing_plateau(j) for j in sorted({2, *config.moments})}
    summary = dict(
        prediction.to_dict(),
        density=density,
        jnn_continuum=jnn,
        dephasing_plateau=plateaus,
    )
    if prediction.exponential:
        logger.info("[Analytic] alpha = d: pure exponential decay")
    files = [write_json(out / "rates.json", dict(summary, run_config=provenance))]

    grid = _time_grid(config, jnn)
    names = [MAGNETIZATION, PURITY, RENYI2] + [moment_name(j) for j in config.moments if j > 1]
    for name in names:
        curve = analytic_curve(params, grid, name, prediction.chi)
        files.append(write_curve(curve, out / f"analytic_{name}.csv", provenance))
    return files, summary


def cmd_scan(config: RunConfig) -> tuple[list, dict]:
    settings = ScanSettings(
        r0=config.r0,
        c_alpha=config.c_alpha,
        grid_start=config.grid_start,
        grid_stop=config.grid_stop,
        grid_points=config.grid_points,
        n_calibration=config.calibration,
        threads=config.threads,
        attempts_per_spin=config.max_attempts_per_spin,
    )
    if config.mode == "beta-vs-x":
        scan = scan_beta_vs_disorder(
            config.d, config.alpha, config.n, config.n_samples, config.x_values, config.seed, settings,
        )
    elif config.mode == "beta-vs-N":
        scan = scan_beta_vs_n(
            config.d, config.alpha, config.n_values, config.n_samples, None, config.seed, settings,
        )
    else:
        table = {d: {name: entry.model_dump() for name, entry in per_d.items()}
                 for d, per_d in config.p_table.items()}
        scan = scan_p_table(default_cases(config.max_alpha), table, config.seed, settings)
    scan.meta["run_config"] = config.provenance()
    files = write_scan(scan, config.out, config.mode)
    failed = sum(1 for r in scan.rows if r.get("status") != "ok")
    summary = dict(scan.summary, rows=len(scan.rows), failed_rows=failed)
    return files, summary


COMMANDS = {"simulate": cmd_simulate, "analytic": cmd_analytic, "scan": cmd_scan}


def run(config: RunConfig) -> dict:
    """Run one command and register it. Returns a summary with an exit code."""
    run_id = db.create_run(config.command, config.provenance(), config.out, path=config.database)
    print(f"\n🔬 Run #{run_id} started: {config.command}")

    try:
        files, summary = COMMANDS[config.command](config)
    except PackingFailure as exc:
        print(f"  ❌ Packing failed: {exc}", file=sys.stderr)
        db.complete_run(run_id, "failed", error=str(exc), path=config.database)
        return {"run_id": run_id, "status": "failed", "error": str(exc), "exit_code": EXIT_PACKING}
    except (DomainError, ValueError) as exc:
        print(f"  ❌ Invalid input: {exc}", file=sys.stderr)
        db.complete_run(run_id, "failed", error=str(exc), path=config.database)
        return {"run_id": run_id, "status": "failed", "error": str(exc), "exit_code": EXIT_INVALID}
    except GlassyIsingError as exc:
        print(f"  ❌ Run failed: {exc}", file=sys.stderr)
        db.complete_run(run_id, "failed", error=str(exc), path=config.database)
        return {"run_id": run_id, "status": "failed", "error": str(exc), "exit_code": EXIT_FAILED}
    except Exception as exc:
        logger.exception("[Run] %s run #%d crashed", config.command, run_id)
        print(f"  ❌ Run failed: {exc}", file=sys.stderr)
        db.complete_run(run_id, "failed", error=f"{type(exc).__name__}: {exc}", path=config.database)
        return {"run_id": run_id, "status": "failed", "error": str(exc), "exit_code": EXIT_FAILED}

    db.add_run_files(run_id, files, path=config.database)
    db.complete_run(run_id, "completed", summary=summary, path=config.database)
    print(f"  ✅ Run #{run_id} complete: {len(files)} files in {config.out}")
    return {"run_id": run_id, "status": "completed", "files": [str(f) for f in files],
            "summary": summary, "exit_code": EXIT_OK}


# --- command line ---

_FLAG_PATHS = {
    "d": ("model", "d"),
    "alpha": ("model", "alpha"),
    "c_alpha": ("model", "c_alpha"),
    "r0": ("model", "r0"),
    "anisotropy": ("model", "anisotropy"),
    "start": ("grid", "start"),
    "stop": ("grid", "stop"),
    "points": ("grid", "points"),
    "N": ("ensemble", "N"),
    "Ns": ("ensemble", "N_s"),
    "seed": ("ensemble", "seed"),
    "threads": ("ensemble", "threads"),
    "calibration": ("ensemble", "calibration"),
    "density": ("analytic", "density"),
    "mode": ("scan", "mode"),
    "x_values": ("scan", "x_values"),
    "N_values": ("scan", "N_values"),
    "max_alpha": ("scan", "max_alpha"),
    "out": ("output", "dir"),
    "db": ("output", "database"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file merged over config.yaml")
    common.add_argument("--d", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--c-alpha", dest="c_alpha", type=float)
    common.add_argument("--r0", type=float)
    common.add_argument("--anisotropy", choices=["isotropic", "dipolar"])
    common.add_argument("--N", type=int)
    common.add_argument("--Ns", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--calibration", type=int, help="realizations used to calibrate J_NN")
    common.add_argument("--start", type=float, help="first J_NN*tau grid point")
    common.add_argument("--stop", type=float, help="last J_NN*tau grid point")
    common.add_argument("--points", type=int)
    common.add_argument("--out")
    common.add_argument("--db", help="run registry database file")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="pipeline.py", description="Glassy power-law Ising relaxation")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="ensemble-averaged dynamics")
    packing = simulate.add_mutually_exclusive_group()
    packing.add_argument("--x", type=float, help="disorder parameter N rb^d / r0^d")
    packing.add_argument("--rb", type=float, help="exclusion radius")
    simulate.add_argument("--j", type=int, nargs="+", help="extra moment orders")

    analytic = sub.add_parser("analytic", parents=[common], help="closed-form rates and curves")
    analytic.add_argument("--j", type=int, nargs="+", help="moment orders for gamma_j")
    analytic.add_argument("--density", type=float)

    scan = sub.add_parser("scan", parents=[common], help="beta and finite-size scans")
    scan.add_argument("--mode", choices=["beta-vs-x", "beta-vs-N", "p-table"])
    scan.add_argument("--x-values", dest="x_values", type=float, nargs="+")
    scan.add_argument("--N-values", dest="N_values", type=int, nargs="+")
    scan.add_argument("--max-alpha", dest="max_alpha", type=int)
    return parser


def merged_config(args: argparse.Namespace) -> dict:
    """config.yaml, then --config, then command-line flags."""
    cfg = load_config()
    if args.config:
        cfg = merge_config(cfg, load_config(args.config))
    for flag, (section, key) in _FLAG_PATHS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.setdefault(section, {})[key] = value
    if args.command == "simulate":
        sim = cfg.setdefault("simulate", {})
        if args.x is not None:
            sim["x"], sim["rb"] = args.x, None
        elif args.rb is not None:
            sim["x"], sim["rb"] = None, args.rb
    if getattr(args, "j", None) is not None:
        cfg.setdefault(args.command, {})["moments"] = args.j
    return cfg


def log_level(cfg: dict, verbose: bool = False) -> int:
    """--verbose wins over the logging.level setting."""
    if verbose:
        return logging.DEBUG
    name = str((cfg.get("logging") or {}).get("level", "INFO")).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"unknown logging level '{name}'")
    return level


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        cfg = merged_config(args)
        logging.basicConfig(
            level=log_level(cfg, args.verbose),
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        config = run_config_from(cfg, args.command)
    except (ValidationError, ValueError, OSError, yaml.YAMLError) as exc:
        print(f"❌ Invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID

    print("=" * 60)
    print(f"🔬 Glassy Ising: {config.command}  d={config.d} alpha={config.alpha:g}")
    print("=" * 60)

    result = run(config)
    print(f"\n📊 Result: {json.dumps(result, indent=2, default=str)}")
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
