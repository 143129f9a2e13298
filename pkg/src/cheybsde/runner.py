"""Experiment execution: runs a validated config and writes artifacts.

Every run writes a manifest (config hash, seed, versions, timing) next to
its CSV outputs.  CSV bodies are deterministic for a fixed seed; anything
time-dependent stays in the manifest or in explicitly-named timing
columns of the bench table.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bsde import TrainTrace, price_from_traces, train_bermudan, train_european
from .config import ExperimentConfig
from .nn.layers import init_network
from .oracles import ls_price_bermudan, mc_price_european
from .simulate import RngSpec, derive_run_seed, simulate_paths

__all__ = ["run_price", "run_bench", "run_simulate"]

BENCH_THRESHOLDS = (0.110, 0.120)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and np.isnan(value):
        return "nan"
    return str(value)


def _write_manifest(out_dir: Path, config: ExperimentConfig, seed: int, extra: dict) -> None:
    manifest = {
        "config_name": config.name,
        "config_hash": config.config_hash(),
        "method": config.method,
        "seed": seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "python_version": sys.version.split()[0],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _write_results_csv(path: Path, rows: list[dict]) -> None:
    """Oracle results schema: method,degree,n_paths,price,stderr,seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "degree", "n_paths", "price", "stderr", "seed"])
        for row in rows:
            writer.writerow([
                row["method"], _fmt(row.get("degree")), row["n_paths"],
                _fmt(row["price"]), _fmt(row["stderr"]), row["seed"],
            ])


def _write_summary_csv(path: Path, rows: list[dict]) -> None:
    """BSDE run-set schema: run_id,final_price,final_loss,seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run_id", "final_price", "final_loss", "seed"])
        for row in rows:
            writer.writerow([row["run_id"], _fmt(row["final_price"]),
                             _fmt(row["final_loss"]), row["seed"]])


def _epochs_to_threshold(trace: TrainTrace, threshold: float) -> int | None:
    """First epoch whose recorded price reaches the threshold, if any."""
    hit = np.nonzero(trace.price >= threshold)[0]
    return int(trace.epoch[hit[0]]) if hit.size else None


def _run_bsde(config: ExperimentConfig, seed: int, runs: int, out_dir: Path | None):
    params = config.build_params()
    spec = config.build_spec()
    grid = config.build_grid()
    arch = config.build_arch()
    traces: list[TrainTrace] = []
    summary_rows = []
    for r in range(runs):
        run_seed = derive_run_seed(seed, r) if runs > 1 else seed
        cfg = config.build_train_config(seed=run_seed)
        if spec.style == "european":
            trace, _ = train_european(params, spec, arch, cfg, grid)
        else:
            trace, _ = train_bermudan(params, spec, arch, cfg, grid)
        traces.append(trace)
        summary_rows.append({
            "run_id": r,
            "final_price": trace.final_price,
            "final_loss": float(trace.loss[-1]),
            "seed": run_seed,
        })
        if out_dir is not None:
            trace.to_csv(out_dir / f"trace_run{r}.csv")
    summary = price_from_traces(traces)
    if out_dir is not None:
        _write_summary_csv(out_dir / "summary.csv", summary_rows)
    return summary, traces


def run_price(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    runs: int | None = None,
    method: str | None = None,
    degree: int | None = None,
) -> dict:
    """Price one config and write its artifacts; returns the result row."""
    config = config.with_overrides(method=method)
    out_path: Path | None = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
    seed = config.seed_for(config.method) if seed is None else seed
    runs = config.runs() if runs is None else runs

    t0 = time.perf_counter()
    result: dict = {"config": config.name, "method": config.method, "seed": seed}
    if config.method == "mc":
        params, spec, grid = config.build_params(), config.build_spec(), config.build_grid()
        n_paths = int(config.raw["mc"]["n_paths"])
        price, stderr = mc_price_european(params, spec, grid, n_paths, RngSpec(seed))
        result.update(price=price, stderr=stderr, n_paths=n_paths, degree=None)
        if out_path is not None:
            _write_results_csv(out_path / "results.csv", [
                {"method": "mc", "degree": None, "n_paths": n_paths,
                 "price": price, "stderr": stderr, "seed": seed}
            ])
    elif config.method == "ls":
        params, spec, grid = config.build_params(), config.build_spec(), config.build_grid()
        ls_cfg = config.build_ls_config(degree=degree)
        price, stderr = ls_price_bermudan(params, spec, grid, ls_cfg, RngSpec(seed))
        result.update(price=price, stderr=stderr, n_paths=ls_cfg.n_paths, degree=ls_cfg.degree)
        if out_path is not None:
            _write_results_csv(out_path / "results.csv", [
                {"method": "ls", "degree": ls_cfg.degree, "n_paths": ls_cfg.n_paths,
                 "price": price, "stderr": stderr, "seed": seed}
            ])
    else:
        summary, traces = _run_bsde(config, seed, runs, out_path)
        result.update(
            price=summary.price, stderr=summary.stderr, runs=runs, degree=None,
            param_count=init_network(config.build_arch(), RngSpec(0)).param_count(),
            traces=traces,
        )
    result["wall_clock_s"] = time.perf_counter() - t0
    if out_path is not None:
        _write_manifest(out_path, config, seed, {"runs": runs})
    return result


def run_bench(
    configs: list[ExperimentConfig],
    out_dir: str | Path,
    seed: int | None = None,
    runs: int | None = None,
) -> Path:
    """Run a config set and write the aggregated comparison table.

    Per-row failures are recorded and the bench continues; the wall-clock
    column is the one intentionally non-deterministic output.
    """
    if not configs:
        raise ValueError("bench needs at least one config")
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    header = [
        "config", "method", "arch", "param_count", "price", "stderr", "ci95",
        "wall_clock_s", "epochs_to_0.110", "epochs_to_0.120", "status", "message",
    ]
    rows = []
    for config in configs:
        row = {key: None for key in header}
        row.update(config=config.name, method=config.method, status="ok", message="")
        try:
            sub_dir = out_path / config.name
            result = run_price(config, out_dir=sub_dir, seed=seed, runs=runs)
            row["price"] = result["price"]
            row["stderr"] = result["stderr"]
            stderr = result["stderr"]
            if stderr is not None and np.isfinite(stderr):
                row["ci95"] = 1.96 * stderr
            row["wall_clock_s"] = round(result["wall_clock_s"], 3)
            if config.method.startswith("bsde"):
                arch = config.build_arch()
                row["arch"] = f"{arch.kind}:{arch.hidden_layers}x{arch.width}"
                row["param_count"] = result["param_count"]
                if config.build_spec().style == "bermudan":
                    for threshold in BENCH_THRESHOLDS:
                        key = f"epochs_to_{threshold:.3f}"
                        hits = [_epochs_to_threshold(t, threshold) for t in result["traces"]]
                        hits = [h for h in hits if h is not None]
                        row[key] = min(hits) if hits else None
        except Exception as exc:  # bench keeps going on per-row failures
            row["status"] = "error"
            row["message"] = str(exc).replace("\n", " ")
        rows.append(row)
    table = out_path / "comparison.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[key]) for key in header])
    return table


def run_simulate(
    config: ExperimentConfig,
    out_dir: str | Path,
    m_paths: int = 16,
    seed: int | None = None,
) -> Path:
    """Simulate a small path batch for the config and dump it as CSV."""
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    seed = config.seed_for(config.method) if seed is None else seed
    params, grid = config.build_params(), config.build_grid()
    batch = simulate_paths(params, grid, m_paths, RngSpec(seed))
    target = out_path / "paths.csv"
    batch.to_csv(target)
    _write_manifest(out_path, config, seed, {"m_paths": m_paths})
    return target
