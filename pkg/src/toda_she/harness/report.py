"""Run orchestration and report emission (JSON, CSV, convergence CSV)."""
import csv
import json
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from .. import __version__
from .._backend import BACKEND
from .checks import REGISTRY, CheckResult


@dataclass
class RunReport:
    config: dict
    version: str
    backend: str
    results: list
    timings: dict = field(default_factory=dict)

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    def numeric_payload(self):
        """Everything except wall-clock timings: identical for identical (config, seed)."""
        return {
            "config": self.config,
            "version": self.version,
            "results": [_clean(asdict(r)) for r in self.results],
        }

    def to_dict(self):
        d = self.numeric_payload()
        d["backend"] = self.backend
        d["timings"] = self.timings
        return d


def _clean(obj):
    """Plain JSON types (numpy scalars and arrays become floats and lists)."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


def _run_one(name, cfg):
    start = time.perf_counter()
    try:
        result = REGISTRY[name](cfg)
    except Exception as exc:  # noqa: BLE001 - domain errors become failed checks
        result = CheckResult(name, float("nan"), cfg.tolerance(name), False, "error",
                             {"error": f"{type(exc).__name__}: {exc}",
                              "trace": traceback.format_exc(limit=3)})
    return result, time.perf_counter() - start


def worker_count():
    raw = os.environ.get("TODA_SHE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def run(cfg):
    names = list(cfg.checks)
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(names))) as pool:
        outcomes = list(pool.map(lambda nm: _run_one(nm, cfg), names))
    results = [r for r, _ in outcomes]
    timings = {nm: dt for nm, (_, dt) in zip(names, outcomes)}
    return RunReport(cfg.to_dict(), __version__, BACKEND, results, timings)


def emit(report, out_dir):
    """Write report.json, checks.csv and convergence.csv; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, "report.json"),
        "csv": os.path.join(out_dir, "checks.csv"),
        "convergence": os.path.join(out_dir, "convergence.csv"),
    }
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "residual", "tolerance", "pass", "wall_clock"])
        for r in report.results:
            tol = r.criterion if r.tolerance is None else repr(float(r.tolerance))
            w.writerow([r.name, repr(float(r.residual)), tol, "pass" if r.passed else "fail",
                        f"{report.timings.get(r.name, 0.0):.3f}"])
    with open(paths["convergence"], "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "nx", "nt", "residual"])
        for r in report.results:
            for nx, nt, res in r.convergence:
                w.writerow([r.name, nx, nt, repr(float(res))])
    return paths
