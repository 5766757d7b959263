"""Randomised benchmark: instance generation, trial runner and CSV report."""
from __future__ import annotations

import csv
import dataclasses
import enum
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exact import QuadricProjector
from .exceptions import GenerationFailed, InvalidQuadric
from .quadric import Quadric, validate_quadric
from .splitting import Box, Method, SolverConfig, Termination, deviation, project_box, solve

MAX_REDRAWS = 100
CSV_COLUMNS = ("family", "dim", "trial", "seed", "method", "objective", "deviation",
               "iterations", "restarts", "precompute_seconds", "solve_seconds", "termination")
TIMING_COLUMNS = ("precompute_seconds", "solve_seconds")


class Family(str, enum.Enum):
    ELLIPSOID = "ellipsoid"
    HYPERBOLOID = "hyperboloid"
    POWER = "power"

    @classmethod
    def parse(cls, value) -> "Family":
        return value if isinstance(value, cls) else cls(str(value).lower())


_FAMILY_INDEX = {Family.ELLIPSOID: 0, Family.HYPERBOLOID: 1, Family.POWER: 2}


@dataclass(frozen=True)
class InstanceSpec:
    family: Family
    dim: int
    seed: int
    box_halfwidth: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        if not self.box_halfwidth > 0:
            raise ValueError("box_halfwidth must be positive")


@dataclass(frozen=True)
class Instance:
    quadric: Quadric
    box: Box
    x0: np.ndarray
    feasible_point: np.ndarray

    def __iter__(self):
        # unpacks as (quadric, box, x0)
        return iter((self.quadric, self.box, self.x0))


@dataclass
class TrialRecord:
    family: str
    dim: int
    trial: int
    seed: int
    method: str
    objective: float
    deviation: float
    iterations: int
    restarts: int
    precompute_seconds: float
    solve_seconds: float
    termination: str

    @property
    def feasible(self) -> bool:
        return self.termination == Termination.FEASIBLE.value

    @property
    def wall_time_seconds(self) -> float:
        return self.solve_seconds


def trial_seed(base_seed: int, family, dim: int, trial: int) -> int:
    """64-bit seed for one trial; independent of the methods that run on it."""
    ss = np.random.SeedSequence([base_seed, dim, trial, _FAMILY_INDEX[Family.parse(family)]])
    return int(ss.generate_state(1, np.uint64)[0])


def _box_around(rng, p, halfwidth):
    u = rng.uniform(0.2, 1.0, p.size) * halfwidth
    v = rng.uniform(0.2, 1.0, p.size) * halfwidth
    return Box(p - u, p + v)


def _checked(q: Quadric) -> bool:
    return validate_quadric(q).ok


def gen_random_instance(spec: InstanceSpec) -> Instance:
    """Random ellipsoid or hyperboloid with a box around one of its points."""
    if spec.family is Family.POWER:
        return gen_power_style(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.dim
    for _ in range(MAX_REDRAWS):
        A = rng.normal(1.0, 1.0, (n, n))
        B = 0.5 * (A + A.T)
        b = rng.normal(0.0, 1.0, n)
        c = float(rng.normal(-1.0, 1.0))
        lam_min = float(np.linalg.eigvalsh(B)[0])
        if spec.family is Family.ELLIPSOID:
            if lam_min < 1.0:
                B = B + (1.0 - lam_min) * np.eye(n)
        elif lam_min >= 0.0:
            continue
        q = Quadric(B, b, c)
        if not _checked(q):
            continue
        projector = QuadricProjector(q)
        p = projector.project(rng.normal(0.0, 1.0, n)).point
        box = _box_around(rng, p, spec.box_halfwidth)
        x0 = rng.uniform(box.lower, box.upper)
        return Instance(q, box, x0, p)
    raise GenerationFailed(f"no valid {spec.family.value} instance after {MAX_REDRAWS} draws")


def gen_power_style(spec: InstanceSpec) -> Instance:
    """Instance with coefficient magnitudes typical of power-flow constraints.

    The box is scaled by ``|p| / sqrt(n)`` so that its size follows the
    magnitude of the feasible point; ``x0`` is pulled toward ``p`` until its
    distance to the quadric is below ``0.05 |p|``.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.dim
    for _ in range(MAX_REDRAWS):
        off = rng.normal(0.0, 1e-5, (n, n))
        B = np.triu(off, 1)
        B = B + B.T
        B[np.diag_indices(n)] = np.clip(rng.normal(1e-4, 2e-5, n), 1e-6, None)
        b = rng.normal(1.0, 0.01, n)
        c = float(rng.normal(-100.0, 1.0))
        q = Quadric(B, b, c)
        if not _checked(q):
            continue
        projector = QuadricProjector(q)
        start = (100.0 / n) * np.ones(n) + rng.normal(0.0, 0.1, n)
        p = projector.project(start).point
        pnorm = float(np.linalg.norm(p))
        box = _box_around(rng, p, spec.box_halfwidth * pnorm / math.sqrt(n))
        x0 = rng.uniform(box.lower, box.upper)
        limit = 0.05 * pnorm
        for _ in range(60):
            if projector.project(x0).objective < limit:
                break
            x0 = p + 0.5 * (x0 - p)
        return Instance(q, box, x0, p)
    raise GenerationFailed(f"no valid power-style instance after {MAX_REDRAWS} draws")


def _generate(spec: InstanceSpec) -> Instance:
    if spec.family is Family.POWER:
        return gen_power_style(spec)
    return gen_random_instance(spec)


def run_method(instance: Instance, cfg: SolverConfig):
    """Solve one instance; returns ``(point, trace, precompute_s, solve_s)``.

    Solve time includes the eigendecomposition for the methods that need it
    up front (APE, DR, DR-F); APC/APG build it only on fallback.
    """
    q, box, x0 = instance
    t0 = time.perf_counter()
    projector = None
    precompute = 0.0
    if cfg.method in (Method.APE, Method.DR, Method.DRF):
        projector = QuadricProjector(q)
        precompute = projector.precompute_seconds
    point, trace = solve(q, box, x0, cfg, projector)
    return point, trace, precompute, time.perf_counter() - t0


def run_trials(family, dims: Sequence[int], trials_per_dim: int, methods: Iterable,
               cfg: SolverConfig | None = None, base_seed: int = 0,
               box_halfwidth: float = 1.0) -> list[TrialRecord]:
    cfg = cfg or SolverConfig()
    family = Family.parse(family)
    methods = [Method.parse(m) for m in methods]
    records = []
    if not methods:
        return records
    for dim in dims:
        for trial in range(trials_per_dim):
            seed = trial_seed(base_seed, family, dim, trial)
            instance = _generate(InstanceSpec(family, dim, seed, box_halfwidth))
            for method in methods:
                mcfg = dataclasses.replace(cfg, method=method)
                point, trace, pre, dt = run_method(instance, mcfg)
                records.append(TrialRecord(
                    family=family.value, dim=int(dim), trial=trial, seed=seed,
                    method=method.value,
                    objective=float(np.linalg.norm(point - instance.x0)),
                    deviation=deviation(instance.quadric, point),
                    iterations=trace.iterations, restarts=trace.restarts,
                    precompute_seconds=pre, solve_seconds=dt,
                    termination=trace.termination.value))
    order = {m.value: i for i, m in enumerate(Method)}
    records.sort(key=lambda r: (r.family, r.dim, r.trial, order[r.method]))
    return records


def write_csv(records, out_path) -> Path:
    out_path = Path(out_path)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([repr(v) if isinstance(v, float) else v
                             for v in (getattr(r, c) for c in CSV_COLUMNS)])
    return out_path


def read_csv(path) -> list[TrialRecord]:
    types = {f.name: f.type for f in dataclasses.fields(TrialRecord)}
    casts = {"int": int, "float": float, "str": str}
    with Path(path).open(newline="") as fh:
        return [TrialRecord(**{k: casts[types[k]](v) for k, v in row.items()})
                for row in csv.DictReader(fh)]


def _stats(values):
    if not values:
        return (math.nan, math.nan, math.nan)
    arr = np.asarray(values, dtype=float)
    return (float(arr.min()), float(arr.mean()), float(arr.max()))


SUMMARY_METRICS = ("objective", "deviation", "iterations", "solve_seconds")


def summarize(records) -> dict:
    """Min/mean/max per (family, dim, method).

    Objectives of non-feasible runs are left out of the statistics but the
    runs are counted under ``timeouts``.
    """
    groups: dict = {}
    for r in records:
        groups.setdefault((r.family, r.dim, r.method), []).append(r)
    summary = {}
    for key, rs in groups.items():
        ok = [r for r in rs if r.feasible]
        entry = {"trials": len(rs), "feasible": len(ok), "timeouts": len(rs) - len(ok),
                 "objective": _stats([r.objective for r in ok])}
        for metric in SUMMARY_METRICS[1:]:
            entry[metric] = _stats([getattr(r, metric) for r in rs])
        summary[key] = entry
    return summary


def format_summary(summary) -> str:
    header = (f"{'family':<12}{'dim':>5} {'method':<6}{'ok':>5}{'t/o':>5}"
              f"{'obj min':>12}{'obj mean':>12}{'obj max':>12}"
              f"{'dev max':>11}{'it mean':>9}{'time mean':>11}")
    lines = [header]
    for (family, dim, method), e in sorted(summary.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        o = e["objective"]
        lines.append(f"{family:<12}{dim:>5} {method:<6}{e['feasible']:>5}{e['timeouts']:>5}"
                     f"{o[0]:>12.5g}{o[1]:>12.5g}{o[2]:>12.5g}"
                     f"{e['deviation'][2]:>11.2e}{e['iterations'][1]:>9.1f}{e['solve_seconds'][1]:>11.2e}")
    return "\n".join(lines)


def emit_report(records, out_path, stream=None, plots: bool = True) -> dict:
    """Write the CSV, echo the summary and (optionally) render figures beside it."""
    records = list(records)
    out_path = write_csv(records, out_path)
    summary = summarize(records)
    print(format_summary(summary), file=stream or sys.stdout)
    if plots and records:
        from .plotting import plot_summary
        plot_summary(summary, out_path)
    return summary


__all__ = [
    "Family", "InstanceSpec", "Instance", "TrialRecord", "CSV_COLUMNS", "TIMING_COLUMNS",
    "trial_seed", "gen_random_instance", "gen_power_style", "run_method", "run_trials",
    "write_csv", "read_csv", "summarize", "format_summary", "emit_report",
]
