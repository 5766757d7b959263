"""Splitting solvers for projecting onto the intersection of a box and a quadric.

Five methods are available:

* ``APE`` - alternating projections with the exact quadric projection,
* ``APC`` / ``APG`` - alternating projections with the centre-based or the
  gradient-based quasi-projection (exact projection when the line misses),
* ``DR`` - Douglas-Rachford on the two indicator functions,
* ``DRF`` - Douglas-Rachford on the squared box distance plus the quadric
  indicator, with step ``gamma``.

None of them is guaranteed to return the nearest point of the intersection.
A restart heuristic flips the iterate across the quadric centre (or the box
centre) when a method cycles or stalls away from the intersection.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .exact import QuadricProjector
from .exceptions import AtCenter, DimensionMismatch, InvalidGamma, ZeroGradient
from .quadric import Quadric, _as_vector, center as quadric_center
from .quasi import quasi_project

DRF_GAMMA_BOUND = math.sqrt(1.5) - 1.0


class Method(str, enum.Enum):
    APE = "ape"
    APC = "apc"
    APG = "apg"
    DR = "dr"
    DRF = "drf"

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower().replace("-", ""))


class Termination(str, enum.Enum):
    FEASIBLE = "feasible"
    MAX_ITER = "max_iter"
    CYCLE = "cycle"


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        up = np.array(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != up.shape:
            raise DimensionMismatch("box bounds must be vectors of equal length")
        if np.any(lo > up):
            raise ValueError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        up.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Box":
        return cls(data["lower"], data["upper"])


def project_box(box: Box, x) -> np.ndarray:
    x = _as_vector(x, box.n)
    return np.minimum(np.maximum(x, box.lower), box.upper)


@dataclass
class SolverConfig:
    """Settings shared by every splitting method.

    ``gradient_from_previous`` switches APG to the variant whose direction is
    the quadric gradient at the previous iterate (first direction ``x0 - d``)
    instead of the gradient at the current box point.
    """

    method: Method = Method.APE
    max_iter: int = 1000
    deviation_tol: float = 1e-6
    box_tol: float = 1e-9
    gamma: float = 0.2
    restart: bool = True
    cycle_tol: float = 1e-10
    stall_tol: float = 1e-12
    max_restarts: int = 5
    gradient_from_previous: bool = False

    def __post_init__(self):
        self.method = Method.parse(self.method)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**data)


@dataclass
class IterationRecord:
    """One iteration; ``step`` is the change of the governing sequence.

    For DR and DR-F the governing sequence is ``x`` and its change equals
    ``z - y``.
    """

    iterate: np.ndarray
    deviation: float
    distance: float
    restarts: int
    step: float = math.nan


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    termination: Termination = Termination.MAX_ITER
    restarts: int = 0
    exact_fallbacks: int = 0
    flags: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final_deviation(self) -> float:
        return self.records[-1].deviation if self.records else math.nan


def deviation(q: Quadric, x) -> float:
    """``|x'Bx + b'x + c|``; ignores the box."""
    return abs(float(x @ q.B @ x + q.b @ x + q.c))


def check_membership(q: Quadric, box: Box, x, cfg: SolverConfig | None = None):
    """Return ``(deviation, in_box)``, the box test using ``cfg.box_tol``."""
    cfg = cfg or SolverConfig()
    x = _as_vector(x, q.n)
    return deviation(q, x), box.contains(x, cfg.box_tol)


def _accept(q, box, p, cfg) -> Optional[np.ndarray]:
    """A feasible point derived from ``p``, if any.

    Either ``p`` itself or its box projection qualifies.
    """
    dev, inside = check_membership(q, box, p, cfg)
    if inside and dev <= cfg.deviation_tol:
        return p
    y = project_box(box, p)
    if deviation(q, y) <= cfg.deviation_tol:
        return y
    return None


class _Context:
    """Lazily built per-solve resources (eigendecomposition, centre)."""

    def __init__(self, q: Quadric, projector: QuadricProjector | None = None):
        self.q = q
        self._projector = projector
        self._center = None

    @property
    def projector(self) -> QuadricProjector:
        if self._projector is None:
            self._projector = QuadricProjector(self.q)
        return self._projector

    @property
    def center(self) -> np.ndarray:
        if self._center is None:
            self._center = (self._projector.normal_form.center if self._projector is not None
                            else quadric_center(self.q))
        return self._center

    def exact(self, x):
        return self.projector.project(x).point


def restart_flip(q: Quadric, box: Box, x, context=None, cfg: SolverConfig | None = None):
    """Move a trapped iterate to the opposite side.

    A point on the quadric is sent to the farthest intersection of the line
    through the centre; any other point is reflected through the box centre
    and clamped to the box.
    """
    cfg = cfg or SolverConfig()
    ctx = context if isinstance(context, _Context) else _Context(q)
    x = _as_vector(x, q.n)
    if deviation(q, x) <= cfg.deviation_tol:
        try:
            flipped = quasi_project(q, x, "center", "farthest", center=ctx.center)
        except AtCenter:
            flipped = None
        if flipped is not None:
            return flipped
    return project_box(box, 2.0 * box.center - x)


def _returned_point(q, box, trace, fallback):
    """Least-infeasible box point among the iterates (for failed solves)."""
    best, best_dev = fallback, math.inf
    for rec in trace.records:
        y = project_box(box, rec.iterate)
        dev = deviation(q, y)
        if dev < best_dev:
            best, best_dev = y, dev
    return best


def _quasi_or_exact(ctx, trace, y, direction):
    try:
        x = quasi_project(ctx.q, y, direction, "closest", center=ctx.center)
    except (AtCenter, ZeroGradient):
        x = None
    if x is None:
        trace.exact_fallbacks += 1
        x = ctx.exact(y)
    return x


def ap_solve(q: Quadric, box: Box, x0, cfg: SolverConfig | None = None,
             projector: QuadricProjector | None = None):
    """Alternating projections (APE, APC or APG) from ``x0``.

    Returns ``(point, trace)``.
    """
    cfg = cfg or SolverConfig()
    if cfg.method not in (Method.APE, Method.APC, Method.APG):
        raise ValueError(f"ap_solve does not run {cfg.method.value}")
    x0 = _as_vector(x0, q.n, "x0")
    trace = IterationTrace()
    ctx = _Context(q, projector)
    if _accept(q, box, x0, cfg) is x0:
        trace.termination = Termination.FEASIBLE
        return x0.copy(), trace

    x = x0
    xi = x0 - ctx.center if cfg.gradient_from_previous else None
    history = [x0]
    for _ in range(cfg.max_iter):
        y = project_box(box, x)
        if cfg.method is Method.APE:
            x_new = ctx.exact(y)
        elif cfg.method is Method.APC:
            x_new = _quasi_or_exact(ctx, trace, y, "center")
        elif cfg.gradient_from_previous:
            x_new = _quasi_or_exact(ctx, trace, y, xi if np.any(xi) else "center")
        else:
            x_new = _quasi_or_exact(ctx, trace, y, "gradient")
        trace.records.append(IterationRecord(x_new.copy(), deviation(q, x_new),
                                             float(np.linalg.norm(x_new - x0)), trace.restarts,
                                             float(np.linalg.norm(x_new - x))))
        feasible = _accept(q, box, x_new, cfg)
        if feasible is not None:
            trace.termination = Termination.FEASIBLE
            return feasible, trace

        if len(history) >= 2 and np.linalg.norm(x_new - history[-2]) <= cfg.cycle_tol * (1.0 + np.linalg.norm(x_new)):
            if cfg.restart and trace.restarts < cfg.max_restarts:
                x_new = restart_flip(q, box, x_new, ctx, cfg)
                trace.restarts += 1
                history = []
            else:
                trace.termination = Termination.CYCLE
                return _returned_point(q, box, trace, x_new), trace
        history.append(x_new)
        if cfg.gradient_from_previous:
            xi = 2.0 * q.B @ x_new + q.b
        x = x_new
    trace.termination = Termination.MAX_ITER
    return _returned_point(q, box, trace, x), trace


def _dr_loop(q, box, x0, cfg, projector, first_step):
    x0 = _as_vector(x0, q.n, "x0")
    trace = IterationTrace()
    ctx = _Context(q, projector)
    x = x0
    history = [x0]
    eps = np.finfo(float).eps
    for _ in range(cfg.max_iter):
        y = first_step(x)
        z = ctx.exact(2.0 * y - x)
        x_new = x + (z - y)
        step = float(np.linalg.norm(z - y))
        trace.records.append(IterationRecord(z.copy(), deviation(q, z),
                                             float(np.linalg.norm(z - x0)), trace.restarts, step))
        feasible = _accept(q, box, z, cfg)
        if feasible is not None:
            trace.termination = Termination.FEASIBLE
            return feasible, trace

        # a stall is a fixed point (z == y); a cycle alternates between two points
        stalled = step <= max(cfg.stall_tol, 8 * eps * np.linalg.norm(x))
        cycling = (len(history) >= 2 and
                   np.linalg.norm(x_new - history[-2]) <= cfg.cycle_tol * (1.0 + np.linalg.norm(x_new)) < step)
        if stalled or cycling:
            if cfg.restart and trace.restarts < cfg.max_restarts:
                x_new = restart_flip(q, box, z, ctx, cfg)
                trace.restarts += 1
                history = []
            else:
                trace.termination = Termination.CYCLE
                if stalled:
                    trace.flags.append("stalled")
                return _returned_point(q, box, trace, z), trace
        history.append(x_new)
        x = x_new
    trace.termination = Termination.MAX_ITER
    return _returned_point(q, box, trace, x), trace


def dr_solve(q: Quadric, box: Box, x0, cfg: SolverConfig | None = None,
             projector: QuadricProjector | None = None):
    """Douglas-Rachford splitting; returns ``(point, trace)``."""
    cfg = cfg or SolverConfig(method=Method.DR)
    return _dr_loop(q, box, x0, cfg, projector, lambda x: project_box(box, x))


def drf_solve(q: Quadric, box: Box, x0, cfg: SolverConfig | None = None,
              projector: QuadricProjector | None = None):
    """Douglas-Rachford for ``min d_box(x)**2`` over the quadric.

    Convergence to a stationary point is guaranteed for
    ``0 < gamma < sqrt(3/2) - 1``; larger steps run but are flagged.
    """
    cfg = cfg or SolverConfig(method=Method.DRF)
    gamma = cfg.gamma
    if not gamma > 0:
        raise InvalidGamma(f"gamma must be positive, got {gamma}")

    def first_step(x):
        return (x + gamma * project_box(box, x)) / (gamma + 1.0)

    point, trace = _dr_loop(q, box, x0, cfg, projector, first_step)
    if gamma >= DRF_GAMMA_BOUND:
        trace.flags.append("no convergence guarantee")
    return point, trace


def solve(q: Quadric, box: Box, x0, cfg: SolverConfig | None = None,
          projector: QuadricProjector | None = None):
    """Dispatch to the solver selected by ``cfg.method``."""
    cfg = cfg or SolverConfig()
    if cfg.method is Method.DR:
        return dr_solve(q, box, x0, cfg, projector)
    if cfg.method is Method.DRF:
        return drf_solve(q, box, x0, cfg, projector)
    return ap_solve(q, box, x0, cfg, projector)


@dataclass(frozen=True, eq=False)
class ProductSet:
    """Cartesian product of quadrics acting on disjoint coordinate blocks.

    ``blocks`` holds ``(quadric, indices)`` pairs; ``indices`` may be a slice
    or an integer sequence. Together they must partition ``range(n)``.
    """

    blocks: Sequence

    @property
    def n(self) -> int:
        return sum(q.n for q, _ in self.blocks)

    def index_arrays(self):
        n = self.n
        out = []
        seen = np.zeros(n, dtype=int)
        for q, idx in self.blocks:
            ind = np.arange(n)[idx] if isinstance(idx, slice) else np.asarray(idx, dtype=int)
            if ind.size != q.n:
                raise DimensionMismatch(f"block of size {ind.size} for a quadric of dimension {q.n}")
            seen[ind] += 1
            out.append(ind)
        if np.any(seen != 1):
            raise ValueError("blocks do not partition the coordinates")
        return out

    @classmethod
    def consecutive(cls, quadrics) -> "ProductSet":
        blocks, start = [], 0
        for q in quadrics:
            blocks.append((q, slice(start, start + q.n)))
            start += q.n
        return cls(tuple(blocks))


def cartesian_project(ps: ProductSet, x0) -> np.ndarray:
    """Blockwise exact projection onto a product of quadrics."""
    x0 = _as_vector(x0, ps.n, "x0")
    out = np.empty_like(x0)
    for (q, _), ind in zip(ps.blocks, ps.index_arrays()):
        out[ind] = QuadricProjector(q).project(x0[ind]).point
    return out


__all__ = [
    "Method", "Termination", "Box", "SolverConfig", "IterationRecord",
    "IterationTrace", "ProductSet", "DRF_GAMMA_BOUND", "project_box",
    "deviation", "check_membership", "restart_flip", "ap_solve", "dr_solve",
    "drf_solve", "solve", "cartesian_project",
]
