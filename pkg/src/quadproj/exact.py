"""Exact Euclidean projection onto a non-cylindrical central quadric.

In normal form the problem is ``min ||x - x0||`` subject to
``sum lambda_i x_i**2 = 1`` with ``x0 >= 0``. Stationary points satisfy
``x_i (1 + mu lambda_i) = x0_i``, so away from the poles ``-1/lambda_i`` the
multiplier ``mu`` is a root of the secular function

    f(mu) = sum_{x0_i != 0} lambda_i (x0_i / (1 + mu lambda_i))**2 - 1.

``f`` is strictly decreasing on the interval ``(e1, e2)`` between the poles
closest to zero and has at most one root there. The remaining candidates
come from poles whose eigenvalue group has all ``x0`` components equal to
zero; those have a closed form. The projection is the closest of at most
``n + 1`` candidates.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .exceptions import NoCandidate, NoConvergence, NotFound, PoleEvaluation
from .quadric import (
    NormalForm,
    NormalizedProblem,
    Quadric,
    _as_vector,
    denormalize_point,
    normal_form,
    normalize_point,
)

POLE_TOL = 1e-14
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
GROUP_RTOL = 1e-10
TIE_TOL = 1e-12
MAX_HALVINGS = 200
# distance (in 1 + mu*lambda) below which the root is re-solved relative to the pole
_HUG_THRESHOLD = 1e-3
# plain Newton steps allowed before switching to pole-relative coordinates
_PLAIN_BUDGET = 30


@dataclass(frozen=True)
class SecularInterval:
    """Open interval ``(e1, e2)`` on which ``f`` is strictly decreasing."""

    e1: float
    e2: float

    def __post_init__(self):
        if not self.e1 < self.e2:
            raise ValueError(f"empty interval ({self.e1}, {self.e2})")

    def __contains__(self, mu):
        return self.e1 < mu < self.e2


class _Secular:
    """Secular function evaluated in a shifted variable ``t = mu - anchor``.

    With ``pole=None`` the anchor is zero and ``t = mu``. Anchoring at the pole
    ``-1/lambda_p`` keeps ``1 + mu lambda_p`` exact when the root sits next to
    that pole, where it would otherwise lose all relative accuracy.
    """

    def __init__(self, lambdas, x0, pole: Optional[int] = None):
        lambdas = np.asarray(lambdas, dtype=float)
        x0 = np.asarray(x0, dtype=float)
        self.n = lambdas.size
        self.active = np.flatnonzero(x0 != 0.0)
        self.lam = lambdas[self.active]
        self.x0 = x0[self.active]
        self.w = self.lam * self.x0**2
        if pole is None:
            self.anchor = 0.0
            self.offset = np.ones_like(self.lam)
            self.pole_tol = POLE_TOL
        else:
            lp = lambdas[pole]
            self.anchor = -1.0 / lp
            # 1 + anchor*lambda_i, written so that it vanishes exactly for lambda_i == lp
            self.offset = (lp - self.lam) / lp
            self.pole_tol = 0.0

    def denominators(self, t):
        den = self.offset + t * self.lam
        if np.any(np.abs(den) <= self.pole_tol):
            raise PoleEvaluation(f"secular function evaluated at a pole (mu={self.anchor + t!r})")
        return den

    def value(self, t):
        den = self.denominators(t)
        return float(np.sum(self.w / den**2) - 1.0)

    def derivative(self, t):
        den = self.denominators(t)
        return float(-2.0 * np.sum((self.lam * self.x0) ** 2 / den**3))

    def value_and_derivative(self, t):
        den = self.denominators(t)
        terms = self.w / den**2
        f = float(np.sum(terms) - 1.0)
        df = float(-2.0 * np.sum(self.lam * terms / den))
        scale = float(1.0 + np.sum(np.abs(terms)))
        return f, df, scale

    def scale(self, t):
        den = self.denominators(t)
        return float(1.0 + np.sum(np.abs(self.w) / den**2))

    def point(self, t):
        x = np.zeros(self.n)
        x[self.active] = self.x0 / self.denominators(t)
        return x


def secular_f(mu: float, np_: NormalizedProblem) -> float:
    """``sum_{x0_i != 0} lambda_i (x0_i / (1 + mu lambda_i))**2 - 1``."""
    return _Secular(np_.lambdas, np_.x0).value(mu)


def secular_f_prime(mu: float, np_: NormalizedProblem) -> float:
    return _Secular(np_.lambdas, np_.x0).derivative(mu)


def x_of_mu(mu: float, np_: NormalizedProblem) -> np.ndarray:
    """Stationary point ``x0 / (1 + mu lambda)`` with zero components kept at zero."""
    return _Secular(np_.lambdas, np_.x0).point(mu)


def interval_endpoints(np_: NormalizedProblem) -> SecularInterval:
    lam, x0 = np_.lambdas, np_.x0
    active = x0 != 0.0
    pos = active & (lam > 0)
    neg = active & (lam < 0)
    e1 = float(np.max(-1.0 / lam[pos])) if pos.any() else -math.inf
    e2 = float(np.min(-1.0 / lam[neg])) if neg.any() else math.inf
    return SecularInterval(e1, e2)


class RootResult(NamedTuple):
    mu: float
    iterations: int
    residuals: tuple  # |f| / scale at every iterate, starting point included


def _newton_steps(sec: _Secular, lo: float, hi: float, start: float, tol: float):
    """Safeguarded Newton iteration on a decreasing function.

    Yields ``(t, scaled_residual, converged)`` after each evaluation. A Newton
    step that leaves the current sign bracket is replaced by the bracket
    midpoint.
    """
    t = float(start)
    while True:
        f, df, scale = sec.value_and_derivative(t)
        r = abs(f) / scale
        if r <= tol:
            yield t, r, True
            return
        if f > 0:
            lo = max(lo, t)
        else:
            hi = min(hi, t)
        if math.isfinite(lo) and math.isfinite(hi) and hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi)):
            # bracket exhausted at machine precision
            yield t, r, True
            return
        yield t, r, False
        cand = t - f / df if df != 0.0 else math.nan
        if not (lo < cand < hi):
            if math.isfinite(lo) and math.isfinite(hi):
                cand = 0.5 * (lo + hi)
            elif math.isfinite(lo):
                cand = t + max(2.0 * abs(t - lo), 1.0)
            else:
                cand = t - max(2.0 * abs(hi - t), 1.0)
        if cand == t:
            yield t, r, True
            return
        t = cand


def _run_newton_t(sec, lo, hi, start, tol, max_iter):
    """Newton in the shifted variable; returns ``(t, iterations, residuals)``."""
    residuals = []
    it = 0
    t = start
    for t, r, done in _newton_steps(sec, lo, hi, start, tol):
        residuals.append(r)
        if done:
            return t, it, tuple(residuals)
        it += 1
        if it > max_iter:
            break
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations",
                        best=t, iterations=max_iter)


def _run_newton(sec, lo, hi, start, tol, max_iter):
    try:
        t, it, residuals = _run_newton_t(sec, lo, hi, start, tol, max_iter)
    except NoConvergence as exc:
        exc.best = sec.anchor + exc.best
        raise
    return RootResult(sec.anchor + t, it, residuals)


def newton_guarded(np_: NormalizedProblem, interval: SecularInterval, start: float,
                   tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> RootResult:
    """Root of the secular function on ``interval`` by safeguarded Newton.

    Stops once ``|f(mu)| <= tol * (1 + sum |lambda_i| x_i(mu)**2)``.
    """
    if not interval.e1 < start < interval.e2:
        raise ValueError(f"start {start} outside ({interval.e1}, {interval.e2})")
    sec = _Secular(np_.lambdas, np_.x0)
    return _run_newton(sec, interval.e1, interval.e2, start, tol, max_iter)


def find_positive_start(np_: NormalizedProblem, e1: float) -> float:
    """A point ``mu0`` in ``(e1, 0]`` with ``f(mu0) > 0``.

    Tries ``0`` and then halves the distance to ``e1``.
    """
    if not math.isfinite(e1):
        raise ValueError("e1 must be finite")
    sec = _Secular(np_.lambdas, np_.x0)
    if sec.value(0.0) > 0:
        return 0.0
    for k in range(1, MAX_HALVINGS + 1):
        mu = e1 * (1.0 - 0.5**k)
        if mu <= e1:
            break
        if sec.value(mu) > 0:
            return mu
    raise NotFound("no point with f > 0 found next to e1")


def _sign_change_start(sec: _Secular, toward: float, want_positive: bool) -> float:
    for k in range(1, MAX_HALVINGS + 1):
        mu = toward * (1.0 - 0.5**k)
        if mu == toward:
            break
        f = sec.value(mu)
        if (f > 0) == want_positive and f != 0:
            return mu
    raise NotFound("bisection did not find a sign change")


def double_newton(np_: NormalizedProblem, interval: SecularInterval,
                  tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> RootResult:
    """Two Newton sequences from either side of the inflexion point.

    ``f`` has a single inflexion point on a hyperboloid interval, so one of
    the starts ``0`` and ``mu_s`` (where ``f`` has the opposite sign of
    ``f(0)``) is always on the side where plain Newton converges
    monotonically. Both sequences are advanced alternately and the first one
    to converge wins.
    """
    e1, e2 = interval.e1, interval.e2
    if not (math.isfinite(e1) and math.isfinite(e2)):
        raise ValueError("double_newton needs a bounded interval")
    sec = _Secular(np_.lambdas, np_.x0)
    f0, _, s0 = sec.value_and_derivative(0.0)
    if abs(f0) <= tol * s0:
        return RootResult(0.0, 0, (abs(f0) / s0,))
    if f0 < 0:
        mu_s = _sign_change_start(sec, e1, want_positive=True)
    else:
        mu_s = _sign_change_start(sec, e2, want_positive=False)

    runs = [_newton_steps(sec, e1, e2, 0.0, tol), _newton_steps(sec, e1, e2, mu_s, tol)]
    histories = [[], []]
    iters = [0, 0]
    last = [0.0, mu_s]
    alive = [True, True]
    while any(alive):
        for j in (0, 1):
            if not alive[j]:
                continue
            try:
                t, r, done = next(runs[j])
            except StopIteration:
                alive[j] = False
                continue
            last[j] = t
            histories[j].append(r)
            if done:
                return RootResult(t, iters[j], tuple(histories[j]))
            iters[j] += 1
            if iters[j] > max_iter:
                alive[j] = False
    best = min((0, 1), key=lambda j: histories[j][-1] if histories[j] else math.inf)
    raise NoConvergence("double Newton did not converge", best=last[best],
                        iterations=max(iters))


def _group_eigenvalues(lambdas):
    """Group indices with equal eigenvalues (relative tolerance), in descending order."""
    order = np.argsort(-lambdas, kind="stable")
    groups = []
    for i in order:
        if groups:
            ref = lambdas[groups[-1][0]]
            if abs(lambdas[i] - ref) <= GROUP_RTOL * max(abs(lambdas[i]), abs(ref)):
                groups[-1].append(int(i))
                continue
        groups.append([int(i)])
    return [sorted(g) for g in groups]


def degenerate_candidates(np_: NormalizedProblem) -> list[tuple[int, np.ndarray]]:
    """Stationary points at ``mu = -1/lambda_k`` for eigenvalue groups with zero ``x0``.

    Returns ``(k, x)`` pairs where ``k`` is the 1-based rank of the distinct
    eigenvalue (distinct values in descending order). Within the group only
    the smallest index carries the positive square root. Such a point may
    leave the first orthant; it is then never the winner.
    """
    lam, x0 = np_.lambdas, np_.x0
    out = []
    if np.all(x0 != 0.0):
        return out
    for k, group in enumerate(_group_eigenvalues(lam), start=1):
        if np.any(x0[group] != 0.0):
            continue
        lbar = lam[group[0]]
        others = np.ones(lam.size, dtype=bool)
        others[group] = False
        x = np.zeros(lam.size)
        x[others] = x0[others] * lbar / (lbar - lam[others])
        arg = (1.0 - float(np.sum(lam[others] * x[others] ** 2))) / lbar
        if arg > 0:
            x[group[0]] = math.sqrt(arg)
            out.append((k, x + 0.0))  # drop negative zeros
    return out


class ProjectionKind(str, enum.Enum):
    ROOT = "root"
    DEGENERATE = "degenerate"
    ALREADY_FEASIBLE = "already_feasible"


@dataclass(frozen=True, eq=False)
class CandidateSet:
    root_candidate: Optional[tuple]  # (mu, x)
    degenerate: list


@dataclass(frozen=True, eq=False)
class ProjectionOutcome:
    """Result of an exact projection.

    ``kind`` tells which candidate won; ``degenerate_index`` is set for
    degenerate winners. ``residual`` is ``|psi(point)|`` in the coordinates
    of ``point``.
    """

    point: np.ndarray
    objective: float
    kind: ProjectionKind
    mu: Optional[float] = None
    newton_iters: int = 0
    residual: float = 0.0
    degenerate_index: Optional[int] = None
    newton_residuals: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "objective": self.objective,
            "kind": self.kind.value,
            "degenerate_index": self.degenerate_index,
            "mu": self.mu,
            "newton_iters": self.newton_iters,
            "residual": self.residual,
        }


def _hugged_pole(np_: NormalizedProblem, mu: float) -> Optional[int]:
    """Index of the active pole within ``_HUG_THRESHOLD`` of ``mu`` (in ``1 + mu lambda``)."""
    active = np.flatnonzero(np_.x0 != 0.0)
    dist = np.abs(1.0 + mu * np_.lambdas[active])
    j = int(np.argmin(dist))
    return int(active[j]) if dist[j] < _HUG_THRESHOLD else None


def _anchored_root(np_: NormalizedProblem, interval: SecularInterval, tol: float,
                   pole: Optional[int] = None):
    """Root search carried out relative to the pole that bounds it.

    Used when the root is closer to a pole than the plain evaluation can
    resolve (tiny ``x0`` component on that pole). Without ``pole`` the
    bounding pole is picked from the sign of ``f(0)``.
    """
    lam, x0 = np_.lambdas, np_.x0
    if pole is None:
        f0 = _Secular(lam, x0).value(0.0)
        active = np.flatnonzero(x0 != 0.0)
        edge = interval.e1 if f0 < 0 or math.isinf(interval.e2) else interval.e2
        pole = int(active[np.argmin(np.abs(-1.0 / lam[active] - edge))])
    sec = _Secular(lam, x0, pole=pole)
    # t runs from the pole (t = 0) to mu = 0 (t = -anchor)
    far = -sec.anchor
    lo, hi = (0.0, far) if far > 0 else (far, 0.0)
    want_positive = far > 0
    start = None
    for k in range(1, 1100):
        t = far * 0.5**k
        if t == 0.0:
            break
        f = sec.value(t)
        if f != 0 and (f > 0) == want_positive:
            start = t
            break
    if start is None:
        raise NotFound("no sign change next to the pole")
    t, it, residuals = _run_newton_t(sec, lo, hi, start, tol, NEWTON_MAX_ITER)
    return RootResult(sec.anchor + t, it, residuals), sec.anchor + t, sec.point(t)


def candidate_set(np_: NormalizedProblem, tol: float = NEWTON_TOL) -> tuple[CandidateSet, RootResult | None]:
    """Root candidate and degenerate candidates.

    A root that lands next to a pole is searched again relative to that
    pole; the returned history is then that of the second search, while the
    iteration count includes both.
    """
    interval = interval_endpoints(np_)
    root = None
    res = None
    if math.isfinite(interval.e1):
        spent = 0
        try:
            if math.isinf(interval.e2):
                mu0 = find_positive_start(np_, interval.e1)
                res = newton_guarded(np_, interval, mu0, tol=tol, max_iter=_PLAIN_BUDGET)
            else:
                res = double_newton(np_, interval, tol=tol, max_iter=_PLAIN_BUDGET)
            pole = _hugged_pole(np_, res.mu)
            if pole is None:
                mu, x = res.mu, _Secular(np_.lambdas, np_.x0).point(res.mu)
            else:
                spent = res.iterations
                res, mu, x = _anchored_root(np_, interval, tol, pole)
        except (PoleEvaluation, NotFound, NoConvergence) as exc:
            spent = getattr(exc, "iterations", 0)
            res, mu, x = _anchored_root(np_, interval, tol)
        res = res._replace(iterations=res.iterations + spent)
        root = (mu, x)
    return CandidateSet(root, degenerate_candidates(np_)), res


def project_normal_form(np_: NormalizedProblem, tol: float = NEWTON_TOL) -> ProjectionOutcome:
    """Nearest point of ``sum lambda x**2 = 1`` to ``np_.x0`` (first orthant)."""
    lam, x0 = np_.lambdas, np_.x0
    sec = _Secular(lam, x0)
    f0, _, s0 = sec.value_and_derivative(0.0)
    if abs(f0) <= tol * s0:
        return ProjectionOutcome(x0.copy(), 0.0, ProjectionKind.ALREADY_FEASIBLE, mu=0.0,
                                 residual=abs(f0))

    cands, res = candidate_set(np_, tol)
    best = None
    if cands.root_candidate is not None:
        mu, x = cands.root_candidate
        best = (float(np.linalg.norm(x - x0)), ProjectionKind.ROOT, mu, x, None)
    for k, x in cands.degenerate:
        obj = float(np.linalg.norm(x - x0))
        if best is None or obj < best[0] - TIE_TOL * max(1.0, best[0]):
            best = (obj, ProjectionKind.DEGENERATE, float(-1.0 / _group_value(lam, k)), x, k)
    if best is None:
        raise NoCandidate("no candidate found: the quadric is empty or the input invalid")
    obj, kind, mu, x, k = best
    return ProjectionOutcome(
        point=x,
        objective=obj,
        kind=kind,
        mu=mu,
        newton_iters=res.iterations if (res is not None and kind is ProjectionKind.ROOT) else 0,
        residual=abs(float(lam @ (x * x)) - 1.0),
        degenerate_index=k,
        newton_residuals=res.residuals if res is not None else (),
    )


def _group_value(lam, k):
    return lam[_group_eigenvalues(lam)[k - 1][0]]


def _restore_feasibility(q: Quadric, x, steps: int = 3):
    """Gauss-Newton steps on ``psi`` along its gradient.

    Lifting from the normal form loses digits when the centre is far from the
    point; a couple of steps bring ``|psi|`` back to rounding level while
    moving the point by about the lost amount only.
    """
    psi = float(x @ q.B @ x + q.b @ x + q.c)
    for _ in range(steps):
        if psi == 0.0:
            break
        g = 2.0 * q.B @ x + q.b
        gg = float(g @ g)
        if gg == 0.0:
            break
        trial = x - (psi / gg) * g
        trial_psi = float(trial @ q.B @ trial + q.b @ trial + q.c)
        if abs(trial_psi) >= abs(psi):
            break
        x, psi = trial, trial_psi
    return x, psi


class QuadricProjector:
    """Exact projector with the eigendecomposition computed once.

    Splitting solvers call :meth:`project` many times on the same quadric;
    the normal form is the only O(n^3) step.
    """

    def __init__(self, q: Quadric, nf: NormalForm | None = None):
        self.quadric = q
        start = time.perf_counter()
        self.normal_form = nf if nf is not None else normal_form(q)
        self.precompute_seconds = time.perf_counter() - start

    def project(self, x0_raw) -> ProjectionOutcome:
        q, nf = self.quadric, self.normal_form
        x0_raw = _as_vector(x0_raw, q.n, "x0_raw")
        np_ = normalize_point(nf, x0_raw)
        out = project_normal_form(np_)
        if out.kind is ProjectionKind.ALREADY_FEASIBLE:
            point = x0_raw.copy()
            psi = float(point @ q.B @ point + q.b @ point + q.c)
        else:
            point, psi = _restore_feasibility(q, denormalize_point(nf, np_, out.point))
        return ProjectionOutcome(
            point=point,
            objective=float(np.linalg.norm(point - x0_raw)),
            kind=out.kind,
            mu=out.mu,
            newton_iters=out.newton_iters,
            residual=abs(psi),
            degenerate_index=out.degenerate_index,
            newton_residuals=out.newton_residuals,
        )

    __call__ = project


def project_exact(q: Quadric, x0_raw) -> ProjectionOutcome:
    """Exact projection of ``x0_raw`` onto the quadric ``q``."""
    return QuadricProjector(q).project(x0_raw)


__all__ = [
    "SecularInterval", "RootResult", "CandidateSet", "ProjectionKind",
    "ProjectionOutcome", "QuadricProjector", "secular_f", "secular_f_prime",
    "x_of_mu", "interval_endpoints", "newton_guarded", "find_positive_start",
    "double_newton", "degenerate_candidates", "candidate_set",
    "project_normal_form", "project_exact",
]
