"""Quasi-projection: map a point to the quadric along a line.

The line ``x0 + beta * xi`` meets the quadric where
``b1 beta**2 + b2 beta + b3 = 0`` with ``b1 = xi'B xi``,
``b2 = 2 x0'B xi + b'xi`` and ``b3 = psi(x0)``. Picking the root of smallest
magnitude gives a cheap feasible point; it needs no eigendecomposition but is
not the nearest point in general. The line may also miss the quadric, in which
case ``None`` is returned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import AtCenter, ZeroDirection, ZeroGradient
from .quadric import Quadric, _as_vector, center as quadric_center

LINEAR_RTOL = 1e-14


@dataclass(frozen=True)
class LineIntersection:
    """Both intersection parameters of a line with the quadric.

    For a degenerate (linear) equation ``beta_plus == beta_minus``.
    """

    beta_plus: float
    beta_minus: float
    b1: float
    b2: float
    b3: float
    discriminant: float


def line_quadric_intersect(q: Quadric, x0, xi) -> Optional[LineIntersection]:
    x0 = _as_vector(x0, q.n, "x0")
    xi = _as_vector(xi, q.n, "xi")
    xi_norm2 = float(xi @ xi)
    if xi_norm2 == 0.0:
        raise ZeroDirection("direction must be nonzero")
    Bxi = q.B @ xi
    b1 = float(xi @ Bxi)
    b2 = float(2.0 * x0 @ Bxi + q.b @ xi)
    b3 = float(x0 @ q.B @ x0 + q.b @ x0 + q.c)

    if abs(b1) <= LINEAR_RTOL * np.linalg.norm(q.B, 2) * xi_norm2:
        if b2 == 0.0:
            return None
        beta = -b3 / b2
        return LineIntersection(beta, beta, b1, b2, b3, b2 * b2)

    disc = b2 * b2 - 4.0 * b1 * b3
    if disc < 0:
        return None
    delta = math.sqrt(disc)
    # cancellation-free pair of roots
    qq = -0.5 * (b2 + math.copysign(delta, b2))
    if qq == 0.0:
        return LineIntersection(0.0, 0.0, b1, b2, b3, disc)
    r1, r2 = qq / b1, b3 / qq
    if b2 >= 0:
        beta_minus, beta_plus = r1, r2
    else:
        beta_plus, beta_minus = r1, r2
    return LineIntersection(beta_plus, beta_minus, b1, b2, b3, disc)


def select_beta(inter: LineIntersection, select: str = "closest") -> float:
    bp, bm = inter.beta_plus, inter.beta_minus
    if select == "closest":
        return bm if abs(bm) < abs(bp) else bp
    if select == "farthest":
        return bm if abs(bm) > abs(bp) else bp
    raise ValueError(f"unknown selection rule {select!r}")


def quasi_project(q: Quadric, x0, direction="center", select: str = "closest",
                  center=None) -> Optional[np.ndarray]:
    """Quasi-projection of ``x0`` onto ``q``.

    Parameters
    ----------
    direction : {"center", "gradient"} or array_like
        ``"center"`` uses ``x0 - d``, ``"gradient"`` uses ``2 B x0 + b``;
        an array is used as the direction itself.
    select : {"closest", "farthest"}
        Which of the two intersections to return. Ties go to ``beta_plus``.
    center : array_like, optional
        Precomputed centre of ``q``.

    Returns
    -------
    ndarray or None
        ``None`` when the line does not meet the quadric.
    """
    x0 = _as_vector(x0, q.n, "x0")
    if isinstance(direction, str):
        if direction == "center":
            d = quadric_center(q) if center is None else np.asarray(center, dtype=float)
            xi = x0 - d
            if not np.any(xi):
                raise AtCenter("centre-based direction is undefined at the centre")
        elif direction == "gradient":
            xi = 2.0 * q.B @ x0 + q.b
            if not np.any(xi):
                raise ZeroGradient("gradient vanishes: the point is the centre")
        else:
            raise ValueError(f"unknown direction {direction!r}")
    else:
        xi = _as_vector(direction, q.n, "direction")
    inter = line_quadric_intersect(q, x0, xi)
    if inter is None:
        return None
    return x0 + select_beta(inter, select) * xi


__all__ = ["LineIntersection", "line_quadric_intersect", "select_beta", "quasi_project"]
