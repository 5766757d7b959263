"""Central quadrics and their reduction to normal form.

A quadric is the zero set of ``psi(x) = x'Bx + b'x + c``. When ``B`` is
nonsingular the quadric has a centre ``d = -B^{-1} b / 2`` and, after a shift
to ``d``, a rotation onto the eigenvectors of ``B`` and a division by
``|gamma| = |psi(d)|``, it reads ``sum_i lambda_i z_i**2 = 1``.

The rotation and shift are isometries, so a nearest point in normal form maps
back to a nearest point in the original coordinates.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import (
    AsymmetricMatrix,
    CenterOnQuadric,
    DimensionMismatch,
    EmptyQuadric,
    InvalidQuadric,
    NonSymmetric,
    SingularMatrix,
)

SYMMETRY_RTOL = 1e-12
SINGULARITY_RTOL = 1e-10
CENTER_RTOL = 1e-10
_SIGN_THRESHOLD = 1e-10


def _as_vector(x, n=None, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise DimensionMismatch(f"{name} has length {x.shape[0]}, expected {n}")
    return x


@dataclass(frozen=True, eq=False)
class Quadric:
    """The quadric ``{x : x'Bx + b'x + c = 0}``.

    Construction only checks shapes; call :func:`validate_quadric` (or
    :meth:`validate`) to check the central, non-cylindrical assumptions.
    """

    B: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionMismatch(f"B must be square, got shape {B.shape}")
        b = _as_vector(self.b, B.shape[0], "b")
        B.setflags(write=False)
        b = b.copy()
        b.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def __call__(self, x):
        return evaluate_psi(self, x)

    def gradient(self, x):
        return gradient_psi(self, x)

    def center(self):
        return center(self)

    def validate(self) -> "Quadric":
        validate_quadric(self).raise_for_status()
        return self

    def to_dict(self) -> dict:
        return {"B": self.B.tolist(), "b": self.b.tolist(), "c": self.c}

    @classmethod
    def from_dict(cls, data: dict) -> "Quadric":
        b = np.asarray(data["b"], dtype=float)
        B = np.asarray(data["B"], dtype=float)
        if B.ndim == 1:
            # flat row-major layout
            if B.size != b.size**2:
                raise DimensionMismatch(
                    f"flat B has {B.size} entries, expected {b.size**2}")
            B = B.reshape(b.size, b.size)
        return cls(B, b, float(data["c"]))

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source) -> "Quadric":
        """Load from a JSON string or a path to a JSON file."""
        if isinstance(source, Path) or (isinstance(source, str)
                                        and not source.lstrip().startswith("{")):
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_quadric`.

    Each boolean states whether the corresponding assumption holds.
    ``gamma`` is ``psi(center)``; it is ``nan`` when ``B`` is singular.
    """

    symmetric: bool
    nonsingular: bool
    center_off_quadric: bool
    nonempty: bool
    gamma: float = float("nan")
    messages: tuple = ()

    @property
    def ok(self) -> bool:
        return (self.symmetric and self.nonsingular and self.center_off_quadric
                and self.nonempty)

    def __bool__(self):
        return self.ok

    def raise_for_status(self):
        if not self.symmetric:
            raise AsymmetricMatrix(self.messages[0])
        if not self.nonsingular:
            raise SingularMatrix(self._message("singular"))
        if not self.center_off_quadric:
            raise CenterOnQuadric(self._message("centre"))
        if not self.nonempty:
            raise EmptyQuadric(self._message("empty"))

    def _message(self, key):
        for m in self.messages:
            if key in m:
                return m
        return key


def validate_quadric(q: Quadric) -> ValidationReport:
    """Check that ``q`` is a nonempty, non-cylindrical central quadric."""
    B, b, c = q.B, q.b, q.c
    messages = []
    scale = np.max(np.abs(B)) if B.size else 0.0
    asym = np.max(np.abs(B - B.T)) if B.size else 0.0
    symmetric = bool(asym <= SYMMETRY_RTOL * scale)
    if not symmetric:
        messages.append(f"B is not symmetric (max asymmetry {asym:.3g})")
        return ValidationReport(False, False, False, False, messages=tuple(messages))

    eig = np.linalg.eigvalsh(B)
    abs_eig = np.abs(eig)
    nonsingular = bool(abs_eig.max() > 0
                       and abs_eig.min() > SINGULARITY_RTOL * abs_eig.max())
    if not nonsingular:
        messages.append("B is singular: the quadric is cylindrical or degenerate")
        return ValidationReport(True, False, False, False, messages=tuple(messages))

    gamma = _gamma(q)
    bBb4 = c - gamma
    center_off = bool(abs(gamma) > CENTER_RTOL * max(abs(c), abs(bBb4), np.finfo(float).tiny))
    if not center_off:
        messages.append("the centre lies on the quadric: c == b'B^{-1}b/4")
        return ValidationReport(True, True, False, False, gamma, tuple(messages))

    # after normalisation the lambdas are eig(B)/|gamma|, negated when gamma > 0
    nonempty = bool(np.any(eig > 0) if gamma < 0 else np.any(eig < 0))
    if not nonempty:
        messages.append("the quadric is empty: no positive eigenvalue in normal form")
    return ValidationReport(True, True, True, nonempty, gamma, tuple(messages))


def evaluate_psi(q: Quadric, x) -> float:
    x = _as_vector(x, q.n)
    return float(x @ q.B @ x + q.b @ x + q.c)


def gradient_psi(q: Quadric, x) -> np.ndarray:
    x = _as_vector(x, q.n)
    return 2.0 * q.B @ x + q.b


def center(q: Quadric) -> np.ndarray:
    """Centre of symmetry ``-B^{-1} b / 2``."""
    try:
        d = np.linalg.solve(q.B, -0.5 * q.b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("B is singular, the quadric has no centre") from exc
    return d


def _gamma(q: Quadric) -> float:
    d = center(q)
    # psi(d) simplifies to c + b'd/2 because d'Bd = -b'd/2
    return float(q.c + 0.5 * q.b @ d)


def symmetric_eig(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition ``M = Q diag(w) Q'`` with a fixed convention.

    Eigenvalues are sorted in descending order and the first component of each
    eigenvector whose magnitude exceeds 1e-10 is made positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    scale = np.max(np.abs(M)) if M.size else 0.0
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * scale:
        raise NonSymmetric("matrix is not symmetric")
    w, Q = np.linalg.eigh(M)
    order = np.argsort(-w, kind="stable")
    w, Q = w[order], Q[:, order]
    for j in range(Q.shape[1]):
        nz = np.flatnonzero(np.abs(Q[:, j]) > _SIGN_THRESHOLD)
        if nz.size and Q[nz[0], j] < 0:
            Q[:, j] = -Q[:, j]
    return w, Q


@dataclass(frozen=True, eq=False)
class NormalForm:
    """Affine data mapping a quadric onto ``sum_i lambdas[i] z_i**2 = 1``.

    ``to_normal(x) = rotation.T @ (x - center)``. The map is an isometry; the
    scaling by ``scale = sqrt(|gamma|)`` is folded into ``lambdas`` so that
    distances are preserved exactly and
    ``psi(x) = scale**2 * s * (sum lambdas z**2 - 1)`` with ``s = -1`` when
    ``negated``.
    """

    lambdas: np.ndarray
    rotation: np.ndarray
    center: np.ndarray
    scale: float
    negated: bool
    positives: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "positives", int(np.sum(self.lambdas > 0)))

    @property
    def n(self) -> int:
        return self.lambdas.shape[0]

    @property
    def is_ellipsoid(self) -> bool:
        return bool(self.lambdas[-1] > 0)

    def to_normal(self, x) -> np.ndarray:
        x = _as_vector(x, self.n)
        return self.rotation.T @ (x - self.center)

    def from_normal(self, z) -> np.ndarray:
        z = _as_vector(z, self.n, "z")
        return self.center + self.rotation @ z

    def normal_residual(self, z) -> float:
        z = _as_vector(z, self.n, "z")
        return float(self.lambdas @ (z * z) - 1.0)


@dataclass(frozen=True, eq=False)
class NormalizedProblem:
    """A point in normal-form coordinates, reflected into the first orthant.

    ``signs`` records the reflections; zero components keep sign ``+1``.
    """

    lambdas: np.ndarray
    x0: np.ndarray
    signs: Optional[np.ndarray] = None

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        x0 = np.asarray(self.x0, dtype=float)
        if lam.shape != x0.shape:
            raise DimensionMismatch("lambdas and x0 must have the same length")
        if np.any(x0 < 0):
            raise ValueError("normalized x0 must be componentwise nonnegative")
        # components whose square underflows cannot enter the secular function
        x0 = np.where(x0 * x0 == 0.0, 0.0, x0)
        signs = (np.ones_like(x0) if self.signs is None
                 else np.asarray(self.signs, dtype=float))
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def from_point(cls, lambdas, z) -> "NormalizedProblem":
        """Reflect ``z`` (normal-form coordinates) into the first orthant."""
        z = np.asarray(z, dtype=float)
        signs = np.where(z < 0, -1.0, 1.0)
        return cls(np.asarray(lambdas, dtype=float), np.abs(z), signs)

    @property
    def n(self) -> int:
        return self.x0.shape[0]


def normal_form(q: Quadric, validate: bool = True) -> NormalForm:
    """Shift, rotate and scale ``q`` to ``sum lambdas z**2 = 1``."""
    if validate:
        validate_quadric(q).raise_for_status()
    d = center(q)
    gamma = _gamma(q)
    if gamma == 0.0:
        raise CenterOnQuadric("gamma = psi(centre) is zero")
    negated = gamma > 0
    w, V = symmetric_eig(-q.B if negated else q.B)
    lambdas = w / abs(gamma)
    if lambdas[0] <= 0:
        raise EmptyQuadric("the quadric is empty: no positive eigenvalue in normal form")
    return NormalForm(lambdas, V, d, float(np.sqrt(abs(gamma))), bool(negated))


def normalize_point(nf: NormalForm, x0_raw) -> NormalizedProblem:
    return NormalizedProblem.from_point(nf.lambdas, nf.to_normal(x0_raw))


def normalize_problem(q: Quadric, x0_raw) -> tuple[NormalForm, NormalizedProblem]:
    """Reduce projecting ``x0_raw`` onto ``q`` to the normal-form problem."""
    x0_raw = _as_vector(x0_raw, q.n, "x0_raw")
    nf = normal_form(q)
    return nf, normalize_point(nf, x0_raw)


def denormalize_point(nf: NormalForm, np_: NormalizedProblem, z) -> np.ndarray:
    """Map a first-orthant normal-form point back to original coordinates."""
    z = _as_vector(z, nf.n, "z")
    return nf.from_normal(np_.signs * z)


__all__ = [
    "Quadric", "ValidationReport", "NormalForm", "NormalizedProblem",
    "validate_quadric", "evaluate_psi", "gradient_psi", "center",
    "symmetric_eig", "normal_form", "normalize_point", "normalize_problem",
    "denormalize_point", "InvalidQuadric",
]
