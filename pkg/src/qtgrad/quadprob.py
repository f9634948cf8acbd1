"""Strictly convex quadratic problems ``f(x) = 0.5 x'Ax - b'x``.

A :class:`QuadraticProblem` stores the Hessian in one of three forms
(a diagonal of eigenvalues, a dense SPD array, or a CSR sparse matrix)
together with the right-hand side.  Problems are immutable once built;
builders such as :func:`attach_random_minimizer` return new instances.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.io
import scipy.sparse as sp

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]

DIAGONAL = "diagonal"
DENSE = "dense"
SPARSE = "sparse"

#: Lower clamp for generated eigenvalues (the cosine family hits zero).
EIGENVALUE_FLOOR = 1e-2


class MatrixMarketError(ValueError):
    """Raised when a Matrix Market file cannot be ingested."""


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """Hessian ``A`` (diagonal, dense or sparse) and right-hand side ``b``.

    ``known_extremes`` holds ``(lambda_1, lambda_n)`` for diagonal problems
    and is ``None`` otherwise.  ``x_star`` is recorded when the rhs was
    built from a known minimizer.
    """

    kind: str
    matrix: Union[np.ndarray, sp.csr_matrix]
    rhs: np.ndarray
    known_extremes: Optional[tuple[float, float]] = None
    x_star: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        if self.kind == DIAGONAL:
            d = _frozen(np.ravel(self.matrix))
            if d.size == 0 or np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise ValueError("diagonal entries must be finite and strictly positive")
            if np.any(np.diff(d) < 0):
                raise ValueError("diagonal entries must be stored in ascending order")
            object.__setattr__(self, "matrix", d)
            object.__setattr__(self, "known_extremes", (float(d[0]), float(d[-1])))
        elif self.kind == DENSE:
            a = _frozen(self.matrix)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"dense matrix must be square, got shape {a.shape}")
            object.__setattr__(self, "matrix", a)
        elif self.kind == SPARSE:
            a = sp.csr_matrix(self.matrix, dtype=float)
            if a.shape[0] != a.shape[1]:
                raise ValueError(f"sparse matrix must be square, got shape {a.shape}")
            a.data.setflags(write=False)
            object.__setattr__(self, "matrix", a)
        else:
            raise ValueError(f"unknown storage kind {self.kind!r}")

        rhs = _frozen(np.ravel(self.rhs))
        if rhs.shape != (self.dim,):
            raise ValueError(f"rhs has length {rhs.size}, expected {self.dim}")
        object.__setattr__(self, "rhs", rhs)
        if self.x_star is not None:
            object.__setattr__(self, "x_star", _frozen(np.ravel(self.x_star)))

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def eigenvalues(self) -> Optional[np.ndarray]:
        """Ascending eigenvalues for diagonal storage, else ``None``."""
        return self.matrix if self.kind == DIAGONAL else None

    def to_dense(self) -> np.ndarray:
        if self.kind == DIAGONAL:
            return np.diag(self.matrix)
        if self.kind == SPARSE:
            return self.matrix.toarray()
        return np.array(self.matrix)

    def with_rhs(self, rhs, x_star=None) -> "QuadraticProblem":
        return dataclasses.replace(self, rhs=rhs, x_star=x_star)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ matvec(self, x)) - float(self.rhs @ x)


def diagonal_problem(eigenvalues, rhs=None, name="") -> QuadraticProblem:
    d = np.asarray(eigenvalues, dtype=float)
    return QuadraticProblem(DIAGONAL, d, np.zeros(d.size) if rhs is None else rhs, name=name)


def dense_problem(matrix, rhs=None, name="") -> QuadraticProblem:
    a = np.asarray(matrix, dtype=float)
    if not np.allclose(a, a.T, rtol=1e-12, atol=0.0):
        raise ValueError("dense matrix must be symmetric")
    return QuadraticProblem(DENSE, a, np.zeros(a.shape[0]) if rhs is None else rhs, name=name)


def sparse_problem(matrix, rhs=None, name="") -> QuadraticProblem:
    a = sp.csr_matrix(matrix, dtype=float)
    return QuadraticProblem(SPARSE, a, np.zeros(a.shape[0]) if rhs is None else rhs, name=name)


def matvec(problem: QuadraticProblem, v) -> np.ndarray:
    """Return ``A @ v``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.dim,):
        raise ValueError(f"vector has shape {v.shape}, expected ({problem.dim},)")
    if problem.kind == DIAGONAL:
        return problem.matrix * v
    return problem.matrix @ v


def gradient(problem: QuadraticProblem, x) -> np.ndarray:
    """Return ``A @ x - b``."""
    return matvec(problem, x) - problem.rhs


@dataclass(frozen=True)
class SpectrumSpec:
    """One of the five synthetic eigenvalue distributions.

    family 1: interior uniform in (1, kappa)
    family 2: n/5 entries in (1, 100), the rest in (kappa/2, kappa)
    family 3: bands (1, 100), (100, kappa/2), (kappa/2, kappa)
    family 4: geometric, kappa**((n - j) / (n - 1))
    family 5: cosine, kappa/2 * (cos((n - j) pi / (n - 1)) + 1)
    """

    family: int
    kappa: float
    dim: int
    seed: SeedLike = None


def spectrum_values(spec: SpectrumSpec) -> np.ndarray:
    """Ascending eigenvalues for ``spec`` (floored at :data:`EIGENVALUE_FLOOR`)."""
    fam, kappa, n = spec.family, float(spec.kappa), int(spec.dim)
    if fam not in (1, 2, 3, 4, 5):
        raise ValueError(f"spectrum family must be in 1..5, got {fam}")
    if not kappa > 1:
        raise ValueError(f"condition number must exceed 1, got {kappa}")
    if n < 2:
        raise ValueError(f"dimension must be at least 2, got {n}")
    if fam in (2, 3) and n < 5:
        raise ValueError(f"family {fam} needs n >= 5 for its band split, got {n}")

    rng = as_generator(spec.seed)
    j = np.arange(1, n + 1)
    if fam == 1:
        interior = rng.uniform(1.0, kappa, n - 2)
        v = np.concatenate(([1.0], interior, [kappa]))
    elif fam == 2:
        m = n // 5
        v = np.concatenate((
            [1.0],
            rng.uniform(1.0, 100.0, m - 1),
            rng.uniform(kappa / 2, kappa, n - 1 - m),
            [kappa],
        ))
    elif fam == 3:
        if kappa / 2 <= 100:
            raise ValueError("family 3 needs kappa > 200 so that (100, kappa/2) is non-empty")
        m, m4 = n // 5, (4 * n) // 5
        v = np.concatenate((
            [1.0],
            rng.uniform(1.0, 100.0, m - 1),
            rng.uniform(100.0, kappa / 2, m4 - m),
            rng.uniform(kappa / 2, kappa, n - 1 - m4),
            [kappa],
        ))
    elif fam == 4:
        v = kappa ** ((n - j) / (n - 1))
    else:
        v = (kappa / 2) * (np.cos((n - j) * np.pi / (n - 1)) + 1.0)
    return np.sort(np.maximum(v, EIGENVALUE_FLOOR))


def generate_spectrum(spec: SpectrumSpec, random_minimizer: bool = False) -> QuadraticProblem:
    """Build a diagonal problem with ``b = 0`` (or ``b = A x*`` if requested)."""
    problem = diagonal_problem(
        spectrum_values(spec), name=f"family{spec.family}-kappa{spec.kappa:g}-n{spec.dim}"
    )
    if random_minimizer:
        problem = attach_random_minimizer(problem, spec.seed)
    return problem


def attach_random_minimizer(problem: QuadraticProblem, seed: SeedLike,
                            low: float = -10.0, high: float = 10.0) -> QuadraticProblem:
    """Draw ``x*`` uniformly in ``[low, high]^n`` and set ``b = A x*``."""
    x_star = as_generator(seed).uniform(low, high, problem.dim)
    return problem.with_rhs(matvec(problem, x_star), x_star=x_star)


def _read_header(path) -> list[str]:
    with open(path, "r") as fh:
        first = fh.readline()
    if not first.strip():
        raise MatrixMarketError(f"{path}: empty file")
    tokens = first.strip().lower().split()
    if len(tokens) != 5 or tokens[0] != "%%matrixmarket":
        raise MatrixMarketError(f"{path}: missing %%MatrixMarket banner")
    return tokens


def load_matrix_market(path, symmetrize: bool = False) -> QuadraticProblem:
    """Read a real coordinate Matrix Market file as a sparse problem.

    Symmetric files store one triangle; the other is mirrored on load.
    A ``general`` file is rejected unless ``symmetrize`` is set, in which
    case ``(A + A') / 2`` is used.  The rhs is zero.
    """
    path = os.fspath(path)
    _, obj, fmt, field, symmetry = _read_header(path)
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(f"{path}: only 'matrix coordinate' files are supported")
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"{path}: unsupported field {field!r}")
    if symmetry == "general" and not symmetrize:
        raise MatrixMarketError(f"{path}: matrix declared 'general'; pass symmetrize=True")
    if symmetry not in ("symmetric", "general"):
        raise MatrixMarketError(f"{path}: unsupported symmetry {symmetry!r}")

    try:
        a = scipy.io.mmread(path)
    except (ValueError, IndexError, OSError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    a = sp.csr_matrix(a, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise MatrixMarketError(f"{path}: matrix is {a.shape[0]}x{a.shape[1]}, not square")
    if symmetry == "general":
        a = ((a + a.T) * 0.5).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    name = os.path.splitext(os.path.basename(path))[0]
    return sparse_problem(a, name=name)
