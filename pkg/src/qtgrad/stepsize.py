"""Stepsize formulas for gradient methods on quadratics.

Everything here is a pure function of gradients, matrix-vector products
or the moment scalars ``c_j = g' A^j psi(A)^2 g`` (j = 0..4).  The
root-based short/long steps (``alpha_tilde``, ``beta_tilde``, ...) are
evaluated with cancellation-free formulas: the small root of
``a t^2 - b t + c`` is computed as ``2c / (b + sqrt(b^2 - 4ac))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .quadprob import QuadraticProblem, matvec

#: Relative discriminant threshold below which a root pair is degenerate.
DEGENERACY_EPS = 1e-14


class StepsizeError(ValueError):
    """A stepsize could not be evaluated from its inputs."""


class DegenerateStepError(StepsizeError):
    """Moment data is (numerically) that of an eigenvector gradient."""


class CurvatureError(StepsizeError):
    """``s'y <= 0``: the Hessian is not positive definite along ``s``."""


@dataclass(frozen=True)
class PsiSpec:
    """Polynomial weight ``psi(z) = sum_k coeffs[k] z**k``.

    Only non-negative powers are supported.
    """

    coeffs: tuple = (1.0,)

    @classmethod
    def identity(cls) -> "PsiSpec":
        return cls((1.0,))

    @classmethod
    def monomial(cls, power: int) -> "PsiSpec":
        if power < 0:
            raise ValueError("negative powers of A are not supported")
        return cls((0.0,) * power + (1.0,))

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "PsiSpec":
        coeffs = tuple(float(c) for c in coeffs)
        while len(coeffs) > 1 and coeffs[-1] == 0.0:
            coeffs = coeffs[:-1]
        if not coeffs or all(c == 0.0 for c in coeffs):
            raise ValueError("psi must be a non-zero polynomial")
        return cls(coeffs)

    @classmethod
    def parse(cls, text: str) -> "PsiSpec":
        """``"I"``, ``"A"``, ``"A^2"`` or comma-separated coefficients."""
        t = text.strip().replace(" ", "")
        if t in ("I", "identity", "1"):
            return cls.identity()
        if t == "A":
            return cls.monomial(1)
        if t.startswith("A^"):
            return cls.monomial(int(t[2:]))
        return cls.polynomial([float(c) for c in t.split(",")])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_identity(self) -> bool:
        return self.coeffs == (1.0,)

    def __str__(self) -> str:
        if self.is_identity:
            return "I"
        if all(c == 0.0 for c in self.coeffs[:-1]) and self.coeffs[-1] == 1.0:
            return "A" if self.degree == 1 else f"A^{self.degree}"
        return ",".join(f"{c:g}" for c in self.coeffs)

    def evaluate(self, lam):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros_like(lam)
        for c in reversed(self.coeffs):
            out = out * lam + c
        return out

    def apply(self, problem: QuadraticProblem, v) -> np.ndarray:
        """``psi(A) @ v`` by Horner's rule (``degree`` matvecs)."""
        v = np.asarray(v, dtype=float)
        if self.is_identity:
            return v.copy()
        if problem.kind == "diagonal":
            return self.evaluate(problem.matrix) * v
        out = self.coeffs[-1] * v
        for c in reversed(self.coeffs[:-1]):
            out = matvec(problem, out) + c * v
        return out

    def check_positive(self, lam_min: float, lam_max: float, samples: int = 257) -> None:
        grid = np.linspace(lam_min, lam_max, samples)
        if np.any(self.evaluate(grid) <= 0):
            raise ValueError(f"psi = {self} is not positive on [{lam_min:g}, {lam_max:g}]")


@dataclass(frozen=True, eq=False)
class MomentCache:
    """Moments of one gradient plus the vectors the one-matvec update needs.

    ``c`` are the moments of the *previous* gradient ``g_prev``; ``w`` is
    ``A @ g`` for the gradient the next update will treat as ``g_prev``;
    ``z`` is the most recently computed ``A @ g_cur``.
    """

    c: Optional[tuple] = None
    w: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    alpha_prev: Optional[float] = None
    valid: bool = True

    @classmethod
    def start(cls, w) -> "MomentCache":
        """Cache primed with ``w = A @ g_0`` and no moments yet."""
        return cls(c=None, w=np.asarray(w, dtype=float), z=np.asarray(w, dtype=float))


@dataclass(frozen=True)
class PhiCoefficients:
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    phi5: float
    phi6: float

    def as_tuple(self) -> tuple:
        return (self.phi1, self.phi2, self.phi3, self.phi4, self.phi5, self.phi6)


def _nonzero(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if not np.any(g):
        raise StepsizeError("gradient is zero")
    return g


def compute_moments_direct(problem: QuadraticProblem, g, psi: PsiSpec = PsiSpec()) -> MomentCache:
    """Exact ``c_0..c_4`` for ``g`` via repeated matvecs; ``z = A g``."""
    g = _nonzero(g)
    u = psi.apply(problem, g)
    v1 = matvec(problem, u)
    v2 = matvec(problem, v1)
    c = (float(u @ u), float(u @ v1), float(v1 @ v1), float(v1 @ v2), float(v2 @ v2))
    z = v1 if psi.is_identity else matvec(problem, g)
    return MomentCache(c=c, w=z, z=z)


def update_moments_recurrent(cache: MomentCache, g_prev, g_cur, alpha_prev: float,
                             z=None, problem: Optional[QuadraticProblem] = None) -> MomentCache:
    """Moments of ``g_prev`` from one new matvec ``z = A g_cur`` (psi = I).

    Requires ``cache.w == A @ g_prev`` and ``g_cur = g_prev - alpha_prev * w``.
    Pass ``z`` if it was already computed, otherwise ``problem``.
    """
    if not cache.valid or cache.w is None:
        raise StepsizeError("moment cache is stale")
    if alpha_prev == 0:
        raise StepsizeError("previous stepsize is zero")
    g_prev = np.asarray(g_prev, dtype=float)
    g_cur = np.asarray(g_cur, dtype=float)
    w = cache.w
    if w.shape != g_prev.shape:
        raise StepsizeError("moment cache does not match the gradient dimension")
    if z is None:
        if problem is None:
            raise TypeError("need either z = A @ g_cur or the problem")
        z = matvec(problem, g_cur)
    a = float(alpha_prev)
    c0 = float(g_prev @ g_prev)
    c1 = float(g_prev @ w)
    c2 = float(w @ w)
    c3 = (float(g_cur @ z) - c1 + 2.0 * a * c2) / (a * a)
    c4 = (float(z @ z) - c2 + 2.0 * a * c3) / (a * a)
    return MomentCache(c=(c0, c1, c2, c3, c4), w=z, z=z, alpha_prev=a)


def phi_from_moments(cache) -> PhiCoefficients:
    """The six quadratic coefficients ``phi_1..phi_6`` from ``c_0..c_4``.

    Accepts a :class:`MomentCache` or a plain 5-sequence of moments.
    """
    c = cache.c if isinstance(cache, MomentCache) else cache
    if c is None:
        raise StepsizeError("moment cache holds no moments")
    c0, c1, c2, c3, c4 = (float(x) for x in c)
    return PhiCoefficients(
        phi1=c1 * c4 - c2 * c3,
        phi2=c0 * c4 - c2 * c2,
        phi3=c0 * c3 - c1 * c2,
        phi4=c1 * c3 - c2 * c2,
        phi5=c0 * c2 - c1 * c1,
        phi6=c2 * c4 - c3 * c3,
    )


def phi_from_spectrum(lambdas, g, psi: PsiSpec = PsiSpec()) -> PhiCoefficients:
    """``phi_1..phi_6`` from eigenvalues and eigen-components of ``g``.

    Each coefficient is a sum of non-negative pairwise terms, e.g.
    ``phi_5 = 1/2 sum_ij w_i w_j (l_i - l_j)^2`` with ``w = (psi(l) g)^2``,
    so nothing cancels however ill-conditioned the data.  Costs O(n^2).
    """
    lam = np.asarray(lambdas, dtype=float)
    w = (psi.evaluate(lam) * np.asarray(g, dtype=float)) ** 2
    li, lj = lam[:, None], lam[None, :]
    ww = 0.5 * np.outer(w, w) * (li - lj) ** 2
    s = li + lj
    p = li * lj
    return PhiCoefficients(
        phi1=float(np.sum(ww * p * s)),
        phi2=float(np.sum(ww * s * s)),
        phi3=float(np.sum(ww * s)),
        phi4=float(np.sum(ww * p)),
        phi5=float(np.sum(ww)),
        phi6=float(np.sum(ww * p * p)),
    )


def _roots(a: float, b: float, c: float, what: str) -> tuple[float, float]:
    """Roots ``(small, large)`` of ``a t^2 - b t + c = 0`` with a, b, c > 0."""
    if not (a > 0 and b > 0 and c > 0):
        raise DegenerateStepError(f"{what}: non-positive coefficients ({a:.3g}, {b:.3g}, {c:.3g})")
    disc = b * b - 4.0 * a * c
    if not disc > DEGENERACY_EPS * b * b:
        raise DegenerateStepError(f"{what}: discriminant {disc:.3g} is degenerate")
    s = b + math.sqrt(disc)
    return 2.0 * c / s, s / (2.0 * a)


def alpha_roots(phi: PhiCoefficients) -> tuple[float, float]:
    """``(alpha_tilde, alpha_hat)``: roots of ``phi1 a^2 - phi2 a + phi3``."""
    return _roots(phi.phi1, phi.phi2, phi.phi3, "alpha")


def stepsize_tilde(phi: PhiCoefficients) -> float:
    """Short step maximising the next norm-ratio stepsize."""
    return alpha_roots(phi)[0]


def stepsize_hat(phi: PhiCoefficients) -> float:
    """Long step minimising the next norm-ratio stepsize."""
    return alpha_roots(phi)[1]


def stepsize_beta_roots(phi: PhiCoefficients) -> tuple[float, float]:
    """Roots of ``phi4 b^2 - phi3 b + phi5 = 0`` (stationary points of f1)."""
    return _roots(phi.phi4, phi.phi3, phi.phi5, "beta")


def stepsize_gamma_roots(phi: PhiCoefficients) -> tuple[float, float]:
    """Roots of ``phi6 g^2 - phi1 g + phi4 = 0`` (stationary points of f2)."""
    return _roots(phi.phi6, phi.phi1, phi.phi4, "gamma")


SHORT_STEPS = {
    "alpha_tilde": lambda phi: alpha_roots(phi)[0],
    "beta_tilde": lambda phi: stepsize_beta_roots(phi)[0],
    "gamma_tilde": lambda phi: stepsize_gamma_roots(phi)[0],
}


def stepsize_sd(g, Ag) -> float:
    """Steepest descent (Cauchy) step ``g'g / g'Ag``."""
    g = _nonzero(g)
    return float(g @ g) / float(g @ Ag)


def stepsize_mg(g, Ag) -> float:
    """Minimal gradient step ``g'Ag / (Ag)'(Ag)``."""
    g = _nonzero(g)
    Ag = np.asarray(Ag, dtype=float)
    return float(g @ Ag) / float(Ag @ Ag)


def _curvature(s, y) -> tuple[np.ndarray, np.ndarray, float]:
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    sty = float(s @ y)
    if not sty > 0:
        raise CurvatureError(f"s'y = {sty:.3g} is not positive")
    return s, y, sty


def stepsize_bb1(s_prev, y_prev) -> float:
    """Long Barzilai-Borwein step ``s's / s'y``."""
    s, _, sty = _curvature(s_prev, y_prev)
    return float(s @ s) / sty


def stepsize_bb2(s_prev, y_prev) -> float:
    """Short Barzilai-Borwein step ``s'y / y'y``."""
    _, y, sty = _curvature(s_prev, y_prev)
    return sty / float(y @ y)


def stepsize_dai_yang(g, Ag) -> float:
    """Norm-ratio step ``||g|| / ||Ag||``."""
    g = _nonzero(g)
    return float(np.linalg.norm(g) / np.linalg.norm(Ag))


def stepsize_family_psi(problem: QuadraticProblem, g, psi: PsiSpec = PsiSpec()) -> float:
    """``||psi(A) g|| / ||psi(A) A g||``; equals :func:`stepsize_dai_yang` for psi = I."""
    g = _nonzero(g)
    u = psi.apply(problem, g)
    return float(np.linalg.norm(u) / np.linalg.norm(matvec(problem, u)))


def stepsize_dy(alpha_sd_prev: float, alpha_sd_cur: float,
                gnorm_prev: float, gnorm_cur: float) -> float:
    """Dai-Yuan variant of the Yuan step from two consecutive SD steps."""
    if min(alpha_sd_prev, alpha_sd_cur, gnorm_prev, gnorm_cur) <= 0:
        raise StepsizeError("Dai-Yuan step needs positive SD steps and gradient norms")
    ip, ic = 1.0 / alpha_sd_prev, 1.0 / alpha_sd_cur
    root = math.sqrt((ip - ic) ** 2 + 4.0 * gnorm_cur ** 2 / (alpha_sd_prev ** 2 * gnorm_prev ** 2))
    return 2.0 / (root + ip + ic)
