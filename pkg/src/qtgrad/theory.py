"""Finite-iteration checks of asymptotic and convergence claims.

Limits are not machine-checkable, so every check here produces a
deviation series (or a per-iteration conformance record) that tests can
bound at a stated iteration budget.  All analyses assume a diagonal
problem, whose eigen-components are the vector entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .quadprob import DIAGONAL, QuadraticProblem
from .solver import IterationTrace
from .stepsize import PsiSpec, phi_from_spectrum


def h_weights(lam_min: float, lam_max: float) -> tuple[float, float]:
    """Limit weights ``(h1, h2)`` of the extreme eigen-components."""
    s = 4.0 * (lam_min + lam_max)
    return (lam_min + 3.0 * lam_max) / s, (3.0 * lam_min + lam_max) / s


@dataclass(frozen=True, eq=False)
class SpectralWeights:
    """Probability vector ``p`` over ascending eigenvalues ``lambdas``."""

    p: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        lam = np.asarray(self.lambdas, dtype=float)
        if p.shape != lam.shape or p.ndim != 1:
            raise ValueError("p and lambdas must be 1-D of equal length")
        if np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-10):
            raise ValueError("p must be a probability vector")
        if np.any(np.diff(lam) < 0) or lam[0] <= 0:
            raise ValueError("lambdas must be positive and ascending")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "lambdas", lam)

    @property
    def limit(self) -> np.ndarray:
        h1, h2 = h_weights(self.lambdas[0], self.lambdas[-1])
        out = np.zeros_like(self.p)
        out[0], out[-1] = h1, h2
        return out


def transform_T(weights: SpectralWeights) -> SpectralWeights:
    """One step of the weight map driven by the norm-ratio stepsize.

    ``(Tp)_i = (l_i - gamma)^2 p_i / sum_j (l_j - gamma)^2 p_j`` with
    ``gamma = sqrt(sum_j l_j^2 p_j)``.
    """
    lam, p = weights.lambdas, weights.p
    gamma = math.sqrt(float(lam ** 2 @ p))
    q = (lam - gamma) ** 2 * p
    total = q.sum()
    if not total > 0:
        raise ValueError("all mass sits at gamma(p); the transform is undefined")
    return SpectralWeights(q / total, lam)


def iterate_T(weights: SpectralWeights, steps: int) -> SpectralWeights:
    for _ in range(steps):
        weights = transform_T(weights)
    return weights


def iterate_T_until(weights: SpectralWeights, tol: float = 1e-8,
                    max_steps: int = 10**4) -> tuple[SpectralWeights, int]:
    """Iterate until ``max |T^k p - limit| <= tol``; returns the step count used."""
    target = weights.limit
    for k in range(max_steps + 1):
        if np.max(np.abs(weights.p - target)) <= tol:
            return weights, k
        if k < max_steps:
            weights = transform_T(weights)
    return weights, max_steps


def _require_diagonal(problem: QuadraticProblem) -> np.ndarray:
    if problem.kind != DIAGONAL:
        raise ValueError("this analysis needs a diagonal problem")
    return problem.matrix


def _require_gradients(trace: IterationTrace) -> np.ndarray:
    if trace.gradients is None:
        raise ValueError("trace has no recorded gradients; run with record_gradients=True")
    return trace.gradients


def eigencomponent_snapshot(problem_diag: QuadraticProblem, g, psi: PsiSpec = PsiSpec()) -> np.ndarray:
    """Normalised psi-weighted eigen-components of ``g``."""
    lam = _require_diagonal(problem_diag)
    eta = psi.evaluate(lam) * np.asarray(g, dtype=float)
    nrm = np.linalg.norm(eta)
    if nrm == 0:
        raise ValueError("gradient is zero")
    return eta / nrm


@dataclass
class AsymptoticReport:
    """Zigzag diagnostics of one norm-ratio family run."""

    h1: float
    h2: float
    limit: np.ndarray
    deviation: np.ndarray          # max_i |snapshot_k^2 - limit| per k
    first_signs: np.ndarray        # sign of the lambda_1 component per k
    last_signs: np.ndarray         # sign of the lambda_n component per k
    settled_from: int              # first k with ||g_k|| <= ||g_0|| / 100
    alpha_deviation: np.ndarray
    tilde_deviation: Optional[np.ndarray]

    @property
    def last_component_alternates(self) -> bool:
        s = self.last_signs[self.settled_from:]
        return bool(np.all(s[1:] == -s[:-1]))

    @property
    def first_component_constant(self) -> bool:
        s = self.first_signs[self.settled_from:]
        return bool(np.all(s == s[0])) if s.size else True


def zigzag_report(trace: IterationTrace, problem_diag: QuadraticProblem,
                  psi: PsiSpec = PsiSpec()) -> AsymptoticReport:
    lam = _require_diagonal(problem_diag)
    grads = _require_gradients(trace)
    h1, h2 = h_weights(lam[0], lam[-1])
    limit = np.zeros(lam.size)
    limit[0], limit[-1] = h1, h2
    snaps = np.array([eigencomponent_snapshot(problem_diag, g, psi) for g in grads if np.any(g)])
    rel = trace.relative_gnorms()
    settled = int(np.argmax(rel <= 1e-2)) if np.any(rel <= 1e-2) else len(rel)
    tilde = None if trace.alpha_tilde is None else check_tilde_limit(trace, problem_diag)
    return AsymptoticReport(
        h1=h1, h2=h2, limit=limit,
        deviation=np.max(np.abs(snaps ** 2 - limit), axis=1),
        first_signs=np.sign(snaps[:, 0]),
        last_signs=np.sign(snaps[:, -1]),
        settled_from=settled,
        alpha_deviation=check_family_stepsize_limit(trace, problem_diag),
        tilde_deviation=tilde,
    )


def check_family_stepsize_limit(trace: IterationTrace, problem_diag: QuadraticProblem) -> np.ndarray:
    """``|alpha_k - 2/(l_1 + l_n)|`` along the trace."""
    l1, ln = problem_diag.known_extremes
    return np.abs(trace.alphas - 2.0 / (l1 + ln))


def check_tilde_limit(trace: IterationTrace, problem_diag: QuadraticProblem) -> np.ndarray:
    """``|alpha_tilde_k - 1/l_n|`` for a trace run with ``observe_tilde``."""
    if trace.alpha_tilde is None:
        raise ValueError("trace has no observed short steps; run with observe_tilde=True")
    return np.abs(trace.alpha_tilde - 1.0 / problem_diag.known_extremes[1])


def phi_ratio_deviation(trace: IterationTrace, problem_diag: QuadraticProblem,
                        psi: PsiSpec = PsiSpec()) -> np.ndarray:
    """Per-iterate relative deviations of ``phi1/phi3`` from ``l_1 l_n`` and
    ``phi2/phi3`` from ``l_1 + l_n`` (shape ``(K+1, 2)``)."""
    lam = _require_diagonal(problem_diag)
    grads = _require_gradients(trace)
    l1, ln = lam[0], lam[-1]
    out = []
    for g in grads:
        phi = phi_from_spectrum(lam, g, psi)
        out.append((abs(phi.phi1 / phi.phi3 - l1 * ln) / (l1 * ln),
                    abs(phi.phi2 / phi.phi3 - (l1 + ln)) / (l1 + ln)))
    return np.asarray(out)


@dataclass
class EnvelopeReport:
    """Per-component R-linear envelope ``|g_k^(i)| <= C_i theta^k``."""

    theta: float
    sigma: np.ndarray
    C: np.ndarray
    max_excess: float        # max over k, i of |g_k^(i)| - C_i theta^k
    worst: tuple             # (k, i) attaining max_excess
    slack: float

    @property
    def holds(self) -> bool:
        return self.max_excess <= self.slack


def envelope_constants(g_history: np.ndarray, lam: np.ndarray, r: int,
                       psi: PsiSpec = PsiSpec()) -> tuple[float, np.ndarray, np.ndarray]:
    """``(theta, sigma, C)`` from the first ``r`` gradients.

    ``C_1 = |g_0^(1)|`` and, for ``i >= 2``,
    ``C_i = max(|g_0^(i)|, ..., |g_{r-1}^(i)| / theta^(r-1),
    max(s_i, s_i^r) / (theta^r psi(l_i)) * sqrt(sum_{j<i} psi(l_j)^2 C_j^2))``.
    """
    l1, ln = lam[0], lam[-1]
    theta = 1.0 - l1 / ln
    sigma = np.maximum(lam / l1 - 1.0, 1.0 - lam / ln)
    psil = psi.evaluate(lam)
    head = np.abs(g_history[:r])
    scaled = head / theta ** np.arange(head.shape[0])[:, None]
    C = np.empty(lam.size)
    C[0] = abs(g_history[0, 0])
    acc = (psil[0] * C[0]) ** 2
    with np.errstate(over="ignore"):
        for i in range(1, lam.size):
            tail = max(sigma[i], sigma[i] ** r) / (theta ** r * psil[i]) * math.sqrt(acc)
            C[i] = max(float(scaled[:, i].max()), tail)
            acc += (psil[i] * C[i]) ** 2
    return theta, sigma, C


def rlinear_envelope(trace: IterationTrace, problem_diag: QuadraticProblem, r: int,
                     psi: PsiSpec = PsiSpec(), slack: float = 1e-6) -> EnvelopeReport:
    lam = _require_diagonal(problem_diag)
    grads = _require_gradients(trace)
    theta, sigma, C = envelope_constants(grads, lam, r, psi)
    k = np.arange(grads.shape[0])[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        bound = C[None, :] * theta ** k
        excess = np.abs(grads) - bound
    excess = np.where(np.isnan(excess), -np.inf, excess)
    idx = np.unravel_index(np.argmax(excess), excess.shape)
    return EnvelopeReport(theta, sigma, C, float(excess[idx]), (int(idx[0]), int(idx[1])), slack)


@dataclass
class PropertyBReport:
    """Per-step conformance to the two stepsize bounds.

    ``bounds_ok[k]``: ``l_1 <= 1/alpha_k <= l_n`` (relative ``tol``).
    ``rayleigh_ok[k]``: some ``v`` in ``{k, ..., max(k-m+1, 0)}`` and some
    candidate psi give ``alpha_k <= g_v' psi^2 g_v / g_v' A psi^2 g_v``;
    ``witness[k]`` is the first such ``(v, psi index)`` or ``None``.
    """

    bounds_ok: np.ndarray
    rayleigh_ok: np.ndarray
    witness: list
    m: int

    @property
    def holds(self) -> bool:
        return bool(self.bounds_ok.all() and self.rayleigh_ok.all())


def check_property_b(trace: IterationTrace, problem_diag: QuadraticProblem, m: int,
                     psis: Sequence[PsiSpec] = (PsiSpec.identity(), PsiSpec.monomial(1)),
                     tol: float = 1e-8) -> PropertyBReport:
    lam = _require_diagonal(problem_diag)
    grads = _require_gradients(trace)
    alphas = trace.alphas
    if grads.shape[0] < alphas.size:
        raise ValueError("trace holds fewer gradients than steps")
    l1, ln = lam[0], lam[-1]
    inv = 1.0 / alphas
    bounds_ok = (inv >= l1 * (1 - tol)) & (inv <= ln * (1 + tol))

    # quotients[j, v] for candidate psi j at iterate v
    quotients = []
    for psi in psis:
        w = (psi.evaluate(lam) * grads[: alphas.size]) ** 2
        quotients.append((w.sum(axis=1)) / (w @ lam))
    quotients = np.asarray(quotients)

    rayleigh_ok = np.zeros(alphas.size, dtype=bool)
    witness: list = [None] * alphas.size
    for k, a in enumerate(alphas):
        for v in range(k, max(k - m + 1, 0) - 1, -1):
            hits = np.nonzero(a <= quotients[:, v] * (1 + tol))[0]
            if hits.size:
                rayleigh_ok[k] = True
                witness[k] = (v, int(hits[0]))
                break
    return PropertyBReport(bounds_ok, rayleigh_ok, witness, m)
