"""Gradient iterations ``x_{k+1} = x_k - alpha_k g_k`` with full traces.

Three drivers live here:

* :func:`run_fixed_rule` for single-formula methods (SD, MG, BB1, BB2,
  the norm-ratio family, the Dai-Yuan alternation, or a user rule);
* :func:`run_algorithm1`, the adaptive-cyclic method mixing the long BB
  step with a retarded short root step reused for ``r`` iterations;
* :func:`run_two_dim_termination_probe` for finite termination on 2-D
  problems.

The gradient is updated recursively, ``g_{k+1} = g_k - alpha_k A g_k``,
so each iteration costs one matvec.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .quadprob import QuadraticProblem, as_generator, gradient, matvec
from .stepsize import (
    SHORT_STEPS,
    DegenerateStepError,
    MomentCache,
    PsiSpec,
    StepsizeError,
    alpha_roots,
    compute_moments_direct,
    phi_from_moments,
    phi_from_spectrum,
    stepsize_bb1,
    stepsize_bb2,
    stepsize_dy,
    stepsize_sd,
    update_moments_recurrent,
)

CONVERGED = "converged"
MAX_ITER = "max_iter"
DEGENERATE = "degenerate"

BRANCH_SD_INIT = "SD-init"
BRANCH_BB1 = "BB1"
BRANCH_SHORT_NEW = "short-new"
BRANCH_SHORT_REUSE = "short-reuse"
BRANCH_FALLBACK = "fallback"


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by all drivers.

    ``record_gradients`` keeps every ``g_k`` (needed by the eigen-component
    analyses); ``observe_tilde`` evaluates the short root step at each
    iterate as a passive observer, with ``observer_psi`` as its weight.
    Observer matvecs are not counted.
    """

    epsilon: float = 1e-6
    tau: float = 0.3
    r: int = 5
    max_iter: int = 10**6
    psi: PsiSpec = PsiSpec()
    short_step_variant: str = "alpha_tilde"
    seed: Optional[int] = None
    record_gradients: bool = False
    observe_tilde: bool = False
    observer_psi: PsiSpec = PsiSpec()

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError(f"r must be a positive integer, got {self.r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.short_step_variant not in SHORT_STEPS:
            raise ValueError(f"unknown short step {self.short_step_variant!r}; "
                             f"choose from {sorted(SHORT_STEPS)}")

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class IterationTrace:
    """Record of one solver run.

    ``gnorms`` has ``iterations + 1`` entries (``||g_0||`` .. ``||g_K||``);
    ``alphas`` and ``branches`` have ``iterations`` entries, entry ``k``
    being the step taken from ``x_k``.
    """

    method: str
    gnorms: np.ndarray
    alphas: np.ndarray
    branches: list
    status: str
    matvecs: int
    seconds: float
    x: np.ndarray
    alpha_tilde: Optional[np.ndarray] = None
    gradients: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.alphas)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def relative_gnorms(self) -> np.ndarray:
        return self.gnorms / self.gnorms[0]


@dataclass(frozen=True)
class StepContext:
    """What a stepsize rule may look at when choosing ``alpha_k``."""

    k: int
    problem: QuadraticProblem
    g: np.ndarray
    Ag: np.ndarray
    g_prev: Optional[np.ndarray]
    Ag_prev: Optional[np.ndarray]
    s_prev: Optional[np.ndarray]
    y_prev: Optional[np.ndarray]
    alpha_prev: Optional[float]
    sd_prev: Optional[float]
    matvec: Callable[[np.ndarray], np.ndarray]
    config: SolverConfig


RuleFn = Callable[[StepContext], float]


def _rule_sd(ctx: StepContext) -> float:
    return stepsize_sd(ctx.g, ctx.Ag)


def _rule_mg(ctx: StepContext) -> float:
    return float(ctx.g @ ctx.Ag) / float(ctx.Ag @ ctx.Ag)


def _rule_bb1(ctx: StepContext) -> float:
    if ctx.k == 0:
        return _rule_sd(ctx)
    return stepsize_bb1(ctx.s_prev, ctx.y_prev)


def _rule_bb2(ctx: StepContext) -> float:
    if ctx.k == 0:
        return _rule_sd(ctx)
    return stepsize_bb2(ctx.s_prev, ctx.y_prev)


def _rule_dai_yang(ctx: StepContext) -> float:
    return float(np.linalg.norm(ctx.g) / np.linalg.norm(ctx.Ag))


def _rule_psi(ctx: StepContext) -> float:
    psi = ctx.config.psi
    if psi.is_identity:
        return _rule_dai_yang(ctx)
    # psi(A) A g = psi(A) z, so A g is reused.
    return float(np.linalg.norm(_apply_psi(psi, ctx, ctx.g))
                 / np.linalg.norm(_apply_psi(psi, ctx, ctx.Ag)))


def _apply_psi(psi: PsiSpec, ctx: StepContext, v: np.ndarray) -> np.ndarray:
    if ctx.problem.kind == "diagonal":
        return psi.apply(ctx.problem, v)
    out = psi.coeffs[-1] * v
    for c in reversed(psi.coeffs[:-1]):
        out = ctx.matvec(out) + c * v
    return out


def _rule_dy(ctx: StepContext) -> float:
    sd = stepsize_sd(ctx.g, ctx.Ag)
    if ctx.k % 4 < 2:
        return sd
    return stepsize_dy(ctx.sd_prev, sd, float(np.linalg.norm(ctx.g_prev)),
                       float(np.linalg.norm(ctx.g)))


RULES: dict[str, RuleFn] = {
    "sd": _rule_sd,
    "mg": _rule_mg,
    "bb1": _rule_bb1,
    "bb2": _rule_bb2,
    "dai_yang": _rule_dai_yang,
    "psi": _rule_psi,
    "dy": _rule_dy,
}


def register_rule(name: str, fn: RuleFn) -> None:
    """Add a stepsize rule usable by name in :func:`run_fixed_rule`.

    This is the hook for baselines whose update rules live elsewhere.
    """
    if name in RULES:
        raise ValueError(f"rule {name!r} already registered")
    RULES[name] = fn


StepsizeRule = Union[str, RuleFn]


class _Counter:
    def __init__(self, problem: QuadraticProblem):
        self.problem = problem
        self.count = 0

    def __call__(self, v: np.ndarray) -> np.ndarray:
        self.count += 1
        return matvec(self.problem, v)


def _observe_tilde(problem: QuadraticProblem, g: np.ndarray, psi: PsiSpec) -> float:
    try:
        return alpha_roots(phi_from_moments(compute_moments_direct(problem, g, psi)))[0]
    except StepsizeError:
        return math.nan


def _start(problem: QuadraticProblem, x0) -> np.ndarray:
    x0 = np.array(x0, dtype=float)
    if x0.shape != (problem.dim,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({problem.dim},)")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    return x0


def random_start(problem: QuadraticProblem, seed, low=-10.0, high=10.0) -> np.ndarray:
    return as_generator(seed).uniform(low, high, problem.dim)


class _Recorder:
    def __init__(self, problem, config, g0):
        self.problem = problem
        self.config = config
        self.gnorms = [float(np.linalg.norm(g0))]
        self.alphas: list = []
        self.branches: list = []
        self.tildes = [] if config.observe_tilde else None
        self.grads = [g0.copy()] if config.record_gradients else None
        if self.tildes is not None:
            self.tildes.append(_observe_tilde(problem, g0, config.observer_psi))

    def step(self, alpha, branch, g_new):
        self.alphas.append(float(alpha))
        self.branches.append(branch)
        self.gnorms.append(float(np.linalg.norm(g_new)))
        if self.grads is not None:
            self.grads.append(g_new.copy())

    def observe(self, g):
        if self.tildes is not None:
            self.tildes.append(_observe_tilde(self.problem, g, self.config.observer_psi)
                               if np.any(g) else math.nan)

    def finish(self, method, status, matvecs, seconds, x, info=None) -> IterationTrace:
        return IterationTrace(
            method=method,
            gnorms=np.asarray(self.gnorms),
            alphas=np.asarray(self.alphas),
            branches=self.branches,
            status=status,
            matvecs=matvecs,
            seconds=seconds,
            x=x,
            alpha_tilde=None if self.tildes is None else np.asarray(self.tildes),
            gradients=None if self.grads is None else np.asarray(self.grads),
            info=info or {},
        )


def run_fixed_rule(problem: QuadraticProblem, x0, rule: StepsizeRule,
                   config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Iterate with one stepsize rule until ``||g_k|| <= epsilon ||g_0||``.

    ``rule`` is a registered name (see :data:`RULES`) or a callable taking
    a :class:`StepContext`.  BB rules take the SD step at ``k = 0``.
    """
    fn = RULES[rule] if isinstance(rule, str) else rule
    name = rule if isinstance(rule, str) else getattr(rule, "__name__", "custom")
    mv = _Counter(problem)
    x = _start(problem, x0)
    g = mv(x) - problem.rhs
    rec = _Recorder(problem, config, g)
    target = config.epsilon * rec.gnorms[0]

    t0 = time.perf_counter()
    status = MAX_ITER
    g_prev = Ag_prev = s = y = alpha_prev = sd_prev = None
    Ag = None
    k = 0
    while True:
        if rec.gnorms[-1] <= target:
            status = CONVERGED
            break
        if k >= config.max_iter:
            break
        if Ag is None:
            Ag = mv(g)
        ctx = StepContext(k, problem, g, Ag, g_prev, Ag_prev, s, y, alpha_prev, sd_prev, mv, config)
        try:
            alpha = fn(ctx)
        except StepsizeError:
            status = DEGENERATE
            break
        if not (math.isfinite(alpha) and alpha > 0):
            status = DEGENERATE
            break
        x_new = x - alpha * g
        g_new = g - alpha * Ag
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(g_new))):
            status = DEGENERATE
            break
        sd_prev = float(g @ g) / float(g @ Ag)
        s, y = x_new - x, g_new - g
        g_prev, Ag_prev, alpha_prev = g, Ag, alpha
        x, g, Ag = x_new, g_new, None
        rec.step(alpha, name, g)
        rec.observe(g)
        k += 1
    seconds = time.perf_counter() - t0
    return rec.finish(name, status, mv.count, seconds, x)


def run_algorithm1(problem: QuadraticProblem, x0,
                   config: SolverConfig = SolverConfig()) -> IterationTrace:
    """Adaptive-cyclic method: long BB step or a reused retarded short step.

    With ``t`` counting short steps, after each move:

    * if ``t mod r == 0`` and ``BB2/BB1 < tau``: ``alpha_{k+1}`` is the short
      root step of ``g_k`` and ``t`` increases;
    * if ``t mod r == 0`` otherwise: ``alpha_{k+1} = BB1``;
    * if ``t mod r != 0``: ``alpha_{k+1} = alpha_k`` and ``t`` increases.

    The short step's moments come from the one-matvec recurrence, so a
    run costs ``iterations + 1`` matvecs.  A degenerate short step falls
    back to BB1 without touching ``t``.
    """
    short_step = SHORT_STEPS[config.short_step_variant]
    recurrent = config.psi.is_identity
    mv = _Counter(problem)
    x = _start(problem, x0)
    g = mv(x) - problem.rhs
    rec = _Recorder(problem, config, g)
    target = config.epsilon * rec.gnorms[0]

    t0 = time.perf_counter()
    status = MAX_ITER
    t = 0
    alpha = None
    branch = BRANCH_SD_INIT
    Ag = None
    k = 0
    n_short = n_fallback = 0
    while True:
        if rec.gnorms[-1] <= target:
            status = CONVERGED
            break
        if k >= config.max_iter:
            break
        if Ag is None:
            Ag = mv(g)
        if alpha is None:
            alpha = float(g @ g) / float(g @ Ag)
        x_new = x - alpha * g
        g_new = g - alpha * Ag
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(g_new))):
            status = DEGENERATE
            break
        rec.step(alpha, branch, g_new)
        rec.observe(g_new)
        k += 1
        if rec.gnorms[-1] <= target or k >= config.max_iter:
            x, g = x_new, g_new
            continue

        Ag_new = mv(g_new)
        s, y = x_new - x, g_new - g
        try:
            bb1 = stepsize_bb1(s, y)
            bb2 = stepsize_bb2(s, y)
        except StepsizeError:
            x, g = x_new, g_new
            status = DEGENERATE
            break

        if t % config.r == 0:
            if bb2 / bb1 < config.tau:
                try:
                    if recurrent:
                        cache = update_moments_recurrent(
                            MomentCache.start(Ag), g, g_new, alpha, z=Ag_new)
                    else:
                        cache = _direct_moments_counted(problem, g, config.psi, mv)
                    alpha_next = short_step(phi_from_moments(cache))
                    branch = BRANCH_SHORT_NEW
                    t += 1
                    n_short += 1
                except DegenerateStepError:
                    alpha_next = bb1
                    branch = BRANCH_FALLBACK
                    n_fallback += 1
            else:
                alpha_next = bb1
                branch = BRANCH_BB1
        else:
            alpha_next = alpha
            branch = BRANCH_SHORT_REUSE
            t += 1

        x, g, Ag, alpha = x_new, g_new, Ag_new, alpha_next
    seconds = time.perf_counter() - t0
    name = "alg1" if config.short_step_variant == "alpha_tilde" else \
        f"alg1_{config.short_step_variant.split('_')[0]}"
    return rec.finish(name, status, mv.count, seconds, x,
                      info={"short_steps": n_short, "fallbacks": n_fallback})


def _direct_moments_counted(problem, g, psi, mv):
    # Same moments as compute_moments_direct but with every matvec counted.
    if problem.kind == "diagonal":
        u = psi.apply(problem, g)
    else:
        u = psi.coeffs[-1] * g
        for c in reversed(psi.coeffs[:-1]):
            u = mv(u) + c * g
    v1 = mv(u)
    v2 = mv(v1)
    return MomentCache(c=(float(u @ u), float(u @ v1), float(v1 @ v1),
                          float(v1 @ v2), float(v2 @ v2)))


def _two_dim_check(problem: QuadraticProblem, g0: np.ndarray) -> None:
    if problem.dim != 2:
        raise ValueError("termination probe needs a 2-dimensional problem")
    lam, vecs = np.linalg.eigh(problem.to_dense())
    if not lam[1] > lam[0]:
        raise ValueError("termination probe needs distinct eigenvalues")
    comps = vecs.T @ g0
    if np.any(np.abs(comps) <= 1e-14 * np.linalg.norm(g0)):
        raise ValueError("initial gradient lies along an eigenvector")
    return lam, vecs


def run_two_dim_termination_probe(problem2d: QuadraticProblem, x0, k0: int,
                                  psi: PsiSpec = PsiSpec(), tol: float = 1e-12,
                                  extra_iters: int = 8, pairwise: bool = False) -> IterationTrace:
    """Norm-ratio family with the short root step injected at iteration ``k0``.

    ``trace.info['termination_index']`` is the first ``i >= 1`` with
    ``||g_{k0+i}|| <= tol ||g_0||`` (``None`` if not reached within
    ``extra_iters``).  With ``pairwise`` the short step is evaluated in the
    eigenbasis by :func:`phi_from_spectrum`, which stays accurate when the
    zigzag has made one eigen-component dominant.
    """
    if k0 < 1:
        raise ValueError("k0 must be at least 1")
    x = _start(problem2d, x0)
    g = gradient(problem2d, x)
    lam, vecs = _two_dim_check(problem2d, g)
    config = SolverConfig(psi=psi, record_gradients=True)
    rec = _Recorder(problem2d, config, g)
    g0norm = rec.gnorms[0]
    t0 = time.perf_counter()
    mvs = 1
    term = None
    status = MAX_ITER
    for k in range(k0 + extra_iters):
        if k == k0:
            if pairwise:
                phi = phi_from_spectrum(lam, vecs.T @ g, psi)
            else:
                phi = phi_from_moments(compute_moments_direct(problem2d, g, psi))
                mvs += 2
            try:
                alpha, branch = alpha_roots(phi)[0], BRANCH_SHORT_NEW
            except DegenerateStepError:
                # g_k0 is numerically an eigenvector; the family step is then exact.
                u = psi.apply(problem2d, g)
                alpha = float(np.linalg.norm(u) / np.linalg.norm(matvec(problem2d, u)))
                branch = BRANCH_FALLBACK
                mvs += 1
        else:
            u = psi.apply(problem2d, g)
            alpha = float(np.linalg.norm(u) / np.linalg.norm(matvec(problem2d, u)))
            branch = "psi"
            mvs += 1
        Ag = matvec(problem2d, g)
        mvs += 1
        x = x - alpha * g
        g = g - alpha * Ag
        rec.step(alpha, branch, g)
        if k >= k0 and rec.gnorms[-1] <= tol * g0norm:
            term = k + 1 - k0
            status = CONVERGED
            break
        if rec.gnorms[-1] == 0.0:
            # Exact zero: every later gradient is zero as well.
            term = max(1, k + 1 - k0)
            status = CONVERGED
            break
    seconds = time.perf_counter() - t0
    return rec.finish(f"probe[{psi}]", status, mvs, seconds, x,
                      info={"k0": k0, "termination_index": term})
