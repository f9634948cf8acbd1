"""Experiment plans, seeded runs and aggregated result tables."""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import yaml

from ..quadprob import (
    QuadraticProblem,
    SpectrumSpec,
    attach_random_minimizer,
    generate_spectrum,
    load_matrix_market,
)
from ..solver import RULES, DEGENERATE, IterationTrace, SolverConfig, run_algorithm1, run_fixed_rule

# Stream ids mixed into every derived seed.
SPECTRUM_STREAM, MINIMIZER_STREAM, START_STREAM = 0, 1, 2

ALG1_VARIANTS = {
    "alg1": "alpha_tilde",
    "alg1_beta": "beta_tilde",
    "alg1_gamma": "gamma_tilde",
}


def known_methods() -> list[str]:
    return sorted(ALG1_VARIANTS) + sorted(RULES)


def run_method(method: str, problem: QuadraticProblem, x0, config: SolverConfig) -> IterationTrace:
    """Dispatch a method name to its driver."""
    if method in ALG1_VARIANTS:
        return run_algorithm1(problem, x0, config.replace(short_step_variant=ALG1_VARIANTS[method]))
    if method in RULES:
        return run_fixed_rule(problem, x0, method, config)
    raise ValueError(f"unknown method {method!r}; known: {', '.join(known_methods())}")


def derive_seed(base: int, cell: int, run: int, stream: int) -> np.random.SeedSequence:
    """Seed for one random stream of one run; a pure function of its indices."""
    return np.random.SeedSequence([int(base), int(cell), int(run), int(stream)])


@dataclass
class ExperimentPlan:
    """What to run.

    Problems come from synthetic spectra (``families`` x ``kappas``) or
    from Matrix Market files (``matrices``); each is crossed with every
    tolerance in ``epsilons`` to form a cell.  Every method in a cell
    sees the same ``runs`` right-hand sides and starting points.
    ``method_params`` overrides ``tau``/``r``/``max_iter`` per method.
    """

    methods: list = field(default_factory=lambda: ["alg1", "bb1"])
    families: list = field(default_factory=list)
    kappas: list = field(default_factory=list)
    matrices: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [1e-6])
    n: int = 1000
    runs: int = 10
    seed: int = 0
    tau: float = 0.3
    r: int = 5
    max_iter: int = 10**6
    symmetrize: bool = False
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if any(not 0 < float(e) < 1 for e in self.epsilons):
            raise ValueError("every epsilon must lie in (0, 1)")
        if not self.matrices and not (self.families and self.kappas):
            raise ValueError("plan needs matrices or both families and kappas")
        for m in self.methods:
            if m not in ALG1_VARIANTS and m not in RULES:
                raise ValueError(f"unknown method {m!r}; known: {', '.join(known_methods())}")
        self.epsilons = [float(e) for e in self.epsilons]
        self.kappas = [float(k) for k in self.kappas]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentPlan":
        """Load a YAML (or JSON) plan file; relative matrix paths resolve
        against the file's directory."""
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        base = os.path.dirname(os.path.abspath(path))
        data["matrices"] = [m if os.path.isabs(m) else os.path.join(base, m)
                            for m in data.get("matrices", [])]
        return cls.from_dict(data)

    def config_for(self, method: str, epsilon: float) -> SolverConfig:
        params = {"tau": self.tau, "r": self.r, "max_iter": self.max_iter}
        params.update(self.method_params.get(method, {}))
        return SolverConfig(epsilon=epsilon, **params)

    def cells(self) -> list[dict]:
        out = []
        if self.matrices:
            for path in self.matrices:
                for eps in self.epsilons:
                    out.append({"matrix": path, "epsilon": eps})
        else:
            for fam in self.families:
                for kappa in self.kappas:
                    for eps in self.epsilons:
                        out.append({"family": int(fam), "kappa": kappa, "epsilon": eps})
        return out


@dataclass
class ResultRow:
    problem: str
    kappa: Optional[float]
    epsilon: float
    method: str
    iters: list
    matvecs: list
    seconds: list
    statuses: list

    @property
    def n_runs(self) -> int:
        return len(self.iters)

    @property
    def mean_iters(self) -> float:
        return float(np.mean(self.iters))

    @property
    def mean_matvecs(self) -> float:
        return float(np.mean(self.matvecs))

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds))

    @property
    def failures(self) -> int:
        return sum(s != "converged" for s in self.statuses)


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)

    def row(self, problem, kappa, epsilon, method) -> ResultRow:
        for r in self.rows:
            if (r.problem, r.kappa, r.epsilon, r.method) == (problem, kappa, epsilon, method):
                return r
        raise KeyError((problem, kappa, epsilon, method))

    @property
    def degenerate_runs(self) -> int:
        return sum(s == DEGENERATE for r in self.rows for s in r.statuses)


_matrix_cache: dict = {}


def _cell_problem(plan: ExperimentPlan, cell_index: int, cell: dict) -> tuple[QuadraticProblem, str, Optional[float]]:
    if "matrix" in cell:
        key = (cell["matrix"], plan.symmetrize)
        if key not in _matrix_cache:
            _matrix_cache[key] = load_matrix_market(cell["matrix"], symmetrize=plan.symmetrize)
        problem = _matrix_cache[key]
        return problem, problem.name, None
    spec = SpectrumSpec(cell["family"], cell["kappa"], plan.n,
                        seed=derive_seed(plan.seed, cell_index, 0, SPECTRUM_STREAM))
    return generate_spectrum(spec), f"set{cell['family']}", cell["kappa"]


def _run_cell_run(args) -> list[tuple]:
    plan, cell_index, cell, run = args
    base, label, kappa = _cell_problem(plan, cell_index, cell)
    problem = attach_random_minimizer(base, derive_seed(plan.seed, cell_index, run, MINIMIZER_STREAM))
    x0 = np.random.default_rng(derive_seed(plan.seed, cell_index, run, START_STREAM)).uniform(
        -10.0, 10.0, problem.dim)
    out = []
    for method in plan.methods:
        trace = run_method(method, problem, x0, plan.config_for(method, cell["epsilon"]))
        out.append((method, trace.iterations, trace.matvecs, trace.seconds, trace.status))
    return [(label, kappa)] + out


def run_plan(plan: ExperimentPlan, jobs: int = 1,
             progress: Optional[Callable[[str], None]] = None) -> ResultTable:
    """Run every (cell, run, method) and aggregate in (cell, run) order.

    Parallel execution (``jobs > 1``) changes wall times only; the
    reduction order, and hence every other output, is fixed.
    """
    cells = plan.cells()
    tasks = [(plan, ci, cell, run) for ci, cell in enumerate(cells) for run in range(plan.runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_run, tasks))
    else:
        results = [_run_cell_run(t) for t in tasks]

    table = ResultTable()
    by_key: dict = {}
    for (plan_, ci, cell, run), res in zip(tasks, results):
        (label, kappa), per_method = res[0], res[1:]
        for method, iters, mvs, secs, status in per_method:
            key = (ci, method)
            if key not in by_key:
                by_key[key] = ResultRow(label, kappa, cell["epsilon"], method, [], [], [], [])
                table.rows.append(by_key[key])
            row = by_key[key]
            row.iters.append(iters)
            row.matvecs.append(mvs)
            row.seconds.append(secs)
            row.statuses.append(status)
        if progress is not None and run == plan.runs - 1:
            progress(f"cell {ci + 1}/{len(cells)} done: {label} eps={cell['epsilon']:g}")
    return table
