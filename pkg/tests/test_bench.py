import csv
from pathlib import Path

import numpy as np
import pytest

from qtgrad.bench import (
    ExperimentPlan,
    ResultTable,
    derive_seed,
    emit_csv,
    emit_markdown,
    emit_trace_series,
    known_methods,
    read_csv,
    run_method,
    run_plan,
)
from qtgrad.bench.cli import main
from qtgrad.bench.report import CSV_COLUMNS, markdown_table
from qtgrad.quadprob import SpectrumSpec, generate_spectrum
from qtgrad.solver import SolverConfig

DATA = Path(__file__).parent / "data"


def small_plan(**kw):
    base = dict(methods=["sd", "bb1", "alg1"], families=[1], kappas=[10, 100],
                epsilons=[1e-6], n=20, runs=2, seed=3)
    base.update(kw)
    return ExperimentPlan(**base)


class TestPlan:
    @pytest.mark.parametrize("kw", [
        {"runs": 0},
        {"epsilons": [0.0]},
        {"epsilons": [1.0]},
        {"methods": ["newton"]},
        {"families": []},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small_plan(**kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown plan keys"):
            ExperimentPlan.from_dict({"families": [1], "kappas": [10], "colour": "red"})

    def test_cells(self):
        plan = small_plan(epsilons=[1e-3, 1e-6])
        assert len(plan.cells()) == 4

    def test_method_params(self):
        plan = small_plan(method_params={"alg1": {"tau": 0.9}})
        assert plan.config_for("alg1", 1e-6).tau == 0.9
        assert plan.config_for("bb1", 1e-6).tau == plan.tau

    def test_yaml(self, tmp_path):
        f = tmp_path / "p.yaml"
        f.write_text("methods: [bb1]\nmatrices: [spd.mtx]\nruns: 1\n")
        plan = ExperimentPlan.from_file(f)
        assert plan.matrices == [str(tmp_path / "spd.mtx")]

    def test_known_methods(self):
        names = known_methods()
        assert {"alg1", "alg1_beta", "alg1_gamma", "bb1", "sd", "dai_yang"} <= set(names)

    def test_run_method_unknown(self):
        p = generate_spectrum(SpectrumSpec(1, 10, 5, seed=0))
        with pytest.raises(ValueError):
            run_method("nope", p, np.ones(5), SolverConfig())


class TestSeeds:
    def test_pure(self):
        a = derive_seed(1, 2, 3, 0).generate_state(4)
        b = derive_seed(1, 2, 3, 0).generate_state(4)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        states = {tuple(derive_seed(1, c, r, s).generate_state(2))
                  for c in range(3) for r in range(3) for s in range(3)}
        assert len(states) == 27


class TestRunPlan:
    def test_shape(self):
        table = run_plan(small_plan())
        assert len(table.rows) == 6
        for row in table.rows:
            assert row.n_runs == 2
            assert row.failures == 0
            assert row.matvecs == [i + 1 for i in row.iters]

    def test_paired_starts(self):
        # Same start and rhs for every method, so a method listed twice agrees.
        table = run_plan(small_plan(methods=["bb1", "sd"], kappas=[10]))
        again = run_plan(small_plan(methods=["sd"], kappas=[10]))
        assert table.row("set1", 10.0, 1e-6, "sd").iters == again.row("set1", 10.0, 1e-6, "sd").iters

    def test_deterministic_bytes(self, tmp_path):
        a = emit_csv(run_plan(small_plan()), tmp_path / "a.csv", timing=False)
        b = emit_csv(run_plan(small_plan(), jobs=2), tmp_path / "b.csv", timing=False)
        assert a == b
        assert markdown_table(run_plan(small_plan()), timing=False) == \
            markdown_table(run_plan(small_plan(), jobs=2), timing=False)

    def test_seed_changes_results(self):
        a = run_plan(small_plan(seed=1)).row("set1", 100.0, 1e-6, "bb1").iters
        b = run_plan(small_plan(seed=2)).row("set1", 100.0, 1e-6, "bb1").iters
        assert a != b

    def test_matrix_plan(self):
        plan = ExperimentPlan(methods=["alg1", "bb1"], matrices=[str(DATA / "laplace50.mtx")],
                              runs=2, tau=0.1)
        table = run_plan(plan)
        assert [r.problem for r in table.rows] == ["laplace50", "laplace50"]
        assert all(r.failures == 0 and r.kappa is None for r in table.rows)

    def test_progress(self):
        msgs = []
        run_plan(small_plan(kappas=[10]), progress=msgs.append)
        assert msgs == ["cell 1/1 done: set1 eps=1e-06"]


class TestReport:
    def test_empty_csv(self, tmp_path):
        text = emit_csv(ResultTable(), tmp_path / "e.csv")
        assert text == ",".join(CSV_COLUMNS) + "\n"
        assert read_csv(tmp_path / "e.csv") == []

    def test_round_trip(self, tmp_path):
        table = run_plan(small_plan())
        emit_csv(table, tmp_path / "t.csv")
        rows = read_csv(tmp_path / "t.csv")
        assert len(rows) == len(table.rows)
        for got, row in zip(rows, table.rows):
            assert got["mean_iters"] == row.mean_iters
            assert got["mean_seconds"] == row.mean_seconds
            assert got["kappa"] == row.kappa and got["n_runs"] == 2

    def test_no_timing_blank(self, tmp_path):
        emit_csv(run_plan(small_plan(kappas=[10])), tmp_path / "t.csv", timing=False)
        assert all(r["mean_seconds"] is None for r in read_csv(tmp_path / "t.csv"))

    def test_bad_header(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_csv(f)

    def test_markdown_synthetic(self):
        md = markdown_table(run_plan(small_plan()), timing=False)
        lines = md.splitlines()
        assert lines[0] == "| kappa | epsilon | sd | bb1 | alg1 |"
        assert lines[2].startswith("| **set1** |")
        assert lines[3].startswith("| 1e1 | 1e-6 | ")
        assert lines[4].startswith("| 1e2 | 1e-6 | ")

    def test_markdown_matrix_and_star(self, tmp_path):
        plan = ExperimentPlan(methods=["sd", "bb1"], matrices=[str(DATA / "laplace50.mtx")],
                              runs=1, max_iter=3)
        md = emit_markdown(run_plan(plan), tmp_path / "m.md")
        assert "Mean iterations" in md and "Mean CPU time (s)" in md
        assert "| laplace50 | 1e-6 | 3.0* | 3.0* |" in md
        assert (tmp_path / "m.md").read_text() == md

    def test_trace_series(self, tmp_path):
        p = generate_spectrum(SpectrumSpec(1, 50.0, 50, seed=0))
        tr = run_method("dai_yang", p, np.ones(50),
                        SolverConfig(epsilon=1e-300, max_iter=20, observe_tilde=True))
        out = tmp_path / "sub" / "s.csv"
        series = emit_trace_series(tr, "alpha_tilde_dev", out, p)
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["k", "alpha_tilde_dev"]
        assert len(rows) == 22 and float(rows[-1][1]) == series[-1, 1]
        np.testing.assert_array_equal(series[:, 1], np.abs(tr.alpha_tilde - 1 / 50))

    def test_trace_series_errors(self):
        p = generate_spectrum(SpectrumSpec(1, 50.0, 50, seed=0))
        tr = run_method("sd", p, np.ones(50), SolverConfig(max_iter=3))
        with pytest.raises(ValueError):
            emit_trace_series(tr, "alpha_tilde_dev", None, p)
        with pytest.raises(ValueError):
            emit_trace_series(tr, "alpha_dev", None, None)
        with pytest.raises(ValueError):
            emit_trace_series(tr, "bogus", None, p)
        assert emit_trace_series(tr, "gnorm", None).shape == (4, 2)


class TestCli:
    def test_run(self, tmp_path, capsys):
        plan = tmp_path / "tiny.yaml"
        plan.write_text("methods: [sd, alg1]\nfamilies: [1]\nkappas: [10]\nn: 10\nruns: 2\n")
        rc = main(["run", "--plan", str(plan), "--out-dir", str(tmp_path / "out"),
                   "--no-timing", "--quiet"])
        assert rc == 0
        rows = read_csv(tmp_path / "out" / "tiny.csv")
        assert [r["method"] for r in rows] == ["sd", "alg1"]
        assert (tmp_path / "out" / "tiny.md").exists()

    def test_mm(self, tmp_path):
        rc = main(["mm", "--matrix", str(DATA / "laplace50.mtx"), "--methods", "alg1,bb1",
                   "--runs", "2", "--out-dir", str(tmp_path), "--quiet", "--single-thread"])
        assert rc == 0
        rows = read_csv(tmp_path / "matrices.csv")
        assert {r["method"] for r in rows} == {"alg1", "bb1"}
        assert all(r["mean_iters"] > 0 for r in rows)

    def test_mm_general_rejected(self, tmp_path, capsys):
        rc = main(["mm", "--matrix", str(DATA / "general2.mtx"), "--out-dir", str(tmp_path), "--quiet"])
        assert rc == 2
        assert "general" in capsys.readouterr().err

    def test_trace(self, tmp_path):
        out = tmp_path / "series.csv"
        rc = main(["trace", "--quantity", "alpha_dev", "--out", str(out), "--n", "50", "--iters", "30"])
        assert rc == 0
        assert len(out.read_text().splitlines()) == 31

    def test_missing_plan(self, tmp_path):
        assert main(["run", "--plan", str(tmp_path / "none.yaml")]) == 2

    def test_verify_subset(self, capsys):
        rc = main(["verify", "--only", "check_recurrence_fidelity"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "1/1 checks passed" in out and "[PASS]" in out

    def test_bad_subcommand(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])
