import io
import math

import numpy as np
import pytest

from bdf2dc.cli import DEFAULT_TRIPLETS, load_config, main
from bdf2dc.errors import ParameterError
from bdf2dc.implicit import SolverConfig
from bdf2dc.studies import (
    PerturbationSpec,
    StudySpec,
    expected_orders,
    run_adaptive_demo,
    run_convergence_study,
    run_doc_report,
    run_perturbation_probe,
    run_starting_matrix,
)


class TestConvergenceStudy:
    def test_orders_and_rows(self):
        spec = StudySpec(n_values=(64, 128, 256), chain="dc3", T=math.pi)
        table = run_convergence_study(spec)
        assert [r.N for r in table.rows] == [64, 128, 256]
        assert table.rows[0].orders == {}
        for row in table.rows[1:]:
            assert row.orders["bdf2"] == pytest.approx(2.0, abs=0.2)
            assert row.orders["dc3"] == pytest.approx(3.0, abs=0.2)
        assert not table.any_failures

    def test_single_row_has_no_order(self):
        spec = StudySpec(n_values=(64,), chain="bdf2", T=1.0)
        table = run_convergence_study(spec)
        assert len(table.rows) == 1
        assert table.rows[0].orders == {}

    def test_failure_recorded_and_study_continues(self):
        # fixed-point iteration diverges on the stiff system at coarse steps
        spec = StudySpec(problem="example2", mesh="uniform",
                         n_values=(40, 80), chain="bdf2",
                         solver=SolverConfig(method="fixed-point"),
                         engine="pure")
        table = run_convergence_study(spec)
        assert table.any_failures
        assert all(r.failure for r in table.rows)
        assert "diverge" in table.rows[0].failure

    def test_reference_cell_steep_grading(self):
        spec = StudySpec(problem="example1", mesh="graded", gamma=3.0,
                         n_values=(10240, 20480), chain="dc3",
                         starters="exact")
        table = run_convergence_study(spec)
        last = table.rows[-1]
        assert last.errors["dc3"] == pytest.approx(2.87e-9, rel=0.5)
        assert last.orders["dc3"] == pytest.approx(2.99, abs=0.05)
        assert last.orders["bdf2"] == pytest.approx(2.00, abs=0.05)

    def test_metric_validation(self):
        with pytest.raises(ParameterError):
            StudySpec(metric="weird")
        with pytest.raises(ParameterError):
            StudySpec(n_values=(128, 64))

    def test_csv_deterministic(self):
        spec = StudySpec(mesh="random", seed=5, n_values=(32, 64), chain="dc3",
                         T=2.0)
        bufs = []
        for _ in range(2):
            buf = io.StringIO()
            run_convergence_study(spec).write_csv(buf)
            bufs.append(buf.getvalue())
        assert bufs[0] == bufs[1]
        assert bufs[0].startswith("N,tau_max,e_bdf2,order_bdf2,e_dc3,order_dc3")

    def test_markdown_contains_timings(self):
        spec = StudySpec(n_values=(32, 64), chain="bdf2", T=1.0)
        buf = io.StringIO()
        run_convergence_study(spec).write_markdown(buf)
        text = buf.getvalue()
        assert "time [s]" in text and "e(bdf2)" in text


class TestExpectedOrders:
    @pytest.mark.parametrize(
        "starters,expected",
        [
            (("rk2", "rk2", "rk3"), {"bdf2": 2, "dc3": 3, "dc34": 4}),
            (("bdf1", "rk2", "rk3"), {"bdf2": 2, "dc3": 3, "dc34": 4}),
            (("bdf1", "bdf1", "rk3"), {"bdf2": 2, "dc3": 2, "dc34": 3}),
            (("rk2", "rk2", "rk2"), {"bdf2": 2, "dc3": 3, "dc34": 3}),
            (("bdf1", "rk2", "rk2"), {"bdf2": 2, "dc3": 3, "dc34": 3}),
            (("bdf1", "bdf1", "rk2"), {"bdf2": 2, "dc3": 2, "dc34": 3}),
            (("rk2", "rk2", "bdf1"), {"bdf2": 2, "dc3": 3, "dc34": 2}),
            (("bdf1", "rk2", "bdf1"), {"bdf2": 2, "dc3": 3, "dc34": 2}),
            (("bdf1", "bdf1", "bdf1"), {"bdf2": 2, "dc3": 2, "dc34": 2}),
        ],
    )
    def test_nine_reference_assignments(self, starters, expected):
        assert expected_orders("dc34", starters) == expected

    def test_exact_start_reaches_scheme_orders(self):
        assert expected_orders("dc34", ("exact",) * 3) == {
            "bdf2": 2, "dc3": 3, "dc34": 4,
        }
        assert expected_orders("dc4p", ("exact", "rk3")) == {"bdf2": 2, "dc4p": 4}


def test_starting_matrix_smoke():
    matrix = run_starting_matrix("example1", (64, 128),
                                 [("bdf1", "rk2", "rk3"), ("bdf1", "rk2", "bdf1")],
                                 T=math.pi)
    assert len(matrix.tables) == 2
    trip, expected, table = matrix.tables[0]
    assert expected == {"bdf2": 2, "dc3": 3, "dc34": 4}
    buf = io.StringIO()
    matrix.write_csv(buf)
    assert buf.getvalue().count("bdf1+rk2+rk3") == 2
    buf = io.StringIO()
    matrix.write_markdown(buf)
    assert "attainable orders 2/3/4" in buf.getvalue()


def test_perturbation_probe_scaling_and_bound():
    spec = StudySpec(mesh="random", seed=6, n_values=(256,), chain="dc3", T=2.0)
    report = run_perturbation_probe(spec, 256,
                                PerturbationSpec((1e-10, 1e-8), seed=3))
    assert report.all_bounded
    assert len(report.rows) == 2
    ratio = report.linearity[0]
    assert ratio["dev_ratio"] == pytest.approx(ratio["amp_ratio"], rel=0.5)
    buf = io.StringIO()
    report.write_csv(buf)
    assert buf.getvalue().splitlines()[0] == \
        "amplitude,dev_bdf2,dev_dc3,worst_ratio,bounded"


def test_doc_report_mesh_and_flags():
    rng = np.random.Generator(np.random.Philox(key=15))
    report = run_doc_report(rng.uniform(0.1, 10.0, size=60), "synthetic")
    assert report.all_ok
    assert [r["n"] for r in report.rows] == list(range(2, 62))
    buf = io.StringIO()
    report.write_csv(buf)
    header = buf.getvalue().splitlines()[0]
    assert header.startswith("n,kernel_sum,sum_expected,residual,sigma2")


def test_adaptive_demo_rows(tmp_path):
    demo = run_adaptive_demo(v0_values=(0.5,), horizons=(5.0,),
                             include_uniform=True, mesh_out_dir=str(tmp_path))
    kinds = [r["kind"] for r in demo.rows]
    assert kinds == ["adaptive", "uniform"]
    adaptive, uniform = demo.rows
    assert adaptive["final_error"] < 1e-6
    assert uniform["levels"] == 5000
    assert (tmp_path / "adaptive_mesh_v0=0.5_T=5.0.csv").exists()
    assert not demo.any_failures


class TestCli:
    def test_converge_csv_roundtrip(self, tmp_path):
        out = tmp_path / "table.csv"
        code = main(["converge", "--N", "64,128", "--chain", "dc3",
                     "--T", "3.14", "--format", "csv", "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("N,tau_max")

    def test_converge_repeatable_N_and_dump(self, tmp_path):
        traj = tmp_path / "traj.csv"
        code = main(["converge", "--N", "32", "--N", "64", "--chain", "bdf2",
                     "--T", "1.0", "--out", str(tmp_path / "t.md"),
                     "--dump-trajectory", str(traj)])
        assert code == 0
        assert traj.read_text().startswith("k,t_k,bdf2,err_bdf2")

    def test_exit_code_on_cell_failure(self, tmp_path):
        code = main(["converge", "--problem", "example2", "--mesh", "uniform",
                     "--N", "40", "--chain", "bdf2", "--solver", "fixed-point",
                     "--engine", "pure", "--out", str(tmp_path / "x.csv"),
                     "--format", "csv"])
        assert code == 1

    def test_exit_code_on_invalid_spec(self, capsys):
        assert main(["converge", "--N", "128,64", "--T", "1.0"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_argparse_rejects_unknown_choice(self):
        with pytest.raises(SystemExit) as exc:
            main(["converge", "--mesh", "fancy"])
        assert exc.value.code == 2

    def test_starters_subcommand(self, tmp_path):
        out = tmp_path / "m.csv"
        code = main(["starters", "--N", "32,64", "--T", "1.0",
                     "--triplet", "bdf1,rk2,rk3", "--format", "csv",
                     "--out", str(out)])
        assert code == 0
        assert "bdf1+rk2+rk3" in out.read_text()

    def test_perturb_subcommand(self, tmp_path):
        out = tmp_path / "p.md"
        code = main(["perturb", "--N", "128", "--T", "2.0", "--chain", "dc3",
                     "--amplitude", "1e-8", "--out", str(out)])
        assert code == 0
        assert "perturbation response" in out.read_text()

    def test_doc_report_subcommand(self, tmp_path):
        out = tmp_path / "doc.csv"
        code = main(["doc-report", "--random-ratios", "40", "--seed", "3",
                     "--format", "csv", "--out", str(out)])
        assert code == 0
        assert len(out.read_text().strip().splitlines()) == 41

        code = main(["doc-report", "--mesh", "geometric", "--N", "30",
                     "--format", "csv", "--out", str(out)])
        assert code == 0

    def test_adaptive_subcommand(self, tmp_path):
        out = tmp_path / "a.csv"
        code = main(["adaptive", "--v0", "0.5", "--T", "5",
                     "--without-uniform", "--format", "csv",
                     "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert "adaptive" in text and "uniform" not in text.splitlines()[1]

    def test_config_file(self, tmp_path):
        conf = tmp_path / "study.conf"
        conf.write_text(
            "# convergence study\n"
            "problem = example1\n"
            "chain = dc3\n"
            "N = 32,64\n"
            "T = 1.0\n"
            "format = csv\n"
        )
        out = tmp_path / "out.csv"
        code = main(["converge", "--config", str(conf), "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3 and "e_dc3" in lines[0]

    def test_config_flag_precedence(self, tmp_path):
        conf = tmp_path / "study.conf"
        conf.write_text("chain = dc3\nN = 32\nT = 1.0\nformat = csv\n")
        out = tmp_path / "out.csv"
        code = main(["converge", "--config", str(conf), "--chain", "bdf2",
                     "--out", str(out)])
        assert code == 0
        assert "e_dc3" not in out.read_text()

    def test_config_rejects_unknown_key(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("meshes = graded\n")
        assert main(["converge", "--config", str(conf)]) == 2

    def test_load_config_parsing(self, tmp_path):
        conf = tmp_path / "c.conf"
        conf.write_text("a-b = 1 # comment\n\n# full comment\nx = y z\n")
        assert load_config(str(conf)) == {"a_b": "1", "x": "y z"}

    def test_default_triplets_cover_nine_cases(self):
        assert len(DEFAULT_TRIPLETS) == 9
        assert len(set(DEFAULT_TRIPLETS)) == 9
