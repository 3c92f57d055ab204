import json
import subprocess
import sys

import numpy as np
import pytest

from manisolve import Problem, eigenvalue_problem, make_instance
from manisolve import harness
from manisolve.harness import (EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK, EXIT_RANK, ExperimentSpec,
                               InstanceSpec, cmd_check, cmd_experiment, load_instance, main,
                               save_instance)
from manisolve.sqp import CSV_COLUMNS


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file()}


def test_instance_roundtrip(tmp_path):
    path = save_instance(tmp_path / "i.json", InstanceSpec(10, 4.0, 3, eps=0.02))
    spec = load_instance(path)
    assert spec == InstanceSpec(10, 4.0, 3, eps=0.02)
    inst, x0 = spec.build(tmp_path)
    assert np.linalg.norm(x0 - inst.x_star) == pytest.approx(0.02)


def test_instance_with_matrix_file(tmp_path):
    path = save_instance(tmp_path / "i.json", InstanceSpec(6, 4.0, 1), dump_matrix=True)
    spec = load_instance(path)
    assert spec.matrix_file == "i.A.txt"
    inst, _ = spec.build(tmp_path)
    np.testing.assert_allclose(inst.A, make_instance(6, 4.0, 1).A, atol=1e-15)


@pytest.mark.parametrize("text", ["not json", "{}", '{"n": 5, "kappa": 2.0, "seed": 0, "eps": -1}'])
def test_load_instance_rejects_malformed(tmp_path, text):
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_instance(path)
    assert main(["solve", str(path)]) == EXIT_INVALID


def test_solve_row_count_and_summary(tmp_path, capsys):
    main(["instance", str(tmp_path / "i.json"), "--n", "20", "--kappa", "5"])
    before = (tmp_path / "i.json").read_bytes()
    out = tmp_path / "t.csv"
    assert main(["solve", str(tmp_path / "i.json"), "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) - 1 == summary["iters"] + 1
    assert summary["termination"] == "converged"
    assert (tmp_path / "i.json").read_bytes() == before


def test_solve_rgd(tmp_path, capsys):
    main(["instance", str(tmp_path / "i.json"), "--n", "20", "--kappa", "5"])
    assert main(["solve", str(tmp_path / "i.json"), "--method", "rgd"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["method"] == "rgd"
    assert (tmp_path / "i_rgd.csv").exists()


def test_solve_from_solution_converges_at_zero(tmp_path, capsys):
    main(["instance", str(tmp_path / "i.json"), "--n", "10", "--kappa", "3", "--eps", "0"])
    assert main(["solve", str(tmp_path / "i.json")]) == EXIT_OK
    s = json.loads(capsys.readouterr().out)
    assert s["iters"] == 0 and s["termination"] == "converged"


@pytest.mark.parametrize("eta", ["0", "-1", "abc"])
def test_solve_rejects_bad_eta(tmp_path, eta):
    main(["instance", str(tmp_path / "i.json"), "--n", "10", "--kappa", "3"])
    assert main(["solve", str(tmp_path / "i.json"), "--eta", eta]) == EXIT_INVALID
    assert harness.cmd_solve(tmp_path / "i.json", eta=0.0) == EXIT_INVALID


def test_solve_rank_failure_exit(tmp_path, monkeypatch):
    main(["instance", str(tmp_path / "i.json"), "--n", "10", "--kappa", "3"])
    monkeypatch.setattr(harness, "sample_initialization", lambda xs, eps, seed: np.zeros_like(xs))
    assert main(["solve", str(tmp_path / "i.json")]) == EXIT_RANK


def test_instance_rejects_bad_kappa(tmp_path):
    assert main(["instance", str(tmp_path / "i.json"), "--n", "10", "--kappa", "1"]) == EXIT_INVALID
    assert not (tmp_path / "i.json").exists()


def test_empty_kappa_list_rejected_before_running(tmp_path):
    spec = ExperimentSpec.with_defaults("vary_kappa", kappas=[], out_dir=tmp_path / "o")
    assert cmd_experiment(spec) == EXIT_INVALID
    assert not (tmp_path / "o").exists()
    assert main(["experiment", "--kind", "vary-kappa", "--kappa", "", "--out",
                 str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["experiment", "--kind", "bogus", "--out", str(tmp_path)]) == EXIT_INVALID


def test_vary_kappa_manifest_complete_and_deterministic(tmp_path):
    argv = ["experiment", "--kind", "vary-kappa", "--n", "20", "--kappa", "5,10",
            "--instances", "2", "--seed", "7", "--max-iters", "3000"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
    fa, fb = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert fa.keys() == fb.keys()
    for k in fa:
        if k != "manifest.json":
            assert fa[k] == fb[k], k
    man = json.loads(fa["manifest.json"])
    listed = {r["csv_path"] for r in man["runs"]} | {a["csv_path"] for a in man["aggregates"]}
    assert listed | {"manifest.json"} == set(fa)
    for r in man["runs"]:
        assert {"run_id", "kind", "n", "kappa", "radius", "seed", "eta", "csv_path",
                "termination"} <= set(r)
        assert r["termination"] == "converged"
    assert [a["kappa"] for a in man["aggregates"]] == [5.0, 10.0]


def test_vary_radius_reports_nonconvergence(tmp_path):
    spec = ExperimentSpec.with_defaults("vary_radius", n=20, kappas=[100.0], radii=[0.01, 100.0],
                                        n_instances=2, max_iters=200, out_dir=tmp_path)
    assert cmd_experiment(spec) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {r["radius"] for r in man["runs"]} == {0.01, 100.0}


def test_compare_rgd_deviation_column(tmp_path):
    spec = ExperimentSpec.with_defaults("compare_rgd", n=20, n_instances=1, max_iters=2000,
                                        out_dir=tmp_path)
    assert cmd_experiment(spec) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert {r["method"] for r in man["runs"]} == {"sqp", "rgd"}
    header = (tmp_path / man["runs"][0]["csv_path"]).read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS + ("deviation",))
    assert all(r["max_deviation"] <= 1e-3 for r in man["runs"])


def test_global_decay_experiment(tmp_path):
    spec = ExperimentSpec.with_defaults("global_decay", n=20, ks=(100, 1000), out_dir=tmp_path)
    assert cmd_experiment(spec) == EXIT_OK
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert all(r["stayed_in_tube"] for r in man["runs"])
    assert man["aggregates"][0]["loglog_slope"] < 0


def test_check_reports_deterministic(tmp_path, capsys):
    assert cmd_check(1, tmp_path / "a") == EXIT_OK
    assert cmd_check(1, tmp_path / "b") == EXIT_OK
    fa, fb = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert fa == fb
    summary = json.loads(fa["summary.json"])
    assert summary["pass"] and summary["n_checks"] >= 10
    assert len(fa) == summary["n_checks"] + 1
    assert capsys.readouterr().out.count("PASS") == 2 * summary["n_checks"]


def test_check_negative_control_exit(tmp_path, capsys):
    good = eigenvalue_problem(make_instance(20, 10.0, 0))
    bad = Problem(n=good.n, m=good.m, f=good.f, grad_f=lambda x: 2.0 * good.grad_f(x),
                  F=good.F, jac_F=good.jac_F)
    assert cmd_check(0, tmp_path, problem=bad) == EXIT_CHECK_FAILED
    out = capsys.readouterr().out
    assert "FAIL  fd_derivatives" in out
    assert json.loads((tmp_path / "summary.json").read_text())["failed"] == ["fd_derivatives"]


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "manisolve.harness", "instance",
                        str(tmp_path / "i.json"), "--n", "5", "--kappa", "2"],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "manisolve.harness", "solve",
                        str(tmp_path / "i.json"), "--eta", "0"], capture_output=True, text=True)
    assert r.returncode == 1
