import csv
import io
import json
import re

import numpy as np
import pytest

from redcolloc import cli, studies
from redcolloc.problem import build_problem


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_truth_solve_laplacian(capsys, tmp_path):
    code, _, err = run(capsys, "truth-solve", "--nx", "21", "--mu", "0,0", "--out", str(tmp_path / "u.csv"))
    assert code == 0
    res = float(re.search(r"residual_norm (\S+)", err).group(1))
    f = build_problem("diffusion2d", 21).rhs([0.0, 0.0])
    assert res <= 1e-9 * np.linalg.norm(f)
    rows = read_csv((tmp_path / "u.csv").read_text())
    assert len(rows) == 21 * 21 and list(rows[0]) == ["x", "y", "value"]


def test_truth_solve_fine_grid_configuration(capsys, tmp_path):
    code, _, err = run(capsys, "truth-solve", "--problem", "diffusion2d", "--nx", "81", "--mu", "1,0.5",
                       "--out", str(tmp_path / "f.csv"))
    assert code == 0
    assert float(re.search(r"relative (\S+)", err).group(1)) <= 1e-9


def test_truth_solve_burgers(capsys):
    code, out, _ = run(capsys, "truth-solve", "--problem", "burgers1d", "--nx", "17", "--mu", "1.0")
    assert code == 0 and len(read_csv(out)) == 17


def test_usage_errors(capsys):
    code, _, err = run(capsys, "truth-solve", "--nx", "9")
    assert code == 2 and "usage" in err and "--mu" in err
    assert run(capsys, "truth-solve", "--mu", "a,b")[0] == 2
    assert run(capsys, "bogus")[0] == 2
    assert run(capsys, "study", "--study", "timing")[0] == 2
    assert run(capsys, "study", "--study", "stability", "--precond", "jacobi")[0] == 2
    assert run(capsys, "--flags-from")[0] == 2
    assert run(capsys, "train", "--problem", "burgers1d", "--method", "ercm", "--out-model", "x")[0] == 2


@pytest.fixture(scope="module")
def small_model(tmp_path_factory):
    d = tmp_path_factory.mktemp("m")
    path = d / "m.rcm"
    assert cli.main(["train", "--method", "ercm", "--precond", "interp", "--nx", "17", "--train-grid", "8,8",
                     "--nmax", "8", "--out-model", str(path)]) == 0
    return path


def test_train_writes_archive_and_history(small_model, capsys):
    code, out, _ = run(capsys, "model-info", "--model", str(small_model))
    assert code == 0
    man = json.loads(out)
    assert man["N"] == 8 and len(man["reduced_points"]) == 8 and man["precond"] == "interp_q1"
    hist = read_csv(open(str(small_model) + ".history.csv").read())
    assert len(hist) == 8 and list(hist[0]) == ["round", "mu_1", "mu_2", "max_delta", "point"]


def test_query(small_model, capsys, tmp_path):
    man = json.loads(run(capsys, "model-info", "--model", str(small_model))[1])
    snap = man["selected_mu"][2]
    (tmp_path / "mus.txt").write_text("# mu\n0.1 0.2\n-0.3,0.4\n")
    code, out, _ = run(capsys, "query", "--model", str(small_model), "--mu", ",".join(map(repr, snap)),
                       "--mu-file", str(tmp_path / "mus.txt"), "--check-truth")
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 3
    assert {"mu_1", "mu_2", "N", "coeff_crc64", "delta", "wall_time_s", "l2_error", "h1_error"} <= set(rows[0])
    f = build_problem("diffusion2d", 17).rhs(snap)
    assert float(rows[0]["delta"]) <= 1e-9 * np.linalg.norm(f)
    assert all(float(r["h1_error"]) >= float(r["l2_error"]) for r in rows)
    plain = read_csv(run(capsys, "query", "--model", str(small_model), "--mu", "0.1,0.2")[1])[0]
    assert "l2_error" not in plain
    assert plain["delta"] == rows[1]["delta"] and plain["coeff_crc64"] == rows[1]["coeff_crc64"]


def test_query_errors(small_model, capsys, tmp_path):
    assert run(capsys, "query", "--model", str(small_model), "--mu", "1.5,0")[0] == 2
    assert run(capsys, "query", "--model", str(small_model))[0] == 2
    assert run(capsys, "query", "--model", str(tmp_path / "nope.rcm"), "--mu", "0,0")[0] == 2
    bad = tmp_path / "bad.rcm"
    raw = bytearray(small_model.read_bytes())
    raw[-20] ^= 0x40
    bad.write_bytes(bytes(raw))
    code, _, err = run(capsys, "query", "--model", str(bad), "--mu", "0,0")
    assert code == 4 and "checksum" in err
    assert run(capsys, "model-info", "--model", str(bad))[0] == 4


def test_history_is_byte_identical_across_runs(tmp_path, capsys):
    paths = []
    for k in range(2):
        m = tmp_path / f"m{k}.rcm"
        args = ["train", "--method", "lsrcm", "--precond", "center", "--nx", "13", "--train-grid", "6,6",
                "--nmax", "5", "--seed", "11", "--out-model", str(m)]
        assert run(capsys, *args)[0] == 0
        paths.append(str(m) + ".history.csv")
    assert open(paths[0], "rb").read() == open(paths[1], "rb").read()


def test_training_failure_exit_code(tmp_path, capsys, monkeypatch):
    from redcolloc.exceptions import GreedyAbort

    def abort(problem, Xi, *a, progress=None, **k):
        from redcolloc.greedy import GreedyRound
        progress(GreedyRound(1, np.array([0.5]), 1.0))
        raise GreedyAbort("reduced Newton failed")

    monkeypatch.setattr(cli, "train_ercm_burgers", abort)
    code, _, err = run(capsys, "train", "--method", "ercm-burgers", "--nx", "17", "--train-grid", "5",
                       "--out-model", str(tmp_path / "b.rcm"))
    assert code == 3 and "numerical failure" in err
    assert (tmp_path / "b.rcm.history.csv").read_text().count("\n") == 2
    assert not (tmp_path / "b.rcm").exists()


def test_burgers_train_and_query(tmp_path, capsys):
    m = tmp_path / "b.rcm"
    assert run(capsys, "train", "--method", "ercm-burgers", "--nx", "33", "--train-grid", "17", "--nmax", "6",
               "--out-model", str(m))[0] == 0
    rows = read_csv(run(capsys, "query", "--model", str(m), "--mu", "0.9", "--mu", "1.7", "--check-truth")[1])
    assert all(float(r["l2_error"]) < 1e-5 for r in rows)


def test_study_stability_and_flags_from(tmp_path, capsys):
    flags = tmp_path / "flags.txt"
    flags.write_text("--study\nstability\n--nx\n13\n--param-grid\n4,4\n--out-dir\n" + str(tmp_path / "st") + "\n")
    code, out, _ = run(capsys, "--threads", "2", "study", "--flags-from", str(flags),
                       "--precond", "none,center,interp")
    assert code == 0
    assert sorted(p.rsplit("/", 1)[1] for p in out.split()) == [
        "stability_center.pgm", "stability_interp_q1.pgm", "stability_none.pgm"]


def test_paper_profile_is_announced(monkeypatch, capsys):
    seen = {}
    monkeypatch.setattr(studies, "run_study", lambda name, cfg: seen.update(name=name, cfg=cfg) or [])
    with pytest.warns(RuntimeWarning, match="hours"):
        code = cli.main(["study", "--profile", "paper", "--study", "convergence"])
    assert code == 0
    assert seen["cfg"].sample_count == 1057 and seen["cfg"].nx == 81


@pytest.fixture(scope="module")
def default_models(tmp_path_factory):
    d = tmp_path_factory.mktemp("defaults")
    out = {}
    for kind in ("interp", "interp-diag"):
        path = d / f"{kind}.rcm"
        assert cli.main(["train", "--method", "ercm", "--precond", kind, "--nmax", "20",
                         "--out-model", str(path)]) == 0
        out[kind] = path
    return out


def test_default_ercm_training_bounds(default_models, capsys):
    man = json.loads(run(capsys, "model-info", "--model", str(default_models["interp"]))[1])
    assert man["nx"] == 41 and man["N"] <= 20 and len(man["reduced_points"]) <= 20


def _final_max_delta(path):
    return float(read_csv(open(str(path) + ".history.csv").read())[-1]["max_delta"])


@pytest.mark.xfail(strict=True, reason="each preconditioner measures the residual in its own scale; the diagonal "
                                        "variant's estimates are smaller although its errors are larger")
def test_diagonal_variant_has_larger_final_estimate(default_models):
    assert _final_max_delta(default_models["interp-diag"]) > _final_max_delta(default_models["interp"])


def test_diagonal_variant_has_larger_true_error(default_models):
    from redcolloc.archive import load_model
    from redcolloc.reduced import reconstruct, solve_batch
    from redcolloc.truth import l2_norm

    p = build_problem("diffusion2d", 41)
    sample = studies.random_sample(p.domain, 64, 0)
    truth = studies.truth_snapshots(p, sample, threads=4)
    worst = {}
    for kind, path in default_models.items():
        m = load_model(path)
        worst[kind] = l2_norm(reconstruct(m, solve_batch(m, sample)[0]) - truth, p.grid).max()
    assert worst["interp-diag"] > worst["interp"]
