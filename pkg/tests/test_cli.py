import subprocess
import sys

import numpy as np
import pytest

from skewfree.cli import main, read_csv
from skewfree.moments import compute_mean
from skewfree.pipeline import load_model


def load_scores(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data, model = root / "demo.csv", root / "model.json"
    assert main(["demo", "--output", str(data)]) == 0
    assert main(["fit", "--input", str(data), "--model", str(model), "--quiet"]) == 0
    return root, data, model


def test_demo_defaults(fitted):
    rows = np.loadtxt(fitted[1], delimiter=",", skiprows=1)
    assert rows.shape == (10_004, 3)
    assert rows[:, 2].sum() == 4
    assert open(fitted[1]).readline().strip() == "x,y,is_anomaly"


def test_demo_is_byte_identical_per_seed(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["demo", "--output", str(path), "--points", "300", "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_demo_without_anomalies(tmp_path):
    path = tmp_path / "d.csv"
    assert main(["demo", "--output", str(path), "--anomalies", "0", "--points", "50"]) == 0
    assert load_scores(path)[:, 2].sum() == 0


def test_demo_to_unwritable_path(tmp_path):
    assert main(["demo", "--output", str(tmp_path / "missing" / "d.csv")]) == 1


def test_fit_prints_summary(fitted, capsys):
    root, data, _ = fitted
    code = main(["fit", "--input", str(data), "--model", str(root / "again.json"), "--quiet"])
    out = capsys.readouterr().out
    assert code == 0
    fields = dict(item.split("=") for item in out.split())
    assert fields["N"] == "2" and fields["M"] == "3" and fields["status"] == "Converged"
    assert float(fields["residual_norm"]) <= 1e-3
    assert (root / "again.json").read_bytes() == fitted[2].read_bytes()


def test_fit_reports_non_numeric_cell(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,oops\n")
    assert main(["fit", "--input", str(path), "--model", str(tmp_path / "m.json")]) == 1
    err = capsys.readouterr().err
    assert "row 3" in err and "column 2" in err


def test_fit_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    assert main(["fit", "--input", str(path), "--model", str(tmp_path / "m.json")]) == 1


def test_fit_too_few_rows(tmp_path):
    path = tmp_path / "small.csv"
    np.savetxt(path, np.random.default_rng(0).normal(size=(20, 5)), delimiter=",")
    assert main(["fit", "--input", str(path), "--model", str(tmp_path / "m.json")]) == 2


def test_fit_missing_file(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "nope.csv"),
                 "--model", str(tmp_path / "m.json")]) == 1


def test_fit_not_converged_exit_code(fitted, tmp_path):
    code = main(["fit", "--input", str(fitted[1]), "--model", str(tmp_path / "m.json"),
                 "--max-iters", "1", "--quiet"])
    assert code == 3
    assert load_model(tmp_path / "m.json").n == 2


def test_fit_progress_goes_to_stderr(fitted, tmp_path, capsys):
    main(["fit", "--input", str(fitted[1]), "--model", str(tmp_path / "m.json"),
          "--tol", "1e-300", "--max-iters", "200"])
    err = capsys.readouterr().err
    assert "iteration 100" in err


def test_bad_option_is_input_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit", "--input", "x.csv"])
    assert info.value.code == 1


def test_transform_fit_data_is_centered(fitted, tmp_path):
    root, data, model = fitted
    out = tmp_path / "t.csv"
    assert main(["transform", "--input", str(data), "--model", str(model),
                 "--output", str(out)]) == 0
    values = np.loadtxt(out, delimiter=",", skiprows=1)
    assert values.shape == (10_004, 2)
    assert np.abs(compute_mean(values)).max() <= 1e-8


def test_transform_header_only_input(fitted, tmp_path):
    src, out = tmp_path / "empty.csv", tmp_path / "t.csv"
    src.write_text("x,y\n")
    assert main(["transform", "--input", str(src), "--model", str(fitted[2]),
                 "--output", str(out)]) == 0
    assert out.read_text() == "y1,y2\n"


def test_transform_dimension_mismatch(fitted, tmp_path):
    src = tmp_path / "three.csv"
    np.savetxt(src, np.ones((4, 3)), delimiter=",")
    assert main(["transform", "--input", str(src), "--model", str(fitted[2]),
                 "--output", str(tmp_path / "t.csv")]) == 2


def test_transform_with_broken_model(fitted, tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{}")
    assert main(["transform", "--input", str(fitted[1]), "--model", str(bad),
                 "--output", str(tmp_path / "t.csv")]) == 1


def test_score_ranks_anomalies_first(fitted, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["score", "--input", str(fitted[1]), "--model", str(fitted[2]),
                 "--output", str(out)]) == 0
    scores = load_scores(out)
    assert open(out).readline().strip() == "row_index,score"
    assert set(scores[:4, 0].astype(int)) == {10_000, 10_001, 10_002, 10_003}
    assert np.all(np.diff(scores[:, 1]) <= 0)


def test_score_top_zero(fitted, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["score", "--input", str(fitted[1]), "--model", str(fitted[2]),
                 "--output", str(out), "--top", "0"]) == 0
    assert out.read_text() == "row_index,score\n"


def test_score_identical_rows_tie(fitted, tmp_path):
    src, out = tmp_path / "same.csv", tmp_path / "s.csv"
    np.savetxt(src, np.tile([0.2, 0.3], (6, 1)), delimiter=",")
    assert main(["score", "--input", str(src), "--model", str(fitted[2]),
                 "--output", str(out)]) == 0
    scores = load_scores(out)[:, 1]
    assert np.all(scores == scores[0])


def test_csv_values_round_trip_exactly(fitted, tmp_path):
    _, values = read_csv(fitted[1])
    from skewfree.pipeline import DemoSpec, generate_demo
    points, _ = generate_demo(DemoSpec())
    np.testing.assert_array_equal(values, points)


def test_columns_option(tmp_path):
    src = tmp_path / "c.csv"
    src.write_text("a,b,c\n1,2,3\n4,5,6\n")
    names, values = read_csv(src, "c,0")
    assert names == ["c", "a"]
    np.testing.assert_array_equal(values, [[3, 1], [6, 4]])


def test_info(fitted, capsys):
    assert main(["info", "--model", str(fitted[2])]) == 0
    assert "N=2 M=3" in capsys.readouterr().out


def test_file_level_pipeline_in_subprocess(tmp_path):
    def run(*args):
        return subprocess.run([sys.executable, "-m", "skewfree", *args],
                              capture_output=True, text=True)

    data, model, out = tmp_path / "d.csv", tmp_path / "m.json", tmp_path / "s.csv"
    assert run("demo", "--output", str(data), "--seed", "43").returncode == 0
    fit = run("fit", "--input", str(data), "--model", str(model))
    assert fit.returncode == 0, fit.stderr
    assert run("score", "--input", str(data), "--model", str(model), "--output", str(out),
               "--top", "4").returncode == 0
    labels = np.loadtxt(data, delimiter=",", skiprows=1)[:, 2]
    top = load_scores(out)[:, 0].astype(int)
    assert set(top) == set(np.flatnonzero(labels))
