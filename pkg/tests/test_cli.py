from pathlib import Path


from drbsgt.cli import main

ROOT = Path(__file__).resolve().parents[1]


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_desk_constants(capsys):
    code = main(["validate", "--config", str(ROOT / "configs" / "logistic_desk.yaml")])
    out = capsys.readouterr().out
    assert code == 0
    assert "gamma = 10, Gamma = 10000" in out
    assert "Gamma > gamma" in out and "spectral" in out


def test_missing_config_exit_1(tmp_path, capsys):
    missing = tmp_path / "absent.yaml"
    assert main(["run", "--config", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_unknown_key_exit_1(tmp_path, capsys):
    p = write(tmp_path, "horizon: 10\nstepsize: 3\n")
    assert main(["run", "--config", p]) == 1
    assert "stepsize" in capsys.readouterr().err


def test_malformed_yaml_exit_1(tmp_path):
    p = write(tmp_path, "horizon: [1, 2\n")
    assert main(["run", "--config", p]) == 1


def test_unknown_flag_exit_1(tmp_path, capsys):
    p = write(tmp_path, "horizon: 10\n")
    assert main(["run", "--config", p, "--bogus"]) == 1
    assert "--bogus" in capsys.readouterr().err


def test_selftest_exit_0(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3


def test_run_writes_outputs_and_is_repeatable(tmp_path):
    p = write(tmp_path, "horizon: 120\npaths: 2\ndense_until: 50\nper_decade: 10\n")
    for name in ("a", "b"):
        assert main(["run", "--config", p, "--out", str(tmp_path / name), "--seed", "3", "--quiet"]) == 0
    for f in ("series.csv", "aggregate.csv", "summary.txt", "schedule_report.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "master_seed: 3" in (tmp_path / "a" / "summary.txt").read_text()


def test_paths_flag(tmp_path):
    p = write(tmp_path, "horizon: 20\npaths: 5\n")
    assert main(["run", "--config", p, "--paths", "2", "--out", str(tmp_path / "o"), "--quiet"]) == 0
    rows = (tmp_path / "o" / "series.csv").read_text().splitlines()[1:]
    assert {r.split(",")[0] for r in rows} == {"0", "1"}


def test_compare(tmp_path, capsys):
    a = write(tmp_path, "algorithm: drbsgt\npaths: 2\n", "a.yaml")
    b = write(tmp_path, "algorithm: atc\n", "b.yaml")
    assert main(["compare", "--config", a, "--config", b, "--budget", "400", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "comparison.csv").read_text()
    assert "drbsgt" in text and "atc" in text


def test_compare_without_budget_exit_1(tmp_path):
    a = write(tmp_path, "paths: 1\n")
    assert main(["compare", "--config", a]) == 1


def test_runtime_error_exit_2(tmp_path):
    p = write(tmp_path, "graph: edge-list\nm: 4\nedges_file: " + str(tmp_path / "g.txt") + "\n")
    (tmp_path / "g.txt").write_text("0 1\n2 3\n")  # disconnected
    assert main(["run", "--config", p, "--quiet"]) == 2
