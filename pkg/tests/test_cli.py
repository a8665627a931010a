import pytest

from stochsteff.cli import main


def test_order(capsys):
    assert main(["order"]) == 0
    out = capsys.readouterr().out
    assert "Steffensen-BB" in out


def test_kaczmarz_check(capsys):
    assert main(["kaczmarz-check", "--rows", "20", "--cols", "8", "--iters", "60"]) == 0
    assert capsys.readouterr().out.count("max_rel_deviation") == 4


def test_prox_run(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["prox-run", "--n", "80", "--d", "6", "--outer-iters", "3", "--out", str(out)]) == 0
    assert out.read_text().startswith("outer_iter,")


def test_run_preset(tmp_path, capsys):
    rc = main(["run", "--preset", "SyntheticRidge", "--n", "50", "--d", "4", "--reps", "1",
               "--outer-iters", "2", "--out", str(tmp_path / "r")])
    assert rc == 0
    assert (tmp_path / "r" / "manifest.ini").is_file()
    assert "certified" in capsys.readouterr().out


def test_grid(capsys):
    assert main(["grid", "--n", "50", "--d", "4", "--outer-iters", "2", "--grid", "0.01,0.1"]) == 0
    assert "best eta" in capsys.readouterr().out


def test_missing_dataset_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("STOCHSTEFF_DATA_DIR", raising=False)
    assert main(["run", "--preset", "LogisticW6a", "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
