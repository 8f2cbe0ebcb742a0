import pytest

from rnntrack.cli import main

TINY = ["--set", "motion_hidden=8", "--set", "update_hidden=4", "--set", "batch_size=2"]


def gen(tmp_path, name="data", seed=7, n=2):
    out = tmp_path / name
    assert main(["gen-data", "--seed", str(seed), "--sequences", str(n), "--out", str(out)]) == 0
    return out


def test_gen_data_files_and_determinism(tmp_path):
    a, b = gen(tmp_path, "a"), gen(tmp_path, "b")
    names = sorted(p.name for p in a.iterdir())
    assert names == ["seq0000-det.csv", "seq0000-gt.csv", "seq0000-prov.csv",
                     "seq0001-det.csv", "seq0001-gt.csv", "seq0001-prov.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    c = gen(tmp_path, "c", seed=8)
    assert (a / names[0]).read_bytes() != (c / names[0]).read_bytes()


def test_eval_of_ground_truth_is_perfect(tmp_path, capsys):
    data = gen(tmp_path)
    gt = data / "seq0000-gt.csv"
    summary = tmp_path / "s.csv"
    assert main(["eval", "--gt", str(gt), "--res", str(gt), "--out", str(summary),
                 "--name", "seq0"]) == 0
    assert "MOTA=100.0" in capsys.readouterr().out
    assert summary.read_text().startswith("Name,Rcll,Prcn,MT,ML,FP,FN,IDs,FM,MOTA,MOTP\nseq0,100.0000")


def test_train_track_eval_pipeline(tmp_path, capsys):
    data = gen(tmp_path)
    model = tmp_path / "m.ckpt"
    hist = tmp_path / "h.csv"
    assert main(["train-motion", "--seed", "1", "--iterations", "5", "--out", str(model),
                 "--history", str(hist), *TINY]) == 0
    assert model.exists() and hist.exists()
    res, ex = tmp_path / "r.csv", tmp_path / "e.csv"
    assert main(["track", "--det", str(data / "seq0000-det.csv"), "--model", str(model),
                 "--out", str(res), "--existence-out", str(ex), "--frames", "20"]) == 0
    assert ex.read_text().startswith("frame,id,existence,source")
    assert main(["eval", "--gt", str(data / "seq0000-gt.csv"), "--res", str(res)]) == 0
    assert "MOTA=" in capsys.readouterr().out


@pytest.mark.parametrize("method", ["kalman-ha", "kalman-ha2"])
def test_track_baselines(tmp_path, method):
    data = gen(tmp_path)
    res = tmp_path / "r.csv"
    assert main(["track", "--method", method, "--det", str(data / "seq0001-det.csv"),
                 "--out", str(res)]) == 0
    assert res.exists()


def test_track_without_model_is_usage_error(tmp_path, capsys):
    data = gen(tmp_path)
    code = main(["track", "--det", str(data / "seq0000-det.csv"), "--out", str(tmp_path / "r")])
    assert code == 2
    assert "--model" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["frobnicate"], ["eval", "--bogus"], []])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3,4\n")
    assert main(["eval", "--gt", str(bad), "--res", str(bad)]) == 1
    assert "line 1" in capsys.readouterr().err
    assert main(["eval", "--gt", str(tmp_path / "missing"), "--res", str(bad)]) == 1
    assert main(["gen-data", "--out", str(tmp_path / "x"), "--set", "nope=1"]) == 1
    assert main(["gen-data", "--out", str(tmp_path / "x"), "--set", "detection_prob=2"]) == 1


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--instances", "2"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4


def test_bench_command(capsys):
    assert main(["bench", "--frames", "20", "--targets", "5", *TINY]) == 0
    assert "fps=" in capsys.readouterr().out
