import numpy as np
import pytest

from kaslift import cli
from kaslift.config import ModelConfig, format_config
from kaslift.kinematics import default_limb_table
from kaslift.model import init_params, save_checkpoint
from kaslift.skeleton import H36M, load_clip, save_clip

SMALL = ModelConfig(dim=16, layers=1, heads=2, limb_hidden=4, ffn_expansion=2)


@pytest.fixture(scope="module")
def clips(tmp_path_factory):
    out = tmp_path_factory.mktemp("clips")
    assert cli.main(["synth", "--out", str(out), "--clips", "1", "--frames", "27", "--seed", "3"]) == 0
    return out


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_synth_writes_one_clip_per_template(clips):
    files = sorted(clips.glob("*.kasf"))
    assert len(files) == 5
    pair = load_clip(files[0])
    assert pair.pose2d.data.shape == (27, 17, 3)
    assert pair.pose3d.data.shape == (27, 17, 3)
    assert pair.action in files[0].name


def test_synth_deterministic(tmp_path, clips):
    assert cli.main(["synth", "--out", str(tmp_path), "--clips", "1", "--seed", "3"]) == 0
    for f in sorted(clips.glob("*.kasf")):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_eval_pred_equal_gt_is_zero(capsys, clips):
    code, out = run(capsys, "eval", "--clips", clips, "--pred", clips)
    assert code == 0
    overall = out.out.strip().splitlines()[-1].split()
    assert overall[0] == "overall" and overall[2] == "0.00" and overall[3] == "0.00"


def test_eval_writes_reports(capsys, clips, tmp_path):
    code, _ = run(capsys, "eval", "--clips", clips, "--pred", clips, "--out", tmp_path, "--no-scale-align")
    assert code == 0
    csv = (tmp_path / "report.csv").read_text(encoding="utf-8").splitlines()
    assert csv[0] == "action,clips,mpjpe_mm,p_mpjpe_mm"
    fields = csv[-1].split(",")
    assert fields[:3] == ["overall", "5", "0.0"]
    assert float(fields[3]) < 1e-9


def test_unknown_flag_exits_1(capsys):
    code = None
    with pytest.raises(SystemExit) as e:
        cli.main(["synth", "--out", "x", "--bogus"])
    code = e.value.code
    assert code == 1
    assert "--bogus" in capsys.readouterr().err


def test_missing_files_exit_1(capsys, tmp_path, clips):
    code, out = run(capsys, "eval", "--clips", tmp_path / "nope", "--pred", clips)
    assert code == 1 and "nope" in out.err
    code, out = run(capsys, "infer", "--checkpoint", tmp_path / "missing.kasf", "--input", "x", "--out", "y")
    assert code == 1 and "--checkpoint" in out.err and "missing.kasf" in out.err
    code, out = run(capsys, "train", "--config", tmp_path / "cfg.txt", "--train", clips, "--out", tmp_path)
    assert code == 1 and "--config" in out.err


def test_bad_config_exit_1(capsys, tmp_path, clips):
    cfg = tmp_path / "bad.txt"
    cfg.write_text("dim = 16\nwobble = 3\n", encoding="utf-8")
    code, out = run(capsys, "train", "--config", cfg, "--train", clips, "--out", tmp_path / "o")
    assert code == 1 and "wobble" in out.err


def test_corrupt_checkpoint_exit_1(capsys, tmp_path, clips):
    bad = tmp_path / "bad.kasf"
    bad.write_bytes(b"NOPE1234")
    code, out = run(capsys, "eval", "--clips", clips, "--checkpoint", bad)
    assert code == 1


def test_divergence_exit_2(capsys, tmp_path, clips):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(format_config(SMALL) + "epochs = 1\nbatch_size = 1\nlr = 1e300\nwarmup_start_lr = 1e300\n", encoding="utf-8")
    code, out = run(capsys, "train", "--config", cfg, "--train", clips, "--out", tmp_path / "o")
    assert code == 2, out.err
    assert "epoch" in out.err and "batch" in out.err


def test_infer_roundtrip(capsys, tmp_path, clips):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(format_config(SMALL), encoding="utf-8")
    ckpt = tmp_path / "m.kasf"
    save_checkpoint(init_params(SMALL, default_limb_table(H36M), 0), ckpt)
    src = sorted(clips.glob("*.kasf"))[0]
    code, _ = run(capsys, "infer", "--config", cfg, "--checkpoint", ckpt, "--input", src, "--out", tmp_path / "p.kasf")
    assert code == 0
    pred = load_clip(tmp_path / "p.kasf")
    assert pred.pose2d is None and pred.pose3d.data.shape == (27, 17, 3)
    assert np.all(pred.pose3d.data[:, 0] == 0)


def test_train_then_eval_beats_untrained(capsys, tmp_path):
    data = tmp_path / "data"
    assert cli.main(["synth", "--out", str(data), "--clips", "1", "--frames", "9", "--seed", "1",
                     "--noise-std", "0"]) == 0
    for f in sorted(data.glob("*.kasf"))[4:]:
        f.unlink()
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(format_config(ModelConfig(frames=9, dim=16, layers=1, heads=2, limb_hidden=4,
                                             ffn_expansion=2, lambda_v=1.0))
                   + "epochs = 40\nbatch_size = 2\nwarmup_epochs = 1\nlr = 0.003\nearly_stop_patience = 40\n",
                   encoding="utf-8")
    untrained = tmp_path / "untrained.kasf"
    from kaslift.config import load_config
    mc, _ = load_config(cfg)
    save_checkpoint(init_params(mc, default_limb_table(H36M), 0), untrained)
    base_code, base = run(capsys, "eval", "--config", cfg, "--clips", data, "--checkpoint", untrained)
    code, _ = run(capsys, "train", "--config", cfg, "--train", data, "--out", tmp_path / "run", "--seed", "0",
                  "--no-flip")
    assert base_code == 0 and code == 0
    assert (tmp_path / "run" / "history.csv").is_file()
    code, trained = run(capsys, "eval", "--config", cfg, "--clips", data,
                        "--checkpoint", tmp_path / "run" / "checkpoint.kasf")
    assert code == 0
    before = float(base.out.strip().splitlines()[-1].split()[2])
    after = float(trained.out.strip().splitlines()[-1].split()[2])
    assert after <= 0.5 * before, (before, after)


def test_gradcheck_reports_groups(capsys):
    code, out = run(capsys, "gradcheck", "--seed", "4")
    assert code == 0
    assert "gradcheck passed" in out.out
    assert "op:mhca" in out.out and "model:layers.0" in out.out


def test_selftest(capsys):
    code, out = run(capsys, "selftest")
    assert code == 0
    lines = out.out.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_threads_env(capsys, monkeypatch, clips):
    monkeypatch.setenv("KASLIFT_THREADS", "1")
    code, _ = run(capsys, "eval", "--clips", clips, "--pred", clips)
    assert code == 0
    monkeypatch.setenv("KASLIFT_THREADS", "zero")
    code, out = run(capsys, "eval", "--clips", clips, "--pred", clips)
    assert code == 1 and "KASLIFT_THREADS" in out.err
