"""End-to-end command-line pipeline on a miniature problem size."""

import pytest

from irriloop import cli

TINY_INI = """\
[train]
epochs = 2
batch_size = 32
hidden = 4

[zmpc]
iters = 10
restarts = 1

[run]
n_sim = 2
richards_substep_s = 3600.0
"""

SCALE = "600"  # shrinks every dataset to ~50-166 samples


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Artifacts from datagen + train at miniature scale, shared by the
    pipeline tests below."""
    root = tmp_path_factory.mktemp("cliws")
    ini = root / "tiny.ini"
    ini.write_text(TINY_INI)
    out = root / "artifacts"
    common = ["--config", str(ini), "--seed", "0", "--out", str(out),
              "--scale", SCALE]
    assert cli.main(["datagen", *common]) == 0
    assert cli.main(["train", "--which", "all", *common]) == 0
    return {"root": root, "ini": ini, "out": out, "common": common}


class TestDatagen:
    def test_outputs_present(self, workspace):
        ddir = workspace["out"] / "datasets"
        for name in ("m1", "m2", "m3", "agg"):
            for role in ("train", "val"):
                assert (ddir / f"{name}_{role}.csv").exists()
                assert (ddir / f"{name}_{role}.meta.json").exists()
        assert (workspace["out"] / "manifest_datagen.json").exists()

    def test_rerun_is_deterministic(self, workspace, tmp_path):
        out2 = tmp_path / "again"
        args = ["datagen", "--config", str(workspace["ini"]), "--seed", "0",
                "--out", str(out2), "--scale", SCALE]
        assert cli.main(args) == 0
        a = (workspace["out"] / "datasets" / "m2_train.csv").read_bytes()
        b = (out2 / "datasets" / "m2_train.csv").read_bytes()
        assert a == b


class TestTrain:
    def test_model_files_present(self, workspace):
        mdir = workspace["out"] / "models"
        for name in ("m1", "m2", "m3", "aggregator"):
            assert (mdir / "two_layer" / f"{name}.bin").exists()
        assert (mdir / "two_layer" / "surrogate.json").exists()
        assert (mdir / "baseline" / "surrogate.json").exists()
        for name in ("m1", "m2", "m3", "agg", "baseline"):
            hist = (mdir / f"history_{name}.csv").read_text().strip()
            assert hist.split("\n")[0] == "epoch,train_loss,val_loss"
            # header + initial evaluation + 2 training epochs
            assert len(hist.split("\n")) == 4

    def test_same_seed_reproduces_weights_bytewise(self, workspace):
        target = workspace["out"] / "models" / "two_layer" / "m1.bin"
        before = target.read_bytes()
        assert cli.main(["train", "--which", "m1", *workspace["common"]]) == 0
        assert target.read_bytes() == before

    def test_missing_datasets_is_runtime_error(self, workspace, tmp_path):
        code = cli.main(["train", "--config", str(workspace["ini"]),
                         "--out", str(tmp_path / "empty")])
        assert code == 3


class TestValidateAndCorrection:
    def test_validate_writes_table(self, workspace):
        assert cli.main(["validate", "--stride", "2",
                         *workspace["common"]]) == 0
        lines = (workspace["out"] / "validation" /
                 "validation.csv").read_text().strip().split("\n")
        assert lines[0] == "model,step,nrmse"
        models = {ln.split(",")[0] for ln in lines[1:]}
        assert models == {"m1", "m2", "m3", "two_layer", "single_lstm"}
        assert len(lines) == 1 + 5 * 3  # each model at 1/10/20 steps

    def test_correct_eval_single_kind(self, workspace):
        assert cli.main(["correct-eval", "--kind", "single_bias", "--f", "2",
                         "--stride", "4", *workspace["common"]]) == 0
        lines = (workspace["out"] / "mismatch" /
                 "correction.csv").read_text().strip().split("\n")
        assert lines[0] == "kind,f,upsilon"
        kinds = [ln.split(",")[0] for ln in lines[1:]]
        assert kinds == ["none", "single_bias"]


class TestClosedLoopCommands:
    def test_zmpc_run(self, workspace):
        assert cli.main(["zmpc-run", "--name", "demo",
                         *workspace["common"]]) == 0
        rdir = workspace["out"] / "runs" / "demo"
        traj = (rdir / "trajectory.csv").read_text().strip().split("\n")
        assert traj[0] == "t_s,u_mps,y_true,y_meas,zone_lo,zone_hi,P_mps,ET0_mps"
        assert len(traj) == 1 + 2  # n_sim = 2
        assert (rdir / "metrics.csv").exists()

    def test_battery(self, workspace):
        cdir = workspace["root"] / "battery_cfgs"
        cdir.mkdir(exist_ok=True)
        (cdir / "a_flat.ini").write_text(TINY_INI)
        (cdir / "b_shrink.ini").write_text(
            TINY_INI.replace("iters = 10", "mu = 0.5\niters = 10"))
        assert cli.main(["battery", "--configs", str(cdir),
                         *workspace["common"]]) == 0
        lines = (workspace["out"] / "battery.csv").read_text().strip()
        rows = lines.split("\n")
        assert len(rows) == 3
        assert {r.split(",")[0] for r in rows[1:]} == {"a_flat", "b_shrink"}


class TestReport:
    def test_report_written_and_deterministic(self, workspace, capsys):
        assert cli.main(["report", *workspace["common"]]) == 0
        first = (workspace["out"] / "report.txt").read_text()
        capsys.readouterr()
        assert cli.main(["report", *workspace["common"]]) == 0
        assert (workspace["out"] / "report.txt").read_text() == first
        assert "NRMSE" in first and capsys.readouterr().out == first

    def test_report_without_artifacts_fails(self, tmp_path):
        assert cli.main(["report", "--out", str(tmp_path / "nothing")]) == 3


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[zmpc]\nwat = 1\n")
        assert cli.main(["datagen", "--config", str(bad),
                         "--out", str(tmp_path)]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["datagen", "--config", str(tmp_path / "absent.ini"),
                         "--out", str(tmp_path)]) == 2


class TestHelpers:
    def test_pct_improvement(self):
        assert cli.pct_improvement(0.08, 0.04) == pytest.approx(50.0)
        assert cli.pct_improvement(0.04, 0.08) == pytest.approx(-100.0)
        with pytest.raises(ValueError):
            cli.pct_improvement(0.0, 1.0)
