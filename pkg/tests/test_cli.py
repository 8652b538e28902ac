import hashlib
import json
import shutil
import subprocess
import threading

import pytest

from evoccupancy import cli, datagen
from evoccupancy.experiment import select_training_year
from evoccupancy.featurize import encode_range
from evoccupancy.model import load, predict_many
from evoccupancy.domain import year_span


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Dataset, a quick model and a one-week forecast ledger shared by the module."""
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["generate", "--out", str(d / "ds.csv")]) == 0
    assert cli.main(["train", "--dataset", str(d / "ds.csv"), "--out", str(d / "m.bin"), "--epochs", "20"]) == 0
    assert cli.main(["run", "--dataset", str(d / "ds.csv"), "--model", str(d / "m.bin"),
                     "--from", "2018-03-05T00:00", "--to", "2018-03-12T00:00",
                     "--out", str(d / "fc.csv"), "--line-protocol", str(d / "fc.lp")]) == 0
    return d


def test_generate_deterministic(workdir, tmp_path):
    out = tmp_path / "again.csv"
    assert cli.main(["generate", "--out", str(out)]) == 0
    assert sha(out) == sha(workdir / "ds.csv")
    manifest = json.loads((workdir / "ds.csv.manifest.json").read_text())
    assert manifest["command"] == "generate"
    assert manifest["outputs"][str(workdir / "ds.csv")] == sha(out)
    assert abs(manifest["sessions"] - 1724) <= 172


def test_generate_seed_changes_output(workdir, tmp_path):
    out = tmp_path / "s7.csv"
    assert cli.main(["generate", "--out", str(out), "--seed", "7"]) == 0
    assert sha(out) != sha(workdir / "ds.csv")


def test_generate_zero_intensity_exit_2(tmp_path, capsys):
    out = tmp_path / "never.csv"
    zeros = ",".join(["0"] * 24)
    assert cli.main(["generate", "--out", str(out), "--set", f"hourly_weights={zeros}"]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_generate_with_shift(tmp_path):
    out = tmp_path / "shift.csv"
    assert cli.main(["generate", "--out", str(out), "--years", "2018,2019",
                     "--shift", "2019-06-03..2019-07-28*4"]) == 0
    manifest = json.loads((tmp_path / "shift.csv.manifest.json").read_text())
    assert "2019-06-03..2019-07-28*4" in manifest["config"]["generator"]


def test_train_auto_year_and_bit_identical(workdir, tmp_path):
    sessions = datagen.read_dataset(workdir / "ds.csv")
    manifest = json.loads((workdir / "m.bin.manifest.json").read_text())
    assert manifest["config"]["year"] == select_training_year(sessions)
    counts = {y: sum(s.start.year == y for s in sessions) for y in (2017, 2018, 2019)}
    assert counts[manifest["config"]["year"]] == max(counts.values())

    again = tmp_path / "m2.bin"
    assert cli.main(["train", "--dataset", str(workdir / "ds.csv"), "--out", str(again), "--epochs", "20"]) == 0
    assert again.read_bytes() == (workdir / "m.bin").read_bytes()


def test_trained_model_defined_on_test_features(workdir):
    model = load((workdir / "m.bin").read_bytes())
    p = predict_many(model, encode_range(*year_span(2018, inclusive=False)))
    assert ((p > 0) & (p < 1)).all()


def test_train_missing_year_exit_2(workdir, tmp_path):
    assert cli.main(["train", "--dataset", str(workdir / "ds.csv"), "--year", "2005",
                     "--out", str(tmp_path / "x.bin"), "--epochs", "1"]) == 2


def test_run_one_week(workdir):
    lines = (workdir / "fc.csv").read_text().splitlines()
    assert len(lines) == 1 + 10_080
    manifest = json.loads((workdir / "fc.csv.manifest.json").read_text())
    assert (manifest["issued"], manifest["resolved"], manifest["pending"]) == (10_080, 10_065, 15)
    assert manifest["updates"] == 10_080 // 15
    lp = (workdir / "fc.lp").read_text().splitlines()
    assert len(lp) == 2 * 10_080 and lp[0].startswith("occupancy,model=streaming prob=")


def test_run_no_update_columns_equal(workdir, tmp_path):
    out = tmp_path / "frozen.csv"
    assert cli.main(["run", "--dataset", str(workdir / "ds.csv"), "--model", str(workdir / "m.bin"),
                     "--from", "2018-03-05T00:00", "--to", "2018-03-06T00:00", "--out", str(out),
                     "--no-update"]) == 0
    rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
    assert len(rows) == 1440 and all(r[2] == r[3] for r in rows)


@pytest.mark.parametrize("flag", [["--horizon", "0"], ["--window", "0"], ["--speedup", "-1"]])
def test_run_bad_config_exit_2(workdir, tmp_path, flag):
    assert cli.main(["run", "--dataset", str(workdir / "ds.csv"), "--model", str(workdir / "m.bin"),
                     "--year", "2018", "--out", str(tmp_path / "x.csv"), *flag]) == 2


def test_run_rejects_corrupt_model(workdir, tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense")
    assert cli.main(["run", "--dataset", str(workdir / "ds.csv"), "--model", str(bad),
                     "--year", "2018", "--out", str(tmp_path / "x.csv")]) == 2


def test_evaluate_default_grid(workdir, tmp_path, capsys):
    out = tmp_path / "report.csv"
    assert cli.main(["evaluate", "--forecasts", str(workdir / "fc.csv"), "--out", str(out),
                     "--summary", str(tmp_path / "summary.txt"), "--pr-prefix", str(tmp_path / "pr_")]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "threshold,model,tp,fp,tn,fn,precision,recall,f1"
    assert len(lines) == 1 + 10
    summary = (tmp_path / "summary.txt").read_text()
    assert summary == capsys.readouterr().out
    assert "10065 resolved forecasts (15 unresolved excluded)" in summary

    streaming = [line.split(",") for line in lines[1:] if line.split(",")[1] == "streaming"]
    defined = [(float(r[8]), float(r[0])) for r in streaming if r[8] != "NA"]
    if defined:
        best_f1 = max(f for f, _ in defined)
        best_t = min(t for f, t in defined if f == best_f1)
        assert f"best streaming: threshold={best_t:g}" in summary
    assert (tmp_path / "pr_streaming.csv").read_text().startswith("threshold,precision,recall\n")
    assert (tmp_path / "pr_batch.csv").exists()


def test_evaluate_custom_thresholds(workdir, tmp_path):
    out = tmp_path / "r.csv"
    assert cli.main(["evaluate", "--forecasts", str(workdir / "fc.csv"), "--out", str(out),
                     "--thresholds", "0.1,0.2,0.3"]) == 0
    assert len(out.read_text().splitlines()) == 1 + 6


def test_evaluate_empty_ledger_exit_2(tmp_path):
    ledger = tmp_path / "empty.csv"
    ledger.write_text("issued_at,target,prob_streaming,prob_batch,actual\n")
    assert cli.main(["evaluate", "--forecasts", str(ledger), "--out", str(tmp_path / "r.csv")]) == 2
    unresolved = tmp_path / "unresolved.csv"
    unresolved.write_text("issued_at,target,prob_streaming,prob_batch,actual\n"
                          "2019-01-01T00:00,2019-01-01T00:15,0.5,0.5,\n")
    assert cli.main(["evaluate", "--forecasts", str(unresolved), "--out", str(tmp_path / "r.csv")]) == 2


def test_config_file_env_and_flag_precedence(workdir, tmp_path, monkeypatch):
    conf = tmp_path / "exp.conf"
    conf.write_text("# quick run\nhorizon = 30\nwindow = 60\n")
    out = tmp_path / "c.csv"
    base = ["run", "--dataset", str(workdir / "ds.csv"), "--model", str(workdir / "m.bin"),
            "--from", "2018-03-05T00:00", "--to", "2018-03-05T06:00", "--out", str(out)]

    monkeypatch.setenv(cli.CONFIG_ENV, str(conf))
    assert cli.main(base) == 0
    m = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    assert (m["config"]["horizon"], m["config"]["window"], m["pending"]) == (30, 60, 30)

    assert cli.main(base + ["--set", "horizon=5", "--window", "inf"]) == 0
    m = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    assert (m["config"]["horizon"], m["config"]["window"], m["updates"]) == (5, None, 0)

    monkeypatch.delenv(cli.CONFIG_ENV)
    assert cli.main(base + ["--config", str(conf), "--horizon", "7"]) == 0
    m = json.loads((tmp_path / "c.csv.manifest.json").read_text())
    assert (m["config"]["horizon"], m["config"]["window"]) == (7, 60)


def test_config_unknown_key_exit_2(workdir, tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = blue\n")
    assert cli.main(["evaluate", "--config", str(conf), "--forecasts", str(workdir / "fc.csv"),
                     "--out", str(tmp_path / "r.csv")]) == 2


def test_replay_serve_to_run_over_tcp(workdir, tmp_path):
    """A TCP-fed run must produce the same ledger as the in-process replay."""
    from socketserver import TCPServer

    server_ready = threading.Event()
    port = {}
    original = TCPServer.server_activate

    def activate(self):
        original(self)
        port["value"] = self.server_address[1]
        server_ready.set()

    span = ["--from", "2018-03-05T00:00", "--to", "2018-03-05T12:00"]
    TCPServer.server_activate = activate
    try:
        serve = threading.Thread(target=cli.main, args=(
            ["replay-serve", "--dataset", str(workdir / "ds.csv"), "--port", "0", "--once", *span],))
        serve.start()
        assert server_ready.wait(10)
    finally:
        TCPServer.server_activate = original
    tcp_out, local_out = tmp_path / "tcp.csv", tmp_path / "local.csv"
    assert cli.main(["run", "--source", f"tcp://127.0.0.1:{port['value']}", "--model", str(workdir / "m.bin"),
                     "--out", str(tcp_out)]) == 0
    serve.join(10)
    assert cli.main(["run", "--dataset", str(workdir / "ds.csv"), "--model", str(workdir / "m.bin"),
                     *span, "--out", str(local_out)]) == 0
    assert tcp_out.read_bytes() == local_out.read_bytes()


def test_console_script_installed(tmp_path):
    exe = shutil.which("evoccupancy")
    assert exe, "console script missing; install the package"
    done = subprocess.run([exe, "--help"], capture_output=True, text=True, timeout=60)
    assert done.returncode == 0
    for name in ("generate", "train", "run", "evaluate", "replay-serve"):
        assert name in done.stdout
    bad = subprocess.run([exe, "evaluate", "--forecasts", str(tmp_path / "missing.csv"),
                          "--out", str(tmp_path / "r.csv")], capture_output=True, text=True, timeout=60)
    assert bad.returncode == 2
