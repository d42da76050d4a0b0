import json

import pytest

from flowdrift.cli import main
from flowdrift.features import read_feature_csv
from flowdrift.flows import PROTO_UDP, write_packet_csv

from conftest import A, B, pkt


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out-dir", str(out), "--n-offline", "1500",
                 "--n-incoming", "1500", "--seed", "5"]) == 0
    return out


def run_args(synth_dir, out, *extra):
    return ["--offline_data", str(synth_dir / "offline.csv"),
            "--incoming_data", str(synth_dir / "incoming.csv"),
            "--output_dir", str(out), "--batch_size", "300", *extra]


def test_stats(synth_dir, capsys):
    assert main(["stats", str(synth_dir / "offline.csv"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["benign"] + doc["malicious"] == 1500


def test_split(synth_dir, tmp_path, capsys):
    assert main(["split", str(synth_dir / "incoming.csv"), "--train-out", str(tmp_path / "tr.csv"),
                 "--test-out", str(tmp_path / "te.csv"), "--seed", "1"]) == 0
    assert len(read_feature_csv(tmp_path / "tr.csv")) == 1350
    assert len(read_feature_csv(tmp_path / "te.csv")) == 150


def test_extract_packets(tmp_path, capsys):
    write_packet_csv([pkt(0.0, A, B, proto=PROTO_UDP), pkt(0.5, B, A, proto=PROTO_UDP),
                      pkt(1.0, ("10.0.0.9", 999), B, proto=PROTO_UDP)], tmp_path / "p.csv")
    assert main(["extract", "--packets", str(tmp_path / "p.csv"), "--out", str(tmp_path / "f.csv"),
                 "--attacker", "10.0.0.9=UDPFlood", "--origin", "BS1"]) == 0
    data = read_feature_csv(tmp_path / "f.csv")
    assert list(data.y) == [0, 1] and list(data.attack_type) == ["Benign", "UDPFlood"]
    assert data.X[0, 3] == 2  # f04: both packets of the first flow


def test_run_protocol_and_report(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run-protocol", *run_args(synth_dir, out, "--model", "perceptron,svm")]) == 0
    printed = capsys.readouterr().out
    assert "Incoming test before and after incremental learning" in printed
    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out == (out / "tables.txt").read_text()


def test_offline_then_incremental(synth_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train-offline", *run_args(synth_dir, out, "--model", "logistic")]) == 0
    ckpt = out / "checkpoints" / "logistic_offline.json"
    assert ckpt.exists()
    assert main(["train-incremental", *run_args(synth_dir, out, "--model", "logistic"),
                 "--checkpoint", str(ckpt)]) == 0
    assert "logistic: 5 batches" in capsys.readouterr().out
    assert (out / "curve_logistic.csv").exists()


def test_config_file_and_dotted_override(synth_dir, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model = perceptron\nearly_stop.enabled = true\n"
                   "early_stop.max_forgetting = 0.0\nearly_stop.patience = 1\n")
    out = tmp_path / "run"
    assert main(["run-protocol", "--config", str(cfg),
                 *run_args(synth_dir, out, "--early_stop.patience", "2")]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["early_stop.patience"] == 2


def test_bad_config_exit_code(synth_dir, tmp_path, capsys):
    assert main(["run-protocol", *run_args(synth_dir, tmp_path, "--model", "forest")]) == 2
    assert "unknown model" in capsys.readouterr().err


def test_missing_input_exit_code(tmp_path, capsys):
    assert main(["stats", str(tmp_path / "nope.csv")]) == 2
