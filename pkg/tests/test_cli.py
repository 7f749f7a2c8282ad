import json
from pathlib import Path

import numpy as np
import pytest

from bal.cli import main
from bal.model import EventKind
from bal.output import EVENT_RECORD, read_csv, read_events

GOLDEN = Path(__file__).parent / "fixtures" / "golden"

TRAJ = """\
[system]
N = 2
hop = 1.0
gamma_g = 1.0
kappa_c = 1.0
kappa_l = 1.0

[trajectories]
K = 12
T = 2.0
event_log = true
n_checkpoints = 11
"""


def _run(argv):
    return main([str(a) for a in argv])


def test_circuit_matches_golden(tmp_path):
    assert _run(["circuit", "--out", tmp_path]) == 0
    got = (tmp_path / "circuit.csv").read_text()
    assert got == (GOLDEN / "circuit.csv").read_text()
    rep = json.loads((tmp_path / "circuit_report.json").read_text())
    assert rep["hierarchy"]["satisfied"] is True


def test_phase_diagram_matches_golden(tmp_path):
    assert _run(["phase-diagram", "--config", GOLDEN / "phase_small.toml", "--out", tmp_path]) == 0
    assert (tmp_path / "phase_diagram.csv").read_text() == (GOLDEN / "phase_diagram.csv").read_text()


def test_metadata_sidecar(tmp_path):
    assert _run(["circuit", "--out", tmp_path, "--seed", "5", "--plot"]) == 0
    meta = json.loads((tmp_path / "circuit.meta.json").read_text())
    for key in ("tool", "version", "config", "config_hash", "seed", "threads",
                "wall_time_s", "outputs", "assumptions"):
        assert key in meta
    assert meta["seed"] == 5
    m, header, _ = read_csv(tmp_path / "circuit.csv")
    assert m["config_hash"] == meta["config_hash"] and header == ["quantity", "value"]
    for name in meta["outputs"]:
        assert (tmp_path / name).exists()


def test_trajectories_identical_across_thread_counts(tmp_path):
    cfg = tmp_path / "t.toml"
    cfg.write_text(TRAJ)
    outs = []
    for th in (1, 3):
        d = tmp_path / f"th{th}"
        assert _run(["trajectories", "--config", cfg, "--out", d, "--threads", th, "--seed", 11]) == 0
        outs.append(d)
    for name in ("ensemble_means.csv", "trajectories_final.csv", "events_index.csv", "events.bin"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    d = tmp_path / "other_seed"
    assert _run(["trajectories", "--config", cfg, "--out", d, "--seed", 12]) == 0
    assert (d / "events.bin").read_bytes() != (outs[0] / "events.bin").read_bytes()


def test_event_log_roundtrip(tmp_path):
    cfg = tmp_path / "t.toml"
    cfg.write_text(TRAJ)
    assert _run(["trajectories", "--config", cfg, "--out", tmp_path, "--seed", 3]) == 0
    raw = (tmp_path / "events.bin").read_bytes()
    assert len(raw) % 11 == 0
    _, header, rows = read_csv(tmp_path / "events_index.csv")
    assert header == ["index", "seed", "offset", "count"]
    _, fh, finals = read_csv(tmp_path / "trajectories_final.csv")
    total = 0
    for row, fin in zip(rows, finals):
        off, cnt = int(row[2]), int(row[3])
        ev = read_events(tmp_path / "events.bin", off, cnt)
        assert ev.dtype == EVENT_RECORD and ev.size == cnt
        assert cnt == int(fin[fh.index("n_events")])
        assert np.all(np.diff(ev["t"]) >= 0) and np.all(ev["t"] <= 2.0)
        assert set(ev["kind"].tolist()) <= {int(k) for k in EventKind}
        total += cnt
    assert total * 11 == len(raw)


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[system]\nN = 3\nhop = -1.0\ngamma_g = 1.0\nkappa_c = 1.0\nkappa_l = 1.0\n")
    assert _run(["meanfield", "--config", bad, "--out", tmp_path]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "system.hop" and err["line"] == 3
    bad.write_text("[system\n")
    assert _run(["meanfield", "--config", bad]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ParseError"


def test_wrong_experiment_in_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[run]\nexperiment = "circuit"\n')
    assert _run(["meanfield", "--config", cfg, "--out", tmp_path]) == 2


def test_runtime_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("not a directory")
    assert _run(["circuit", "--out", blocker]) == 1
    assert json.loads(capsys.readouterr().err)["kind"] == "runtime"


def test_bad_flags_rejected():
    with pytest.raises(SystemExit):
        main(["circuit", "--seed", "-4"])
    with pytest.raises(SystemExit):
        main(["circuit", "--threads", "0"])


def test_env_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("BAL_OUT", str(tmp_path / "envout"))
    assert main(["circuit"]) == 0
    assert (tmp_path / "envout" / "circuit.csv").exists()
    # an explicit flag still wins
    assert main(["circuit", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "circuit.csv").exists()


def test_meanfield_writes_plot(tmp_path):
    assert _run(["meanfield", "--out", tmp_path, "--plot"]) == 0
    svg = sorted(tmp_path.glob("*.svg"))
    assert svg and svg[0].read_text().lstrip().startswith("<?xml")
    meta = json.loads((tmp_path / "meanfield.meta.json").read_text())
    assert meta["phase"]["label"] == "SelfPulsing"
    assert meta["phase"]["tau"] == pytest.approx(1.087, abs=0.01)
