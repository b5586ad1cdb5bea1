import hashlib
import json

import numpy as np
import pytest

from faultloc import cli
from faultloc import io as fio
from faultloc.errors import NumericalFailure

SHORT = ["--set", "scenario.sim.duration=0.01", "--set", "scenario.fault.time=0.005",
         "--set", "scenario.line.segments=20", "--set", "scenario.fault.rf=2.0"]


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--out", str(out)] + SHORT) == 0
    return out


def test_simulate_outputs(simulated):
    rec = fio.read_signals(simulated / "signals.csv")
    assert rec.v1.shape[1] == 3 and rec.i2.shape[1] == 1 and rec.v3.shape[1] == 3
    assert rec.dt == pytest.approx(2e-6)
    header = (simulated / "signals.csv").read_text().splitlines()[1]
    assert header == "t,v1_a,v1_b,v1_c,i2_0,v3_a,v3_b,v3_c,i3_a,i3_b,i3_c"
    man = json.loads((simulated / "manifest.json").read_text())
    assert man["fault_node"] == 5 and man["snap_distance"] == pytest.approx(200.0)
    assert "scenario.fault.rf = 2.0" in (simulated / "config.txt").read_text()


def test_simulate_is_deterministic(simulated, tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path)] + SHORT) == 0
    for name in ("signals.csv", "truth.csv", "config.txt"):
        assert digest(tmp_path / name) == digest(simulated / name)


def test_fault_after_end_gives_zero_truth(tmp_path):
    args = SHORT + ["--set", "scenario.fault.time=0.02"]
    assert cli.main(["simulate", "--out", str(tmp_path)] + args) == 0
    assert np.all(fio.read_truth(tmp_path / "truth.csv").i4 == 0)


def test_localise_and_single_leg_sweep_agree(simulated, tmp_path, capsys):
    common = SHORT + ["--grid-points", "9", "--set", "sweep.rf=[2.0]"]
    assert cli.main(["localise", "--signals", str(simulated / "signals.csv"),
                     "--out", str(tmp_path / "loc")] + common) == 0
    assert "argmin J" in capsys.readouterr().out
    prof, man = fio.read_bundle(tmp_path / "loc")
    assert prof.d.size == 10 and 7.7e3 in prof.d
    assert man["config_hash"]
    assert cli.main(["sweep", "--out", str(tmp_path / "sw")] + common) == 0
    legs = list((tmp_path / "sw").glob("leg00_rf2"))
    assert len(legs) == 1
    prof2, _ = fio.read_bundle(legs[0])
    assert np.array_equal(prof.J, prof2.J) and np.array_equal(prof.Jt, prof2.Jt)
    assert (tmp_path / "sw" / "summary.csv").read_text().splitlines()[1].startswith("rf,status")


def test_passive_only_mode(simulated, tmp_path):
    assert cli.main(["localise", "--signals", str(simulated / "signals.csv"), "--out", str(tmp_path),
                     "--no-known-impedance", "--grid-points", "3"] + SHORT) == 0
    prof, _ = fio.read_bundle(tmp_path)
    assert np.all(np.isnan(prof.J)) and np.all(np.isfinite(prof.Jt))


def test_env_default_output(simulated, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["localise", "--signals", str(simulated / "signals.csv"),
                     "--grid-points", "2"] + SHORT) == 0
    assert (tmp_path / "localise" / "profile.csv").exists()


def test_exit_config_error(simulated, tmp_path):
    assert cli.main(["localise", "--signals", str(simulated / "signals.csv"), "--out", str(tmp_path),
                     "--grid-points", "0"] + SHORT) == 2
    assert cli.main(["simulate", "--out", str(tmp_path), "--set", "nope.key=1"]) == 2
    assert cli.main(["localise", "--signals", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2


def test_exit_assumption_violation(simulated, tmp_path):
    assert cli.main(["localise", "--signals", str(simulated / "signals.csv"), "--out", str(tmp_path),
                     "--grid-points", "2", "--set", "localiser.tail_guard=1.0"] + SHORT) == 4


def test_exit_numerical_failure(tmp_path, monkeypatch):
    def boom(sc):
        raise NumericalFailure("diverged")
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["simulate", "--out", str(tmp_path)] + SHORT) == 3
    assert cli.main(["sweep", "--out", str(tmp_path / "sw"), "--set", "sweep.rf=[1.0, 2.0]"] + SHORT) == 3
    assert "numerical" in (tmp_path / "sw" / "summary.csv").read_text()


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--version"])
    assert e.value.code == 0 and capsys.readouterr().out.strip()
