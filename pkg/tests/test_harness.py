import json

import pytest

from sqlr.cloudsim import LedgerRow
from sqlr.harness import report
from sqlr.harness.cli import main
from sqlr.harness.config import ConfigError, ExperimentConfig, default_test_profile, preset
from sqlr.harness.experiment import run_experiment

TINY_PROFILE = [
    {"duration_s": 300, "omega_max_s": 5, "multiplier": 2},
    {"duration_s": 300, "omega_max_s": 2, "multiplier": 4},
]


@pytest.fixture
def tiny(tmp_path) -> dict:
    prof = tmp_path / "profile.json"
    prof.write_text(json.dumps(TINY_PROFILE))
    cfg = {
        "seed": 3,
        "workload": "profile.json",
        "training_workload": "profile.json",
        "x_lim": 45,
        "pretrain_passes": 1,
        "epoch_s": 60,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return {"dir": tmp_path, "config": path}


# -- report math -----------------------------------------------------------------


def test_moving_average_examples():
    assert report.moving_average([1, 2, 3], 2) == [1, 1.5, 2.5]
    assert report.moving_average([4, 4, 4, 4]) == [4, 4, 4, 4]
    assert report.moving_average([3, 1, 2], 1) == [3, 1, 2]
    assert report.moving_average([]) == []
    with pytest.raises(ValueError):
        report.moving_average([1], 0)


def _row(i, t, outcome, it=500_000, service=None):
    return LedgerRow(i, t, it, outcome, None, service)


def test_blocking_series_counting():
    ledger = [
        _row(0, 0, "completed", service=3),
        _row(1, 10, "blocked"),
        _row(2, 130, "blocked"),
        _row(3, 200, "blocked"),
        _row(4, 250, "completed", service=3),
    ]
    s = report.blocking_series(ledger, 480)
    assert s["arrived"] == [2, 2, 1, 0]
    assert s["rate"] == [0.5, 1.0, 0.0, 0.0]
    assert s["empty"] == [False, False, False, True]
    assert report.blocking_series([_row(0, 0, "completed", service=1)], 120)["rate"] == [0.0]
    assert report.blocking_series([_row(0, 0, "blocked")], 120)["rate"] == [1.0]


def test_empirical_cdf():
    c = report.empirical_cdf([3, 1, 2, 2])
    assert c["x"] == [1, 2, 3]
    assert c["p"] == [0.25, 0.75, 1.0]
    assert report.empirical_cdf([]) == {"x": [], "p": []}


def test_heatmap_counting_and_suppression():
    r_sla = 5e-6
    ledger = []
    # 40 responses in minute 0 on K=2: 10 of them at 2x the SLA
    for i in range(40):
        per_op = 2 * r_sla if i < 10 else r_sla
        ledger.append(_row(i, 0, "completed", it=1_000_000, service=per_op * 1_000_000))
    # 29 responses in minute 1 on K=3: suppressed
    for i in range(29):
        ledger.append(_row(100 + i, 60, "completed", it=1_000_000, service=9))
    k = [2] * 60 + [3] * 60
    hm = report.soft_blocking_heatmap(ledger, k, r_sla, v_max=4)
    band40, band29 = 40 // 10, 29 // 10
    assert hm["frequency"][band40][1] == pytest.approx(0.25)
    assert hm["severity"][band40][1] == pytest.approx(r_sla)
    assert hm["responses"][band29][2] == 29
    assert hm["frequency"][band29][2] is None
    at_sla = [_row(i, 0, "completed", it=1_000_000, service=5) for i in range(30)]
    hm2 = report.soft_blocking_heatmap(at_sla, [1] * 60, r_sla, v_max=2)
    assert hm2["frequency"][3][0] == 0.0


# -- config ---------------------------------------------------------------------


def test_config_requires_seed_and_existing_files(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig().validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1, workload=str(tmp_path / "nope.json")).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seed": 1, "bogus": 2})
    with pytest.raises(ConfigError):
        ExperimentConfig(seed=1, scheme="magic").validate()
    assert preset(ExperimentConfig(seed=1), "static-2").k_fixed == 2


def test_bundled_test_profile_shape():
    prof = default_test_profile()
    assert prof.duration_s == 4 * 3600
    assert [s.omega_max_s for s in prof.slots] == [9, 5, 7, 9]


# -- runs -----------------------------------------------------------------------


def test_run_outputs_and_rebuild(tiny):
    cfg = ExperimentConfig.load(tiny["config"]).replace(scheme="sqlr")
    out = tiny["dir"] / "run"
    res = run_experiment(cfg, out)
    for name in ("ledger.csv", "ticks.csv", "vms.csv", "epochs.csv", "scaler_table.json", "bundle.json"):
        assert (out / name).is_file()
    b = res.bundle
    t = b["totals"]
    assert t["arrived"] == t["admitted"] + t["blocked"]
    assert t["admitted"] == t["completed"] + t["inflight"]
    assert abs(b["vm_hours"] - b["vm_hours_lifetime"]) < 1e-9
    assert b["blocking_cdf"]["p"][-1] == 1.0
    assert all(a <= c for a, c in zip(b["service_cdf"]["p"], b["service_cdf"]["p"][1:]))
    assert report.bundle_from_dir(out) == json.loads((out / "bundle.json").read_text())
    assert 0.0 <= res.extras["final_convergence"] <= 1.0


def test_ekf_and_static_runs(tiny):
    base = ExperimentConfig.load(tiny["config"])
    ekf = run_experiment(preset(base, "ekf"), tiny["dir"] / "ekf")
    assert (tiny["dir"] / "ekf" / "ekf_trace.csv").is_file()
    assert ekf.bundle["totals"]["arrived"] > 0
    st = run_experiment(preset(base, "static-10"), tiny["dir"] / "s10")
    assert st.bundle["vm_hours"] == pytest.approx(10 * 600 / 3600)
    assert st.bundle["totals"]["blocked"] == 0


# -- CLI ------------------------------------------------------------------------


def test_cli_usage_errors(capsys):
    assert main(["run", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    assert "missing.json" in capsys.readouterr().err


def test_cli_missing_seed(tmp_path):
    assert main(["run", "--scheme", "static-2", "--out", str(tmp_path)]) == 2


def test_cli_run_twice_is_byte_identical(tiny):
    a, b = tiny["dir"] / "a", tiny["dir"] / "b"
    for out in (a, b):
        assert main(["run", "--config", str(tiny["config"]), "--scheme", "sqlr-case1", "--out", str(out)]) == 0
    for name in ("ledger.csv", "ticks.csv", "epochs.csv", "scaler_table.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_train_commands(tiny):
    out = tiny["dir"] / "ac"
    assert main(["train-ac", "--seed", "1", "--episodes", "200", "--out", str(out)]) == 0
    policy = json.loads((out / "ac_policy.json").read_text())
    assert "x_lim" in policy and (out / "ac_table.json").is_file()
    sc = tiny["dir"] / "sc"
    assert main(["train-scaler", "--config", str(tiny["config"]), "--episodes", "1", "--out", str(sc)]) == 0
    assert (sc / "scaler_table.json").is_file()
    # the trained table can be handed to a run
    cfg = json.loads(tiny["config"].read_text())
    cfg["scaler_table"] = str(sc / "scaler_table.json")
    path = tiny["dir"] / "with_table.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--out", str(tiny["dir"] / "r")]) == 0


def test_cli_compare_and_report(tiny):
    out = tiny["dir"] / "cmp"
    assert main(["compare", "--config", str(tiny["config"]), "--out", str(out)]) == 0
    for name in ("sqlr-case1", "sqlr-case2", "ekf", "static-2", "static-10"):
        assert (out / name / "bundle.json").is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert [r["scheme"] for r in summary] == ["sqlr-case1", "sqlr-case2", "ekf", "static-2", "static-10"]
    assert (out / "summary.csv").is_file()

    before = {p: p.read_bytes() for p in out.rglob("*") if p.is_file()}
    assert main(["report", "--out", str(out)]) == 0
    svgs = sorted(p.name for p in (out / "ekf" / "plots").glob("*.svg"))
    assert "blocking_series.svg" in svgs and "cdfs.svg" in svgs
    assert (out / "compare_cdfs.svg").is_file()
    # plotting is read-only over the data files
    assert all(p.read_bytes() == data for p, data in before.items())


def test_cli_invariant_violation_exit_code(tiny, monkeypatch):
    from sqlr import cloudsim

    def broken(self):
        raise cloudsim.InvariantViolation("forced")

    monkeypatch.setattr(cloudsim.Cluster, "check_conservation", broken)
    assert main(["run", "--config", str(tiny["config"]), "--scheme", "static-2", "--out", str(tiny["dir"] / "x")]) == 3


def test_cli_report_rejects_non_run_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 2
    assert main(["report"]) == 1
