import json
from pathlib import Path

import pytest
import yaml

from doublephase import cli, runner
from doublephase.fields import ConfigurationError

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def small_heat_raw(**overrides):
    raw = {
        "name": "tiny_heat",
        "dim": 2, "horizon": 0.02, "alpha": 0.9,
        "fields": {"p": 2.0, "q": 2.0, "a": 0.5, "b": 0.5},
        "initial": {"family": "modes", "coeffs": [[1, 1, 1.0]]},
        "source": 0.0,
        "solver": {"m_per_dim": 3, "eps": 1.0e-2, "tau": 2.0e-3},
        "diagnostics": {"second_order": {"h": 1.0 / 64.0, "margin": 1.0 / 32.0},
                        "energy_residual_ceiling": 2.0e-2},
        "seed": 9,
    }
    raw.update(overrides)
    return raw


def write_config(tmp_path, raw, name="scenario.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


def test_load_config_errors(tmp_path):
    missing = tmp_path / "nope.yaml"
    with pytest.raises(ConfigurationError, match="cannot read"):
        runner.load_config(missing)
    bad = tmp_path / "bad.yaml"
    bad.write_text("fields: [unclosed\n  - ]broken: {{\n")
    with pytest.raises(ConfigurationError, match="bad.yaml"):
        runner.load_config(bad)
    nokey = write_config(tmp_path, {"dim": 2}, "nokey.yaml")
    with pytest.raises(ConfigurationError, match="missing required key"):
        runner.load_config(nokey)
    badfam = write_config(
        tmp_path, small_heat_raw(fields={"p": {"family": "woops"}, "q": 2.0,
                                         "a": 0.5, "b": 0.5}), "fam.yaml")
    with pytest.raises(ConfigurationError, match="woops"):
        runner.load_config(badfam)


def test_run_writes_artifacts_and_passes(tmp_path):
    cfgfile = write_config(tmp_path, small_heat_raw(
        output={"snapshots": [0.0, 0.02], "snapshot_resolution": 9}))
    config = runner.load_config(cfgfile)
    out = tmp_path / "out"
    code, manifest, traj = runner.perform_run(config, out)
    assert code == 0
    for name in ("manifest.json", "timeseries.csv", "higher_integrability.csv",
                 "second_order.csv"):
        assert (out / name).exists()
    snaps = list(out.glob("snapshot_t*.csv"))
    assert len(snaps) == 2
    header = (out / "timeseries.csv").read_text().splitlines()[0]
    assert header == ("t,l2_sq,flux_energy_eps,flux_energy_0,grad_l2_sq,"
                      "energy_residual,ut_sq_accum,linf")
    m = json.loads((out / "manifest.json").read_text())
    assert m["exit_code"] == 0 and m["validation"]["passed"]
    kinds = {c["name"]: c["kind"] for c in m["checks"]}
    assert kinds["energy_equality"] == "exact"
    assert kinds["interpolation_constant"] == "monitor"
    # snapshot columns: coordinates, value, gradient magnitude
    first = snaps[0].read_text().splitlines()
    assert first[0] == "x1,x2,u,grad_norm"


def test_run_reproducible_byte_identical(tmp_path):
    cfgfile = write_config(tmp_path, small_heat_raw())
    config = runner.load_config(cfgfile)
    runner.perform_run(config, tmp_path / "a")
    runner.perform_run(config, tmp_path / "b")
    for name in ("timeseries.csv", "higher_integrability.csv", "second_order.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_validation_failure_exit_1(tmp_path):
    cfgfile = write_config(tmp_path, small_heat_raw(
        fields={"p": 2.0, "q": 2.6, "a": 0.5, "b": 0.5}))
    config = runner.load_config(cfgfile)
    code, manifest, traj = runner.perform_run(config, tmp_path / "out")
    assert code == 1 and traj is None
    assert "exponent_gap" in manifest["failure"]


def test_run_assertion_failure_exit_2(tmp_path):
    raw = small_heat_raw()
    raw["diagnostics"]["energy_residual_ceiling"] = 1e-12
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest, _ = runner.perform_run(config, tmp_path / "out")
    assert code == 2
    failed = [c["name"] for c in manifest["checks"] if not c["passed"]]
    assert failed == ["energy_equality"]


def test_run_solver_failure_exit_3(tmp_path):
    raw = small_heat_raw(fields={"p": 1.6, "q": 1.6, "a": 1.0, "b": 0.0},
                         initial={"family": "modes", "coeffs": [[1, 1, 40.0]]})
    raw["solver"] = {"m_per_dim": 2, "eps": 1.0e-8, "tau": 2.0e-2,
                     "newton_max_iter": 1, "tau_retry_cap": 0,
                     "max_damping_halvings": 1}
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest, _ = runner.perform_run(config, tmp_path / "out")
    assert code == 3 and "failed" in manifest["failure"]


def test_sweep_single_member_matches_run(tmp_path):
    raw = small_heat_raw(sweep={"eps": [1.0e-2]})
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest = runner.perform_sweep(config, tmp_path / "sweep")
    assert code == 0
    member = tmp_path / "sweep" / "m3_eps0.01"
    runner.perform_run(config, tmp_path / "single")
    assert (member / "timeseries.csv").read_bytes() == \
        (tmp_path / "single" / "timeseries.csv").read_bytes()
    assert (tmp_path / "sweep" / "sweep_summary.csv").exists()


def test_sweep_member_failure_recorded_and_continues(tmp_path):
    raw = small_heat_raw(sweep={"eps": [1.0e-2, 1.0e-3]})
    raw["fields"] = {"p": 2.0, "q": 2.6, "a": 0.5, "b": 0.5}
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest = runner.perform_sweep(config, tmp_path / "sweep")
    assert code == 1
    assert all(m["exit"] == 1 for m in manifest["members"])


def test_m_sweep_on_heat_has_zero_distances(tmp_path):
    # the eigenmode datum lies in every basis and the flux is linear, so all
    # refinement members coincide and the Cauchy distances vanish
    raw = small_heat_raw(sweep={"m_per_dim": [2, 3, 4]})
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest = runner.perform_sweep(config, tmp_path / "sweep")
    assert code == 0
    rows = (tmp_path / "sweep" / "sweep_summary.csv").read_text().splitlines()
    dists = [float(r.split(",")[2]) for r in rows if r.startswith("m_cauchy_distance")]
    # projections of the eigenmode onto foreign modes are 1e-16-level, so the
    # refinement distances sit at the roundoff floor rather than exact zero
    assert len(dists) == 2 and all(d <= 1e-25 for d in dists)


def test_cli_end_to_end(tmp_path, capsys):
    cfgfile = write_config(tmp_path, small_heat_raw())
    out = tmp_path / "cliout"
    assert cli.main(["run", str(cfgfile), "--outdir", str(out)]) == 0
    assert cli.main(["report", str(out)]) == 0
    digest = capsys.readouterr().out
    assert "energy_equality" in digest and "pass" in digest
    assert (out / "plots" / "l2_sq.dat").exists()
    assert cli.main(["validate", str(cfgfile)]) == 0
    assert cli.main(["report", str(tmp_path / "emptydir")]) == 1


def test_cli_gap_violation_exit_1(tmp_path):
    assert cli.main(["validate", str(SCENARIOS / "gap_violation.yaml")]) == 1
    out = tmp_path / "gap"
    assert cli.main(["run", str(SCENARIOS / "gap_violation.yaml"),
                     "--outdir", str(out)]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert "exponent_gap" in manifest["failure"]


def test_cli_malformed_config_exit_1(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("solver: [1, 2\n")
    assert cli.main(["run", str(bad)]) == 1


def test_bundled_scenarios_parse():
    for f in sorted(SCENARIOS.glob("*.yaml")):
        config = runner.load_config(f)
        assert config.data.dim == 2
        assert config.solver.tau > 0


def test_source_certificate_flags_nonvanishing_boundary(tmp_path):
    raw = small_heat_raw(source=1.0)
    config = runner.load_config(write_config(tmp_path, raw))
    code, manifest, _ = runner.perform_run(config, tmp_path / "out")
    cert = manifest["source_certificate"]
    assert not cert["boundary_zero"] and cert["grad_finite"]
    # a span source vanishes on the boundary
    raw2 = small_heat_raw(source={"family": "modes", "coeffs": [[1, 1, 0.5]]})
    config2 = runner.load_config(write_config(tmp_path, raw2, "s2.yaml"))
    _, manifest2, _ = runner.perform_run(config2, tmp_path / "out2")
    assert manifest2["source_certificate"]["boundary_zero"]
