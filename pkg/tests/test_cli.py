import csv
import json

import pytest

from sbsched.cli import (
    ConfigError,
    ExperimentSpec,
    PRESETS,
    RESULTS_COLUMNS,
    main,
    parse_config,
    run_experiment,
    serialize,
)
from sbsched.engine import ScenarioConfig
from sbsched.network import dbm_to_watts


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SMALL_SWEEP = """
name = smoke
seed = 11
replications = 2
policies = roa, doa
n_sbs = 6
n_ue = 30
horizon_periods = 1
sweep.parameter = n_sbs
sweep.values = 4, 6
"""


class TestParsing:
    def test_empty_config_gives_defaults(self, tmp_path):
        spec = parse_config(write_config(tmp_path, "# nothing here\n"))
        assert spec.base == ScenarioConfig()
        assert spec.policies == (ScenarioConfig().policy,)
        assert spec.n_replications == 1

    def test_full_round_trip(self, tmp_path):
        spec = parse_config(write_config(tmp_path, SMALL_SWEEP))
        again = parse_config(write_config(tmp_path, serialize(spec), "b.cfg"))
        assert again == spec

    def test_preset_round_trips(self, tmp_path):
        for name, spec in PRESETS.items():
            text = serialize(spec)
            again = parse_config(write_config(tmp_path, text, f"{name}.cfg"))
            assert again.base == spec.base
            assert again.policies == spec.policies
            assert again.sweep_values == spec.sweep_values
            assert again.kind == spec.kind

    def test_bad_dt_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, "dt = 0.3\nperiod = 10\n"))

    def test_duplicate_key_reports_both_lines(self, tmp_path):
        path = write_config(tmp_path, "n_sbs = 4\nn_ue = 20\nn_sbs = 6\n")
        with pytest.raises(ConfigError) as exc:
            parse_config(path)
        msg = str(exc.value)
        assert ":3:" in msg and "line 1" in msg

    def test_unknown_key_rejected_with_location(self, tmp_path):
        path = write_config(tmp_path, "\nn_cells = 4\n")
        with pytest.raises(ConfigError) as exc:
            parse_config(path)
        assert ":2:" in str(exc.value)

    def test_power_requires_unit(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, "network.sbs_tx_power = 23\n"))
        spec = parse_config(
            write_config(tmp_path, "network.sbs_tx_power = 23 dBm\n", "ok.cfg")
        )
        assert spec.base.sbs_tx_power == pytest.approx(dbm_to_watts(23.0))
        spec_w = parse_config(
            write_config(tmp_path, "network.sbs_op_power = 12 W\n", "w.cfg")
        )
        assert spec_w.base.sbs_op_power == 12.0

    def test_sweep_needs_both_keys(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, "sweep.parameter = n_sbs\n"))
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, "sweep.values = 1, 2\n", "b.cfg"))

    def test_bad_policy_rejected_before_running(self, tmp_path):
        with pytest.raises(ValueError):
            parse_config(write_config(tmp_path, "policies = genie\n"))

    def test_area_keys_set_together(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, "area.width = 400\n"))
        spec = parse_config(write_config(
            tmp_path, "area.width = 400\narea.height = 300\n", "ok.cfg"
        ))
        assert spec.base.area == (400.0, 300.0)


class TestRunExperiment:
    def run_small(self, tmp_path, reps=2, trace=False):
        tmp_path.mkdir(parents=True, exist_ok=True)
        spec = parse_config(write_config(tmp_path, SMALL_SWEEP))
        if reps != 2:
            from dataclasses import replace
            spec = replace(spec, n_replications=reps)
        out = tmp_path / "out"
        assert run_experiment(spec, str(out), trace=trace) == 0
        return out

    def test_artifacts_written(self, tmp_path):
        out = self.run_small(tmp_path, trace=True)
        for name in ("results.csv", "summary.json", "topology.json",
                     "trace.csv"):
            assert (out / name).exists()

    def test_results_schema(self, tmp_path):
        out = self.run_small(tmp_path)
        with open(out / "results.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == RESULTS_COLUMNS
        # 2 sweep values x 2 policies x 2 replications x 1 period
        assert len(rows) - 1 == 8
        for row in rows[1:]:
            assert row[0] == "n_sbs" and row[2] in ("roa", "doa")
            assert float(row[5]) >= 0.0  # total_cost

    def test_summary_schema(self, tmp_path):
        out = self.run_small(tmp_path)
        with open(out / "summary.json") as fh:
            summary = json.load(fh)
        assert summary["name"] == "smoke"
        assert len(summary["cells"]) == 4
        for cell in summary["cells"]:
            assert cell["replications"] == 2
            assert cell["mean_total_cost"] >= 0.0

    def test_byte_identical_reruns(self, tmp_path):
        out_a = self.run_small(tmp_path)
        spec = parse_config(write_config(tmp_path, SMALL_SWEEP, "again.cfg"))
        out_b = tmp_path / "out_b"
        run_experiment(spec, str(out_b))
        assert (out_a / "results.csv").read_bytes() == (
            out_b / "results.csv").read_bytes()

    def test_seed_prefix_stability(self, tmp_path):
        # adding replications never changes the earlier ones
        out_small = self.run_small(tmp_path)
        out_big = self.run_small(tmp_path / "big", reps=4)
        with open(out_small / "results.csv") as fh:
            small = {tuple(r[:5]): r for r in csv.reader(fh)}
        with open(out_big / "results.csv") as fh:
            big = {tuple(r[:5]): r for r in csv.reader(fh)}
        for key, row in small.items():
            assert big[key] == row

    def test_trace_schema(self, tmp_path):
        out = self.run_small(tmp_path, trace=True)
        with open(out / "trace.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["t", "sbs_id", "sigma", "E_j", "assoc_count",
                           "rent_rate"]
        # first replication only: n_steps x n_sbs rows for the first cell
        assert len(rows) - 1 == 100 * 4

    def test_cr_study_outputs(self, tmp_path):
        spec = parse_config(write_config(tmp_path, """
name = tiny-cr
kind = cr_study
seed = 6
runs = 5
n_sbs = 3
n_ue = 15
dt = 0.2
"""))
        out = tmp_path / "cr"
        assert run_experiment(spec, str(out)) == 0
        with open(out / "summary.json") as fh:
            summary = json.load(fh)
        assert summary["runs"] == 5
        assert summary["worst_ratio"] >= summary["median_ratio"] >= 1.0
        assert (out / "ratios.csv").exists()


class TestMain:
    def test_requires_config_or_preset(self, capsys):
        with pytest.raises(SystemExit):
            main([])

    def test_preset_list_complete(self):
        for name in ("fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10",
                     "fig11", "theorem-demo"):
            assert name in PRESETS
            assert isinstance(PRESETS[name], ExperimentSpec)

    def test_config_run_via_main(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SWEEP)
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out-dir", str(out)]) == 0
        assert (out / "results.csv").exists()

    def test_runs_and_algorithm_overrides(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SWEEP)
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out-dir", str(out),
                     "--runs", "1", "--algorithm", "fixed:7"]) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.reader(fh))
        assert all(r[2] == "fixed:7" for r in rows[1:])
        assert len(rows) - 1 == 2  # 2 sweep values x 1 policy x 1 rep

    def test_bad_algorithm_exits_before_running(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SWEEP)
        out = tmp_path / "out"
        with pytest.raises(SystemExit) as exc:
            main(["--config", cfg, "--out-dir", str(out),
                  "--algorithm", "genie"])
        assert exc.value.code == 2
        assert not (out / "results.csv").exists()

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["--config", str(tmp_path / "nope.cfg")])
        assert exc.value.code == 2

    def test_env_out_dir_default(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, SMALL_SWEEP)
        target = tmp_path / "from-env"
        monkeypatch.setenv("SBSCHED_OUT_DIR", str(target))
        assert main(["--config", cfg]) == 0
        assert (target / "results.csv").exists()

    def test_seed_override_changes_results(self, tmp_path):
        cfg = write_config(tmp_path, SMALL_SWEEP)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["--config", cfg, "--out-dir", str(out_a)])
        main(["--config", cfg, "--out-dir", str(out_b), "--seed", "99"])
        assert (out_a / "results.csv").read_bytes() != (
            out_b / "results.csv").read_bytes()
