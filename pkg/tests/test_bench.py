import json

import numpy as np
import pytest

from aerialbs.bench.baselines import fdma_bits, static_fdma_baseline, static_rates, static_tdma_baseline
from aerialbs.bench.cli import EXIT_INFEASIBLE, EXIT_OK, _seeds, main
from aerialbs.bench.experiments import ExperimentConfig, Technique, cross_cells, error_samples, mean_by, run_experiments
from aerialbs.bench.metrics import CSV_COLUMNS, MetricsRow, read_csv, write_csv
from aerialbs.bench.scenarios import ScenarioConfig, generate_scenario, load_scenario, save_scenario
from aerialbs.model import SystemParams

from conftest import make_scenario

PARAMS = SystemParams.for_mission(40, 2.5e4)
OVERHEAD_EFF = np.log2(1001.0)  # overhead SNR is 1000


class TestScenarios:
    def test_deterministic_and_inside_area(self):
        a, b = generate_scenario(3), generate_scenario(3)
        assert np.array_equal(a.positions, b.positions) and np.array_equal(a.demands, b.demands)
        assert a.M == 8
        assert np.all((a.positions >= 0) & (a.positions <= 1500))
        assert not np.array_equal(a.positions, generate_scenario(4).positions)

    def test_users_do_not_depend_on_mission_length(self):
        a = generate_scenario(5, params=SystemParams.for_mission(40, 2.5e4))
        b = generate_scenario(5, params=SystemParams.for_mission(120, 2.5e4))
        assert np.array_equal(a.positions, b.positions)
        assert not np.allclose(a.base_vel, b.base_vel)

    def test_mean_demand(self):
        sc = generate_scenario(0, ScenarioConfig(M=10_000))
        # uniform on [1, 20] Mbit
        assert sc.demands.mean() == pytest.approx(10.5e6, rel=0.02)
        assert sc.demands.min() >= 1e6 and sc.demands.max() <= 2e7

    def test_json_round_trip(self, tmp_path):
        sc = generate_scenario(7, params=PARAMS)
        path = tmp_path / "sc.json"
        save_scenario(sc, path, PARAMS, seed=7)
        back, params = load_scenario(path)
        assert np.array_equal(back.positions, sc.positions)
        assert np.array_equal(back.demands, sc.demands)
        assert np.array_equal(back.base_vel, sc.base_vel)
        assert params == PARAMS
        assert json.loads(path.read_text())["seed"] == 7

    def test_bad_schema(self, tmp_path):
        path = tmp_path / "sc.json"
        save_scenario(generate_scenario(0), path)
        d = json.loads(path.read_text())
        d["schema"] = 0
        path.write_text(json.dumps(d))
        with pytest.raises(ValueError):
            load_scenario(path)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ScenarioConfig(M=0)
        with pytest.raises(ValueError):
            ScenarioConfig(demand_min=5.0, demand_max=1.0)


class TestBaselines:
    def test_fdma_single_user_at_center(self):
        sc = make_scenario([[750, 750]], [1e6], PARAMS)
        assert fdma_bits(sc, PARAMS)[0] == pytest.approx(PARAMS.B * PARAMS.T * OVERHEAD_EFF, rel=1e-9)

    def test_fdma_share_shrinks_with_users(self):
        one = fdma_bits(make_scenario([[750, 750]], [1e6], PARAMS), PARAMS)[0]
        prev = one
        for M in (2, 4, 8):
            got = fdma_bits(make_scenario([[750, 750]] * M, [1e6] * M, PARAMS), PARAMS)
            assert got[0] == pytest.approx(one / M, rel=1e-12)
            assert got[0] < prev
            prev = got[0]

    def test_tdma_single_user_at_center(self):
        capacity = PARAMS.N * PARAMS.delta_t * PARAMS.B * OVERHEAD_EFF
        ok = static_tdma_baseline(make_scenario([[750, 750]], [0.99 * capacity], PARAMS), PARAMS)
        short = static_tdma_baseline(make_scenario([[750, 750]], [1.01 * capacity], PARAMS), PARAMS)
        assert ok.covered == 1 and short.covered == 0
        assert ok.energy_used == 0.0
        assert ok.min_excess == pytest.approx(0.01 * capacity, rel=1e-6)

    def test_static_rows_constant_over_slots(self):
        r = static_rates(generate_scenario(1), PARAMS).r
        assert r.shape == (8, PARAMS.N) and np.all(r == r[:, :1])

    def test_fdma_row(self):
        row = static_fdma_baseline(generate_scenario(2, params=PARAMS), PARAMS, seed=2)
        assert row.technique == "static-FDMA" and row.M == 8 and 0 <= row.covered <= 8


class TestMetrics:
    def test_coverage_ratio(self):
        assert MetricsRow("x", 0, 40, 1e4, covered=4, M=8).coverage_probability == 0.5

    def test_covered_range_checked(self):
        with pytest.raises(ValueError):
            MetricsRow("x", 0, 40, 1e4, covered=9, M=8)

    def test_csv_round_trip_and_order(self, tmp_path):
        rows = [MetricsRow("b", 1, 40.0, 1e4, covered=3, M=8, energy_used=123.25, termination="converged"),
                MetricsRow("a", 0, 40.0, 1e4, covered=8, M=8, min_excess=5.5)]
        write_csv(rows, tmp_path / "m.csv")
        text = (tmp_path / "m.csv").read_text()
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
        back = read_csv(tmp_path / "m.csv")
        assert [r.technique for r in back] == ["a", "b"]
        assert back[1].energy_used == 123.25 and np.isnan(back[0].energy_used)
        write_csv(back, tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_text() == text


class TestExperiments:
    def test_cross_cells(self):
        cells = cross_cells([40, 120], [1e4, 2.5e4], 120, 2.5e4)
        assert cells == ((40.0, 2.5e4), (120.0, 2.5e4), (120.0, 1e4))

    def test_rejects_fractional_slots(self):
        with pytest.raises(ValueError):
            ExperimentConfig(T_values=(40.25,), E_values=(1e4,))

    def test_shared_error_samples(self):
        a, b = error_samples(1, 5.0, 8, 50), error_samples(1, 5.0, 8, 50)
        assert a.shape == (50, 8, 2) and np.array_equal(a, b)
        assert np.hypot(a[..., 0], a[..., 1]).max() <= 15.0

    def test_mean_by_skips_nan(self):
        rows = [MetricsRow("a", 0, 40, 1e4, min_excess=1.0), MetricsRow("a", 1, 40, 1e4),
                MetricsRow("a", 2, 40, 1e4, min_excess=3.0)]
        assert mean_by(rows, lambda r: r.min_excess, "technique") == {("a",): 2.0}

    def test_infeasible_cell_recorded(self):
        cfg = ExperimentConfig(seeds=(0,), cells=((120.0, 1e4),), techniques=(Technique.IA_CIT,),
                               plots=False)
        (row,) = run_experiments(cfg).rows
        assert row.covered == 0 and row.termination == "infeasible"

    def test_sweep_outputs_deterministic(self, tmp_path):
        def run(out):
            cfg = ExperimentConfig(seeds=(0, 1), cells=((40.0, 2.5e4),), scenario=ScenarioConfig(M=3),
                                   techniques=(Technique.CIT, Technique.STATIC_TDMA, Technique.STATIC_FDMA),
                                   out_dir=out)
            return run_experiments(cfg)

        res = run(tmp_path / "a")
        run(tmp_path / "b")
        assert len(res.rows) == 6 and not any(r.error for r in res.rows)
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
        plots = sorted(p.name for p in (tmp_path / "a/plots").glob("*.svg"))
        assert "coverage_vs_T.svg" in plots and any(p.startswith("trajectory_") for p in plots)


class TestCli:
    def test_seed_ranges(self):
        assert _seeds("0-3") == [0, 1, 2, 3]
        assert _seeds("1,4") == [1, 4]

    def test_infeasible_energy_exit_code(self, tmp_path, capsys):
        assert main(["solve", "--T", "120", "--etot", "1e4", "--out", str(tmp_path)]) == EXIT_INFEASIBLE
        assert "infeasible" in capsys.readouterr().out
        assert (tmp_path / "scenario.json").exists()

    def test_missing_scenario_file(self, tmp_path):
        assert main(["solve", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1

    def test_bad_argument(self):
        with pytest.raises(SystemExit):
            main(["solve", "--init", "spiral"])

    def test_baseline_and_plot(self, tmp_path):
        assert main(["baseline", "--T", "40", "--M", "3", "--out", str(tmp_path)]) == EXIT_OK
        rows = json.loads((tmp_path / "baselines.json").read_text())
        assert [r["technique"] for r in rows] == ["static-TDMA", "static-FDMA"]
        assert main(["sweep", "--seeds", "0", "--T-values", "40", "--etot-values", "25000", "--M", "3",
                     "--techniques", "static-TDMA,static-FDMA", "--out", str(tmp_path / "sw")]) == EXIT_OK
        (tmp_path / "sw/plots/coverage_vs_T.svg").unlink()
        assert main(["plot", "--out", str(tmp_path / "sw")]) == EXIT_OK
        assert (tmp_path / "sw/plots/coverage_vs_T.svg").read_text().lstrip().startswith("<?xml")
