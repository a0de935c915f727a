import csv
import json
import math

import numpy as np
import pytest

from pkslab import harness
from pkslab.config import EIGHT_PI, RunConfig, preset
from pkslab.diagnostics import BLOW_UP, DECAYING, GROWING
from pkslab.errors import ConfigError
from pkslab.evolution import heat_evolve
from pkslab.harness import SUMMARY_HEADER, build_initial, output_times, run_scenario, sweep
from pkslab.heat import gaussian_kernel_values
from pkslab.storage import read_trajectory, sidecar_path, write_trajectory


def _heat_cfg(tmp_path=None, **over):
    cfg = RunConfig(
        name="heat_decay",
        dim=2,
        n_per_axis=128,
        box_length=64.0,
        engine="heat_only",
        T=16.0,
        initial={"kind": "gaussian", "mass": 1.0, "sigma": 1.0},
        time_mesh={"kind": "geometric", "t_min": 1.0, "count": 17},
        diagnostics={"decay_fits": [[[0, 0], 0, "inf"], [[0, 0], 0, 2]], "blow_up": True, "analyticity": True},
        output_dir=str(tmp_path) if tmp_path else "runs",
    )
    return cfg.with_overrides(over)


class TestInitialData:
    @pytest.mark.parametrize(
        "initial",
        [
            {"kind": "gaussian", "mass": 3.0, "sigma": 0.7, "center": [1.0, -0.5]},
            {"kind": "two_bump", "mass": 2.0, "sigma": 0.5, "separation": 3.0},
            {"kind": "annulus", "mass": 5.0, "sigma": 0.4, "radius": 2.0},
        ],
    )
    def test_mass_normalized(self, initial):
        cfg = RunConfig(dim=2, n_per_axis=64, box_length=16.0, initial=initial)
        rho = build_initial(cfg)
        assert rho.integral() == pytest.approx(initial["mass"], rel=1e-12)
        assert rho.real.min() >= 0

    def test_gaussian_matches_heat_kernel(self):
        # a unit Gaussian of width sigma is G(sigma^2 / 2)
        cfg = RunConfig(dim=2, n_per_axis=128, box_length=24.0, initial={"kind": "gaussian", "mass": 1.0, "sigma": 1.0})
        assert np.allclose(build_initial(cfg).real, gaussian_kernel_values(build_initial(cfg).grid, 0.5).real, atol=1e-13)

    def test_two_bump_centres(self):
        cfg = RunConfig(dim=1, n_per_axis=256, box_length=16.0, initial={"kind": "two_bump", "mass": 1.0, "sigma": 0.3, "separation": 4.0})
        rho = build_initial(cfg)
        x = rho.grid.axis_coordinates
        peaks = sorted(x[np.argsort(rho.real)[-2:]])
        assert peaks == pytest.approx([-2.0, 2.0])


class TestOutputTimes:
    def test_linear(self):
        cfg = RunConfig(T=2.0, time_mesh={"kind": "linear", "count": 4, "extra": [0.1]})
        assert output_times(cfg) == pytest.approx([0.1, 0.5, 1.0, 1.5, 2.0])

    def test_geometric_and_list(self):
        cfg = RunConfig(T=16.0, time_mesh={"kind": "geometric", "t_min": 1.0, "count": 5})
        assert output_times(cfg) == pytest.approx([1.0, 2.0, 4.0, 8.0, 16.0])
        cfg = RunConfig(T=1.0, time_mesh={"kind": "list", "times": [0.5, 0.25]})
        assert output_times(cfg) == [0.25, 0.5, 1.0]


class TestReports:
    def test_heat_only_decay_report(self):
        rep = run_scenario(_heat_cfg(), write=False)
        assert rep.status == "completed" and rep.exit_code == 0 and not rep.failures
        ts = np.geomspace(1.0, 16.0, 17)
        # rho(t) = G(t + 1/2): fitted slope of log (t + 1/2)^p against log t
        for fit in rep.decay_fits:
            oracle = np.polyfit(np.log(ts), fit.predicted_slope * np.log(ts + 0.5), 1)[0]
            assert fit.slope == pytest.approx(oracle, abs=2e-3)
        assert rep.decay_fits[0].predicted_slope == -1.0
        assert rep.classification["classification"] == DECAYING
        assert len(rep.analyticity) == 17
        assert rep.summary["mass_drift"] < 1e-12
        assert rep.summary["scheme"] == "heat-exact"

    def test_horizon_warning_and_failure_record(self):
        rep = run_scenario(_heat_cfg(**{"diagnostics.decay_window": [1.0, 40.0]}), write=False)
        assert any(w.startswith("horizon") for w in rep.warnings)
        assert any(k.startswith("decay_fit") for k in rep.failures)
        assert rep.exit_code == 4

    def test_picard_report(self):
        cfg = preset("small_mass_picard_2d").with_overrides({"grid.n_per_axis": 128, "grid.box_length": 16.0, "initial.sigma": 0.5})
        rep = run_scenario(cfg, write=False)
        assert rep.status == "completed"
        assert rep.picard["converged"] and rep.picard["fitted_ratio"] < 1
        assert rep.theta["suprema"]["1.0"] == pytest.approx(cfg.initial["mass"], rel=1e-9)
        assert len(rep.hls) == 2

    def test_invalid_config_raises_before_compute(self, monkeypatch):
        def boom(*a, **k):
            raise AssertionError("engine reached")

        monkeypatch.setattr(harness, "run_engine", boom)
        with pytest.raises(ConfigError):
            run_scenario(preset("small_mass_2d").with_overrides({"grid.n_per_axis": 7}), write=False)

    def test_aborted_run_is_reported(self, tmp_path):
        cfg = preset("supercritical_2d").with_overrides({"grid.n_per_axis": 128, "run.output_dir": str(tmp_path)})
        rep = run_scenario(cfg)
        assert rep.status == "aborted" and rep.exit_code == 3
        assert rep.abort_reason == "spectral_tail"
        body = json.loads((tmp_path / cfg.config_hash() / "report.json").read_text())
        assert body["status"] == "aborted"


class TestArtifacts:
    def test_files_written(self, tmp_path):
        cfg = _heat_cfg(tmp_path)
        rep = run_scenario(cfg)
        d = tmp_path / cfg.config_hash()
        assert rep.output_path == str(d)
        for name in ("config.ini", "trajectory.bin", "trajectory.bin.json", "decay.csv", "analyticity.csv", "hls.csv", "report.json"):
            assert (d / name).exists()
        assert RunConfig.load(d / "config.ini").config_hash() == cfg.config_hash()
        with open(d / "decay.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 3

    def test_deterministic_outputs(self, tmp_path):
        cfg = _heat_cfg(tmp_path)
        names = ("trajectory.bin", "trajectory.bin.json", "decay.csv", "analyticity.csv", "config.ini")
        d = tmp_path / cfg.config_hash()
        run_scenario(cfg)
        first = {n: (d / n).read_bytes() for n in names}
        run_scenario(RunConfig.from_text(cfg.to_text()))
        for n in names:
            assert (d / n).read_bytes() == first[n]


class TestStorage:
    def test_round_trip(self, tmp_path, gaussian):
        tr = heat_evolve(gaussian(2, 32, 8.0, 1.0), [0.5, 1.0, 2.0])
        write_trajectory(tr, tmp_path / "t.bin")
        assert (tmp_path / "t.bin").stat().st_size == 4 * (24 + 8 * 32 * 32)
        back = read_trajectory(tmp_path / "t.bin")
        assert np.array_equal(back.times, tr.times)
        for s, r in zip(back.snapshots, tr.snapshots):
            assert np.array_equal(s.real, r.real)
        assert back.scheme_tag == tr.scheme_tag
        assert np.array_equal(back.per_step["L2"], tr.per_step["L2"])

    def test_without_sidecar(self, tmp_path, gaussian):
        tr = heat_evolve(gaussian(1, 16, 4.0, 1.0), [1.0])
        write_trajectory(tr, tmp_path / "t.bin")
        sidecar_path(tmp_path / "t.bin").unlink()
        back = read_trajectory(tmp_path / "t.bin")
        assert back.scheme_tag == "unknown" and len(back.times) == 2

    def test_empty_file_rejected(self, tmp_path):
        (tmp_path / "e.bin").write_bytes(b"")
        with pytest.raises(ValueError):
            read_trajectory(tmp_path / "e.bin")


class TestSweep:
    def test_empty_axes_equals_single_run(self):
        cfg = _heat_cfg()
        res = sweep(cfg, {}, write=False)
        single = run_scenario(cfg, write=False)
        assert len(res.reports) == 1
        assert res.rows[0][2] == single.config_hash
        assert [f.slope for f in res.reports[0].decay_fits] == [f.slope for f in single.decay_fits]

    def test_cap(self):
        with pytest.raises(ConfigError, match="cap"):
            sweep(_heat_cfg(), {"run.seed": list(range(10)), "run.T": [1.0, 2.0]}, cap=8, write=False)

    def test_invalid_point_rejected_up_front(self):
        with pytest.raises(ConfigError):
            sweep(_heat_cfg(), {"grid.n_per_axis": [64, 63]}, write=False)

    def test_failing_point_recorded(self, monkeypatch):
        real = harness.run_scenario

        def flaky(cfg, write=True):
            if cfg.seed == 1:
                raise RuntimeError("synthetic")
            return real(cfg, write=write)

        monkeypatch.setattr(harness, "run_scenario", flaky)
        res = sweep(_heat_cfg(**{"run.T": 2.0, "time_mesh.t_min": 0.5}), {"run.seed": [0, 1, 2]}, write=False, workers=2, executor="thread")
        assert [r.status for r in res.reports] == ["completed", "failed", "completed"]
        assert "synthetic" in res.reports[1].abort_reason

    def test_mass_sweep_transition(self, tmp_path):
        base = preset("supercritical_2d").with_overrides({"grid.n_per_axis": 256, "run.output_dir": str(tmp_path)})
        factors = (0.25, 0.5, 0.75, 1.25, 1.5)
        res = sweep(base, {"initial.mass": [f * EIGHT_PI for f in factors]}, workers=1)
        got = [rep.classification["classification"] for rep in res.reports]
        assert got[:3] == [DECAYING] * 3
        assert all(c in (GROWING, BLOW_UP) for c in got[3:])
        with open(res.summary_path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == SUMMARY_HEADER and len(rows) == 6
        assert math.isclose(float(rows[1][1].split("=")[1]), 0.25 * EIGHT_PI)
