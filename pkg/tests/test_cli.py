"""End-to-end tests of the command-line interface.

Each command is run as a subprocess (via ``python -m spdelab``) against a
temp output directory.  Tests assert on exit codes, CSV schemas, manifest
completeness (every artifact listed with a correct digest), agreement of
CSV values with the underlying library, and the error messages of the
documented failure modes.
"""

import csv
import hashlib
import json
import math

import numpy as np
import pytest

from spdelab import cli as climod
from spdelab.covariance import frac_reaction_cov_2d, generalized_matern_cov

MANIFEST_KEYS = {"schema_version", "command", "config", "master_seed",
                 "version", "wall_time_s", "files"}


def _write_config(tmp_path, obj, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj), encoding="utf-8")
    return str(p)


def _read_manifest(outdir):
    return json.loads((outdir / "manifest.json").read_text(encoding="utf-8"))


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _small_field_config(**overrides):
    cfg = {
        "schema_version": 1,
        "grid": {"extent": [[-2.0, 2.0]], "n": [64]},
        "bc": "Periodic",
        "operator": {"type": "laplacian", "D": 0.05},
        "sigma": 0.2,
        "u0": {"type": "constant", "value": 0.0},
        "dt": 0.01,
        "t_end": 1.0,
        "snapshots": [0.5, 1.0],
    }
    cfg.update(overrides)
    return cfg


def _small_study_config(**overrides):
    cfg = {
        "schema_version": 1,
        "truth": {"B1": 0.3, "B2": 0.5, "sigma": 0.3,
                  "kappa": 1.0 / math.sqrt(3.0)},
        "eta0": 300.0,
        "windows": [[[0.0, 1.0], [0.0, 1.0]],
                    [[-1.0, 0.0], [-1.0, 0.0]],
                    [[1.0, 2.0], [2.0, 3.0]]],
        "times": [1.0, 3.0, 6.0],
        "modes": ["locations"],
        "bounds": {"B1": [-1.0, 1.0], "B2": [-1.0, 1.0],
                   "sigma": [0.01, 1.0], "kappa": [0.1, 10.0]},
        "n_starts": 2,
        "n_nodes": 16,
        "maxfev": 300,
    }
    cfg.update(overrides)
    return cfg


# ---------------------------------------------------------------------------
# covariance command
# ---------------------------------------------------------------------------

def test_covariance_preset_writes_curves_matching_the_library(cli, tmp_path):
    out = tmp_path / "out"
    r = cli("covariance", "--preset", "fig1", "--out", out)
    assert r.returncode == 0, r.stderr
    header, rows = _read_csv(out / "damped_matern.csv")
    assert header == ["h", "value"]
    assert len(rows) == 400
    hs = np.array([float(a) for a, _ in rows])
    vs = np.array([float(b) for _, b in rows])
    assert hs[0] == pytest.approx(0.01) and hs[-1] == pytest.approx(10.0)
    # log spacing: constant ratio between consecutive lags
    ratios = hs[1:] / hs[:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-9)
    assert np.all(vs > 0) and np.all(np.diff(vs) < 0)
    for k in (0, 100, 399):
        assert vs[k] == pytest.approx(
            generalized_matern_cov(hs[k], d=2, kappa=1.0), rel=1e-12)
    _, rows2 = _read_csv(out / "fractional_reaction.csv")
    for k in (0, 100, 399):
        h, v = float(rows2[k][0]), float(rows2[k][1])
        assert v == pytest.approx(frac_reaction_cov_2d(h, kappa=0.78),
                                  rel=1e-12)


def test_manifest_lists_every_artifact_with_correct_digest(cli, tmp_path):
    out = tmp_path / "out"
    r = cli("covariance", "--preset", "fig1", "--out", out)
    assert r.returncode == 0
    man = _read_manifest(out)
    assert set(man) == MANIFEST_KEYS
    assert man["command"] == "covariance"
    assert man["schema_version"] == 1
    assert man["master_seed"] is None
    assert isinstance(man["wall_time_s"], float)
    listed = {e["name"] for e in man["files"]}
    on_disk = {p.name for p in out.glob("*.csv")}
    assert listed == on_disk
    for e in man["files"]:
        digest = hashlib.sha256((out / e["name"]).read_bytes()).hexdigest()
        assert e["sha256"] == digest


# ---------------------------------------------------------------------------
# simulate-field command
# ---------------------------------------------------------------------------

def test_field_preset_fig2_produces_finite_centered_snapshots(cli, tmp_path):
    out = tmp_path / "out"
    r = cli("simulate-field", "--preset", "fig2", "--seed", "1",
                "--out", out)
    assert r.returncode == 0, r.stderr
    man = _read_manifest(out)
    assert man["master_seed"] == 1
    names = sorted(e["name"] for e in man["files"])
    assert names == ["snapshot_00.csv", "snapshot_01.csv", "snapshot_02.csv"]
    header, rows = _read_csv(out / "snapshot_02.csv")
    assert header == ["x1", "x2", "t", "value"]
    assert len(rows) == 96 * 96
    vals = np.array([float(r[3]) for r in rows])
    ts = {float(r[2]) for r in rows}
    assert len(ts) == 1
    assert ts.pop() == pytest.approx(6.0, abs=1e-9)
    assert np.all(np.isfinite(vals))
    # centered driving noise with absorption: the field fluctuates around
    # zero, so the spatial mean is small against the field's own spread
    # (spatial correlation keeps one realization's mean well off zero)
    assert abs(vals.mean()) < vals.std()
    pos_frac = (vals > 0).mean()
    assert 0.2 < pos_frac < 0.8


def test_field_1d_run_uses_flat_csv_schema(cli, tmp_path):
    out = tmp_path / "out"
    cfgp = _write_config(tmp_path, _small_field_config())
    r = cli("simulate-field", "--config", cfgp, "--seed", "3",
                "--out", out)
    assert r.returncode == 0, r.stderr
    header, rows = _read_csv(out / "snapshot_01.csv")
    assert header == ["x", "t", "value"]
    assert len(rows) == 64


def test_field_reruns_with_same_seed_are_byte_identical(cli, tmp_path):
    cfgp = _write_config(tmp_path, _small_field_config())
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        r = cli("simulate-field", "--config", cfgp, "--seed", "9",
                    "--out", out)
        assert r.returncode == 0
        outs.append(out)
    for csvname in ("snapshot_00.csv", "snapshot_01.csv"):
        assert (outs[0] / csvname).read_bytes() == (outs[1] / csvname).read_bytes()


def test_steady_mode_emits_single_steady_state_file(cli, tmp_path):
    out = tmp_path / "out"
    cfg = _small_field_config(sigma=0.0, mode="steady",
                              u0={"type": "gaussian", "center": [0.0],
                                  "width": 0.4, "mass": 4.0})
    del cfg["snapshots"]
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-field", "--config", cfgp, "--seed", "3",
                "--out", out)
    assert r.returncode == 0, r.stderr
    header, rows = _read_csv(out / "steady_state.csv")
    assert header == ["x", "t", "value"]
    vals = np.array([float(r[2]) for r in rows])
    # constant-coefficient diffusion flattens to the mean level
    assert (vals.max() - vals.min()) / vals.mean() < 1e-6


def test_rotating_drift_builder_matches_hand_computed_value():
    drift = climod._build_drift({"type": "rotating", "amplitude": 2.0,
                                 "period": 10.0, "softening": 0.1}, 2)
    val = drift.Bfun(np.array([[1.0, 1.0]]), 0.0)
    assert val[0, 0] == pytest.approx(2.0 / math.sqrt(2.1), rel=1e-15)
    assert val[0, 1] == 0.0


# ---------------------------------------------------------------------------
# simulate-particles command
# ---------------------------------------------------------------------------

def test_particle_preset_fig3_tracks_survival_curve(cli, tmp_path):
    out = tmp_path / "out"
    r = cli("simulate-particles", "--preset", "fig3", "--seed", "5",
                "--out", out)
    assert r.returncode == 0, r.stderr
    header, rows = _read_csv(out / "summary.csv")
    assert header == ["t", "n_total", "n_alive", "n_deposited"]
    assert [float(r[0]) for r in rows] == [1.0, 3.0, 6.0]
    for trow in rows:
        t, n_total, n_alive, n_dep = (float(trow[0]), int(trow[1]),
                                      int(trow[2]), int(trow[3]))
        assert n_alive + n_dep == n_total
        p = math.exp(-t / 3.0)
        assert abs(n_alive / n_total - p) < 3 * math.sqrt(p * (1 - p) / n_total)
    header, prows = _read_csv(out / "particles_00.csv")
    assert header == ["id", "x1", "x2", "status"]
    assert len(prows) == int(rows[0][1])
    assert {r[3] for r in prows} <= {"alive", "deposited"}


def test_particles_euler_method_runs_with_heavy_tails(cli, tmp_path):
    out = tmp_path / "out"
    cfg = {
        "schema_version": 1,
        "alpha": 1.5, "gamma": 0.5, "kappa": 0.5773502691896258,
        "eta0": 500.0, "B": [0.3, 0.5], "sigma": 0.3,
        "release": {"type": "disc", "center": [0.0, 0.0], "radius": 0.05},
        "times": [0.5, 1.0], "method": "euler", "dt": 0.25,
    }
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-particles", "--config", cfgp, "--seed", "2",
                "--out", out)
    assert r.returncode == 0, r.stderr
    names = {e["name"] for e in _read_manifest(out)["files"]}
    assert names == {"particles_00.csv", "particles_01.csv", "summary.csv"}


# ---------------------------------------------------------------------------
# estimate command
# ---------------------------------------------------------------------------

def test_estimate_writes_observations_and_bounded_estimates(cli, tmp_path):
    out = tmp_path / "out"
    cfgp = _write_config(tmp_path, _small_study_config())
    r = cli("estimate", "--config", cfgp, "--seed", "4", "--out", out)
    assert r.returncode == 0, r.stderr
    header, orows = _read_csv(out / "observations.csv")
    assert header == ["window", "t", "count"]
    assert [r[0] for r in orows] == ["0", "1", "2"]
    assert all(int(r[2]) >= 0 for r in orows)
    header, erows = _read_csv(out / "estimates.csv")
    assert header == ["param", "mode", "estimate", "converged"]
    assert [r[0] for r in erows] == ["B1", "B2", "sigma", "inv_kappa2"]
    assert {r[1] for r in erows} == {"locations"}
    assert {r[3] for r in erows} <= {"0", "1"}
    est = {r[0]: float(r[2]) for r in erows}
    assert -1.0 <= est["B1"] <= 1.0 and -1.0 <= est["B2"] <= 1.0
    assert 0.01 <= est["sigma"] <= 1.0
    assert 0.01 <= est["inv_kappa2"] <= 100.0


# ---------------------------------------------------------------------------
# Failure modes (exit code 2: configuration, 3: numerical)
# ---------------------------------------------------------------------------

def test_config_and_preset_are_mutually_exclusive(cli, tmp_path):
    cfgp = _write_config(tmp_path, {"schema_version": 1})
    r = cli("covariance", "--config", cfgp, "--preset", "fig1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "give exactly one of --config or --preset" in r.stderr
    r = cli("covariance", "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "give exactly one of --config or --preset" in r.stderr


def test_unknown_preset_lists_the_available_ones(cli, tmp_path):
    r = cli("covariance", "--preset", "bogus", "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "unknown preset 'bogus'" in r.stderr
    assert "fig1" in r.stderr


def test_invalid_json_reports_the_parse_position(cli, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json", encoding="utf-8")
    r = cli("covariance", "--config", str(p), "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "invalid JSON" in r.stderr
    assert "line 1" in r.stderr


def test_missing_required_field_is_named(cli, tmp_path):
    cfgp = _write_config(tmp_path, {"schema_version": 1})
    r = cli("covariance", "--config", cfgp, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "missing required field 'lags'" in r.stderr


def test_unknown_keys_are_rejected_by_name(cli, tmp_path):
    cfg = {"schema_version": 1,
           "lags": {"min": 0.1, "max": 1.0, "n": 10, "spacing": "log"},
           "curves": [{"name": "c", "family": "generalized_matern",
                       "d": 2, "kappa": 1.0}],
           "bogus": 1}
    cfgp = _write_config(tmp_path, cfg)
    r = cli("covariance", "--config", cfgp, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "unknown key(s) in 'config': bogus" in r.stderr


def test_empty_curve_list_is_rejected(cli, tmp_path):
    cfg = {"schema_version": 1,
           "lags": {"min": 0.1, "max": 1.0, "n": 10, "spacing": "log"},
           "curves": []}
    cfgp = _write_config(tmp_path, cfg)
    r = cli("covariance", "--config", cfgp, "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "field 'curves' must be a non-empty array" in r.stderr


def test_stochastic_commands_require_a_seed(cli, tmp_path):
    r = cli("simulate-field", "--preset", "fig2", "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "command 'simulate-field' requires --seed" in r.stderr


def test_seed_must_parse_as_integer(cli, tmp_path):
    r = cli("simulate-field", "--preset", "fig2", "--seed", "banana",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "--seed must be an integer, got 'banana'" in r.stderr


def test_unsupported_schema_version_is_refused(cli, tmp_path):
    cfgp = _write_config(tmp_path, _small_field_config(schema_version=2))
    r = cli("simulate-field", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "unsupported schema_version 2; this build reads version 1" in r.stderr


def test_study_with_too_few_replicates_is_refused(cli, tmp_path):
    r = cli("mc-study", "--preset", "table2", "--reps", "5",
                "--seed", "1", "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "need at least 30 replicates" in r.stderr


def test_time_step_above_stability_bound_is_a_config_error(cli, tmp_path):
    cfgp = _write_config(tmp_path, _small_field_config(dt=0.5, t_end=1.0,
                                                       snapshots=[1.0]))
    r = cli("simulate-field", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "stability bound" in r.stderr


def test_steady_mode_with_noise_is_a_config_error(cli, tmp_path):
    cfg = _small_field_config(mode="steady")  # sigma stays 0.2
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-field", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "mode 'steady' requires sigma = 0" in r.stderr


def test_observation_times_must_be_multiples_of_the_euler_step(cli, tmp_path):
    cfg = {
        "schema_version": 1,
        "alpha": 1.5, "gamma": 0.5, "kappa": 0.5773502691896258,
        "eta0": 100.0, "B": [0.0, 0.0], "sigma": 0.3,
        "release": {"type": "disc", "center": [0.0, 0.0], "radius": 0.05},
        "times": [0.5], "method": "euler", "dt": 0.3,
    }
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-particles", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "not a multiple of dt" in r.stderr


def test_exact_method_requires_gaussian_jumps(cli, tmp_path):
    cfg = {
        "schema_version": 1,
        "alpha": 1.5, "gamma": 0.5, "kappa": 0.5773502691896258,
        "eta0": 100.0, "B": [0.0, 0.0], "sigma": 0.3,
        "release": {"type": "disc", "center": [0.0, 0.0], "radius": 0.05},
        "times": [1.0], "method": "exact",
    }
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-particles", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 2
    assert "method 'exact' requires alpha = 2" in r.stderr


def test_diverging_run_exits_with_numerical_failure(cli, tmp_path):
    cfg = _small_field_config(sigma=0.0,
                              drift={"type": "constant", "B": [1e4]},
                              u0={"type": "gaussian", "center": [0.0],
                                  "width": 0.3, "mass": 1.0})
    cfgp = _write_config(tmp_path, cfg)
    r = cli("simulate-field", "--config", cfgp, "--seed", "1",
                "--out", tmp_path / "o")
    assert r.returncode == 3
    assert "numerical failure" in r.stderr
