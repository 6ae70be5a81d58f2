"""Metric definitions, mission evaluation, trace files, and the table artifact."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resiform.config import ConfigError, RunConfig, from_dict
from resiform.csvio import read_csv
from resiform.metrics import (attack_intervals, collision_rate, compare_table,
                              evaluate_checkpoints, formation_error,
                              run_episode, run_mission, trace_metrics,
                              write_eval_csv)
from resiform.env import resolve_mission
from resiform.train import train_formation

TINY = from_dict({"t_max": 60})


def test_formation_error_trivial_cases():
    assert formation_error(np.zeros(100), 100) == 0.0
    assert formation_error(np.ones(100), 100) == 1.0


def test_formation_error_matches_direct_loop_oracle():
    rng = np.random.default_rng(0)
    errors = rng.uniform(0.0, 5.0, size=100)
    total = 0.0
    for e in errors:
        total += e
    assert formation_error(errors, 100) == pytest.approx(total / 100, rel=1e-12)


def test_formation_error_rejects_length_mismatch():
    with pytest.raises(ValueError, match="expected 100"):
        formation_error(np.zeros(99), 100)


def test_collision_rate_cases():
    assert collision_rate(np.zeros(1000, dtype=bool), 1000) == 0.0
    assert collision_rate(np.ones(50, dtype=bool), 50) == 1.0
    flags = np.zeros(1000, dtype=bool)
    flags[[3, 77, 400, 401, 999]] = True
    assert collision_rate(flags, 1000) == pytest.approx(0.005, rel=1e-12)
    with pytest.raises(ValueError, match="expected 10"):
        collision_rate(np.zeros(9), 10)


@given(
    actual=arrays(np.float64, (40, 3), elements=st.floats(-10, 10)),
    desired=arrays(np.float64, (40, 3), elements=st.floats(-10, 10)),
    delta=arrays(np.float64, (3,), elements=st.floats(-5, 5)),
)
@settings(max_examples=60, deadline=None)
def test_uniform_shift_bounds_follow_triangle_inequality(actual, desired, delta):
    base = formation_error(np.linalg.norm(actual - desired, axis=1), 40)
    shifted = formation_error(np.linalg.norm(actual + delta - desired, axis=1), 40)
    d = float(np.linalg.norm(delta))
    assert shifted <= base + d + 1e-9
    assert shifted >= abs(d - base) - 1e-9


def test_attack_interval_extraction():
    dt = 0.1
    series = [True, True, False, False, True, False]
    spans = attack_intervals(series, dt)
    assert spans == [
        (pytest.approx(0.3), pytest.approx(0.5)),
        (pytest.approx(0.6), pytest.approx(0.7)),
    ]
    assert attack_intervals([True, True], dt) == []


def test_run_episode_clean_mission_report():
    report = run_episode(TINY, resolve_mission("circle_no_attack"),
                         "displacement", rng=np.random.default_rng(1))
    assert report.e_agent >= 0.0
    assert report.e_mean >= 0.0
    assert report.reward == 0.0
    assert report.attack_spans == []
    assert report.error_series.shape == (60,)
    assert 0.0 <= report.collision_rate <= 1.0


def test_run_episode_requires_policy_for_learned_controller():
    with pytest.raises(ConfigError, match="checkpoint"):
        run_episode(TINY, resolve_mission("circle"), "gat",
                    rng=np.random.default_rng(0))


def test_run_mission_validates_names():
    with pytest.raises(ConfigError, match="unknown mission"):
        run_mission(TINY, "spiral", "displacement", 1, 0)
    with pytest.raises(ConfigError, match="unknown controller"):
        run_mission(TINY, "circle", "pid", 1, 0)


def test_run_mission_is_deterministic_and_averages():
    a = run_mission(TINY, "circle", "displacement", 3, seed=42)
    b = run_mission(TINY, "circle", "displacement", 3, seed=42)
    assert [e.e_agent for e in a.episodes] == [e.e_agent for e in b.episodes]
    assert a.e_agent == pytest.approx(
        np.mean([e.e_agent for e in a.episodes]), rel=1e-12)
    assert len({e.e_agent for e in a.episodes}) == 3  # spawns differ
    rows = a.rows()
    assert len(rows) == 4 and rows[-1][2] == "mean"


def test_trace_metrics_recompute_matches_reports(tmp_path):
    for mission, idx in (("circle", 0), ("circle_no_attack", 1),
                         ("figure_eight", 2)):
        path = tmp_path / f"t{idx}.csv"
        report = run_episode(TINY, resolve_mission(mission), "displacement",
                             rng=np.random.default_rng(100 + idx),
                             trace_path=path)
        oracle = trace_metrics(path)
        assert oracle["e_agent"] == pytest.approx(report.e_agent, rel=1e-12)
        assert oracle["e_mean"] == pytest.approx(report.e_mean, rel=1e-12)
        assert oracle["collision_rate"] == pytest.approx(
            report.collision_rate, rel=1e-12)
        assert oracle["mission"] == mission


def test_trace_header_and_shape(tmp_path):
    path = tmp_path / "trace.csv"
    run_episode(TINY, resolve_mission("circle"), "distance",
                rng=np.random.default_rng(7), trace_path=path,
                trace_meta={"seed": 7})
    header, columns, rows = read_csv(path)
    assert columns == ["t", "id", "px", "py", "pz", "vx", "vy", "vz",
                       "collision", "attacked"]
    assert len(rows) == 60 * TINY.n_agents
    for key in ("config_hash", "mission", "controller", "trajectory_kind",
                "trajectory_offset", "trajectory_phase", "formation_offsets",
                "attacked_agent", "attacker", "seed"):
        assert key in header, key
    assert header["controller"] == "distance"


def test_trace_metrics_rejects_truncated_file(tmp_path):
    path = tmp_path / "trace.csv"
    run_episode(TINY, resolve_mission("circle"), "displacement",
                rng=np.random.default_rng(3), trace_path=path)
    lines = path.read_text().splitlines()
    (tmp_path / "cut.csv").write_text("\n".join(lines[:-5]) + "\n")
    with pytest.raises(ValueError, match="rows"):
        trace_metrics(tmp_path / "cut.csv")


def test_eval_csv_rows(tmp_path):
    rep = run_mission(TINY, "circle", "displacement", 2, seed=5)
    out = write_eval_csv(tmp_path / "eval.csv", [rep], TINY, seed=5)
    header, columns, rows = read_csv(out)
    assert columns == list(("mission", "controller", "episode", "e_agent",
                            "e_mean", "collision_rate", "reward"))
    assert len(rows) == 3
    assert rows[-1][2] == "mean"
    assert header["seed"] == "5"


def test_compare_table_layout_and_byte_identical_reruns(tmp_path):
    missions = ["circle_no_attack", "circle"]
    controllers = ["displacement", "distance", "angle"]
    p1 = compare_table(TINY, missions, controllers, 2, seed=9,
                       out=tmp_path / "a.csv")
    p2 = compare_table(TINY, missions, controllers, 2, seed=9,
                       out=tmp_path / "b.csv")
    assert p1.read_bytes() == p2.read_bytes()
    header, columns, rows = read_csv(p1)
    assert columns == ["mission", "displacement", "distance", "angle"]
    assert [r[0] for r in rows] == missions
    for row in rows:
        for cell in row[1:]:
            left, _, right = cell.partition(" / ")
            float(left), float(right)
            assert len(left.split(".")[1]) == 4


def test_evaluate_checkpoints_uses_shared_episode_seeds(tmp_path):
    cfg = from_dict({
        "net": {"hidden": [16, 16], "gat_dim": 8},
        "ppo": {"total_steps": 100, "buffer_size": 50, "batch_size": 25,
                "horizon": 25, "epochs": 1, "checkpoints": 2},
        "t_max": 25,
    })
    result = train_formation(cfg, tmp_path, seed=2)
    rows = evaluate_checkpoints(cfg, "circle", result.checkpoint_paths,
                                episodes=2, seed=77)
    assert [r["checkpoint"] for r in rows] == [0, 1, 2]
    assert [r["step"] for r in rows] == [0, 50, 100]
    for row in rows:
        assert np.isfinite(row["reward_mean"])
        assert row["reward_mean"] <= 0.0
