import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dsarl.environment import Outcome
from dsarl.metrics import CSV_COLUMNS, compute_metrics, emit_csv, read_csv, aggregate_series


def test_all_idle():
    m = compute_metrics(np.full((10, 1), Outcome.IDLE), np.zeros((10, 1)))
    assert m.idle_rate[0] == 1.0
    assert m.success_rate[0] == m.pu_collision_rate[0] == m.su_collision_rate[0] == 0.0
    assert m.mean_reward[0] == 0.0


def test_alternating_success_and_collision():
    labels = np.array([Outcome.SUCCESS, Outcome.COLLISION_PU] * 5)
    rewards = np.array([2.0, -2.0] * 5)
    m = compute_metrics(labels, rewards)
    assert m.success_rate[0] == 0.5 and m.pu_collision_rate[0] == 0.5
    assert m.mean_reward[0] == 0.0


def test_zero_slots_rejected():
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, 2)), np.zeros((0, 2)))


@given(hnp.arrays(np.int8, st.tuples(st.integers(1, 50), st.integers(1, 4)),
                  elements=st.sampled_from([int(o) for o in Outcome])))
def test_rates_partition(labels):
    m = compute_metrics(labels, np.zeros(labels.shape))
    total = m.success_rate + m.pu_collision_rate + m.su_collision_rate + m.idle_rate
    np.testing.assert_allclose(total, 1.0)


def metrics_for(iteration, L=2, seed=0):
    rng = np.random.default_rng(seed + iteration)
    return compute_metrics(rng.integers(0, 4, size=(20, L)), rng.normal(size=(20, L)),
                           iteration, 0.5)


def test_csv_rows_and_columns(tmp_path):
    path = emit_csv([metrics_for(k) for k in range(3)], tmp_path / "m.csv")
    rows = read_csv(path)
    assert len(rows) == 3 * (2 + 1)
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert [r["su"] for r in rows[:3]] == ["0", "1", "all"]
    agg = aggregate_series(rows, "success_rate")
    assert len(agg) == 3
    assert agg[0] == pytest.approx(metrics_for(0).aggregate("success_rate"))


def test_csv_floats_round_trip(tmp_path):
    m = metrics_for(0)
    rows = read_csv(emit_csv([m], tmp_path / "m.csv"))
    assert float(rows[0]["mean_reward"]) == m.mean_reward[0]


def test_empty_run_writes_header_only(tmp_path):
    path = emit_csv([], tmp_path / "empty.csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_csv_is_byte_stable(tmp_path):
    a = emit_csv([metrics_for(k) for k in range(3)], tmp_path / "a.csv")
    b = emit_csv([metrics_for(k) for k in range(3)], tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_csv([metrics_for(0)], blocker / "sub" / "m.csv")
