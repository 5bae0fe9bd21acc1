import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from beamgame.engine import (
    PROTOCOLS,
    SimConfig,
    _block_weights,
    apply_axis,
    apply_feedback_overhead,
    game_epoch,
    run,
    sweep,
    write_diagnostics_csv,
    write_manifest,
    write_trace_csv,
)
from beamgame.game import GameInstance
from beamgame.topology import default_scenario

SMALL = default_scenario(num_bs=4, ues_per_bs=3, seed=3)
SHORT = SimConfig(epochs=40, seed=3)


@pytest.fixture(scope="module")
def traces():
    return {p: run(SMALL, SHORT.replace(protocol=p)) for p in PROTOCOLS}


def test_zero_epochs():
    tr = run(SMALL, SHORT.replace(epochs=0))
    assert tr.epochs == 0 and np.isnan(tr.final_utility)
    assert np.isnan(tr.convergence_rate())


def test_deterministic():
    a = run(SMALL, SHORT.replace(epochs=15))
    b = run(SMALL, SHORT.replace(epochs=15))
    assert np.array_equal(a.utility, b.utility) and np.array_equal(a.mean_power, b.mean_power)


def test_seed_changes_run():
    a = run(SMALL, SHORT.replace(epochs=15))
    b = run(SMALL, SHORT.replace(epochs=15, seed=4))
    assert not np.array_equal(a.utility, b.utility)


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_trace_shapes_and_limits(traces, protocol):
    tr = traces[protocol]
    assert tr.epochs == 40
    assert tr.mean_power.shape == (40, 4) and tr.h.shape == (40, 12)
    assert np.all(tr.mean_power >= 0) and np.all(tr.mean_power <= SMALL.p_max + 1e-12)
    assert np.all(tr.z >= 0) and np.all(tr.h >= 0)
    assert np.all(np.isfinite(tr.utility))


@pytest.mark.parametrize("protocol", PROTOCOLS)
def test_energy_telescopes_against_budget_queue(traces, protocol):
    tr = traces[protocol]
    per_watt = SHORT.slots_per_epoch * SHORT.energy_scale
    t = np.arange(1, tr.epochs + 1)[:, None]
    spent = tr.mean_power * t * per_watt
    allowed = t * per_watt * SMALL.p_avg + tr.z
    assert np.all(spent <= allowed * (1 + 1e-12))


def test_game_statistics_only_for_game(traces):
    assert np.all(np.isfinite(traces["game"].ne_iterations))
    assert 0.0 <= traces["game"].convergence_rate() <= 1.0
    assert np.all(np.isnan(traces["ideal"].ne_iterations))


def test_block_weights_cover_block():
    for path_len in (1, 2, 7, 50, 51, 200):
        w = _block_weights(path_len, 50)
        assert w.sum() == 50 and np.all(w >= 1)
    assert _block_weights(3, 50).tolist() == [1.0, 1.0, 48.0]


def test_game_epoch_constant_powers():
    inst = GameInstance([1.0, 1.0], [1.0, 1.0], 7.9, 2.0, np.diag([1.0, 1.0]), 1.0)
    # start at the fixed point: every slot sends the same powers
    start = np.full(2, 2.0 - 1.0)
    x, energy, final, blocks = game_epoch(inst, start, SHORT, rate=1.0, energy_scale=1.0, efficiency=1.0)
    assert_allclose(final, start)
    assert_allclose(energy, 400 * start)
    assert_allclose(x, 400 * np.log1p(start))
    assert len(blocks) == 8


def test_feedback_overhead():
    cfg = SHORT.replace(feedback_subslots=4)
    assert_allclose(apply_feedback_overhead(cfg, 400), 320)
    assert_allclose(apply_feedback_overhead(SHORT, 400), 400)


def test_full_feedback_leaves_no_throughput():
    tr = run(SMALL, SHORT.replace(epochs=5, feedback_subslots=20))
    assert not tr.mean_throughput.any()
    assert not tr.mean_power.any()


def test_no_feedback_matches_default():
    a = run(SMALL, SHORT.replace(epochs=10))
    b = run(SMALL, SHORT.replace(epochs=10, feedback_subslots=0))
    assert np.array_equal(a.utility, b.utility)


def test_gap_tracking():
    tr = run(SMALL, SHORT.replace(epochs=10, track_gap=True, zero_cross_gains=True))
    assert_allclose(tr.gap, 0.0, atol=1e-9)
    tr = run(SMALL, SHORT.replace(epochs=10, track_gap=True))
    assert np.all(np.isfinite(tr.gap))


def test_apply_axis():
    sc, cf = apply_axis(SMALL, SHORT, "msr", 30.0)
    assert_allclose(sc.bs_antenna.msr_db, 30.0)
    sc, _ = apply_axis(SMALL, SHORT, "beam_width", np.pi / 9)
    assert_allclose(sc.bs_antenna.beam_width, np.pi / 9)
    sc, _ = apply_axis(SMALL, SHORT, "ue_count", 20)
    assert sc.num_ues == 20
    with pytest.raises(ValueError):
        apply_axis(SMALL, SHORT, "ue_count", 10)
    with pytest.raises(ValueError):
        apply_axis(SMALL, SHORT, "bandwidth", 1)


def test_sweep_ordering_and_workers():
    serial = sweep(SMALL, SHORT.replace(epochs=5), "msr", [10.0, 20.0], seeds=[1, 2])
    assert [(v, s) for v, s, _ in serial] == [(10.0, 1), (10.0, 2), (20.0, 1), (20.0, 2)]
    parallel = sweep(SMALL, SHORT.replace(epochs=5), "msr", [10.0, 20.0], seeds=[1, 2], workers=2)
    for (_, _, a), (_, _, b) in zip(serial, parallel):
        assert np.array_equal(a.utility, b.utility)


def test_more_users_raise_network_utility_lower_per_user():
    base = default_scenario(seed=1)
    res = sweep(base, SimConfig(epochs=300, seed=1), "ue_count", [50, 100, 150])
    net = [tr.final_utility for _, _, tr in res]
    per_ue = [tr.final_utility / n for (_, _, tr), n in zip(res, [50, 100, 150])]
    assert net[0] < net[1] < net[2]
    assert per_ue[0] > per_ue[1] > per_ue[2]


def test_writers(tmp_path, traces):
    tr = traces["game"]
    write_trace_csv(tmp_path / "t.csv", tr)
    rows = list(csv.reader((tmp_path / "t.csv").open()))
    assert rows[0] == (["epoch", "utility"] + [f"mean_power_bs{i}" for i in range(4)]
                       + ["ne_iterations_mean", "ne_converged_fraction", "gap"])
    assert len(rows) == 41 and rows[1][0] == "1"
    assert rows[1][-1] == ""  # gap not tracked
    assert float(rows[-1][1]) == tr.final_utility

    write_manifest(tmp_path / "m.json", [{"a": np.float64(1.5), "b": np.arange(2)}])
    assert json.loads((tmp_path / "m.json").read_text()) == [{"a": 1.5, "b": [0, 1]}]

    diag = run(SMALL, SHORT.replace(epochs=3, diagnostics=True))
    write_diagnostics_csv(tmp_path / "d.csv", diag)
    rows = list(csv.reader((tmp_path / "d.csv").open()))
    assert rows[0][:6] == ["epoch", "block", "iterations", "converged", "residual", "p_matrix"]
    assert len(rows) == 1 + 3 * 8
    assert all(r[5] in ("0", "1") for r in rows[1:])


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(protocol="aloha")
    with pytest.raises(ValueError):
        SimConfig(feedback_subslots=21)
    with pytest.raises(ValueError):
        SimConfig(epochs=-1)
    with pytest.raises(ValueError):
        SimConfig(slots_per_block=10)  # contention window longer than the epoch
