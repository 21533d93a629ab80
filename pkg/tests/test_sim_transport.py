from __future__ import annotations

import numpy as np
import pytest

from distrib import Coordinator, make_workers
from errors import SimulationError
from partition import PartitionPlan, uniform_partition
from sim_transport import Scenario, SimTransport, idle_gaps, simulate
from wire import ScanlineChunk, TransferHalfDemand, TransferredScanbars
from workload import ScriptedWorkload


def sent(run, kind):
    return [e for e in run.trace if e.event == "send" and isinstance(e.message, kind)]


def test_one_worker_speedup_is_exactly_one():
    run = simulate(Scenario(1, "dyn_scanbar", scanbar_costs=[30, 10, 50, 20]*4))
    assert run.stats.speedup == 1.0
    assert run.stats.makespan == run.stats.work_ticks == sum([30, 10, 50, 20]*4)


def test_equal_windows_scale_perfectly():
    run = simulate(Scenario(8, "dyn_window", windows=64, window_costs={i: 100 for i in range(64)}))
    assert run.stats.makespan == 800
    assert run.stats.speedup == 8.0


def test_every_pixel_is_reported_once():
    for mode in ("static", "static_lb", "dyn_scanbar", "dyn_window"):
        run = simulate(Scenario(3, mode, hres=20, yres=29, scanbar_costs=[5 + k for k in range(7)], latency=2, seed=4))
        assert np.all(run.coverage[0] == 1), mode


def test_static_partition_ships_one_boundary_stream():
    costs = [4, 1, 1, 1, 1, 4]
    plan = uniform_partition(6, 2)
    run = simulate(Scenario(2, "static", hres=16, yres=25, scanbar_costs=[100 * c for c in costs], plan=plan))
    assert [a[2] for a in run.stats.schedule if a[3] == 0] == [0, 1, 2]
    assert [a[2] for a in run.stats.schedule if a[3] == 1] == [3, 4, 5]
    chunks = sent(run, ScanlineChunk)
    assert chunks
    assert {(e.src, e.dst, e.message.y) for e in chunks} == {(1, 0, 12)}
    xs = [e.message.x0 for e in chunks]
    assert xs == sorted(xs) and xs[0] == 0


def test_load_balancing_moves_half_of_the_unstarted_scanbars():
    plan = PartitionPlan(2, (0, 11, 12), (11000.0, 10.0))
    costs = [1000] * 11 + [10]
    run = simulate(Scenario(2, "static_lb", hres=16, yres=49, scanbar_costs=costs, plan=plan))
    demands = sent(run, TransferHalfDemand)
    assert len(demands) == 1
    assert (demands[0].dst, demands[0].message.target) == (0, 1)
    moved = [e.message for e in sent(run, TransferredScanbars) if e.dst == 1]
    assert len(moved) == 1 and moved[0].scanbars == (6, 7, 8, 9, 10)
    assert run.stats.transfers == [(0, 1, (6, 7, 8, 9, 10))]
    donor, recipient = run.workers
    assert not set(moved[0].scanbars) & set(donor.completed)
    assert set(moved[0].scanbars) <= set(recipient.completed)
    assert run.stats.makespan < sum(costs)


def test_transfers_never_move_started_scanbars():
    rng = np.random.default_rng(8)
    costs = [int(c) for c in rng.integers(10, 400, 24)]
    run = simulate(Scenario(4, "static_lb", hres=16, yres=97, scanbar_costs=costs, plan=uniform_partition(24, 4), latency=3, seed=2))
    done = [k for w in run.workers for k in w.completed]
    assert sorted(done) == list(range(24))
    for a, b, moved in run.stats.transfers:
        assert not set(moved) & set(run.workers[a].completed)
    assert np.all(run.coverage[0] == 1)


def test_dyn_scanbar_initial_assignment_is_strided():
    run = simulate(Scenario(2, "dyn_scanbar", hres=16, yres=25, scanbar_costs=[50] * 6))
    assert run.stats.schedule[:2] == [("scanbar", 0, 0, 0), ("scanbar", 0, 3, 1)]
    assert sorted(a[2] for a in run.stats.schedule) == list(range(6))


def test_dyn_scanbar_prefers_consecutive_scanbars():
    run = simulate(Scenario(2, "dyn_scanbar", hres=16, yres=33, scanbar_costs=[50] * 8))
    by_worker = {w: [a[2] for a in run.stats.schedule if a[3] == w] for w in (0, 1)}
    assert by_worker[0][:2] == [0, 1]
    assert by_worker[1][:2] == [4, 5]


def test_runs_are_deterministic():
    s = Scenario(4, "dyn_scanbar", hres=24, yres=41, scanbar_costs=list(range(10, 110, 10)), latency=5, seed=3)
    a, b = simulate(s), simulate(s)
    key = lambda run: [(e.time, e.event, e.src, e.dst, e.kind) for e in run.trace]
    assert key(a) == key(b)
    assert a.stats.timelines == b.stats.timelines


def test_seed_changes_cross_pair_interleaving_only():
    base = dict(hres=24, yres=41, scanbar_costs=[40] * 10, latency=5)
    a, b = simulate(Scenario(3, "dyn_scanbar", seed=1, **base)), simulate(Scenario(3, "dyn_scanbar", seed=2, **base))
    assert np.all(a.coverage[0] == 1) and np.all(b.coverage[0] == 1)
    assert a.stats.work_ticks == b.stats.work_ticks


def test_no_worker_starves_while_work_remains():
    latency = 4
    costs = [120] * 32
    run = simulate(Scenario(4, "dyn_scanbar", hres=16, yres=129, scanbar_costs=costs, latency=latency))
    end = run.stats.makespan
    for w, gaps in idle_gaps(run.stats.timelines).items():
        for a, b in gaps:
            if b < end - 2 * max(costs): assert b - a <= max(costs) + 2 * latency, (w, a, b)


def test_static_lb_keeps_idle_workers_fed():
    latency = 4
    costs = [120] * 32
    plan = PartitionPlan(4, (0, 20, 24, 28, 32), (2400.0, 480.0, 480.0, 480.0))
    run = simulate(Scenario(4, "static_lb", hres=16, yres=129, scanbar_costs=costs, plan=plan, latency=latency))
    assert len(run.stats.transfers) >= 3
    assert run.stats.makespan < 2400
    end = run.stats.makespan
    for w, gaps in idle_gaps(run.stats.timelines).items():
        for a, b in gaps:
            if b < end - 2 * max(costs): assert b - a <= max(costs) + 2 * latency, (w, a, b)


def test_wire_roundtrip_gives_the_same_run():
    s = dict(hres=16, yres=33, scanbar_costs=[30, 60, 90, 30, 60, 90, 30, 60], latency=2)
    a = simulate(Scenario(3, "dyn_scanbar", **s))
    b = simulate(Scenario(3, "dyn_scanbar", wire_roundtrip=True, **s))
    assert a.stats.makespan == b.stats.makespan
    assert np.array_equal(a.coverage[0], b.coverage[0])


@pytest.mark.parametrize("mode", ["dyn_scanbar", "static_lb", "dyn_window"])
def test_worker_failure_is_recovered(mode):
    s = Scenario(3, mode, hres=16, yres=41, scanbar_costs=[200] * 10, window_costs={i: 200 for i in range(16)},
                 plan=uniform_partition(10, 3), latency=1, failures={1: 450})
    run = simulate(s)
    assert run.coordinator.done
    assert np.all(run.coverage[0] == 1)
    assert 1 not in run.coordinator.alive


def test_deadlock_is_reported():
    sampling = Scenario(2, hres=16, yres=25).sampling()
    coordinator = Coordinator("dyn_scanbar", 2, sampling, ambient_share=False)
    workload = ScriptedWorkload(sampling, [10] * 6)
    workers = make_workers(workload, 2, ambient_share=False)
    workers[1].on_message = lambda src, msg: None
    with pytest.raises(SimulationError, match="deadlock"):
        SimTransport().run(coordinator, workload, 2, ambient_share=False, workers=workers)


def test_event_budget_is_enforced():
    sampling = Scenario(2, hres=16, yres=25).sampling()
    with pytest.raises(SimulationError, match="quiescence"):
        SimTransport(max_events=10).run(Coordinator("dyn_scanbar", 2, sampling, ambient_share=False),
                                        ScriptedWorkload(sampling, [10] * 6), 2, ambient_share=False)


def test_start_delay_shifts_every_worker():
    run = simulate(Scenario(2, "static", hres=16, yres=25, scanbar_costs=[100] * 6, plan=uniform_partition(6, 2), start_delay=50))
    assert min(a for spans in run.stats.timelines.values() for a, _ in spans) >= 50
    assert run.stats.makespan >= 350
