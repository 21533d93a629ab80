from __future__ import annotations

import numpy as np
import pytest

import bench
from ambient_cache import make_record
from distrib import broadcast_ambient, make_workers, run_dyn_scanbar, run_dyn_window, run_static
from partition import plan_windows, uniform_partition
from pipeline import make_workload, render_seq
from scene_core import load_animation
from sim_transport import Scenario, SimTransport
from wire import BROADCAST, AmbientBatch
from workload import ScriptedWorkload


def run_mode(mode, workload, workers, transport=None, share=False):
    transport = transport or SimTransport(latency=3, seed=workers)
    if mode in ("static", "static_lb"):
        plan = uniform_partition(workload.n_scanbars, min(workers, workload.n_scanbars))
        return run_static(workload, plan, mode == "static_lb", workers, transport, ambient_share=share)
    return run_dyn_scanbar(workload, workers, transport, ambient_share=share)


@pytest.fixture
def box_workload(small_cfg, box_scene):
    return make_workload(small_cfg(yres=25), box_scene)


@pytest.mark.parametrize("seed", [0, 1, 7])
@pytest.mark.parametrize("scene", ["box_scene", "peaks_scene", "empty_scene"])
@pytest.mark.parametrize("mode", ["static", "static_lb", "dyn_scanbar"])
def test_unshared_runs_match_sequential_bit_for_bit(request, small_cfg, scene, mode, seed):
    workload = make_workload(small_cfg(yres=25, seed=seed), request.getfixturevalue(scene))
    images, traced, counters, _ = render_seq(workload, ambient_share=False, progress=False)
    for workers in (1, 2, 4, 8):
        run = run_mode(mode, workload, workers, SimTransport(latency=5, seed=seed + workers))
        assert np.array_equal(run.image, images[0]), (mode, workers)
        assert run.image.tobytes() == images[0].tobytes()
        assert np.array_equal(run.traced[0], traced[0])
        assert np.all(run.coverage[0] == 1)
        assert run.stats.primary_total == counters.primary_rays
        assert run.stats.total_rays == counters.total_rays


def test_single_window_single_worker_is_the_sequential_render(small_cfg, box_scene):
    cfg = small_cfg(yres=25, ambient_bounces=0)
    workload = make_workload(cfg, box_scene)
    images, traced, counters, _ = render_seq(workload, ambient_share=False, progress=False)
    run = run_dyn_window(workload, plan_windows(cfg.hres, cfg.yres, 1), 1, SimTransport(), ambient_share=False)
    assert np.array_equal(run.image, images[0])
    assert np.array_equal(run.traced[0], traced[0])
    assert run.stats.primary_total == counters.primary_rays


@pytest.mark.parametrize("scene", ["box_scene", "peaks_scene", "empty_scene"])
def test_more_windows_trace_more_primaries(request, small_cfg, scene):
    cfg = small_cfg(hres=32, yres=33, ambient_bounces=0)
    workload = make_workload(cfg, request.getfixturevalue(scene))
    _, _, seq, _ = render_seq(workload, ambient_share=False, progress=False)
    primary = {}
    for target in (4, 64):
        run = run_dyn_window(workload, plan_windows(cfg.hres, cfg.yres, target), 2, SimTransport(), ambient_share=False)
        assert np.all(run.coverage[0] == 1)
        primary[target] = run.stats.primary_total
    assert primary[64] >= primary[4] >= seq.primary_rays
    assert primary[64] > seq.primary_rays


def test_sharing_saves_ambient_work(small_cfg, box_scene):
    workload = make_workload(small_cfg(hres=24, yres=25), box_scene)
    shared = run_mode("dyn_scanbar", workload, 4, share=True)
    private = run_mode("dyn_scanbar", workload, 4, share=False)
    assert shared.stats.total_rays < private.stats.total_rays
    assert shared.stats.ambient_merged > 0


def test_window_sharing_saves_a_tenth_of_the_rays(small_cfg, box_scene):
    cfg = small_cfg(hres=64, yres=64, ambient_bounces=1)
    saved = bench.sharing_comparison(cfg, box_scene, 4, windows=64)
    assert saved["windows"] == 64
    assert saved["shared_rays"] < saved["private_rays"]
    assert saved["saving"] >= 0.10
    assert saved["records_merged"] > 0


def test_window_records_are_broadcast_before_the_window_ends(small_cfg, box_scene):
    cfg = small_cfg(hres=24, yres=25, ambient_bounces=1)
    workload = make_workload(cfg, box_scene)
    run = run_dyn_window(workload, plan_windows(cfg.hres, cfg.yres, 1), 2, SimTransport(), ambient_share=True)
    sends = [e for e in run.trace if e.event == "send"]
    done = min(e.time for e in sends if e.kind == "ResultBlock")
    batches = [e for e in sends if e.kind == "AmbientBatch"]
    assert len(batches) > 1
    assert min(e.time for e in batches) < done


def test_worker_caches_agree_at_shutdown(box_workload):
    run = run_mode("dyn_scanbar", box_workload, 3, share=True)
    keys = [w.cache.keys() for w in run.workers]
    assert keys[0] and all(k == keys[0] for k in keys)
    assert all(w.finished for w in run.workers)


def test_shared_run_covers_the_image_once(box_workload):
    for mode in ("static_lb", "dyn_scanbar"):
        run = run_mode(mode, box_workload, 4, share=True)
        assert np.all(run.coverage[0] == 1)
        assert np.all(np.isfinite(run.image))


def test_one_worker_sends_no_ambient_records(box_workload):
    run = run_mode("dyn_scanbar", box_workload, 1, share=True)
    assert not [e for e in run.trace if e.kind == "AmbientBatch"]
    assert run.workers[0].records_broadcast == 0


def test_broadcast_needs_a_second_worker():
    workload = ScriptedWorkload(Scenario(1, hres=16, yres=17).sampling(), [1] * 4)
    record = make_record((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.2, 0.2, 0.2), 0.5, 0, 0)
    alone, = make_workers(workload, 1)
    alone.outbox.clear()
    broadcast_ambient(alone, [record])
    assert alone.outbox == []
    first, _ = make_workers(workload, 2)
    first.outbox.clear()
    broadcast_ambient(first, [record])
    broadcast_ambient(first, [])
    assert first.outbox == [(BROADCAST, AmbientBatch((record,)))]
    assert first.records_broadcast == 1


def test_lost_worker_does_not_change_the_image(box_workload):
    images, _, _, _ = render_seq(box_workload, ambient_share=False, progress=False)
    clean = run_mode("dyn_scanbar", box_workload, 3)
    failing = SimTransport(latency=3, seed=3, failures={1: clean.stats.makespan // 2})
    run = run_mode("dyn_scanbar", box_workload, 3, failing)
    assert 1 not in run.coordinator.alive
    assert np.array_equal(run.image, images[0])
    assert np.all(run.coverage[0] == 1)


def test_second_frame_reuses_ambient_records(small_cfg, box_scene, scenes_dir):
    cfg = small_cfg()
    cameras = load_animation(scenes_dir / "walk.anim")[:2]
    workload = make_workload(cfg, box_scene, cameras)
    run = run_dyn_window(workload, plan_windows(cfg.hres, cfg.yres, 4), 1, SimTransport(), ambient_share=True)
    ambient = [0, 0]
    for (frame, _), (_, counters) in run.coordinator.unit_counters.items(): ambient[frame] += counters.rays["ambient"]
    assert ambient[0] > 0
    assert ambient[1] < ambient[0]
    assert len(run.images) == 2 and all(np.all(c == 1) for c in run.coverage)
