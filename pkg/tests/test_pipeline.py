import jsonschema
import numpy as np
import pytest

from output import STATS_SCHEMA
from pipeline import (SCHEMES, estimation_delay, make_workload, measure_scanbar_costs, plan_partition, render_seq, run_render,
                      scheme_costs)
from scene_core import load_animation


@pytest.mark.parametrize("mode", ["seq", "static", "static_lb", "dyn_scanbar", "dyn_window"])
def test_every_mode_produces_valid_stats(small_cfg, box_scene, mode):
    cfg = small_cfg(mode=mode, workers=2, windows=4)
    outcome = run_render(cfg, box_scene)
    jsonschema.validate(outcome.stats, STATS_SCHEMA)
    assert outcome.stats["mode"] == mode
    assert outcome.images[0].shape == (17, 16, 3) and outcome.images[0].dtype == np.float32
    assert outcome.stats["total_rays"] == sum(w["total_rays"] for w in outcome.stats["per_worker"])


def test_sequential_stats_list_primary_rays_per_scanbar(small_cfg, box_scene):
    outcome = run_render(small_cfg(), box_scene)
    stats = outcome.stats
    assert stats["transport"] == "none" and stats["speedup"] is None
    assert len(stats["scanbar_primary"]) == 4
    assert sum(stats["scanbar_primary"]) == stats["primary_total"]


def test_static_run_charges_its_estimation(small_cfg, box_scene):
    outcome = run_render(small_cfg(mode="static", workers=2), box_scene)
    assert outcome.stats["start_delay"] > 0
    assert len(outcome.stats["estimates"]) == 4
    assert outcome.stats["plan"]["p"] == 2


def test_sim_speedup_against_a_baseline(small_cfg, box_scene):
    baseline = run_render(small_cfg(mode="dyn_scanbar", workers=1), box_scene).stats
    assert baseline["speedup"] == 1.0
    outcome = run_render(small_cfg(mode="dyn_scanbar", workers=2), box_scene, baseline=baseline)
    assert outcome.stats["speedup"] == pytest.approx(baseline["makespan"] / outcome.stats["makespan"])


def test_schemes(small_cfg, box_scene):
    cfg = small_cfg(yres=25)
    workload = make_workload(cfg, box_scene)
    truth = measure_scanbar_costs(workload)
    assert scheme_costs(workload, "uniform", cfg) == (None, [])
    assert scheme_costs(workload, "optimum", cfg, truth) == (truth, [])
    for name, (probes, _) in ((k, v) for k, v in SCHEMES.items() if v):
        costs, rays = scheme_costs(workload, name, cfg)
        assert len(costs) == len(rays) == 6 and all(r >= probes for r in rays)
    plan, costs, _ = plan_partition(workload, "optimum", 3, cfg, truth)
    assert plan.boundaries[0] == 0 and plan.boundaries[-1] == 6
    assert plan.max_cost == max(plan.costs)


def test_true_costs_add_up_to_the_render(small_cfg, box_scene):
    workload = make_workload(small_cfg(yres=25), box_scene)
    _, _, counters, _ = render_seq(workload, ambient_share=False, progress=False)
    assert sum(measure_scanbar_costs(workload)) == counters.total_rays
    assert sum(measure_scanbar_costs(workload, "primary")) == counters.primary_rays


def test_animation_pools_frames(small_cfg, box_scene, scenes_dir):
    cameras = load_animation(scenes_dir / "walk.anim")
    outcome = run_render(small_cfg(mode="dyn_window", workers=2, windows=4), box_scene, cameras)
    assert len(outcome.images) == 4 and outcome.stats["frames"] == 4
    assert not np.array_equal(outcome.images[0], outcome.images[3])


def test_estimation_is_split_across_workers():
    rays = [10, 20, 30, 40, 50]
    assert estimation_delay(rays, 1) == 150
    assert estimation_delay(rays, 2) == 90
    assert estimation_delay(rays, 8) == 50
    assert estimation_delay([], 4) == 0


def test_static_delay_shrinks_with_more_workers(small_cfg, box_scene):
    one = run_render(small_cfg(mode="static", workers=1), box_scene).stats["start_delay"]
    four = run_render(small_cfg(mode="static", workers=4), box_scene).stats["start_delay"]
    assert 0 < four < one
