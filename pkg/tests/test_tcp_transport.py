import numpy as np
import pytest

from distrib import run_dyn_scanbar, run_dyn_window, run_static
from partition import plan_windows, uniform_partition
from pipeline import make_workload, render_seq
from sim_transport import Scenario
from tcp_transport import TcpTransport
from workload import ScriptedWorkload


def test_spawn_mode_is_checked():
    with pytest.raises(ValueError):
        TcpTransport(spawn="thread")


def test_task_workers_render_the_sequential_image(small_cfg, box_scene):
    workload = make_workload(small_cfg(yres=25), box_scene)
    images, _, counters, _ = render_seq(workload, ambient_share=False, progress=False)
    run = run_dyn_scanbar(workload, 2, TcpTransport(spawn="task", timeout=120), ambient_share=False)
    assert np.array_equal(run.image, images[0])
    assert np.all(run.coverage[0] == 1)
    assert run.stats.primary_total == counters.primary_rays
    assert run.stats.wall_time > 0 and run.stats.speedup is None


def test_shared_ambient_over_sockets(small_cfg, box_scene):
    workload = make_workload(small_cfg(yres=25), box_scene)
    run = run_static(workload, uniform_partition(workload.n_scanbars, 3), True, 3, TcpTransport(spawn="task", timeout=120))
    assert np.all(run.coverage[0] == 1)
    keys = [w.cache.keys() for w in run.workers]
    assert all(k == keys[0] for k in keys)


def test_process_workers_report_through_the_coordinator():
    sampling = Scenario(1, hres=32, yres=33).sampling()
    workload = ScriptedWorkload(sampling, window_costs={i: 5 for i in range(16)})
    run = run_dyn_window(workload, plan_windows(32, 33, 16), 2, TcpTransport(timeout=120), ambient_share=False)
    assert np.all(run.coverage[0] == 1)
    assert run.stats.primary_total == 16 * 5
    assert len(run.stats.per_worker) == 2
