"""From a RenderConfig and a scene to images and a stats dictionary."""
import logging
from dataclasses import dataclass, field

from ambient_cache import AmbientCache, AmbientSession
from distrib import run_dyn_scanbar, run_dyn_window, run_static
from output import STATS_VERSION
from partition import counter_cost, equalize, estimate_costs, optimal_partition, plan_windows, uniform_partition
from quincunx import SamplingParams, render_sequential
from scene_core import TraceCounters, build_octree
from shader import ShadingParams
from sim_transport import SimTransport
from tcp_transport import TcpTransport
from workload import RenderWorkload

logger = logging.getLogger(__name__)

SCHEMES = {"uniform": None, "estim5a": (5, "rays"), "estim5b": (5, "intersections"),
           "estim20a": (20, "rays"), "estim20b": (20, "intersections"), "optimum": None}


@dataclass
class RenderOutcome:
    images: list
    traced: list
    stats: dict
    run: object = None
    workers: list = field(default_factory=list)


def sampling_params(cfg):
    return SamplingParams(cfg.hres, cfg.yres, cfg.xstep, cfg.ystep, cfg.tolerance, cfg.initial_density)


def shading_params(cfg):
    return ShadingParams(cfg.max_specular_depth, cfg.ambient_divisions, cfg.ambient_tolerance, cfg.ambient_bounces, cfg.seed)


def make_workload(cfg, scene, cameras=None, octree=None):
    octree = octree or build_octree(scene, cfg.max_depth, cfg.leaf_capacity)
    return RenderWorkload(octree, sampling_params(cfg), shading_params(cfg), cameras or [scene.camera])


def make_transport(cfg):
    return TcpTransport(port=cfg.port) if cfg.transport == "tcp" else SimTransport(cfg.latency_ticks, cfg.seed)


def render_seq(workload, ambient_share=True, carry_density=False, progress=True):
    """Sequential render of every frame on one counter set; per-scanbar reset unless carry_density."""
    counters = TraceCounters()
    shared = AmbientSession(AmbientCache.for_octree(workload.octree), 0)
    images, traced, per_scanbar = [], [], []
    for frame in range(workload.frames):
        def session():
            return shared if ambient_share else AmbientSession(AmbientCache.for_octree(workload.octree), 0, shared.sequence)

        if carry_density:
            result = render_sequential(workload.sampling, workload.tracer(frame, session(), counters), counters, progress=progress)
        else:
            result = render_sequential(workload.sampling, None, counters, reset_per_scanbar=True, progress=progress,
                                       tracer_for=lambda k: workload.tracer(frame, session(), counters))
        images.append(result.image)
        traced.append(result.traced)
        per_scanbar.append(result.scanbar_costs)
    return images, traced, counters, per_scanbar


def measure_scanbar_costs(workload, measure="rays"):
    """True per-scanbar cost of a full render, ambient cache private to each scanbar."""
    _, _, _, per_scanbar = render_seq(workload, ambient_share=False, progress=False)
    return [counter_cost(c, measure) for c in per_scanbar[0]]


def scheme_costs(workload, scheme, cfg, true_costs=None):
    """Per-scanbar cost vector a partition scheme plans with, and the rays spent estimating each scanbar."""
    if scheme == "uniform": return None, []
    if scheme == "optimum":
        return list(true_costs if true_costs is not None else measure_scanbar_costs(workload)), []
    probes, measure = SCHEMES.get(scheme) or (cfg.probes, cfg.measure)
    estimates = estimate_costs(workload.scanbars(), probes, measure, workload.octree, workload.shading, cfg.seed,
                               workload.cameras[0], workload.sampling.hres, workload.sampling.yres)
    return [e.cost for e in estimates], [e.rays for e in estimates]


def estimation_delay(rays, workers):
    """Ticks before rendering starts when the workers estimate the scanbars round-robin, in parallel."""
    if not rays: return 0
    workers = max(1, workers)
    return max(sum(rays[w::workers]) for w in range(workers))


def partition_for(scheme, costs, n, p):
    p = min(p, n)
    if costs is None: return uniform_partition(n, p)
    return optimal_partition(costs, p) if scheme == "optimum" else equalize(costs, p)


def plan_partition(workload, scheme, p, cfg, true_costs=None):
    """Static plan for one scheme, the per-scanbar cost vector it saw and the estimation cost."""
    costs, rays = scheme_costs(workload, scheme, cfg, true_costs)
    plan = partition_for(scheme, costs, workload.n_scanbars, p)
    delay = estimation_delay(rays, p)
    logger.info("%s plan over %d scanbars: boundaries %s", scheme, workload.n_scanbars, list(plan.boundaries))
    return plan, costs, delay


def _counters_total(per_worker):
    total = TraceCounters()
    for c in per_worker: total.merge(c)
    return total


def base_stats(cfg, mode, transport, workers, frames, per_worker):
    total = _counters_total(per_worker)
    return {"version": STATS_VERSION, "mode": mode, "transport": transport, "workers": workers,
            "hres": cfg.hres, "yres": cfg.yres, "frames": frames, "seed": cfg.seed,
            "primary_total": int(total.primary_rays), "total_rays": int(total.total_rays),
            "intersection_tests": int(total.intersection_tests),
            "ambient_records_created": int(total.ambient_records_created),
            "ambient_records_merged": int(total.ambient_records_merged),
            "per_worker": [c.as_dict() for c in per_worker], "speedup": None}


def run_render(cfg, scene, cameras=None, *, workload=None, scheme=None, transport=None, baseline=None):
    workload = workload or make_workload(cfg, scene, cameras)
    if cfg.mode == "seq":
        images, traced, counters, per_scanbar = render_seq(workload, cfg.ambient_share, cfg.carry_density)
        stats = base_stats(cfg, "seq", "none", 1, workload.frames, [counters])
        stats["scanbar_primary"] = [int(c.primary_rays) for c in per_scanbar[0]]
        return RenderOutcome(images, traced, stats)
    transport = transport or make_transport(cfg)
    estimates = None
    if cfg.mode in ("static", "static_lb"):
        plan, estimates, delay = plan_partition(workload, scheme or "estim", cfg.workers, cfg)
        delay = delay if cfg.transport == "sim" else 0
        run = run_static(workload, plan, cfg.mode == "static_lb", cfg.workers, transport, ambient_share=cfg.ambient_share,
                         scanbar_costs=estimates, start_delay=delay)
    elif cfg.mode == "dyn_scanbar":
        run = run_dyn_scanbar(workload, cfg.workers, transport, ambient_share=cfg.ambient_share)
    else:
        grid = plan_windows(cfg.hres, cfg.yres, cfg.windows, cfg.strategy, cfg.seed)
        run = run_dyn_window(workload, grid, cfg.workers, transport, ambient_share=cfg.ambient_share)
    stats = base_stats(cfg, cfg.mode, cfg.transport, cfg.workers, workload.frames, run.stats.per_worker)
    for key, value in run.stats.as_dict().items():
        if key not in stats and key != "per_worker": stats[key] = value
    stats["estimates"] = estimates
    stats["speedup"] = run.stats.speedup if cfg.transport == "sim" else None
    if baseline is not None:
        ref = baseline.get("makespan") or baseline.get("wall_time")
        mine = run.stats.makespan or run.stats.wall_time
        stats["speedup"] = (ref / mine) if ref and mine else None
    return RenderOutcome(run.images, run.traced, stats, run, run.workers)
