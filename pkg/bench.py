"""Speedup tables over the simulated transport.

Rows are distribution schemes (partition scheme for the static modes, window
count for dyn_window), columns are worker counts. Every speedup is measured
against the one-worker run of the same row, or against a baseline stats file.
"""
import logging

import matplotlib
import numpy as np
import pandas as pd

from distrib import run_dyn_scanbar, run_dyn_window, run_static
from partition import plan_windows
from pipeline import estimation_delay, make_workload, measure_scanbar_costs, partition_for, scheme_costs
from quincunx import plan_scanbars
from scene_core import BUILD_COUNTER
from sim_transport import Scenario, SimTransport, simulate

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

STATIC_MODES = ("static", "static_lb")
BENCH_MODES = ("static", "static_lb", "dyn_scanbar", "dyn_window")


# --- Perfiles de coste ---
def scripted_window_costs(costs, sampling, grid):
    """Window cost: its share of the scanbar costs it overlaps plus its own boundary lattice."""
    bars = plan_scanbars(sampling)
    row_cost = np.zeros(sampling.yres)
    for b, c in zip(bars, costs):
        row_cost[b.y0:b.y1 + 1] += c / (b.y1 - b.y0 + 1)
    out = {}
    for w in grid.windows:
        share = row_cost[w.y0:w.y0 + w.height].sum() * w.width / sampling.hres
        out[w.index] = max(1, int(round(share * (1 + sampling.xs / w.width + sampling.ys / w.height))))
    return out


def latency_for(costs, fraction=0.001):
    return max(1, int(round(fraction * float(np.mean(costs))))) if costs else 0


# --- Filas ---
def _row(mode, scheme, windows, workers, stats):
    return {"mode": mode, "scheme": scheme, "windows": windows, "workers": workers,
            "primary_rays": int(stats.primary_total), "total_rays": int(stats.total_rays),
            "makespan": float(stats.makespan), "start_delay": float(stats.start_delay)}


def _with_baseline(workers_list):
    return sorted(set(workers_list) | {1})


def bench_scene(cfg, scene, modes=BENCH_MODES, workers_list=(1, 2, 4, 8), windows_list=(4, 16, 64), schemes=("estim5b",)):
    """Bench matrix on a real scene; every run on the simulated transport."""
    workload = make_workload(cfg, scene)
    true_costs = measure_scanbar_costs(workload) if "optimum" in schemes and set(modes) & set(STATIC_MODES) else None
    rows = []
    for mode in modes:
        if mode in STATIC_MODES:
            for scheme in schemes:
                costs, rays = scheme_costs(workload, scheme, cfg, true_costs)
                for w in _with_baseline(workers_list):
                    plan = partition_for(scheme, costs, workload.n_scanbars, w)
                    run = run_static(workload, plan, mode == "static_lb", w, SimTransport(cfg.latency_ticks, cfg.seed),
                                     ambient_share=cfg.ambient_share, scanbar_costs=costs, start_delay=estimation_delay(rays, w))
                    rows.append(_row(mode, scheme, 0, w, run.stats))
        elif mode == "dyn_scanbar":
            for w in _with_baseline(workers_list):
                run = run_dyn_scanbar(workload, w, SimTransport(cfg.latency_ticks, cfg.seed), ambient_share=cfg.ambient_share)
                rows.append(_row(mode, "-", 0, w, run.stats))
        else:
            for target in windows_list:
                grid = plan_windows(cfg.hres, cfg.yres, target, cfg.strategy, cfg.seed)
                for w in _with_baseline(workers_list):
                    run = run_dyn_window(workload, grid, w, SimTransport(cfg.latency_ticks, cfg.seed), ambient_share=cfg.ambient_share)
                    rows.append(_row(mode, "-", target, w, run.stats))
        logger.info("bench: %s done", mode)
    return finish_table(pd.DataFrame(rows), workers_list)


def bench_profile(cfg, scene, modes=BENCH_MODES, workers_list=(1, 2, 4, 8), windows_list=(4, 16, 64), schemes=("estim5b",),
                  latency=None, boundary_fraction=0.25):
    """Bench matrix over the scene's measured per-scanbar costs.

    The scene is rendered once to measure what every scanbar costs; the
    protocol then runs on scripted units with those costs, so large worker
    and window sweeps cost no further rendering. Estimated schemes still
    trace their rays on the scene and are charged for them.
    """
    workload = make_workload(cfg, scene)
    costs = [int(c) for c in measure_scanbar_costs(workload)]
    sampling = workload.sampling
    latency = latency_for(costs) if latency is None else latency
    logger.info("bench: measured %d scanbar costs, %d rays in all, latency %d", len(costs), sum(costs), latency)
    base = dict(hres=sampling.hres, yres=sampling.yres, xstep=sampling.xstep, ystep=sampling.ystep, scanbar_costs=costs,
                latency=latency, seed=cfg.seed, boundary_fraction=boundary_fraction)
    rows = []
    for mode in modes:
        if mode in STATIC_MODES:
            for scheme in schemes:
                est, rays = scheme_costs(workload, scheme, cfg, costs)
                for w in _with_baseline(workers_list):
                    plan = partition_for(scheme, est, len(costs), w)
                    run = simulate(Scenario(w, mode, plan=plan, estimates=est, start_delay=estimation_delay(rays, w), **base))
                    rows.append(_row(mode, scheme, 0, w, run.stats))
        elif mode == "dyn_scanbar":
            for w in _with_baseline(workers_list):
                rows.append(_row(mode, "-", 0, w, simulate(Scenario(w, mode, **base)).stats))
        else:
            for target in windows_list:
                grid = plan_windows(sampling.hres, sampling.yres, target, cfg.strategy, cfg.seed)
                window_costs = scripted_window_costs(costs, sampling, grid)
                for w in _with_baseline(workers_list):
                    run = simulate(Scenario(w, mode, windows=target, strategy=cfg.strategy, window_costs=window_costs, **base))
                    rows.append(_row(mode, "-", target, w, run.stats))
        logger.info("bench: %s done", mode)
    return finish_table(pd.DataFrame(rows), workers_list)


def finish_table(df, workers_list, baseline=None):
    """Speedup per row against its one-worker run (or a baseline makespan); drops unrequested baseline runs."""
    keys = ["mode", "scheme", "windows"]
    if baseline is not None:
        df["speedup"] = baseline / df["makespan"]
    else:
        ref = df[df["workers"] == 1].set_index(keys)["makespan"]
        df["speedup"] = [ref.loc[tuple(k)] / m if m else 1.0 for k, m in zip(df[keys].itertuples(index=False), df["makespan"])]
    return df[df["workers"].isin(workers_list)].reset_index(drop=True)


def speedup_table(df, value="speedup"):
    return df.pivot_table(index=["mode", "scheme", "windows"], columns="workers", values=value, aggfunc="first")


def write_bench_csv(df, path):
    df.to_csv(path, index=False, float_format="%.4f")
    logger.info("wrote %d bench rows to %s", len(df), path)


def format_table(df):
    lines = ["speedup", speedup_table(df).to_string(float_format=lambda v: f"{v:.2f}"), "",
             "primary rays", speedup_table(df, "primary_rays").to_string()]
    return "\n".join(lines)


def plot_speedups(df, path):
    fig, ax = plt.subplots(figsize=(7, 5))
    workers = sorted(df["workers"].unique())
    for (mode, scheme, windows), group in df.groupby(["mode", "scheme", "windows"]):
        label = mode if scheme == "-" else f"{mode} {scheme}"
        if windows: label += f" {windows}w"
        group = group.sort_values("workers")
        ax.plot(group["workers"], group["speedup"], marker="o", label=label)
    ax.plot(workers, workers, color="grey", linestyle="--", linewidth=0.8, label="ideal")
    ax.set_xlabel("workers")
    ax.set_ylabel("simulated speedup")
    ax.legend(fontsize="small")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


# --- Animación ---
def animation_comparison(cfg, scene, cameras, workers, windows=None):
    """Pooled multi-frame dyn_window run against one independent run per frame."""
    transport = SimTransport(cfg.latency_ticks, cfg.seed)
    grid = plan_windows(cfg.hres, cfg.yres, windows or cfg.windows, cfg.strategy, cfg.seed)
    before = BUILD_COUNTER["octree"]
    pooled = run_dyn_window(make_workload(cfg, scene, cameras), grid, workers, transport, ambient_share=cfg.ambient_share)
    pooled_builds = BUILD_COUNTER["octree"] - before
    alone = [run_dyn_window(make_workload(cfg, scene, [cam]), grid, workers, SimTransport(cfg.latency_ticks, cfg.seed),
                            ambient_share=cfg.ambient_share) for cam in cameras]
    independent_rays = sum(r.stats.total_rays for r in alone)
    independent_ticks = sum(r.stats.makespan for r in alone)
    return {"frames": len(cameras), "workers": workers, "pooled_rays": int(pooled.stats.total_rays),
            "independent_rays": int(independent_rays), "ray_ratio": pooled.stats.total_rays / independent_rays if independent_rays else 1.0,
            "pooled_makespan": float(pooled.stats.makespan), "independent_makespan": float(independent_ticks),
            "octree_builds": pooled_builds, "run": pooled}


# --- Reparto de registros ambient ---
def sharing_comparison(cfg, scene, workers, windows=None):
    """dyn_window with and without ambient record broadcast on the same grid."""
    grid = plan_windows(cfg.hres, cfg.yres, windows or cfg.windows, cfg.strategy, cfg.seed)
    workload = make_workload(cfg, scene)
    runs = {share: run_dyn_window(workload, grid, workers, SimTransport(cfg.latency_ticks, cfg.seed), ambient_share=share)
            for share in (True, False)}
    shared, private = runs[True].stats.total_rays, runs[False].stats.total_rays
    saving = 1.0 - shared / private if private else 0.0
    logger.info("ambient sharing on %d windows, %d workers: %d rays against %d (%.1f%% saved)", len(grid.windows), workers,
                shared, private, 100 * saving)
    return {"windows": len(grid.windows), "workers": workers, "shared_rays": int(shared), "private_rays": int(private),
            "saving": saving, "records_merged": int(runs[True].stats.ambient_merged)}


def window_primary_report(run, grid):
    """Primary rays per rendered window of a dyn_window run."""
    by_index = {w.index: w for w in grid.windows}
    rows = []
    for (frame, index), (worker, counters) in sorted(run.coordinator.unit_counters.items()):
        w = by_index[index]
        rows.append({"frame": frame, "window": index, "row": w.row, "col": w.col, "width": w.width, "height": w.height,
                     "worker": worker, "primary_rays": int(counters.primary_rays), "total_rays": int(counters.total_rays)})
    return pd.DataFrame(rows)
