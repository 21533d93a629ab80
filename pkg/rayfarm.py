import logging
import os
import sys

import click

import bench
from config import DEFAULT_PROBES, DEFAULT_WINDOWS, MEASURES, MODES, STRATEGIES, build_config
from errors import ConfigError, RenderError
from output import load_stats_json, write_image, write_stats_json
from partition import plan_windows
from distrib import run_dyn_window
from pipeline import SCHEMES, make_workload, run_render
from scene_core import load_animation, load_scene
from sim_transport import SimTransport

logger = logging.getLogger("rayfarm")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


# --- Opciones comunes ---
def _sampling_options(f):
    options = [
        click.option("--scene", "scene_path", type=click.Path(dir_okay=False), help="Scene file."),
        click.option("-x", "hres", type=click.IntRange(min=1), help="Horizontal resolution."),
        click.option("-y", "yres", type=click.IntRange(min=1), help="Vertical resolution."),
        click.option("--xstep", type=click.IntRange(min=1), help="Quincunx horizontal step."),
        click.option("--ystep", type=click.IntRange(min=1), help="Quincunx vertical step (scanbar height)."),
        click.option("--tolerance", type=click.FloatRange(min=0.0), help="Color tolerance for interpolation."),
        click.option("--initial-density", type=click.FloatRange(0.0, 1.0)),
        click.option("--max-depth", type=click.IntRange(min=1), help="Octree depth limit."),
        click.option("--leaf-capacity", type=click.IntRange(min=1)),
        click.option("--specular-depth", "max_specular_depth", type=click.IntRange(min=0)),
        click.option("--ambient-divisions", type=click.IntRange(min=1)),
        click.option("--ambient-tolerance", type=click.FloatRange(min=0.0, min_open=True)),
        click.option("--ambient-bounces", type=click.IntRange(min=0)),
        click.option("--windows", type=click.IntRange(min=1), help=f"Target window count (default {DEFAULT_WINDOWS})."),
        click.option("--strategy", type=click.Choice(STRATEGIES)),
        click.option("--probes", type=click.IntRange(min=1), help=f"Probe rays per scanbar (default {DEFAULT_PROBES})."),
        click.option("--measure", type=click.Choice(MEASURES)),
        click.option("--no-ambient-share", "no_share", is_flag=True, help="Private ambient cache per work unit."),
        click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1)),
        click.option("--latency-ticks", type=click.IntRange(min=0)),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML file with defaults."),
    ]
    for option in reversed(options): f = option(f)
    return f


def _run_options(f):
    options = [
        click.option("--mode", type=click.Choice(MODES)),
        click.option("--workers", type=click.IntRange(min=1)),
        click.option("--carry-density", is_flag=True, help="Sequential mode: one density vector for the whole image."),
        click.option("--transport", type=click.Choice(("sim", "tcp"))),
        click.option("--port", type=click.IntRange(0, 65535)),
        click.option("-o", "--output", default="out.ppm", show_default=True, type=click.Path(dir_okay=False)),
        click.option("--stats", "stats_path", type=click.Path(dir_okay=False), help="Stats JSON (default: next to the image)."),
        click.option("--baseline", type=click.Path(dir_okay=False), help="Stats JSON of a one-worker run."),
    ]
    for option in reversed(options): f = option(f)
    return f


def _config(config_path, no_share, scene_path=None, **overrides):
    if not overrides.get("carry_density"): overrides["carry_density"] = None
    return build_config(config_path, ambient_share=False if no_share else None, **overrides)


def _fail(exc):
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


def _stats_path(output, stats_path):
    return stats_path or os.path.splitext(output)[0] + ".json"


def _frame_path(output, frame, frames):
    if frames == 1: return output
    if "{frame" in output: return output.format(frame=frame)
    root, ext = os.path.splitext(output)
    return f"{root}_{frame:04d}{ext}"


def _summary(stats):
    speedup = "-" if stats.get("speedup") is None else f"{stats['speedup']:.2f}"
    return (f"{stats['mode']}: {stats['workers']} workers, {stats['frames']} frame(s), "
            f"{stats['primary_total']} primary rays, {stats['total_rays']} rays, speedup {speedup}")


def _render(scene_path, cameras_path, config_path, no_share, output, stats_path, baseline, **opts):
    if not scene_path: raise click.UsageError("--scene is required")
    cfg = _config(config_path, no_share, **opts)
    scene = load_scene(scene_path)
    cameras = load_animation(cameras_path) if cameras_path else None
    if cameras and len(cameras) > 1 and cfg.mode not in ("seq", "dyn_window"):
        raise ConfigError(f"animations render in seq or dyn_window mode, not {cfg.mode}")
    reference = load_stats_json(baseline) if baseline else None
    logger.info("%s: %dx%d, %s mode, %d worker(s)", scene_path, cfg.hres, cfg.yres, cfg.mode, cfg.workers)
    outcome = run_render(cfg, scene, cameras, baseline=reference)
    frames = len(outcome.images)
    for frame, image in enumerate(outcome.images): write_image(image, _frame_path(output, frame, frames))
    write_stats_json(outcome.stats, _stats_path(output, stats_path))
    click.echo(_summary(outcome.stats))


# --- Comandos ---
@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.option("--quiet", is_flag=True, help="Warnings and errors only.")
def cli(verbose, quiet):
    """Distributed ray tracer with quincunx sampling and a shared ambient cache."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


@cli.command()
@_sampling_options
@_run_options
def render(**kwargs):
    """Render one frame of a scene."""
    try:
        _render(cameras_path=None, **kwargs)
    except (RenderError, OSError) as exc:
        _fail(exc)


@cli.command()
@_sampling_options
@_run_options
@click.option("--anim", "cameras_path", required=True, type=click.Path(dir_okay=False), help="Camera path, one camera line per frame.")
def animate(**kwargs):
    """Render a camera walkthrough of a static scene as one pooled job."""
    if kwargs["mode"] is None: kwargs["mode"] = "dyn_window"
    try:
        _render(**kwargs)
    except (RenderError, OSError) as exc:
        _fail(exc)


@cli.command("bench")
@_sampling_options
@click.option("--mode", "modes", multiple=True, type=click.Choice(bench.BENCH_MODES), help="Repeatable; default all.")
@click.option("--workers", "workers_list", multiple=True, type=click.IntRange(min=1), help="Repeatable; default 1 2 4 8.")
@click.option("--window-count", "windows_list", multiple=True, type=click.IntRange(min=1), help="Repeatable; default 4 16 64.")
@click.option("--scheme", "schemes", multiple=True, type=click.Choice(tuple(SCHEMES)), help="Static partition schemes; default uniform estim5b.")
@click.option("--profile", type=click.Choice(("scene", "measured")), default="scene", show_default=True,
              help="measured: render once, then run the protocol on scripted units with the measured scanbar costs.")
@click.option("--anim", "cameras_path", type=click.Path(dir_okay=False), help="Also compare pooled and per-frame animation runs.")
@click.option("--sharing", is_flag=True, help="Also compare dyn_window with and without ambient broadcast.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write all rows as CSV.")
@click.option("--chart", "chart_path", type=click.Path(dir_okay=False), help="Write a speedup chart (PNG).")
@click.option("--window-report", "report_path", type=click.Path(dir_okay=False), help="CSV of primary rays per window.")
@click.option("--baseline", type=click.Path(dir_okay=False), help="Stats JSON whose makespan is the speedup reference.")
def bench_command(scene_path, config_path, no_share, modes, workers_list, windows_list, schemes, profile, cameras_path, sharing,
                  csv_path, chart_path, report_path, baseline, **opts):
    """Speedup matrix on the simulated transport."""
    try:
        cfg = _config(config_path, no_share, **opts)
        modes = modes or bench.BENCH_MODES
        workers_list = sorted(set(workers_list or (1, 2, 4, 8)))
        windows_list = sorted(set(windows_list or (4, 16, 64)))
        schemes = schemes or ("uniform", "estim5b")
        if not scene_path: raise click.UsageError("--scene is required")
        scene = load_scene(scene_path)
        if profile == "measured":
            table = bench.bench_profile(cfg, scene, modes, workers_list, windows_list, schemes, latency=cfg.latency_ticks or None)
        else:
            table = bench.bench_scene(cfg, scene, modes, workers_list, windows_list, schemes)
        reference = load_stats_json(baseline) if baseline else None
        if reference and reference.get("makespan"): table = bench.finish_table(table, workers_list, reference["makespan"])
        click.echo(bench.format_table(table))
        if csv_path: bench.write_bench_csv(table, csv_path)
        if chart_path: bench.plot_speedups(table, chart_path)
        if report_path:
            grid = plan_windows(cfg.hres, cfg.yres, cfg.windows, cfg.strategy, cfg.seed)
            run = run_dyn_window(make_workload(cfg, scene), grid, max(workers_list), SimTransport(cfg.latency_ticks, cfg.seed),
                                 ambient_share=cfg.ambient_share)
            bench.window_primary_report(run, grid).to_csv(report_path, index=False)
        if cameras_path:
            summary = bench.animation_comparison(cfg, scene, load_animation(cameras_path), max(workers_list))
            click.echo(f"animation, {summary['frames']} frames on {summary['workers']} workers: pooled {summary['pooled_rays']} rays, "
                       f"independent {summary['independent_rays']} rays (ratio {summary['ray_ratio']:.3f}), "
                       f"octree built {summary['octree_builds']} time(s)")
        if sharing:
            saved = bench.sharing_comparison(cfg, scene, max(workers_list))
            click.echo(f"ambient sharing, {saved['windows']} windows on {saved['workers']} workers: {saved['shared_rays']} rays shared, "
                       f"{saved['private_rays']} private ({100 * saved['saving']:.1f}% saved)")
    except (RenderError, OSError, ValueError) as exc:
        _fail(exc)


if __name__ == "__main__":
    cli()
