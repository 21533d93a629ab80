"""What a worker renders: real ray tracing or a scripted per-unit cost profile.

Both expose the same jobs so the distribution protocol runs unchanged on
either. A job's cost is whatever it adds to the worker's ray counters.
"""
from dataclasses import dataclass

import numpy as np

from quincunx import SamplingParams, ScanbarRender, plan_scanbars, sample_boundaries
from shader import PixelTracer


@dataclass
class WindowResult:
    x0: int
    y0: int
    colors: np.ndarray
    traced: np.ndarray


class WindowRender:
    """A window rendered as a standalone image over its pixels of the frame.

    Its scanbars reset their density state like the sequential default, and
    the window advances one scanbar phase per step: owned boundary lines
    first, then the column fill of each scanbar.
    """

    def __init__(self, window, sampling, tracer, counters):
        s = sampling
        self.window = window
        self.params = SamplingParams(window.width, window.height, s.xstep, s.ystep, s.tolerance, s.initial_density)
        bars = plan_scanbars(self.params)
        def local(x, y): return tracer(x + window.x0, y + window.y0)

        self.jobs = [ScanbarRender(b, len(bars), self.params, local, counters) for b in bars]
        self.colors = np.zeros((window.height, window.width, 3), dtype=np.float32)
        self.traced = np.zeros((window.height, window.width), dtype=bool)
        self.remaining = 2 * len(self.jobs)
        self._phases = self._run()

    def _run(self):
        for job in self.jobs:
            while job.render_owned_chunk() is not None: pass
            yield
        owner_of = {y: job for job in self.jobs for y in job.owned}
        for job in self.jobs:
            for y in job.needed: job.receive(y, 0, owner_of[y].line(y))
            job.fill_columns(self.params.hres)
            y0, colors, bits = job.result_rows()
            self.colors[y0:y0 + len(colors)] = colors
            self.traced[y0:y0 + len(bits)] = bits
            yield

    @property
    def complete(self): return self.remaining == 0

    def step(self):
        if self.complete: return
        next(self._phases)
        self.remaining -= 1

    def result(self): return WindowResult(self.window.x0, self.window.y0, self.colors, self.traced)


class RenderWorkload:
    def __init__(self, octree, sampling, shading, cameras):
        self.octree, self.sampling, self.shading = octree, sampling, shading
        self.cameras = list(cameras)
        self.n_scanbars = len(plan_scanbars(sampling))

    @property
    def frames(self): return len(self.cameras)

    def scanbars(self): return plan_scanbars(self.sampling)

    def tracer(self, frame, session, counters):
        s = self.sampling
        return PixelTracer(self.octree, self.shading, session, counters, self.cameras[frame], s.hres, s.yres, frame)

    def scanbar_job(self, scanbar, frame, session, counters):
        return ScanbarRender(scanbar, self.n_scanbars, self.sampling, self.tracer(frame, session, counters), counters)

    def window_job(self, window, frame, session, counters):
        return WindowRender(window, self.sampling, self.tracer(frame, session, counters), counters)


def split_cost(total, parts):
    """Integer split of total into parts pieces, remainder to the first ones."""
    q, r = divmod(int(total), max(1, parts))
    return [q + (1 if i < r else 0) for i in range(max(1, parts))]


class ScriptedScanbar(ScanbarRender):
    """Scanbar with the protocol shape of a real one whose work is a fixed cost.

    boundary_fraction of the cost goes to the owned scanline samples, the
    rest to the column fill; pixel values are all zero.
    """

    def __init__(self, scanbar, n_scanbars, params, counters, cost, boundary_fraction):
        super().__init__(scanbar, n_scanbars, params, None, counters)
        chunks = [len(sample_boundaries(y, params)) - 1 or 1 for y in self.owned]
        owned_cost = int(round(cost * boundary_fraction)) if self.owned else 0
        self._chunk_costs = split_cost(owned_cost, sum(chunks))
        self._column_costs = split_cost(int(cost) - owned_cost, params.hres)

    def _owned_chunks(self):
        costs = iter(self._chunk_costs)
        for y in self.owned:
            bounds = sample_boundaries(y, self.params)
            spans = [(0, 1)] if len(bounds) == 1 else [(0 if a == 0 else a + 1, b + 1) for a, b in zip(bounds, bounds[1:])]
            for x0, x1 in spans:
                self.counters.add_ray("primary", next(costs, 0))
                self.traced[self._row(y), x0:x1] = True
                self.ready[y] = x1
                yield y, x0, x1

    def fill_columns(self, count):
        stop = min(self.params.hres, self.fill_x + min(count, self.fillable()))
        self.counters.add_ray("primary", sum(self._column_costs[self.fill_x:stop]))
        n, self.fill_x = stop - self.fill_x, stop
        return n


class ScriptedWorkload:
    def __init__(self, sampling, scanbar_costs=None, window_costs=None, frames=1, boundary_fraction=0.25):
        self.sampling = sampling
        self.scanbar_costs = list(scanbar_costs or [])
        self.window_costs = window_costs or {}
        self.n_frames = frames
        self.boundary_fraction = boundary_fraction
        self.n_scanbars = len(plan_scanbars(sampling))

    @property
    def frames(self): return self.n_frames

    def scanbars(self): return plan_scanbars(self.sampling)

    def scanbar_job(self, scanbar, frame, session, counters):
        cost = self.scanbar_costs[scanbar.index] if self.scanbar_costs else 1
        return ScriptedScanbar(scanbar, self.n_scanbars, self.sampling, counters, cost, self.boundary_fraction)

    def window_job(self, window, frame, session, counters):
        cost = self.window_costs.get((frame, window.index), self.window_costs.get(window.index, 1))
        return ScriptedWindow(window, counters, int(cost))


class ScriptedWindow:
    """Window whose whole cost is spent in a single step; pixel values are all zero."""

    def __init__(self, window, counters, cost):
        self.window, self.counters, self.cost = window, counters, cost
        self.complete = False

    def step(self):
        if self.complete: return
        self.counters.add_ray("primary", self.cost)
        self.complete = True

    def result(self):
        w = self.window
        return WindowResult(w.x0, w.y0, np.zeros((w.height, w.width, 3), dtype=np.float32), np.zeros((w.height, w.width), dtype=bool))
