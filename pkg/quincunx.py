"""Quincunx sampling of an image in scanbars.

A scanline is split into samples of xstep+1 pixels that share their boundary
pixel. Boundaries are always traced; interiors are traced or interpolated by
a halving recursion driven by the color difference of the endpoints and a ray
density vector. Scanbar interiors are filled column by column with the same
recursion. Every pixel color is rounded to float32 as soon as it exists.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from scene_core import TraceCounters

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplingParams:
    hres: int
    yres: int
    xstep: int = 4
    ystep: int = 4
    tolerance: float = 0.05
    initial_density: float = 0.0

    def __post_init__(self):
        if self.hres < 1 or self.yres < 1 or self.xstep < 1 or self.ystep < 1:
            raise ValueError("resolution and steps must be >= 1")
        if self.tolerance < 0 or not 0.0 <= self.initial_density <= 1.0:
            raise ValueError("tolerance must be >= 0 and initial_density in [0, 1]")

    # Steps wider than the image collapse to one short sample.
    @property
    def xs(self): return min(self.xstep, max(1, self.hres - 1))

    @property
    def ys(self): return min(self.ystep, max(1, self.yres - 1))

    @property
    def density_slots(self): return max(1, math.ceil((self.hres - 1) / self.xs))

    def fresh_density(self): return [self.initial_density] * self.density_slots


@dataclass(frozen=True)
class Scanbar:
    index: int
    y0: int
    y1: int

    @property
    def shares_first_scanline(self): return self.index > 0

    @property
    def height(self): return self.y1 - self.y0


@dataclass
class ScanlineColors:
    y: int
    colors: np.ndarray
    traced: np.ndarray


def plan_scanbars(params):
    n = max(1, math.ceil((params.yres - 1) / params.ys))
    return [Scanbar(k, k * params.ys, min((k + 1) * params.ys, params.yres - 1)) for k in range(n)]


def boundary_rows(params):
    bars = plan_scanbars(params)
    return [bars[0].y0] + [b.y1 for b in bars]


def line_owner(j, n_scanbars):
    """Scanbar that renders boundary scanline j (0..n): the first scanbar renders
    its own first and last scanlines, every later scanbar its first one, and the
    last scanbar also its last one."""
    return 0 if j <= 1 else min(j, n_scanbars - 1)


def colordiff(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(a, b))))


def sample_boundaries(y, params):
    last = params.hres - 1
    xs = params.xs
    shift = xs // 2 if y % 2 else 0
    inner = range(shift if shift else xs, last, xs)
    return sorted({0, last, *inner})


def density_slot(xl, xr, params):
    return min((xl + xr) // 2 // params.xs, params.density_slots - 1)


# --- Recursión de relleno ---
def fill_segment(xl, xr, colors, traced, density, params, trace, counters):
    """Fill the interior of [xl, xr] in place; endpoints must already hold colors.

    Returns the new density for the sample (1 traced, 0 interpolated) or None
    when there is no interior.
    """
    if xr - xl <= 1: return None
    c = (xl + xr) // 2
    if params.tolerance <= 0 or density > 0 or colordiff(colors[xl], colors[xr]) > params.tolerance:
        colors[c] = trace(c)
        traced[c] = True
        counters.add_ray("primary")
        result = 1.0
    else:
        colors[c] = colors[xl] + (colors[xr] - colors[xl]) * np.float32((c - xl) / (xr - xl))
        traced[c] = False
        result = 0.0
    fill_segment(xl, c, colors, traced, density / 2, params, trace, counters)
    fill_segment(c, xr, colors, traced, density / 2, params, trace, counters)
    return result


def iter_scanline(y, params, density, tracer, counters, colors, traced):
    """Render scanline y left to right into the given rows, yielding each
    completed pixel range [x0, x1) as one sample finishes."""
    def trace(x): return tracer(x, y)

    colors[0] = trace(0)
    traced[0] = True
    counters.add_ray("primary")
    bounds = sample_boundaries(y, params)
    if len(bounds) == 1:
        yield 0, 1
        return
    done = 0
    for xl, xr in zip(bounds, bounds[1:]):
        colors[xr] = trace(xr)
        traced[xr] = True
        counters.add_ray("primary")
        slot = density_slot(xl, xr, params)
        result = fill_segment(xl, xr, colors, traced, density[slot], params, trace, counters)
        if result is not None: density[slot] = result
        yield done, xr + 1
        done = xr + 1


def render_scanline(y, params, density, tracer, counters):
    colors = np.zeros((params.hres, 3), dtype=np.float32)
    traced = np.zeros(params.hres, dtype=bool)
    for _ in iter_scanline(y, params, density, tracer, counters, colors, traced): pass
    return ScanlineColors(y, colors, traced), density


def fill_column(x, y0, colors, traced, params, tracer, counters):
    """Vertical fill of one column of a scanbar block whose row 0 is scanline y0."""
    return fill_segment(0, len(colors) - 1, colors, traced, params.initial_density, params, lambda i: tracer(x, y0 + i), counters)


def fill_scanbar_interior(scanbar, top, bottom, params, tracer, counters):
    h = scanbar.height
    if h <= 1: return []
    colors = np.zeros((h + 1, params.hres, 3), dtype=np.float32)
    traced = np.zeros((h + 1, params.hres), dtype=bool)
    colors[0], colors[h] = top.colors, bottom.colors
    for x in range(params.hres): fill_column(x, scanbar.y0, colors[:, x], traced[:, x], params, tracer, counters)
    return [ScanlineColors(scanbar.y0 + i, colors[i], traced[i]) for i in range(1, h)]


# --- Render de un scanbar con línea compartida ---
class ScanbarRender:
    """One scanbar rendered as a unit: owned boundary scanlines first, in
    xstep-sized chunks, then columns left to right as both boundaries become
    available. The neighbor's scanline arrives through receive()."""

    def __init__(self, scanbar, n_scanbars, params, tracer, counters):
        self.scanbar, self.params, self.tracer, self.counters = scanbar, params, tracer, counters
        k, h = scanbar.index, scanbar.height
        self.owned = sorted({y for j, y in ((k, scanbar.y0), (k + 1, scanbar.y1)) if line_owner(j, n_scanbars) == k})
        self.needed = sorted({scanbar.y0, scanbar.y1} - set(self.owned))
        self.colors = np.zeros((h + 1, params.hres, 3), dtype=np.float32)
        self.traced = np.zeros((h + 1, params.hres), dtype=bool)
        self.ready = {scanbar.y0: 0, scanbar.y1: 0}
        self.fill_x = 0
        self.owned_done = False
        self._chunks = self._owned_chunks()
        self.first_row = scanbar.y0 if scanbar.y0 in self.owned or k == 0 else scanbar.y0 + 1
        self.last_row = scanbar.y1 if scanbar.y1 in self.owned else scanbar.y1 - 1

    def _row(self, y): return y - self.scanbar.y0

    def _owned_chunks(self):
        density = self.params.fresh_density()
        for y in self.owned:
            r = self._row(y)
            for x0, x1 in iter_scanline(y, self.params, density, self.tracer, self.counters, self.colors[r], self.traced[r]):
                self.ready[y] = x1
                yield y, x0, x1

    def render_owned_chunk(self):
        """Advance one sample of the owned scanlines; returns (y, x0, colors) or None when done."""
        if self.owned_done: return None
        try:
            y, x0, x1 = next(self._chunks)
        except StopIteration:
            self.owned_done = True
            return None
        return y, x0, self.colors[self._row(y), x0:x1].copy()

    def line(self, y): return self.colors[self._row(y)].copy()

    def receive(self, y, x0, colors):
        if y not in self.needed: return
        # A producer restarted after a failure resends from x0 = 0.
        if x0 > self.ready[y]: raise ValueError(f"scanline {y} chunk at {x0}, expected {self.ready[y]}")
        colors = np.asarray(colors, dtype=np.float32)
        self.colors[self._row(y), x0:x0 + len(colors)] = colors
        self.ready[y] = max(self.ready[y], x0 + len(colors))

    def fillable(self):
        if not self.owned_done: return 0
        return max(0, min(self.ready[self.scanbar.y0], self.ready[self.scanbar.y1]) - self.fill_x)

    def fill_columns(self, count):
        stop = min(self.params.hres, self.fill_x + min(count, self.fillable()))
        for x in range(self.fill_x, stop):
            fill_column(x, self.scanbar.y0, self.colors[:, x], self.traced[:, x], self.params, self.tracer, self.counters)
        n, self.fill_x = stop - self.fill_x, stop
        return n

    @property
    def complete(self): return self.owned_done and self.fill_x >= self.params.hres

    def result_rows(self):
        """Rows this scanbar reports: its interior plus the boundaries it owns."""
        a, b = self._row(self.first_row), self._row(self.last_row)
        return self.first_row, self.colors[a:b + 1], self.traced[a:b + 1]


# --- Render secuencial ---
@dataclass
class SequentialResult:
    image: np.ndarray
    traced: np.ndarray
    scanbar_costs: list = field(default_factory=list)

    @property
    def primary_per_scanbar(self): return [c.primary_rays for c in self.scanbar_costs]


def _charge(costs, k, counters, before):
    costs[k].merge(counters.delta(before))


def render_sequential(params, tracer, counters, *, reset_per_scanbar=False, tracer_for=None, progress=True):
    """Render the whole image scanbar by scanbar.

    With the density vector carried top to bottom (default), each boundary
    scanline is computed once and reused by the next scanbar. With
    reset_per_scanbar, every scanbar is rendered as an independent unit with
    its own density state and, through tracer_for(k), its own tracer.
    """
    bars = plan_scanbars(params)
    image = np.zeros((params.yres, params.hres, 3), dtype=np.float32)
    traced = np.zeros((params.yres, params.hres), dtype=bool)
    costs = [TraceCounters() for _ in bars]
    if reset_per_scanbar:
        jobs = [ScanbarRender(b, len(bars), params, tracer_for(b.index) if tracer_for else tracer, counters) for b in bars]
        for job in jobs:
            before = counters.copy()
            while job.render_owned_chunk() is not None: pass
            _charge(costs, job.scanbar.index, counters, before)
        owner_of = {y: job for job in jobs for y in job.owned}
        for job in jobs:
            for y in job.needed: job.receive(y, 0, owner_of[y].line(y))
            before = counters.copy()
            job.fill_columns(params.hres)
            _charge(costs, job.scanbar.index, counters, before)
            y0, colors, bits = job.result_rows()
            image[y0:y0 + len(colors)] = colors
            traced[y0:y0 + len(bits)] = bits
            if progress: logger.info("scanbar %d/%d done", job.scanbar.index + 1, len(bars))
        return SequentialResult(image, traced, costs)
    density = params.fresh_density()
    before = counters.copy()
    for _ in iter_scanline(0, params, density, tracer, counters, image[0], traced[0]): pass
    for b in bars:
        if b.index: before = counters.copy()
        if b.y1 != b.y0:
            for _ in iter_scanline(b.y1, params, density, tracer, counters, image[b.y1], traced[b.y1]): pass
        block_c, block_t = image[b.y0:b.y1 + 1], traced[b.y0:b.y1 + 1]
        for x in range(params.hres): fill_column(x, b.y0, block_c[:, x], block_t[:, x], params, tracer, counters)
        _charge(costs, b.index, counters, before)
        if progress: logger.info("scanbar %d/%d done", b.index + 1, len(bars))
    return SequentialResult(image, traced, costs)
