import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from ambient_cache import AmbientSession
from errors import PartitionError
from scene_core import TraceCounters
from shader import pixel_rng, shade

logger = logging.getLogger(__name__)

MEASURES = {"rays": "rays_generated", "intersections": "intersection_tests", "primary": "primary_rays"}


@dataclass(frozen=True)
class CostEstimate:
    scanbar: int
    measure: str
    probe_count: int
    cost: float
    rays: int = 0


@dataclass(frozen=True)
class PartitionPlan:
    p: int
    boundaries: tuple
    costs: tuple

    @property
    def max_cost(self): return max(self.costs)

    def ranges(self): return [range(a, b) for a, b in zip(self.boundaries, self.boundaries[1:])]

    def partition_of(self, scanbar):
        for i, r in enumerate(self.ranges()):
            if scanbar in r: return i
        raise PartitionError(f"scanbar {scanbar} outside plan")

    def as_dict(self): return {"p": self.p, "boundaries": list(self.boundaries), "costs": [float(c) for c in self.costs]}


def counter_cost(counters, measure):
    kind = MEASURES.get(measure, measure)
    if kind == "primary_rays": return counters.primary_rays
    return counters.total_rays if kind == "rays_generated" else counters.intersection_tests


# --- Estimación de coste ---
def estimate_scanbar_cost(scanbar, probe_count, measure, octree, shading, rng_seed, camera, hres, yres, frame=0):
    """Trace probe_count primaries through random pixels of the scanbar, ambient cache off."""
    if probe_count < 1: raise PartitionError("probe_count must be >= 1")
    rng = np.random.default_rng([int(rng_seed), int(scanbar.index), int(frame)])
    counters = TraceCounters()
    no_cache = AmbientSession(None)
    for _ in range(probe_count):
        x, y = int(rng.integers(0, hres)), int(rng.integers(scanbar.y0, scanbar.y1 + 1))
        counters.add_ray("primary")
        shade(camera.primary_ray(x, y, hres, yres), octree, no_cache, shading, counters, pixel_rng(rng_seed, frame, x, y))
    return CostEstimate(scanbar.index, MEASURES.get(measure, measure), probe_count, float(counter_cost(counters, measure)),
                        int(counters.total_rays))


def estimate_costs(bars, probe_count, measure, octree, shading, rng_seed, camera, hres, yres, frame=0):
    return [estimate_scanbar_cost(b, probe_count, measure, octree, shading, rng_seed, camera, hres, yres, frame) for b in bars]


# --- Particiones ---
def _plan(boundaries, prefix):
    b = tuple(boundaries)
    return PartitionPlan(len(b) - 1, b, tuple(prefix[j] - prefix[i] for i, j in zip(b, b[1:])))


def _check(costs, p):
    if p < 1: raise PartitionError("p must be >= 1")
    if p > len(costs): raise PartitionError(f"cannot split {len(costs)} scanbars into {p} partitions")
    if any(c < 0 for c in costs): raise PartitionError("costs must be non-negative")


def uniform_partition(n, p, costs=None):
    """Equal scanbar counts per partition, ignoring cost."""
    costs = [1.0] * n if costs is None else list(costs)
    _check(costs, p)
    prefix = np.concatenate([[0.0], np.cumsum(costs)])
    return _plan([round(i * n / p) for i in range(p + 1)], prefix)


def _greedy_cuts(prefix, bound):
    """Fewest contiguous parts with cost <= bound, or None when one scanbar alone exceeds it."""
    cuts, start = [0], 0
    for j in range(1, len(prefix)):
        if prefix[j] - prefix[j - 1] > bound: return None
        if prefix[j] - prefix[start] > bound:
            start = j - 1
            cuts.append(start)
    cuts.append(len(prefix) - 1)
    return cuts


def _bottleneck_seed(prefix, p):
    n = len(prefix) - 1
    i, j = np.triu_indices(n + 1, 1)
    candidates = np.unique(prefix[j] - prefix[i])
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        cuts = _greedy_cuts(prefix, candidates[mid])
        if cuts is not None and len(cuts) - 1 <= p: hi = mid
        else: lo = mid + 1
    cuts = _greedy_cuts(prefix, candidates[lo])
    while len(cuts) - 1 < p:
        k = max(range(len(cuts) - 1), key=lambda k: cuts[k + 1] - cuts[k])
        cuts.insert(k + 1, (cuts[k] + cuts[k + 1]) // 2)
    return cuts


def _quantile_seed(prefix, p):
    n, total = len(prefix) - 1, prefix[-1]
    bounds = [0]
    for i in range(1, p):
        b = int(np.searchsorted(prefix, i * total / p, side="left"))
        bounds.append(min(max(b, bounds[-1] + 1), n - (p - i)))
    bounds.append(n)
    return bounds


def _sorted_costs(bounds, prefix): return sorted((prefix[j] - prefix[i] for i, j in zip(bounds, bounds[1:])), reverse=True)


def _slide(bounds, prefix):
    """Move one boundary by one scanbar at a time while the sorted costs drop."""
    bounds, current = list(bounds), _sorted_costs(bounds, prefix)
    for _ in range(10 * (len(prefix) - 1)):
        best = None
        for i in range(1, len(bounds) - 1):
            for b in (bounds[i] - 1, bounds[i] + 1):
                if not bounds[i - 1] < b < bounds[i + 1]: continue
                trial = bounds[:i] + [b] + bounds[i + 1:]
                k = _sorted_costs(trial, prefix)
                if k < current and (best is None or k < best[0]): best = (k, trial)
        if best is None: break
        current, bounds = best
    return current, bounds


def equalize(costs, p):
    """Contiguous partition with boundaries slid one scanbar at a time until no move helps.

    Two starts are slid: prefix-sum quantiles and the greedy cut for the
    smallest feasible bottleneck, found by binary search over partial sums.
    The start whose sorted costs end lower wins.
    """
    costs = [float(c) for c in costs]
    _check(costs, p)
    prefix = np.concatenate([[0.0], np.cumsum(costs)])
    _, bounds = min(_slide(_quantile_seed(prefix, p), prefix), _slide(_bottleneck_seed(prefix, p), prefix))
    plan = _plan(bounds, prefix)
    logger.debug("equalized %d scanbars into %d partitions, max cost %.1f", len(costs), p, plan.max_cost)
    return plan


def optimal_partition(costs, p):
    """Minimum bottleneck contiguous partition by dynamic programming."""
    costs = [float(c) for c in costs]
    _check(costs, p)
    n = len(costs)
    prefix = [0.0, *itertools.accumulate(costs)]
    best = [[math.inf] * (n + 1) for _ in range(p + 1)]
    cut = [[0] * (n + 1) for _ in range(p + 1)]
    best[0][0] = 0.0
    for k in range(1, p + 1):
        prev, row = best[k - 1], best[k]
        for j in range(k, n - (p - k) + 1):
            for i in range(k - 1, j):
                v = max(prev[i], prefix[j] - prefix[i])
                if v < row[j]: row[j], cut[k][j] = v, i
    bounds, j = [n], n
    for k in range(p, 0, -1):
        j = cut[k][j]
        bounds.append(j)
    return _plan(reversed(bounds), prefix)


# --- Ventanas ---
@dataclass(frozen=True)
class Window:
    index: int
    row: int
    col: int
    x0: int
    y0: int
    width: int
    height: int


@dataclass(frozen=True)
class WindowGrid:
    rows: int
    cols: int
    windows: tuple
    strategy: str = "forward"
    seed: int = 0


def _cuts(size, count):
    step = size // count
    return [(i * step, step if i < count - 1 else size - i * step) for i in range(count)]


def plan_windows(hres, yres, target, strategy="forward", seed=0):
    if not 1 <= target <= hres * yres: raise PartitionError(f"window target {target} out of range")
    k = max(1, int(math.floor(math.sqrt(target) + 0.5)))
    rows, cols = min(k, yres), min(k, hres)
    windows = []
    for r, (y0, h) in enumerate(_cuts(yres, rows)):
        for c, (x0, w) in enumerate(_cuts(hres, cols)):
            windows.append(Window(len(windows), r, c, x0, y0, w, h))
    return WindowGrid(rows, cols, tuple(windows), strategy, seed)


def select_next_window(pool, strategy, rng=None):
    if not pool: return None
    if strategy == "forward": chosen = min(pool, key=lambda w: (w.row, w.col))
    elif strategy == "backward": chosen = max(pool, key=lambda w: (w.row, w.col))
    elif strategy == "random": chosen = sorted(pool, key=lambda w: (w.row, w.col))[int(rng.integers(len(pool)))]
    else: raise PartitionError(f"unknown window strategy {strategy!r}")
    pool.remove(chosen)
    return chosen
