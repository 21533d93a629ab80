"""Coordinator and worker actors of the distributed renderer.

Both are message-driven and transport-agnostic: they consume messages through
on_message() and leave what they send in .outbox as (destination, message)
pairs. The worker additionally does its rendering in small steps through
step(), so a transport can interleave messages and work however it likes.
"""
import itertools
import logging
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from ambient_cache import AmbientCache, AmbientSession
from config import AMBIENT_FLUSH_EVERY
from partition import select_next_window
from quincunx import line_owner, plan_scanbars
from scene_core import TraceCounters
from wire import (BROADCAST, COORDINATOR, UNIT_SCANBAR, UNIT_WINDOW, AmbientBatch, AssignScanbars, AssignWindow, FrameAdvance,
                  Hello, RequestWork, ResultBlock, ScanlineChunk, ScanlineOwnerUpdate, Shutdown, TransferHalfDemand,
                  TransferredScanbars)

logger = logging.getLogger(__name__)

SCANBAR_MODES = ("static", "static_lb", "dyn_scanbar")


def broadcast_ambient(worker, records):
    """Multicast new ambient records from worker to every other worker."""
    if records and worker.n_workers > 1:
        worker.outbox.append((BROADCAST, AmbientBatch(tuple(records))))
        worker.records_broadcast += len(records)


# --- Worker ---
class Worker:
    def __init__(self, wid, n_workers, workload, *, ambient_share=True, flush_every=AMBIENT_FLUSH_EVERY):
        self.wid, self.n_workers, self.workload = wid, n_workers, workload
        self.ambient_share, self.flush_every = ambient_share, flush_every
        self.bars = workload.scanbars()
        self.counters = TraceCounters()
        self.outbox = [(COORDINATOR, Hello(wid))]
        self.held = []
        self.jobs = {}
        self.job_sessions = {}
        self.completed = []
        self.windows = deque()
        self.window_job = None
        self.routes = defaultdict(set)
        self.produced = defaultdict(list)
        self.received = defaultdict(list)
        self.sequence = itertools.count()
        self.session = AmbientSession(self._new_cache(), wid, self.sequence) if ambient_share else None
        self.mailbox = []
        self.merged_from = Counter()
        self.records_broadcast = 0
        self.frame = 0
        self.pending_request = False
        self.engaged = False
        self.shutdown = None
        self.finished = False
        self._reported = TraceCounters()

    def _new_cache(self):
        octree = getattr(self.workload, "octree", None)
        return AmbientCache.for_octree(octree) if octree is not None else AmbientCache((0.0, 0.0, 0.0), 1.0)

    def _unit_session(self):
        # Without sharing every work unit gets a private cache.
        return self.session if self.ambient_share else AmbientSession(self._new_cache(), self.wid, self.sequence)

    @property
    def cache(self): return self.session.cache if self.session else None

    # --- mensajes ---
    def on_message(self, src, msg):
        if isinstance(msg, (AssignScanbars, AssignWindow, TransferredScanbars, Shutdown)): self.engaged = True
        if isinstance(msg, AssignScanbars):
            self.held = sorted(set(self.held) | set(msg.scanbars))
            self.pending_request = False
        elif isinstance(msg, AssignWindow):
            self.windows.append((msg.window, msg.frame))
            self.pending_request = False
        elif isinstance(msg, TransferHalfDemand): self._give_half(msg.target)
        elif isinstance(msg, TransferredScanbars):
            if msg.to_worker == self.wid and msg.scanbars:
                self.held = sorted(set(self.held) | set(msg.scanbars))
                self.pending_request = False
        elif isinstance(msg, ScanlineChunk): self._line_chunk(msg.y, msg.x0, msg.colors, produced=False)
        elif isinstance(msg, ScanlineOwnerUpdate): self._add_route(msg.y, msg.worker)
        elif isinstance(msg, AmbientBatch): self.mailbox.extend(msg.records)
        elif isinstance(msg, FrameAdvance):
            self.frame = msg.frame
            logger.debug("worker %d: frame %d", self.wid, msg.frame)
        elif isinstance(msg, Shutdown): self.shutdown = msg
        else: logger.warning("worker %d: unexpected %s from %s", self.wid, type(msg).__name__, src)

    def _give_half(self, target):
        n = len(self.held) // 2
        give = self.held[len(self.held) - n:] if n else []
        self.held = self.held[:len(self.held) - n]
        msg = TransferredScanbars(tuple(give), self.wid, target)
        if give: self.outbox.append((target, msg))
        self.outbox.append((COORDINATOR, msg))
        logger.debug("worker %d: gave %d scanbars to %d", self.wid, len(give), target)

    def _add_route(self, y, w):
        if w == self.wid or w in self.routes[y]: return
        self.routes[y].add(w)
        for x0, colors in self.produced[y]: self.outbox.append((w, ScanlineChunk(y, x0, colors)))

    def _line_chunk(self, y, x0, colors, produced):
        (self.produced if produced else self.received)[y].append((x0, colors))
        if produced:
            for w in sorted(self.routes[y]): self.outbox.append((w, ScanlineChunk(y, x0, colors)))
        for job in self.jobs.values():
            if y in job.needed: job.receive(y, x0, colors)

    # --- trabajo ---
    def _merge_mailbox(self):
        for record in self.mailbox:
            if self.session is not None and self.session.cache.insert(record):
                self.merged_from[record.origin_worker] += 1
                self.counters.ambient_records_merged += 1
        self.mailbox = []

    def _flush(self, session, force=False):
        if not self.ambient_share: return session.drain()
        if force or len(session.pending) >= self.flush_every: broadcast_ambient(self, session.drain())

    def _send_result(self, kind, unit, frame, x0, y0, colors, traced):
        delta = self.counters.delta(self._reported)
        self._reported = self.counters.copy()
        self.outbox.append((COORDINATOR, ResultBlock(self.wid, kind, unit, frame, x0, y0, colors, traced, delta)))

    def _finish_scanbar(self, k):
        job = self.jobs.pop(k)
        self._flush(self.job_sessions.pop(k), force=True)
        y0, colors, traced = job.result_rows()
        self._send_result(UNIT_SCANBAR, k, 0, 0, y0, colors.copy(), traced.copy())
        self.completed.append(k)
        self._merge_mailbox()

    def _finish_window(self, job, frame):
        self.window_job = None
        result = job.result()
        self._send_result(UNIT_WINDOW, job.window.index, frame, result.x0, result.y0, result.colors, result.traced)
        self.completed.append((frame, job.window.index))
        self._merge_mailbox()

    def _start_scanbar(self, k):
        self._merge_mailbox()
        session = self._unit_session()
        job = self.workload.scanbar_job(self.bars[k], 0, session, self.counters)
        self.jobs[k], self.job_sessions[k] = job, session
        for y in job.needed:
            for x0, colors in self.produced[y] + self.received[y]: job.receive(y, x0, colors)
        logger.debug("worker %d: started scanbar %d", self.wid, k)

    def _check_finished(self):
        self._merge_mailbox()
        expected = dict(self.shutdown.expected_records)
        if all(self.merged_from[w] >= n for w, n in expected.items() if w != self.wid):
            self.finished = True
            logger.debug("worker %d finished, cache holds %d records", self.wid, len(self.cache) if self.cache else 0)

    @property
    def idle(self): return not (self.jobs or self.held or self.windows or self.window_job)

    def step(self):
        """Run the next piece of local work; False when there is nothing to do."""
        if self.finished: return False
        for k in sorted(self.jobs):
            chunk = self.jobs[k].render_owned_chunk()
            if chunk is not None:
                self._line_chunk(*chunk, produced=True)
                if self.ambient_share: self._flush(self.job_sessions[k])
                return True
        for k in sorted(self.jobs):
            job = self.jobs[k]
            if job.fillable():
                job.fill_columns(job.params.xs)
                if self.ambient_share: self._flush(self.job_sessions[k])
                if job.complete: self._finish_scanbar(k)
                return True
            if job.complete:
                self._finish_scanbar(k)
                return True
        if self.window_job is None and self.windows:
            window, frame = self.windows.popleft()
            self._merge_mailbox()
            session = self._unit_session()
            self.window_job = (self.workload.window_job(window, frame, session, self.counters), session, frame)
        if self.window_job is not None:
            job, session, frame = self.window_job
            job.step()
            self._flush(session, force=job.complete)
            if job.complete: self._finish_window(job, frame)
            return True
        if self.held:
            self._start_scanbar(self.held.pop(0))
            self.step()
            return True
        if self.shutdown is not None:
            self._check_finished()
            return False
        if not self.pending_request and self.engaged:
            self.pending_request = True
            self.outbox.append((COORDINATOR, RequestWork(self.wid)))
            return True
        return False


# --- Coordinador ---
@dataclass
class FrameBuffer:
    image: np.ndarray
    traced: np.ndarray
    coverage: np.ndarray


class Coordinator:
    def __init__(self, mode, n_workers, sampling, *, plan=None, scanbar_costs=None, grid=None, frames=1, ambient_share=True):
        if mode not in (*SCANBAR_MODES, "dyn_window"): raise ValueError(f"unknown distribution mode {mode!r}")
        self.mode, self.n_workers, self.sampling = mode, n_workers, sampling
        self.plan, self.grid, self.frames, self.ambient_share = plan, grid, frames, ambient_share
        self.bars = plan_scanbars(sampling)
        self.n = len(self.bars)
        self.scanbar_costs = list(scanbar_costs) if scanbar_costs is not None else [1.0] * self.n
        self.buffers = [FrameBuffer(np.zeros((sampling.yres, sampling.hres, 3), dtype=np.float32),
                                    np.zeros((sampling.yres, sampling.hres), dtype=bool),
                                    np.zeros((sampling.yres, sampling.hres), dtype=np.int32)) for _ in range(frames)]
        self.outbox = []
        self.hello = set()
        self.alive = set(range(n_workers))
        self.started = False
        self.holders = {}
        self.last_assigned = {}
        self.unassigned = set(range(self.n))
        self.completed = set()
        self.orphans = []
        self.in_flight = {}
        self.idle = []
        self.pending_demand = {}
        self.drained = set()
        self.routes_sent = set()
        self.frame = 0
        self.pool = []
        self.rng = np.random.default_rng(grid.seed if grid else 0)
        self.worker_counters = defaultdict(TraceCounters)
        self.unit_counters = {}
        self.expected = Counter()
        self.transfers = []
        self.schedule = []
        self.done = False
        self.total_units = self.n if mode in SCANBAR_MODES else len(grid.windows) * frames

    def _send(self, dest, msg): self.outbox.append((dest, msg))

    def on_message(self, src, msg):
        if isinstance(msg, Hello):
            self.hello.add(msg.worker)
            if len(self.hello) == self.n_workers and not self.started: self._start()
        elif isinstance(msg, RequestWork): self._serve(msg.worker)
        elif isinstance(msg, TransferredScanbars): self._transferred(msg)
        elif isinstance(msg, ResultBlock): self._result(msg)
        else: logger.warning("coordinator: unexpected %s from %s", type(msg).__name__, src)

    # --- asignación ---
    def _assign_scanbars(self, w, ks):
        for k in ks:
            self.holders[k] = w
            self.unassigned.discard(k)
            self.schedule.append(("scanbar", 0, k, w))
        if ks: self.last_assigned[w] = ks[-1]
        self._send(w, AssignScanbars(tuple(ks)))

    def _assign_window(self, w, window, frame):
        self.in_flight[(frame, window.index)] = (w, window)
        self.schedule.append(("window", frame, window.index, w))
        self._send(w, AssignWindow(window, frame))

    def _refill(self, frame):
        self.frame = frame
        self.pool = list(self.grid.windows)

    def _start(self):
        self.started = True
        if self.mode in ("static", "static_lb"):
            for i, r in enumerate(self.plan.ranges()):
                if i < self.n_workers and len(r): self._assign_scanbars(i, list(r))
        elif self.mode == "dyn_scanbar":
            stride = max(1, self.n // self.n_workers)
            for i in range(min(self.n_workers, self.n)): self._assign_scanbars(i, [i * stride])
        else:
            self._refill(0)
        logger.info("coordinator: %s run started with %d workers", self.mode, self.n_workers)
        self._update_routes()
        busy = set(self.holders.values())
        for w in range(self.n_workers):
            if w not in busy: self._serve(w)

    def _next_window(self):
        window = select_next_window(self.pool, self.grid.strategy, self.rng)
        if window is None and self.frame < self.frames - 1:
            self._refill(self.frame + 1)
            for w in sorted(self.alive): self._send(w, FrameAdvance(self.frame))
            window = select_next_window(self.pool, self.grid.strategy, self.rng)
        return None if window is None else (window, self.frame)

    def _serve(self, w):
        if w not in self.alive: return
        if not self.started:
            if w not in self.idle: self.idle.append(w)
            return
        if self.orphans:
            unit = self.orphans.pop(0)
            if unit[0] == "scanbar": self._assign_scanbars(w, [unit[1]])
            else: self._assign_window(w, unit[2], unit[1])
            self._update_routes()
            return
        if self.mode == "dyn_scanbar" and self.unassigned:
            nxt = self.last_assigned.get(w, -2) + 1
            self._assign_scanbars(w, [nxt if nxt in self.unassigned else min(self.unassigned)])
            self._update_routes()
            return
        if self.mode == "dyn_window":
            window = self._next_window()
            if window is not None:
                self._assign_window(w, *window)
                return
        if w not in self.idle: self.idle.append(w)
        if self.mode == "static_lb": self._demand_half(w)

    def _unstarted_estimate(self, d):
        held = sorted(k for k, h in self.holders.items() if h == d and k not in self.completed)
        return held[1:]

    def _demand_half(self, w):
        if w in self.pending_demand.values(): return
        best = None
        for d in sorted(self.alive - {w} - set(self.pending_demand) - self.drained):
            rest = self._unstarted_estimate(d)
            if len(rest) <= 1: continue
            cost = sum(self.scanbar_costs[k] for k in rest)
            if best is None or cost > best[0]: best = (cost, d)
        if best is None: return
        self.pending_demand[best[1]] = w
        self._send(best[1], TransferHalfDemand(w))
        logger.debug("coordinator: worker %d asked to give half to %d", best[1], w)

    def _transferred(self, msg):
        target = self.pending_demand.pop(msg.from_worker, msg.to_worker)
        self.transfers.append((msg.from_worker, target, tuple(msg.scanbars)))
        if msg.scanbars:
            for k in msg.scanbars: self.holders[k] = target
            self.last_assigned[target] = msg.scanbars[-1]
            self.drained.discard(target)
            if target in self.idle: self.idle.remove(target)
            self._update_routes()
        else:
            self.drained.add(msg.from_worker)
            logger.debug("coordinator: worker %d had nothing to give", msg.from_worker)
        for w in list(self.idle):
            if w in self.idle:
                self.idle.remove(w)
                self._serve(w)

    def _update_routes(self):
        """Tell each boundary-scanline producer where its consumer scanbar lives."""
        for j in range(1, self.n):
            producer = line_owner(j, self.n)
            consumer = j if producer == j - 1 else j - 1
            hp, hc = self.holders.get(producer), self.holders.get(consumer)
            if hp is None or hc is None or hp == hc or (j, hp, hc) in self.routes_sent: continue
            self.routes_sent.add((j, hp, hc))
            self._send(hp, ScanlineOwnerUpdate(self.bars[j].y0, hc))

    # --- resultados ---
    def _result(self, block):
        self.worker_counters[block.worker].merge(block.counters)
        if self.ambient_share: self.expected[block.worker] += block.counters.ambient_records_created
        key = block.unit if block.unit_kind == UNIT_SCANBAR else (block.frame, block.unit)
        if block.unit_kind == UNIT_WINDOW: self.in_flight.pop(key, None)
        if key in self.completed:
            logger.debug("coordinator: duplicate result for unit %s ignored", key)
            return
        self.completed.add(key)
        self.unit_counters[key] = (block.worker, block.counters)
        buf = self.buffers[block.frame]
        y0, x0, h, w = block.y0, block.x0, block.height, block.width
        buf.image[y0:y0 + h, x0:x0 + w] = block.colors
        buf.traced[y0:y0 + h, x0:x0 + w] = block.traced
        buf.coverage[y0:y0 + h, x0:x0 + w] += 1
        if len(self.completed) == self.total_units: self._finish()

    def _finish(self):
        expected = tuple((w, int(self.expected[w])) for w in sorted(self.alive))
        for w in sorted(self.alive): self._send(w, Shutdown(expected))
        self.done = True
        logger.info("coordinator: all %d units complete", self.total_units)

    def on_disconnect(self, w):
        """Return the units of a lost worker to the pool."""
        if w not in self.alive: return
        self.alive.discard(w)
        logger.warning("coordinator: worker %d disconnected", w)
        if w in self.pending_demand:
            target = self.pending_demand.pop(w)
            if target not in self.idle: self.idle.append(target)
        for d, t in list(self.pending_demand.items()):
            if t == w: del self.pending_demand[d]
        if w in self.idle: self.idle.remove(w)
        lost = sorted(k for k, h in self.holders.items() if h == w)
        for k in lost: del self.holders[k]
        # Completed scanbars are redone when a live scanbar still needs one of their lines.
        requeue = set(k for k in lost if k not in self.completed)
        for k in lost:
            if k in self.completed and any(c not in self.completed for c in (k - 1, k + 1) if 0 <= c < self.n): requeue.add(k)
        self.orphans.extend(("scanbar", k) for k in sorted(requeue))
        for (frame, index), (holder, window) in sorted(self.in_flight.items()):
            if holder == w: self.orphans.append(("window", frame, window))
        self.routes_sent = {r for r in self.routes_sent if w not in r[1:]}
        if not self.done:
            for v in list(self.idle):
                self.idle.remove(v)
                self._serve(v)
            self._update_routes()


# --- Ejecuciones ---
@dataclass
class RunStats:
    mode: str
    workers: int
    per_worker: list
    primary_total: int
    total_rays: int
    intersection_tests: int
    ambient_created: int
    ambient_merged: int
    timelines: dict = field(default_factory=dict)
    finish_ticks: list = field(default_factory=list)
    makespan: float = 0.0
    work_ticks: float = 0.0
    start_delay: float = 0.0
    speedup: float = None
    wall_time: float = None
    plan: dict = None
    schedule: list = field(default_factory=list)
    transfers: list = field(default_factory=list)

    def as_dict(self):
        return {"mode": self.mode, "workers": self.workers,
                "per_worker": [c.as_dict() for c in self.per_worker],
                "primary_total": int(self.primary_total), "total_rays": int(self.total_rays),
                "intersection_tests": int(self.intersection_tests),
                "ambient_records_created": int(self.ambient_created), "ambient_records_merged": int(self.ambient_merged),
                "timelines": {str(w): [[float(a), float(b)] for a, b in spans] for w, spans in self.timelines.items()},
                "finish_ticks": [float(t) for t in self.finish_ticks], "makespan": float(self.makespan),
                "work_ticks": float(self.work_ticks), "start_delay": float(self.start_delay),
                "speedup": None if self.speedup is None else float(self.speedup),
                "wall_time": self.wall_time, "plan": self.plan,
                "schedule": [[kind, int(f), int(u), int(w)] for kind, f, u, w in self.schedule],
                "transfers": [[int(a), int(b), [int(k) for k in ks]] for a, b, ks in self.transfers]}


@dataclass
class RunResult:
    images: list
    traced: list
    coverage: list
    stats: RunStats
    coordinator: Coordinator
    workers: list
    trace: list = field(default_factory=list)

    @property
    def image(self): return self.images[0]


def collect_stats(coordinator, per_worker, **extra):
    total = TraceCounters()
    for c in per_worker: total.merge(c)
    return RunStats(coordinator.mode, coordinator.n_workers, per_worker, total.primary_rays, total.total_rays,
                    total.intersection_tests, total.ambient_records_created, total.ambient_records_merged,
                    plan=coordinator.plan.as_dict() if coordinator.plan else None,
                    schedule=list(coordinator.schedule), transfers=list(coordinator.transfers), **extra)


def make_workers(workload, n_workers, ambient_share=True, flush_every=AMBIENT_FLUSH_EVERY):
    return [Worker(w, n_workers, workload, ambient_share=ambient_share, flush_every=flush_every) for w in range(n_workers)]


def run_static(workload, plan, load_balance, workers, transport, *, ambient_share=True, scanbar_costs=None, start_delay=0):
    if workers < 1: raise ValueError("workers must be >= 1")
    coordinator = Coordinator("static_lb" if load_balance else "static", workers, workload.sampling, plan=plan,
                              scanbar_costs=scanbar_costs, ambient_share=ambient_share)
    return transport.run(coordinator, workload, workers, ambient_share=ambient_share, start_delay=start_delay)


def run_dyn_scanbar(workload, workers, transport, *, ambient_share=True):
    if workers < 1: raise ValueError("workers must be >= 1")
    coordinator = Coordinator("dyn_scanbar", workers, workload.sampling, ambient_share=ambient_share)
    return transport.run(coordinator, workload, workers, ambient_share=ambient_share)


def run_dyn_window(workload, grid, workers, transport, *, ambient_share=True):
    if workers < 1: raise ValueError("workers must be >= 1")
    coordinator = Coordinator("dyn_window", workers, workload.sampling, grid=grid, frames=workload.frames, ambient_share=ambient_share)
    return transport.run(coordinator, workload, workers, ambient_share=ambient_share)
