"""Deterministic discrete-event transport.

Time is counted in ticks. A worker step costs the rays it traced, the
coordinator costs nothing and every message takes `latency` ticks. Delivery
is FIFO per (sender, receiver) pair; ties between pairs are broken by a
random rank per pair drawn from the run seed.
"""
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from distrib import Coordinator, RunResult, collect_stats, make_workers
from errors import SimulationError
from partition import plan_windows, uniform_partition
from quincunx import SamplingParams
from wire import BROADCAST, COORDINATOR, decode_message, encode_message
from workload import ScriptedWorkload

logger = logging.getLogger(__name__)

_WAKE_RANK = 2.0
_FAIL_RANK = 3.0


@dataclass(frozen=True)
class TraceEvent:
    time: float
    event: str  # send | deliver | step | fail
    src: int
    dst: int
    message: object = None
    cost: float = 0.0

    @property
    def kind(self): return type(self.message).__name__ if self.message is not None else None


class SimTransport:
    def __init__(self, latency=0, seed=0, wire_roundtrip=False, failures=None, max_events=10_000_000):
        self.latency, self.seed, self.wire_roundtrip = latency, seed, wire_roundtrip
        self.failures = dict(failures or {})
        self.max_events = max_events

    def run(self, coordinator, workload, n_workers, *, ambient_share=True, start_delay=0, workers=None):
        workers = workers or make_workers(workload, n_workers, ambient_share)
        rng = np.random.default_rng(self.seed)
        heap, seq, trace = [], 0, []
        alive = set(range(n_workers))
        busy_until = [0] * n_workers
        wake_pending = [False] * n_workers
        timelines = {w: [] for w in range(n_workers)}
        finish = [0] * n_workers
        ranks, last = {}, {}
        work = 0

        def push(t, rank, kind, data):
            nonlocal seq
            heapq.heappush(heap, (t, rank, seq, kind, data))
            seq += 1

        def send(t, src, dest, msg):
            if src != COORDINATOR and src not in alive: return
            targets = sorted(alive - {src}) if dest == BROADCAST else [dest]
            for d in targets:
                m = decode_message(encode_message(msg)) if self.wire_roundtrip else msg
                pair = (src, d)
                if pair not in ranks: ranks[pair] = float(rng.random())
                when = max(t + self.latency, last.get(pair, 0))
                last[pair] = when
                trace.append(TraceEvent(t, "send", src, d, m))
                push(when, ranks[pair], "deliver", (src, d, m))

        def release(t, src, outbox):
            items = list(outbox)
            outbox.clear()
            for dest, msg in items: send(t, src, dest, msg)

        def wake(w, t):
            if not wake_pending[w]:
                wake_pending[w] = True
                push(t, _WAKE_RANK, "wake", w)

        for w, t in self.failures.items(): push(t, _FAIL_RANK, "fail", w)
        for w in range(n_workers): wake(w, start_delay)
        events = 0
        while heap:
            events += 1
            if events > self.max_events: raise SimulationError(f"no quiescence after {self.max_events} events")
            t, _, _, kind, data = heapq.heappop(heap)
            if kind == "deliver":
                src, dst, msg = data
                trace.append(TraceEvent(t, "deliver", src, dst, msg))
                if dst == COORDINATOR:
                    coordinator.on_message(src, msg)
                    release(t, COORDINATOR, coordinator.outbox)
                elif dst in alive:
                    workers[dst].on_message(src, msg)
                    wake(dst, max(t, busy_until[dst]))
            elif kind == "wake":
                w = data
                wake_pending[w] = False
                if w not in alive: continue
                worker = workers[w]
                release(t, w, worker.outbox)
                before = worker.counters.total_rays
                did = worker.step()
                cost = worker.counters.total_rays - before
                end = t + cost
                if cost:
                    timelines[w].append((t, end))
                    finish[w] = end
                    work += cost
                    trace.append(TraceEvent(t, "step", w, w, None, cost))
                busy_until[w] = end
                if did or worker.outbox: wake(w, end)
            elif kind == "fail":
                w = data
                if w not in alive: continue
                alive.discard(w)
                trace.append(TraceEvent(t, "fail", w, w))
                coordinator.on_disconnect(w)
                release(t, COORDINATOR, coordinator.outbox)
        stuck = [w for w in sorted(alive) if not workers[w].finished]
        if not coordinator.done or stuck:
            raise SimulationError(f"deadlock: coordinator done={coordinator.done}, unfinished workers {stuck}, "
                                  f"{len(coordinator.completed)}/{coordinator.total_units} units complete")
        makespan = max(finish) if finish else 0
        stats = collect_stats(coordinator, [wk.counters for wk in workers], timelines=timelines, finish_ticks=finish,
                              makespan=makespan, work_ticks=work, start_delay=start_delay,
                              speedup=(work / makespan) if makespan else 1.0)
        logger.info("simulated %s run: %d workers, makespan %d ticks, %d events", coordinator.mode, n_workers, makespan, events)
        return RunResult([b.image for b in coordinator.buffers], [b.traced for b in coordinator.buffers],
                         [b.coverage for b in coordinator.buffers], stats, coordinator, workers, trace)


def idle_gaps(timelines, start=0):
    """Idle intervals between consecutive busy spans of each worker."""
    gaps = {}
    for w, spans in timelines.items():
        prev, out = start, []
        for a, b in spans:
            if a > prev: out.append((prev, a))
            prev = max(prev, b)
        gaps[w] = out
    return gaps


# --- Escenarios con costes dados ---
@dataclass
class Scenario:
    workers: int
    mode: str = "dyn_scanbar"
    hres: int = 64
    yres: int = 65
    xstep: int = 4
    ystep: int = 4
    scanbar_costs: list = field(default_factory=list)
    estimates: list = None
    window_costs: dict = field(default_factory=dict)
    windows: int = 16
    frames: int = 1
    strategy: str = "forward"
    plan: object = None
    latency: int = 0
    seed: int = 0
    boundary_fraction: float = 0.25
    start_delay: int = 0
    failures: dict = field(default_factory=dict)
    wire_roundtrip: bool = False

    def sampling(self): return SamplingParams(self.hres, self.yres, self.xstep, self.ystep)


def simulate(scenario):
    """Run the protocol over scripted per-unit costs instead of real rendering."""
    s = scenario
    sampling = s.sampling()
    workload = ScriptedWorkload(sampling, s.scanbar_costs, s.window_costs, s.frames, s.boundary_fraction)
    transport = SimTransport(s.latency, s.seed, s.wire_roundtrip, s.failures)
    if s.mode == "dyn_window":
        grid = plan_windows(s.hres, s.yres, s.windows, s.strategy, s.seed)
        coordinator = Coordinator("dyn_window", s.workers, sampling, grid=grid, frames=s.frames, ambient_share=False)
    elif s.mode in ("static", "static_lb"):
        n = workload.n_scanbars
        plan = s.plan or uniform_partition(n, min(s.workers, n))
        coordinator = Coordinator(s.mode, s.workers, sampling, plan=plan, scanbar_costs=s.estimates or s.scanbar_costs or None, ambient_share=False)
    else:
        coordinator = Coordinator(s.mode, s.workers, sampling, ambient_share=False)
    return transport.run(coordinator, workload, s.workers, ambient_share=False, start_delay=s.start_delay)
