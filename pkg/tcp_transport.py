"""Socket transport: the coordinator listens, workers connect, the coordinator relays.

Every frame on a connection is preceded by a little-endian i32: the
destination on the way up (worker -> coordinator) and the source on the way
down. Peer messages (scanline chunks, ambient batches, transfers) travel
through the coordinator, which forwards them unchanged.
"""
import asyncio
import logging
import multiprocessing as mp
import struct
import time

from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from distrib import RunResult, Worker, collect_stats
from errors import ProtocolError
from wire import BROADCAST, COORDINATOR, Hello, encode_message, encode_routed, split_frame

logger = logging.getLogger(__name__)

_ENVELOPE = struct.Struct("<i")
_FRAME_HEAD = struct.Struct("<IB")


async def read_routed(reader):
    """(route, frame bytes, message) or None at end of stream."""
    try:
        head = await reader.readexactly(_ENVELOPE.size + _FRAME_HEAD.size)
        (route,) = _ENVELOPE.unpack_from(head)
        length, _ = _FRAME_HEAD.unpack_from(head, _ENVELOPE.size)
        frame = head[_ENVELOPE.size:] + await reader.readexactly(length)
    except (asyncio.IncompleteReadError, ConnectionError):
        return None
    msg, used = split_frame(frame)
    if msg is None or used != len(frame): raise ProtocolError("bad frame on socket")
    return route, frame, msg


@retry(stop=stop_after_attempt(50), wait=wait_fixed(0.1), retry=retry_if_exception_type(OSError), reraise=True)
async def connect(host, port):
    return await asyncio.open_connection(host, port)


async def worker_client(worker, host, port):
    reader, writer = await connect(host, port)
    inbox = asyncio.Queue()

    async def pump():
        while True:
            item = await read_routed(reader)
            await inbox.put(item)
            if item is None: return

    def handle(item):
        if item is None: raise ConnectionError(f"worker {worker.wid}: coordinator closed the connection")
        src, _, msg = item
        worker.on_message(src, msg)

    reading = asyncio.create_task(pump())
    try:
        while not worker.finished:
            while not inbox.empty(): handle(inbox.get_nowait())
            did = worker.step()
            for dest, msg in worker.outbox: writer.write(encode_routed(dest, msg))
            worker.outbox.clear()
            await writer.drain()
            if not did and not worker.finished: handle(await inbox.get())
            else: await asyncio.sleep(0)
    finally:
        reading.cancel()
        writer.close()
    logger.debug("worker %d disconnected after finishing", worker.wid)
    return worker


def worker_process_main(wid, n_workers, workload, ambient_share, host, port):
    worker = Worker(wid, n_workers, workload, ambient_share=ambient_share)
    asyncio.run(worker_client(worker, host, port))


class TcpTransport:
    def __init__(self, host="127.0.0.1", port=0, spawn="process", timeout=3600.0):
        if spawn not in ("process", "task"): raise ValueError("spawn must be 'process' or 'task'")
        self.host, self.port, self.spawn, self.timeout = host, port, spawn, timeout

    def run(self, coordinator, workload, n_workers, *, ambient_share=True, start_delay=0):
        return asyncio.run(self._run(coordinator, workload, n_workers, ambient_share))

    async def _run(self, coordinator, workload, n_workers, ambient_share):
        writers, closed = {}, set()
        finished = asyncio.Event()

        def deliver_down(dest, src, frame):
            targets = sorted(set(writers) - {src}) if dest == BROADCAST else [dest]
            for d in targets:
                if d in writers and d not in closed: writers[d].write(_ENVELOPE.pack(src) + frame)

        def flush_coordinator():
            for dest, msg in coordinator.outbox: deliver_down(dest, COORDINATOR, encode_message(msg))
            coordinator.outbox.clear()

        async def handle(reader, writer):
            wid = None
            while True:
                item = await read_routed(reader)
                if item is None: break
                dest, frame, msg = item
                if isinstance(msg, Hello):
                    wid = msg.worker
                    writers[wid] = writer
                if dest == COORDINATOR:
                    coordinator.on_message(wid, msg)
                    flush_coordinator()
                else:
                    deliver_down(dest, wid, frame)
                await writer.drain()
            if wid is not None:
                closed.add(wid)
                if not coordinator.done:
                    coordinator.on_disconnect(wid)
                    flush_coordinator()
                if len(closed) == n_workers: finished.set()
            writer.close()

        server = await asyncio.start_server(handle, self.host, self.port)
        port = server.sockets[0].getsockname()[1]
        logger.info("coordinator listening on %s:%d", self.host, port)
        started = time.perf_counter()
        procs, tasks, workers = [], [], []
        if self.spawn == "process":
            ctx = mp.get_context("fork")
            procs = [ctx.Process(target=worker_process_main, args=(w, n_workers, workload, ambient_share, self.host, port)) for w in range(n_workers)]
            for p in procs: p.start()
        else:
            workers = [Worker(w, n_workers, workload, ambient_share=ambient_share) for w in range(n_workers)]
            tasks = [asyncio.create_task(worker_client(w, self.host, port)) for w in workers]
        try:
            await asyncio.wait_for(finished.wait(), self.timeout)
            if tasks: await asyncio.gather(*tasks)
        finally:
            server.close()
            await server.wait_closed()
            for p in procs: p.join(timeout=5)
        wall = time.perf_counter() - started
        per_worker = [w.counters for w in workers] if workers else [coordinator.worker_counters[w] for w in range(n_workers)]
        stats = collect_stats(coordinator, per_worker, wall_time=wall)
        logger.info("tcp %s run: %d workers, %.2f s", coordinator.mode, n_workers, wall)
        return RunResult([b.image for b in coordinator.buffers], [b.traced for b in coordinator.buffers],
                         [b.coverage for b in coordinator.buffers], stats, coordinator, workers)
