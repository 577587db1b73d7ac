"""Coordinator/site covariance tracking over an in-process message bus.

Each site runs an AeroSketch whose dump threshold is ``eps`` times the last
broadcast global mass ``F_hat``.  Sites report local mass once it reaches
``eps/m`` of ``F_hat``; the coordinator broadcasts after every ``m`` reports.
Every dump is shipped to the coordinator, which adds its restoration
contribution to a ``d x d`` accumulator.

In window mode the coordinator also caches each contribution under
``(site, t)`` and the site sends a bare ``Expire(t)`` once the snapshot
leaves the window; the coordinator subtracts the cached matrix.

Byte accounting: 8 bytes per float in the payload plus a 16-byte header.
"""
from __future__ import annotations

import heapq
import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from collections import deque

import numpy as np

from .core import AeroSketch, Snapshot, restore_contribution, shrink_gram
from .errors import InvalidInput, ProtocolError
from .linalg import RngState
from .metrics import MetricsReport, covariance_error

HEADER_BYTES = 16
COORDINATOR = -1

FRO_MASS = "FroMass"
FRO_BROADCAST = "FroBroadcast"
SNAPSHOT_UPDATE = "SnapshotUpdate"
EXPIRE = "Expire"
KINDS = (FRO_MASS, FRO_BROADCAST, SNAPSHOT_UPDATE, EXPIRE)


@dataclass(frozen=True, eq=False)
class Message:
    kind: str
    sender: int
    payload: object
    bytes: int

    @classmethod
    def fro_mass(cls, site: int, f: float) -> "Message":
        return cls(FRO_MASS, site, float(f), 8 + HEADER_BYTES)

    @classmethod
    def fro_broadcast(cls, f_hat: float) -> "Message":
        return cls(FRO_BROADCAST, COORDINATOR, float(f_hat), 8 + HEADER_BYTES)

    @classmethod
    def snapshot(cls, site: int, snap: Snapshot) -> "Message":
        n = snap.z.size + snap.m.size
        return cls(SNAPSHOT_UPDATE, site, (snap.z, snap.m, snap.t), 8 * n + HEADER_BYTES)

    @classmethod
    def expire(cls, site: int, t: int) -> "Message":
        return cls(EXPIRE, site, int(t), 8 + HEADER_BYTES)


class Bus:
    """Point-to-point channels with FIFO delivery and a fixed tick latency.

    Messages are delivered in send order among those that are due, which
    is FIFO on every ``(sender, receiver)`` channel.
    """

    def __init__(self, latency: int = 0):
        if latency < 0:
            raise InvalidInput(f"latency={latency} must be >= 0")
        self.latency = latency
        self._queue: list = []
        self._seq = itertools.count()
        self.comm_bytes = 0
        self.sent = {k: 0 for k in KINDS}
        self.now = 0

    def send(self, msg: Message, dest: int) -> None:
        heapq.heappush(self._queue, (self.now + self.latency, next(self._seq), dest, msg))
        self.comm_bytes += msg.bytes
        self.sent[msg.kind] += 1

    def pending(self) -> int:
        return len(self._queue)

    def pop_due(self):
        if self._queue and self._queue[0][0] <= self.now:
            _, _, dest, msg = heapq.heappop(self._queue)
            return dest, msg
        return None


class SiteState:
    def __init__(self, site_id: int, d: int, eps: float, m: int, rng=None, *,
                 window: int | None = None, delta: float | None = None):
        self.id = site_id
        self.d = d
        self.eps = eps
        self.m = m
        self.window = window
        self.inner = AeroSketch(d, eps, theta=0.0, rng=rng, delta=delta)
        self.f_local = 0.0
        self.f_hat = 0.0
        self.sent_times: deque = deque()
        # Sum of contributions this site has shipped and not yet expired.
        self.sent_gram = np.zeros((d, d))
        self._sent_contrib: dict = {}

    def update(self, a, i: int, out: list) -> None:
        """Ingest one row; outgoing messages are appended to ``out``."""
        a = np.asarray(a, dtype=np.float64).ravel()
        if a.size != self.d:
            raise InvalidInput(f"site {self.id}: row of dimension {a.size}, expected {self.d}")
        self.f_local += float(a @ a)
        if self.f_local >= self.eps / self.m * self.f_hat:
            out.append(Message.fro_mass(self.id, self.f_local))
            self.f_local = 0.0
        self.inner.update(a, i)
        while self.inner.snaps:
            snap = self.inner.snaps.popleft()
            out.append(Message.snapshot(self.id, snap))
            contrib = restore_contribution(snap)
            self.sent_gram += contrib
            if self.window is not None:
                self.sent_times.append(snap.t)
                self._sent_contrib[snap.t] = contrib
        if self.window is not None:
            self.expire(i, out)

    def expire(self, i: int, out: list) -> None:
        """Send ``Expire(t)`` for every shipped snapshot with ``t <= i - window``."""
        while self.sent_times and self.sent_times[0] <= i - self.window:
            t = self.sent_times.popleft()
            self.sent_gram -= self._sent_contrib.pop(t)
            out.append(Message.expire(self.id, t))

    def receive(self, msg: Message) -> None:
        if msg.kind != FRO_BROADCAST:
            raise ProtocolError(f"site {self.id} cannot handle {msg.kind}")
        self.f_hat = float(msg.payload)
        self.inner.theta = self.eps * self.f_hat


class Coordinator:
    def __init__(self, d: int, m: int, eps: float, *, window: int | None = None):
        self.d = d
        self.m = m
        self.eps = eps
        self.ell = AeroSketch(d, eps).ell
        self.window = window
        self.b = np.zeros((d, d))
        self.f_hat = 0.0
        self.msg_count = 0
        self.broadcasts = 0
        self.contributions: dict = {}

    def receive(self, msg: Message) -> Message | None:
        if not isinstance(msg, Message) or msg.kind not in KINDS:
            raise ProtocolError(f"unrecognized message {msg!r}")
        if msg.kind == FRO_MASS:
            f = msg.payload
            if not isinstance(f, float) or not np.isfinite(f) or f < 0:
                raise ProtocolError(f"bad FroMass payload {f!r}")
            self.f_hat += f
            self.msg_count += 1
            if self.msg_count >= self.m:
                self.msg_count = 0
                self.broadcasts += 1
                return Message.fro_broadcast(self.f_hat)
            return None
        if msg.kind == SNAPSHOT_UPDATE:
            try:
                z, mm, t = msg.payload
            except (TypeError, ValueError) as exc:
                raise ProtocolError("SnapshotUpdate needs (Z, M, t)") from exc
            if not (isinstance(z, np.ndarray) and isinstance(mm, np.ndarray)):
                raise ProtocolError("SnapshotUpdate matrices must be arrays")
            if z.ndim != 2 or z.shape[0] != self.d or mm.shape != (z.shape[1], self.d):
                raise ProtocolError(f"snapshot shapes {z.shape}, {mm.shape} do not match d={self.d}")
            contrib = restore_contribution(Snapshot(z, mm, t, t))
            self.b += contrib
            if self.window is not None:
                key = (msg.sender, int(t))
                if key in self.contributions:
                    raise ProtocolError(f"duplicate snapshot key {key}")
                self.contributions[key] = contrib
            return None
        if msg.kind == EXPIRE:
            key = (msg.sender, msg.payload)
            if key not in self.contributions:
                raise ProtocolError(f"expire for unknown key {key}")
            self.b -= self.contributions.pop(key)
            return None
        raise ProtocolError(f"coordinator cannot handle {msg.kind}")

    def query(self, ell: int | None = None) -> np.ndarray:
        return shrink_gram(self.b, self.ell if ell is None else ell)

    def cache_residual(self) -> float:
        """Frobenius gap between ``B`` and the sum of cached contributions."""
        total = np.zeros((self.d, self.d))
        for c in self.contributions.values():
            total += c
        return float(np.linalg.norm(self.b - total))

    def stale_keys(self, now: int) -> list:
        if self.window is None:
            return []
        return [k for k in self.contributions if k[1] <= now - self.window]


def site_update(site: SiteState, a, i: int, bus: Bus) -> None:
    out: list = []
    site.update(a, i, out)
    for msg in out:
        bus.send(msg, COORDINATOR)


def dswfd_site_update(site: SiteState, a, i: int, bus: Bus) -> None:
    if site.window is None:
        raise InvalidInput("site was built without a window")
    site_update(site, a, i, bus)


def coordinator_receive(coord: Coordinator, msg: Message, bus: Bus, sites) -> None:
    reply = coord.receive(msg)
    if reply is not None:
        for s in sites:
            bus.send(reply, s.id)


def coordinator_query(coord: Coordinator, ell: int | None = None) -> np.ndarray:
    return coord.query(ell)


def deliver(bus: Bus, coord: Coordinator, sites, on_expire=None) -> None:
    """Drain every message due at ``bus.now``, including replies generated on the way."""
    while True:
        item = bus.pop_due()
        if item is None:
            return
        dest, msg = item
        if dest == COORDINATOR:
            coordinator_receive(coord, msg, bus, sites)
            if msg.kind == EXPIRE and on_expire is not None:
                on_expire(msg)
        else:
            if not 0 <= dest < len(sites):
                raise InvalidInput(f"unknown site {dest}")
            sites[dest].receive(msg)


@dataclass
class SimulationResult:
    reports: list
    coordinator: Coordinator
    sites: list
    bus: Bus
    expire_audits: list = field(default_factory=list)
    stale_counts: list = field(default_factory=list)


def round_robin(rows, m: int):
    """Assign row ``i`` (timestamp ``i+1``) to site ``i mod m``."""
    return [(i + 1, int(i % m), np.asarray(r, dtype=np.float64)) for i, r in enumerate(rows)]


def run_simulation(
    records,
    d: int,
    m: int,
    eps: float,
    *,
    window: int | None = None,
    seed: int = 0,
    query_every: int = 20,
    latency: int = 0,
    parallel: bool = False,
    delta: float | None = None,
    probe_error: bool = True,
    audit_expiry: bool = False,
) -> SimulationResult:
    """Replay ``records`` ``(t, site, row)`` through ``m`` sites and a coordinator.

    At each tick every site ingests its records stamped with that tick (in
    parallel worker threads if ``parallel``), the outboxes are posted in site
    order, and all due messages are delivered before the next tick.  Every
    ``query_every`` ticks a probe compares the coordinator against the exact
    pooled Gram of the prefix (or of the window).
    """
    if m < 1:
        raise InvalidInput(f"m={m} must be >= 1")
    if query_every < 1:
        raise InvalidInput("query_every must be >= 1")
    by_tick: dict = {}
    for t, s, row in records:
        if not 0 <= s < m:
            raise InvalidInput(f"record at t={t} names site {s} outside [0, {m})")
        if row.shape != (d,):
            raise InvalidInput(f"record at t={t} has shape {row.shape}, expected ({d},)")
        by_tick.setdefault(int(t), []).append((s, row))
    if not by_tick:
        raise InvalidInput("empty record stream")

    root = RngState(seed)
    sites = [SiteState(j, d, eps, m, root.split(j), window=window, delta=delta) for j in range(m)]
    coord = Coordinator(d, m, eps, window=window)
    bus = Bus(latency)
    result = SimulationResult([], coord, sites, bus)

    def audit(msg):
        if audit_expiry:
            result.expire_audits.append(
                ((msg.sender, msg.payload) in coord.contributions, coord.cache_residual())
            )

    gram = np.zeros((d, d))
    recent: deque = deque()
    cum_ns = 0
    peak_floats = 0
    pool = ThreadPoolExecutor(max_workers=m) if parallel else None
    try:
        last = max(by_tick)
        for tick in range(1, last + 1):
            bus.now = tick
            batch = by_tick.get(tick, [])
            outboxes = [[] for _ in range(m)]
            start = time.perf_counter_ns()
            work = {}
            for s, row in batch:
                work.setdefault(s, []).append(row)

            def run_site(j, rows=None):
                for r in rows or []:
                    sites[j].update(r, tick, outboxes[j])
                if window is not None:
                    sites[j].expire(tick, outboxes[j])

            if pool is not None:
                list(pool.map(lambda j: run_site(j, work.get(j)), range(m)))
            else:
                for j in range(m):
                    run_site(j, work.get(j))
            for j in range(m):
                for msg in outboxes[j]:
                    bus.send(msg, COORDINATOR)
            deliver(bus, coord, sites, audit)
            cum_ns += time.perf_counter_ns() - start
            if audit_expiry and window is not None:
                result.stale_counts.append(len(coord.stale_keys(tick)))

            for _, row in batch:
                gram += np.outer(row, row)
                if window is not None:
                    recent.append((tick, row))
            if window is not None:
                while recent and recent[0][0] <= tick - window:
                    _, old = recent.popleft()
                    gram -= np.outer(old, old)

            floats = d * d + sum(s.inner.n_floats() for s in sites)
            floats += sum(c.size for c in coord.contributions.values())
            peak_floats = max(peak_floats, floats)
            if tick % query_every == 0 or tick == last:
                err = covariance_error(gram, coord.query()) if probe_error else None
                result.reports.append(
                    MetricsReport(
                        step=tick,
                        empirical_error=err,
                        sketch_rows=-(-peak_floats // d),
                        sketch_bytes=8 * peak_floats,
                        cum_update_ns=cum_ns,
                        comm_bytes=bus.comm_bytes,
                    )
                )
    finally:
        if pool is not None:
            pool.shutdown()
    return result
