"""Event-exact simulation of the n-server FIFO queue with service-correlated patience.

One simulator covers the perfectly correlated system and its independent-patience
(Erlang-A) and no-abandonment (Erlang-C) twins; only the patience draw differs.
A customer that waited w before entering service occupies a server for exactly
its own requirement S; the first theta*w of that service is tracked as phase 1
and the remainder (unit-mean exponential by memorylessness) as phase 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from heapq import heapify, heappop, heappush

import numpy as np

from .errors import ConfigError
from .model import Customer, ExpSampler, ModelParams, SeedSpec

# Event tie-classes; at equal timestamps departures are processed before
# abandonments, abandonments before arrivals, and remaining ties break by
# schedule order.  A customer whose deadline equals the instant a server is
# offered abandons (service requires a strictly unexpired deadline).
DEPART, ABANDON, ARRIVE = 0, 1, 2

WAITING, IN_SERVICE, RESOLVED = 0, 1, 2

TRACE_FIELDS = ("t", "X", "Q", "Z1", "Z2", "L", "w", "w_v")


@dataclass(frozen=True)
class InitSpec:
    """Initial system contents.

    * empty: nothing in the system.
    * fresh: min(X0, n) customers in service with no remaining phase-1 work and
      unit-mean exponential remainders; max(X0-n, 0) queued with zero elapsed
      wait.  This is the natural "no pre-0 delays" start.
    * general: explicit remaining phase-1 durations for in-service customers,
      a count of in-service customers already in phase 2, and elapsed waits for
      the queue (head of line first, so waits must be non-increasing).
    """

    variant: str = "empty"
    initial_total: int = 0
    phase1_remaining: tuple = ()
    phase2_count: int = 0
    queued_waits: tuple = ()

    @classmethod
    def empty(cls) -> "InitSpec":
        return cls()

    @classmethod
    def fresh(cls, initial_total: int) -> "InitSpec":
        return cls(variant="fresh", initial_total=int(initial_total))

    @classmethod
    def general(cls, phase1_remaining=(), phase2_count=0, queued_waits=()) -> "InitSpec":
        total = len(phase1_remaining) + int(phase2_count) + len(queued_waits)
        return cls(variant="general", initial_total=total,
                   phase1_remaining=tuple(float(r) for r in phase1_remaining),
                   phase2_count=int(phase2_count),
                   queued_waits=tuple(float(w) for w in queued_waits))


class Sim:
    """Mutable state of one system plus its event loop.

    Use `run()` for self-driven simulation (Poisson arrivals, optional grid
    recording).  Couplings instead construct with external_arrivals=True and
    drive the system through `peek_time` / `step` / `inject_arrival`.
    """

    def __init__(self, params: ModelParams, init: InitSpec | None = None,
                 seed: SeedSpec | None = None, external_arrivals: bool = False,
                 check_invariants: bool = False, track_resolutions: bool = False,
                 keep_customers: bool = False):
        self.params = params
        self.n = params.n
        self.theta = params.theta
        self.mode = params.correlation_mode
        self.t = 0.0
        self.heap: list = []
        self.queue: list = []          # FIFO of customer ids; stale ids skipped lazily
        self._qhead = 0
        self.customers: dict[int, Customer] = {}
        self.Z = 0                     # in service
        self.Qw = 0                    # waiting
        self.arrivals = 0
        self.served = 0
        self.abandoned = 0
        self._seq = 0
        self._next_cid = 0
        # phase-1 bookkeeping: heap of phase-1 end times not yet reached
        self._p1_heap: list = []
        self.z1 = 0
        self.check_invariants = check_invariants
        self.violations = {"state_identity": 0, "zw": 0, "z1_audit": 0,
                           "deadline": 0, "service_duration": 0}
        self.track_resolutions = track_resolutions
        self.resolved: dict[int, tuple] = {}   # cid -> (time, "served"|"abandoned")
        self.keep_customers = keep_customers
        self.finished: list[Customer] = []
        self.external_arrivals = external_arrivals

        if seed is None:
            seed = SeedSpec(master_seed=0)
        self._exp_customers = ExpSampler(seed.with_key(purpose="customers").stream())
        if not external_arrivals:
            self._exp_arrivals = ExpSampler(seed.with_key(purpose="arrivals").stream())
        self._exp_init = ExpSampler(seed.with_key(purpose="init").stream())

        self._apply_init(init or InitSpec.empty())
        if not external_arrivals:
            self._schedule_next_arrival()

    # -- setup ---------------------------------------------------------------

    def _apply_init(self, init: InitSpec) -> None:
        n, theta = self.n, self.theta
        if init.variant == "empty":
            if init.initial_total not in (0,):
                raise ConfigError("empty init cannot carry initial customers")
            return
        if init.variant == "fresh":
            x0 = int(init.initial_total)
            if x0 < 0:
                raise ConfigError("initial_total must be >= 0")
            for _ in range(min(x0, n)):
                remaining = self._exp_init.next()
                c = Customer(id=self._new_cid(), arrival_time=0.0, service_req=remaining,
                             patience=math.inf, abandon_deadline=math.inf,
                             service_start=0.0, service_end=remaining,
                             status=IN_SERVICE, phase1_end=0.0)
                self._admit_in_service(c)
            for _ in range(max(x0 - n, 0)):
                self._join_queue_at_init(elapsed_wait=0.0)
            return
        if init.variant != "general":
            raise ConfigError(f"unknown init variant {init.variant!r}")

        z0 = len(init.phase1_remaining) + init.phase2_count
        x0 = z0 + len(init.queued_waits)
        if init.initial_total != x0:
            raise ConfigError(
                f"general init inconsistent: initial_total={init.initial_total} but contents give {x0}")
        if z0 > n:
            raise ConfigError(f"general init places {z0} customers in {n} servers")
        if init.queued_waits and z0 < n:
            raise ConfigError("general init has a queue while servers are idle")
        if any(r < 0 for r in init.phase1_remaining) or any(l < 0 for l in init.queued_waits):
            raise ConfigError("remaining phase-1 durations and elapsed waits must be >= 0")
        if any(a < b for a, b in zip(init.queued_waits, init.queued_waits[1:])):
            raise ConfigError("queued elapsed waits must be non-increasing (head of line first)")
        for r in init.phase1_remaining:
            rem_service = r + self._exp_init.next()
            c = Customer(id=self._new_cid(), arrival_time=0.0, service_req=rem_service,
                         patience=math.inf, abandon_deadline=math.inf,
                         service_start=0.0, service_end=rem_service,
                         status=IN_SERVICE, phase1_end=r)
            self._admit_in_service(c)
        for _ in range(init.phase2_count):
            remaining = self._exp_init.next()
            c = Customer(id=self._new_cid(), arrival_time=0.0, service_req=remaining,
                         patience=math.inf, abandon_deadline=math.inf,
                         service_start=0.0, service_end=remaining,
                         status=IN_SERVICE, phase1_end=0.0)
            self._admit_in_service(c)
        for elapsed in init.queued_waits:
            self._join_queue_at_init(elapsed_wait=elapsed)

    def _join_queue_at_init(self, elapsed_wait: float) -> None:
        theta = self.theta
        arrival = -float(elapsed_wait)
        if self.mode == "perfect":
            # patience already survived theta*elapsed of service requirement
            s = theta * elapsed_wait + self._exp_init.next()
            patience = s / theta
        elif self.mode == "independent":
            s = self._exp_init.next()
            patience = elapsed_wait + self._exp_init.next() / theta
        else:
            s = self._exp_init.next()
            patience = math.inf
        deadline = max(arrival + patience, 0.0)
        c = Customer(id=self._new_cid(), arrival_time=arrival, service_req=s,
                     patience=patience, abandon_deadline=deadline, status=WAITING)
        self.customers[c.id] = c
        self.queue.append(c.id)
        self.Qw += 1
        if deadline < math.inf:
            self._push_event(deadline, ABANDON, c.id)

    def _admit_in_service(self, c: Customer) -> None:
        self.customers[c.id] = c
        self.Z += 1
        if c.phase1_end > 0.0:
            heappush(self._p1_heap, c.phase1_end)
            self.z1 += 1
        self._push_event(c.service_end, DEPART, c.id)

    def _new_cid(self) -> int:
        cid = self._next_cid
        self._next_cid += 1
        return cid

    def _push_event(self, time: float, cls: int, cid: int) -> None:
        self._seq += 1
        heappush(self.heap, (time, cls, self._seq, cid))

    def _schedule_next_arrival(self) -> None:
        dt = self._exp_arrivals.next() / self.params.lambda_n
        self._push_event(self.t + dt, ARRIVE, -1)

    # -- state queries ---------------------------------------------------------

    @property
    def X(self) -> int:
        return self.Z + self.Qw

    def _advance_phase(self, t: float) -> None:
        h = self._p1_heap
        while h and h[0] <= t:
            heappop(h)
            self.z1 -= 1

    def Z1(self, t: float | None = None) -> int:
        self._advance_phase(self.t if t is None else t)
        return self.z1

    def Z2(self, t: float | None = None) -> int:
        return self.Z - self.Z1(t)

    def _queue_head(self) -> Customer | None:
        q, cs = self.queue, self.customers
        qh = self._qhead
        while qh < len(q):
            c = cs.get(q[qh])
            if c is not None and c.status == WAITING:
                self._qhead = qh
                if qh > 65536 and 2 * qh > len(q):
                    del q[:qh]
                    self._qhead = 0
                return c
            qh += 1
        q.clear()
        self._qhead = 0
        return None

    def head_wait(self, t: float | None = None) -> float:
        """Elapsed wait of the head-of-line customer (0 if the queue is empty)."""
        t = self.t if t is None else t
        c = self._queue_head()
        return 0.0 if c is None else t - c.arrival_time

    def workload(self, t: float | None = None) -> float:
        """Remaining phase-1 service plus elapsed queue waits at time t."""
        t = self.t if t is None else t
        self._advance_phase(t)
        total = 0.0
        for p1 in self._p1_heap:
            total += p1 - t
        cs = self.customers
        for cid in self.queue[self._qhead:]:
            c = cs.get(cid)
            if c is not None and c.status == WAITING:
                total += t - c.arrival_time
        return total

    def offered_wait(self, t: float | None = None) -> float:
        """Wait an infinitely patient arrival-now would see, by deterministic replay.

        Arrivals are suspended; servers free at their known service-end times
        and queued customers enter FIFO unless their deadline has passed.
        """
        t = self.t if t is None else t
        if self.Z < self.n:
            return 0.0
        ends = [e[0] for e in self.heap if e[1] == DEPART]
        heapify(ends)
        cs = self.customers
        free_at = None
        for cid in self.queue[self._qhead:]:
            c = cs.get(cid)
            if c is None or c.status != WAITING:
                continue
            if free_at is None:
                free_at = heappop(ends)
            if c.abandon_deadline > free_at:
                heappush(ends, free_at + c.service_req)
                free_at = None
            # else: the queued customer abandons before this server frees;
            # the same free server is offered to the next in line
        if free_at is None:
            free_at = heappop(ends)
        return max(free_at - t, 0.0)

    # -- event handlers ----------------------------------------------------------

    def _enter_service(self, c: Customer, t: float) -> None:
        w = t - c.arrival_time
        c.service_start = t
        c.service_end = t + c.service_req
        c.status = IN_SERVICE
        if self.mode == "perfect" and w > 0.0:
            c.phase1_end = t + self.theta * w
            heappush(self._p1_heap, c.phase1_end)
            self.z1 += 1
        else:
            c.phase1_end = t
        self.Z += 1
        self._push_event(c.service_end, DEPART, c.id)

    def _resolve(self, c: Customer, t: float, outcome: str) -> None:
        c.status = RESOLVED
        del self.customers[c.id]
        if self.track_resolutions:
            self.resolved[c.id] = (t, outcome)
        if self.keep_customers:
            self.finished.append(c)

    def _handle_departure(self, t: float, cid: int) -> None:
        c = self.customers[cid]
        self.Z -= 1
        self.served += 1
        if self.check_invariants:
            # end was constructed as start + S; allow accumulated-clock rounding only
            err = abs((c.service_end - c.service_start) - c.service_req)
            if err > 1e-9 * max(1.0, abs(c.service_end)):
                self.violations["service_duration"] += 1
            if not (c.service_start < c.abandon_deadline):
                self.violations["deadline"] += 1
        self._resolve(c, t, "served")
        # offer the freed server down the line
        while True:
            head = self._queue_head()
            if head is None:
                return
            if head.abandon_deadline > t:
                self._qhead += 1
                self.Qw -= 1
                self._enter_service(head, t)
                return
            # deadline == t exactly: the offer loses the tie and the customer
            # abandons here; its pending ABANDON event becomes a tombstone
            self._qhead += 1
            self.Qw -= 1
            self.abandoned += 1
            if self.check_invariants and head.abandon_deadline != t:
                self.violations["deadline"] += 1
            self._resolve(head, t, "abandoned")

    def _handle_abandon(self, t: float, cid: int) -> None:
        c = self.customers.get(cid)
        if c is None or c.status != WAITING:
            return  # tombstone: entered service or already resolved
        self.Qw -= 1
        self.abandoned += 1
        if self.check_invariants and c.abandon_deadline != t:
            self.violations["deadline"] += 1
        self._resolve(c, t, "abandoned")

    def _handle_arrival(self, t: float, c: Customer) -> None:
        self.arrivals += 1
        self.customers[c.id] = c
        if self.Z < self.n:
            self._enter_service(c, t)
        else:
            c.status = WAITING
            self.queue.append(c.id)
            self.Qw += 1
            if c.abandon_deadline < math.inf:
                self._push_event(c.abandon_deadline, ABANDON, c.id)

    def _draw_customer(self, t: float) -> Customer:
        exp = self._exp_customers
        s = exp.next()
        if self.mode == "perfect":
            patience = s / self.theta
        elif self.mode == "independent":
            patience = exp.next() / self.theta
        else:
            patience = math.inf
        return Customer(id=self._new_cid(), arrival_time=t, service_req=s,
                        patience=patience, abandon_deadline=t + patience)

    def _check_epoch(self) -> None:
        x, z, q, n = self.X, self.Z, self.Qw, self.n
        if q != max(x - n, 0) or z != min(x, n):
            self.violations["state_identity"] += 1
        if z < n and q != 0:
            self.violations["zw"] += 1
        self._advance_phase(self.t)
        if not (0 <= self.z1 <= z):
            self.violations["z1_audit"] += 1

    def _audit_z1(self, t: float) -> None:
        """Recount phase-1 occupancy from customer records (record-time audit)."""
        self._advance_phase(t)
        count = 0
        for e in self.heap:
            if e[1] == DEPART:
                c = self.customers.get(e[3])
                if c is not None and c.phase1_end > t:
                    count += 1
        if count != self.z1:
            self.violations["z1_audit"] += 1

    # -- external drive (couplings) ----------------------------------------------

    def peek_time(self) -> float:
        return self.heap[0][0] if self.heap else math.inf

    def step(self) -> float:
        """Process the single next pending event and return its epoch."""
        t, cls, _, cid = heappop(self.heap)
        self.t = t
        if cls == DEPART:
            self._handle_departure(t, cid)
        elif cls == ABANDON:
            self._handle_abandon(t, cid)
        elif self.external_arrivals:
            raise ConfigError("internal arrival event in externally driven system")
        else:
            self._handle_arrival(t, self._draw_customer(t))
            self._schedule_next_arrival()
        if self.check_invariants:
            self._check_epoch()
        return t

    def inject_arrival(self, t: float, service_req: float, patience: float) -> int:
        """Admit an externally supplied arrival at time t (clock may not go back)."""
        if t < self.t:
            raise ConfigError("arrival injected in the past")
        self.t = t
        c = Customer(id=self._new_cid(), arrival_time=t, service_req=service_req,
                     patience=patience, abandon_deadline=t + patience)
        self._handle_arrival(t, c)
        if self.check_invariants:
            self._check_epoch()
        return c.id

    # -- main loop -----------------------------------------------------------------

    def run(self, horizon: float, record_times=None, record_fields=TRACE_FIELDS):
        """Simulate up to the horizon; optionally record state on a time grid.

        Recording is right-continuous: a grid point t reflects all events with
        epoch <= t.  Returns a dict of column arrays, or None when no grid was
        given.
        """
        if not horizon > 0:
            raise ConfigError(f"horizon must be > 0, got {horizon}")
        if self.external_arrivals:
            raise ConfigError("run() needs internal Poisson arrivals")
        grid = np.asarray([] if record_times is None else record_times, dtype=float)
        collect = {f: [] for f in record_fields} if grid.size else None
        gi, ng = 0, grid.size
        heap = self.heap
        check = self.check_invariants
        handle_departure = self._handle_departure
        handle_abandon = self._handle_abandon
        handle_arrival = self._handle_arrival
        draw_customer = self._draw_customer
        rate = self.params.lambda_n
        exp_arr = self._exp_arrivals
        next_grid = grid[0] if ng else math.inf

        while heap:
            ev = heap[0]
            ev_t = ev[0]
            if ev_t > horizon:
                break
            while next_grid < ev_t:
                self._record(next_grid, collect, record_fields)
                gi += 1
                next_grid = grid[gi] if gi < ng else math.inf
            heappop(heap)
            self.t = ev_t
            cls = ev[1]
            if cls == DEPART:
                handle_departure(ev_t, ev[3])
            elif cls == ABANDON:
                handle_abandon(ev_t, ev[3])
            else:
                handle_arrival(ev_t, draw_customer(ev_t))
                self._seq += 1
                heappush(heap, (ev_t + exp_arr.next() / rate, ARRIVE, self._seq, -1))
            if check:
                self._check_epoch()
        while gi < ng and grid[gi] <= horizon:
            self._record(grid[gi], collect, record_fields)
            gi += 1
        self.t = horizon
        if collect is None:
            return None
        return {f: np.asarray(v) for f, v in collect.items()}

    def _record(self, t: float, collect, fields) -> None:
        for f in fields:
            if f == "t":
                v = t
            elif f == "X":
                v = self.X
            elif f == "Q":
                v = self.Qw
            elif f == "Z1":
                v = self.Z1(t)
            elif f == "Z2":
                v = self.Z2(t)
            elif f == "L":
                v = self.workload(t)
            elif f == "w":
                v = self.head_wait(t)
            elif f == "w_v":
                v = self.offered_wait(t)
            else:
                raise ConfigError(f"unknown record field {f!r}")
            collect[f].append(v)
        if self.check_invariants:
            self._audit_z1(t)


# -- public operations -------------------------------------------------------------


def workload_L(sim: Sim) -> float:
    """Current workload: remaining phase-1 service plus elapsed queue waits."""
    return sim.workload()


def offered_wait(sim: Sim) -> float:
    """Current offered wait (replay with arrivals suspended); 0 if a server is idle."""
    return sim.offered_wait()


@dataclass
class SimulationTrace:
    """Recorded path of one run plus conservation counters and provenance."""

    columns: dict
    params: ModelParams
    seed: SeedSpec
    arrivals: int
    served: int
    abandoned: int
    initial_total: int
    final_total: int
    violations: dict

    def to_csv(self) -> str:
        cols = [self.columns[f] for f in TRACE_FIELDS]
        lines = [",".join(TRACE_FIELDS)]
        for row in zip(*cols):
            lines.append(",".join(f"{v:.17g}" for v in row))
        return "\n".join(lines) + "\n"


def simulate(params: ModelParams, init: InitSpec, horizon: float, seed: SeedSpec,
             record_dt: float | None = None, record_times=None,
             check_invariants: bool = False, keep_customers: bool = False) -> SimulationTrace:
    """Run one system and record the full observable vector on a grid.

    The grid defaults to arange(0, horizon, record_dt) plus the horizon itself.
    """
    if record_times is None:
        if record_dt is None or not record_dt > 0:
            raise ConfigError("need record_dt > 0 or explicit record_times")
        record_times = np.arange(0.0, horizon, record_dt)
        if record_times.size == 0 or record_times[-1] < horizon:
            record_times = np.append(record_times, horizon)
    sim = Sim(params, init=init, seed=seed, check_invariants=check_invariants,
              keep_customers=keep_customers)
    x0 = sim.X
    columns = sim.run(horizon, record_times=record_times)
    return SimulationTrace(columns=columns, params=params, seed=seed,
                           arrivals=sim.arrivals, served=sim.served,
                           abandoned=sim.abandoned, initial_total=x0,
                           final_total=sim.X, violations=dict(sim.violations))
