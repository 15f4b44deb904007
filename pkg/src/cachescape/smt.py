"""Simplified multithread front-end over the shared cache hierarchy.

Execution model (deterministic, no randomness):

* Each cycle, up to ``fetch_width`` instructions issue round-robin across
  ready threads; the starting thread rotates with the cycle number.  A
  thread issues at most one instruction per cycle and its next instruction
  becomes eligible once the previous one has completed its fetch and (if
  any) data access, so each thread is a serial stream.
* Every resource is shared: L1I, L1D, L2 and the physical register file
  (maximum-sharing configuration).
* An instruction allocates ``num_dst_regs`` physical registers at issue and
  stalls its thread while too few are free; registers release
  ``commit_latency`` cycles after the instruction's last memory access
  completes.
* L1I hits are pipelined and never contend.  L1I misses and all data
  accesses go through one blocking port in arrival order (issue order;
  within a cycle, that cycle's round-robin order breaks ties).  Cache state
  and counters update at issue time, port timing at service time.
* Per-access timing matches the hierarchy contract: latency of the deepest
  level reached, serialized down the path.

``idle_cycles`` in the merged counters are exact: per-level service
intervals are merged after the run and subtracted from the total.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .cache import Hierarchy, HierarchyConfig, SimStats
from .errors import ContractError, ValidationError
from .trace import MemKind, MemOp, Trace, TraceRecord


@dataclass(frozen=True)
class CoreConfig:
    """Front-end parameters; all listed resources are shared among threads."""

    fetch_width: int = 2
    regfile_size: int = 80
    commit_latency: int = 4
    num_threads: int = 1

    def validate(self) -> None:
        if self.fetch_width < 1:
            raise ValidationError(f"fetch_width must be >= 1, got {self.fetch_width}")
        if self.regfile_size < 1:
            raise ValidationError(f"regfile_size must be >= 1, got {self.regfile_size}")
        if self.regfile_size < self.fetch_width:
            raise ValidationError(
                f"regfile_size {self.regfile_size} must be >= fetch_width {self.fetch_width}"
            )
        if self.commit_latency < 1:
            raise ValidationError(f"commit_latency must be >= 1, got {self.commit_latency}")
        if self.num_threads < 1:
            raise ValidationError(f"num_threads must be >= 1, got {self.num_threads}")


@dataclass
class ThreadStats:
    instructions_retired: int = 0
    cycles_active: int = 0


@dataclass
class SmtStats:
    per_thread: dict[int, ThreadStats]
    total_cycles: int
    regfile_stall_cycles: int
    underlying: SimStats


def _merged_busy(intervals: list[tuple[int, int]]) -> int:
    """Total length of the union of [start, end) intervals."""
    if not intervals:
        return 0
    intervals.sort()
    busy = 0
    cur_start, cur_end = intervals[0]
    for s, e in intervals[1:]:
        if s > cur_end:
            busy += cur_end - cur_start
            cur_start, cur_end = s, e
        elif e > cur_end:
            cur_end = e
    busy += cur_end - cur_start
    return busy


def run_smt(core: CoreConfig, hierarchy: HierarchyConfig, traces: list[Trace]) -> SmtStats:
    """Cycle-stepped run of ``traces`` (one per thread) on the shared core."""
    core.validate()
    if len(traces) != core.num_threads:
        raise ContractError(
            f"expected {core.num_threads} traces for {core.num_threads} threads, got {len(traces)}"
        )
    for t in traces:
        for rec in t.records:
            if rec.thread_id != 0:
                raise ContractError(
                    f"trace {t.name!r} is not single-thread (found thread_id {rec.thread_id})"
                )

    hier = Hierarchy(hierarchy)
    l1i_lat = hierarchy.l1i.access_latency
    l1d_lat = hierarchy.l1d.access_latency
    l2_lat = hierarchy.l2.access_latency
    mem_lat = hierarchy.mem_latency

    n = core.num_threads
    records = [t.records for t in traces]
    idx = [0] * n
    ready = [0] * n  # earliest cycle at which the thread may issue again
    last_done = [0] * n
    retired = [0] * n
    free_regs = core.regfile_size
    pending_frees: list[tuple[int, int]] = []  # (release cycle, register count)
    port_free = 0
    stall_cycles = 0
    remaining = sum(len(r) for r in records)
    intervals: dict[str, list[tuple[int, int]]] = {"L1I": [], "L1D": [], "L2": []}

    t = 0
    while remaining:
        while pending_frees and pending_frees[0][0] <= t:
            free_regs += heapq.heappop(pending_frees)[1]
        slots = core.fetch_width
        issued = 0
        reg_blocked = False
        blocked_count = 0
        start = t % n
        for off in range(n):
            if slots == 0:
                break
            k = (start + off) % n
            if idx[k] >= len(records[k]) or ready[k] > t:
                continue
            rec = records[k][idx[k]]
            if rec.num_dst_regs > free_regs:
                stall_cycles += 1
                reg_blocked = True
                blocked_count += 1
                continue
            # Issue: cache state and counters update now, in arrival order.
            slots -= 1
            issued += 1
            idx[k] += 1
            retired[k] += 1
            remaining -= 1
            free_regs -= rec.num_dst_regs

            depth = hier.fetch(rec.pc)
            if depth == 1:
                fetch_done = t + l1i_lat
                intervals["L1I"].append((t, fetch_done))
            else:
                svc = max(t, port_free)
                dur = l1i_lat + l2_lat + (mem_lat if depth == 3 else 0)
                fetch_done = svc + dur
                port_free = fetch_done
                intervals["L1I"].append((svc, svc + l1i_lat))
                intervals["L2"].append((svc + l1i_lat, svc + l1i_lat + l2_lat))
            done = fetch_done
            if rec.mem_op is not None:
                svc = max(fetch_done, port_free)
                depth = hier.data(rec.mem_op.address, rec.mem_op.kind is MemKind.STORE)
                dur = l1d_lat + (l2_lat if depth >= 2 else 0) + (mem_lat if depth == 3 else 0)
                done = svc + dur
                port_free = done
                intervals["L1D"].append((svc, svc + l1d_lat))
                if depth >= 2:
                    intervals["L2"].append((svc + l1d_lat, svc + l1d_lat + l2_lat))
            ready[k] = done
            last_done[k] = done
            if rec.num_dst_regs:
                heapq.heappush(pending_frees, (done + core.commit_latency, rec.num_dst_regs))

        if issued:
            t += 1
        else:
            # Nothing issuable this cycle; jump straight to the next event.
            # A thread blocked on registers stays blocked for every skipped
            # cycle, so the stall counter advances with the jump.
            candidates = [
                ready[k] for k in range(n) if idx[k] < len(records[k]) and ready[k] > t
            ]
            if reg_blocked and pending_frees:
                candidates.append(pending_frees[0][0])
            if not candidates:
                raise AssertionError("scheduler wedged with work remaining")
            new_t = min(candidates)
            if reg_blocked:
                stall_cycles += (new_t - t - 1) * blocked_count
            t = new_t

    total_cycles = max(last_done) if any(len(r) for r in records) else 0
    busy = {name: _merged_busy(iv) for name, iv in intervals.items()}
    underlying = hier.collect(total_cycles, sum(retired), busy)
    per_thread = {
        k: ThreadStats(instructions_retired=retired[k], cycles_active=last_done[k])
        for k in range(n)
    }
    return SmtStats(
        per_thread=per_thread,
        total_cycles=total_cycles,
        regfile_stall_cycles=stall_cycles,
        underlying=underlying,
    )


def run_single(core: CoreConfig, hierarchy: HierarchyConfig, trace: Trace) -> SmtStats:
    """Single-thread pipeline run: exactly :func:`run_smt` with one trace."""
    if core.num_threads != 1:
        raise ContractError(f"run_single requires num_threads = 1, got {core.num_threads}")
    return run_smt(core, hierarchy, [trace])


def offset_trace(trace: Trace, data_offset: int, pc_offset: int = 0, name: str | None = None) -> Trace:
    """Copy of ``trace`` with all data addresses (and optionally pcs)
    shifted; used to give thread copies distinct working sets."""
    recs = []
    for r in trace.records:
        op = r.mem_op
        if op is not None and data_offset:
            op = MemOp(op.kind, op.address + data_offset)
        recs.append(
            TraceRecord(
                thread_id=r.thread_id,
                pc=r.pc + pc_offset,
                mem_op=op,
                num_src_regs=r.num_src_regs,
                num_dst_regs=r.num_dst_regs,
            )
        )
    return Trace(name if name is not None else trace.name, recs)
