"""Deterministic functional simulation of an L1I / L1D / unified-L2 hierarchy.

Model summary
-------------
* Write-back, write-allocate at every level; strict LRU replacement per set.
* Blocking caches, one outstanding miss; no prefetching, no coherence.
* Inclusion is not enforced (no back-invalidation).
* One L1I access per trace record; one L1D access per memory operand.
* Timing: each instruction costs 1 base cycle plus, for its L1I fetch and
  (if present) its L1D access, the serialized latency of the deepest level
  reached: an L1 hit costs the L1 latency; an L1 miss that hits in L2 costs
  L1 + L2; an L2 miss costs L1 + L2 + memory latency.  Write-back traffic
  updates counters but consumes no cycles.

Counter conventions
-------------------
Reads and writes count *demand* accesses only: L2 reads are L1 miss fills,
L2 writes are dirty L1D write-backs; installing a fetched line is not charged
as a separate write.  A write-back that misses in L2 allocates by fetching
the line from memory first, so every L2 miss produces exactly one memory
read and every dirty L2 eviction exactly one memory write.

``idle_cycles`` for a level is the total cycle count minus the cycles the
level spent servicing demand accesses (its own latency per access; the wait
below a miss is attributed to the lower level).  Untimed write-back traffic
occupies no cycles and therefore contributes no busy time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ContractError, ValidationError
from .trace import Trace

LEVELS = ("L1I", "L1D", "L2")

_REFERENCE_MAX_RECORDS = 10**5


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class CacheConfig:
    """Geometry and latency of one cache level."""

    level_name: str
    size: int
    line_size: int
    associativity: int
    access_latency: int

    def validate(self) -> None:
        if self.level_name not in LEVELS:
            raise ValidationError(f"level_name must be one of {LEVELS}, got {self.level_name!r}")
        for fname in ("size", "line_size", "associativity"):
            v = getattr(self, fname)
            if not _is_pow2(v):
                raise ValidationError(f"{self.level_name}.{fname} must be a power of two, got {v}")
        if self.associativity > self.size // self.line_size:
            raise ValidationError(
                f"{self.level_name}.associativity {self.associativity} exceeds "
                f"size/line_size = {self.size // self.line_size}"
            )
        if self.num_sets < 1 or not _is_pow2(self.num_sets):
            raise ValidationError(f"{self.level_name}: num_sets must be a power of two >= 1")
        if self.access_latency < 1:
            raise ValidationError(
                f"{self.level_name}.access_latency must be >= 1, got {self.access_latency}"
            )

    @property
    def num_sets(self) -> int:
        return self.size // (self.associativity * self.line_size)


@dataclass(frozen=True)
class HierarchyConfig:
    """The full three-level hierarchy backed by main memory."""

    l1i: CacheConfig
    l1d: CacheConfig
    l2: CacheConfig
    mem_latency: int

    def validate(self) -> None:
        for cfg, expect in ((self.l1i, "L1I"), (self.l1d, "L1D"), (self.l2, "L2")):
            cfg.validate()
            if cfg.level_name != expect:
                raise ValidationError(
                    f"hierarchy slot {expect} holds a {cfg.level_name!r} config"
                )
        if self.l2.line_size < max(self.l1i.line_size, self.l1d.line_size):
            raise ValidationError(
                "l2.line_size must be >= max(l1i.line_size, l1d.line_size)"
            )
        if self.mem_latency < 1:
            raise ValidationError(f"mem_latency must be >= 1, got {self.mem_latency}")

    def level(self, name: str) -> CacheConfig:
        return {"L1I": self.l1i, "L1D": self.l1d, "L2": self.l2}[name]


@dataclass
class LevelStats:
    """Demand-access counters for one cache level."""

    n_read: int = 0
    n_write: int = 0
    n_hit: int = 0
    n_miss: int = 0
    idle_cycles: int = 0


@dataclass
class SimStats:
    """Counters produced by one simulation run.

    ``dirty_evictions`` tracks write-back traffic per level (L1I entries are
    always zero); it backs the hierarchy flow identities in the test suite
    and is not part of the energy equations.
    """

    per_level: dict[str, LevelStats] = field(
        default_factory=lambda: {name: LevelStats() for name in LEVELS}
    )
    mem_reads: int = 0
    mem_writes: int = 0
    total_cycles: int = 0
    instructions_retired: int = 0
    dirty_evictions: dict[str, int] = field(
        default_factory=lambda: {name: 0 for name in LEVELS}
    )


# ---------------------------------------------------------------------------
# Fast simulator
# ---------------------------------------------------------------------------


class _Level:
    """One set-associative level; per-set dicts keyed by line id, insertion
    order oldest-first so the first key is the LRU victim."""

    __slots__ = ("name", "shift", "set_mask", "assoc", "sets", "stats", "dirty_evictions")

    def __init__(self, cfg: CacheConfig):
        self.name = cfg.level_name
        self.shift = cfg.line_size.bit_length() - 1
        self.set_mask = cfg.num_sets - 1
        self.assoc = cfg.associativity
        self.sets: list[dict[int, bool]] = [dict() for _ in range(cfg.num_sets)]
        self.stats = LevelStats()
        self.dirty_evictions = 0

    def line_of(self, addr: int) -> int:
        return addr >> self.shift

    def lookup_update(self, line: int, write: bool) -> bool:
        """Demand lookup; on hit refresh LRU position and possibly dirty."""
        s = self.sets[line & self.set_mask]
        if line in s:
            dirty = s.pop(line)
            s[line] = dirty or write
            return True
        return False

    def install(self, line: int, dirty: bool) -> tuple[int, bool] | None:
        """Insert ``line`` as MRU; returns the evicted (line, dirty) or None."""
        s = self.sets[line & self.set_mask]
        victim = None
        if len(s) >= self.assoc:
            vline = next(iter(s))
            victim = (vline, s.pop(vline))
        s[line] = dirty
        return victim


class Hierarchy:
    """Mutable cache-hierarchy state shared by the trace and pipeline
    simulators.  ``fetch`` and ``data`` return the depth of the deepest level
    reached: 1 = L1 hit, 2 = L2 hit, 3 = main memory."""

    def __init__(self, config: HierarchyConfig):
        config.validate()
        self.config = config
        self.l1i = _Level(config.l1i)
        self.l1d = _Level(config.l1d)
        self.l2 = _Level(config.l2)
        self.mem_reads = 0
        self.mem_writes = 0

    def fetch(self, pc: int) -> int:
        return self._access(self.l1i, pc, False)

    def data(self, addr: int, is_store: bool) -> int:
        return self._access(self.l1d, addr, is_store)

    def _access(self, l1: _Level, addr: int, is_store: bool) -> int:
        st = l1.stats
        if is_store:
            st.n_write += 1
        else:
            st.n_read += 1
        line = l1.line_of(addr)
        if l1.lookup_update(line, is_store):
            st.n_hit += 1
            return 1
        st.n_miss += 1
        depth = self._l2_fill(addr)
        victim = l1.install(line, is_store)
        if victim is not None and victim[1]:
            l1.dirty_evictions += 1
            self._l2_writeback(victim[0] << l1.shift)
        return depth

    def _l2_fill(self, addr: int) -> int:
        """Demand read of L2 on behalf of an L1 miss."""
        st = self.l2.stats
        st.n_read += 1
        line = self.l2.line_of(addr)
        if self.l2.lookup_update(line, False):
            st.n_hit += 1
            return 2
        st.n_miss += 1
        self.mem_reads += 1
        self._l2_install(line, False)
        return 3

    def _l2_writeback(self, addr: int) -> None:
        """Dirty L1D victim written back into L2 (write-allocate on miss)."""
        st = self.l2.stats
        st.n_write += 1
        line = self.l2.line_of(addr)
        if self.l2.lookup_update(line, True):
            st.n_hit += 1
            return
        st.n_miss += 1
        self.mem_reads += 1  # allocate: fetch the containing line first
        self._l2_install(line, True)

    def _l2_install(self, line: int, dirty: bool) -> None:
        victim = self.l2.install(line, dirty)
        if victim is not None and victim[1]:
            self.l2.dirty_evictions += 1
            self.mem_writes += 1

    def collect(self, total_cycles: int, instructions: int, busy: dict[str, int]) -> SimStats:
        per_level = {}
        dirty = {}
        for lvl in (self.l1i, self.l1d, self.l2):
            s = lvl.stats
            s.idle_cycles = total_cycles - busy[lvl.name]
            per_level[lvl.name] = s
            dirty[lvl.name] = lvl.dirty_evictions
        return SimStats(
            per_level=per_level,
            mem_reads=self.mem_reads,
            mem_writes=self.mem_writes,
            total_cycles=total_cycles,
            instructions_retired=instructions,
            dirty_evictions=dirty,
        )


def _require_single_thread(trace: Trace) -> None:
    for rec in trace.records:
        if rec.thread_id != 0:
            raise ContractError(
                f"trace {trace.name!r} contains thread_id {rec.thread_id}; "
                "single-thread simulation accepts thread 0 only"
            )


def simulate(hierarchy: HierarchyConfig, trace: Trace) -> SimStats:
    """Run ``trace`` through ``hierarchy`` under the serialized timing model."""
    _require_single_thread(trace)
    hier = Hierarchy(hierarchy)
    l1i_lat = hierarchy.l1i.access_latency
    l1d_lat = hierarchy.l1d.access_latency
    l2_lat = hierarchy.l2.access_latency
    mem_lat = hierarchy.mem_latency

    cycles = 0
    busy = {"L1I": 0, "L1D": 0, "L2": 0}
    fetch = hier.fetch
    data = hier.data
    for rec in trace.records:
        cycles += 1 + l1i_lat
        depth = fetch(rec.pc)
        if depth > 1:
            cycles += l2_lat
            busy["L2"] += l2_lat
            if depth == 3:
                cycles += mem_lat
        op = rec.mem_op
        if op is not None:
            cycles += l1d_lat
            depth = data(op.address, op.kind.value == "S")
            if depth > 1:
                cycles += l2_lat
                busy["L2"] += l2_lat
                if depth == 3:
                    cycles += mem_lat

    n = len(trace.records)
    busy["L1I"] = hier.l1i.stats.n_read * l1i_lat
    busy["L1D"] = (hier.l1d.stats.n_read + hier.l1d.stats.n_write) * l1d_lat
    return hier.collect(cycles, n, busy)


# ---------------------------------------------------------------------------
# Naive reference oracle
# ---------------------------------------------------------------------------
# Deliberately unoptimized and structurally independent of the fast path:
# plain per-set recency lists scanned linearly.  Exists solely to cross-check
# simulate().


class _RefLevel:
    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.num_sets = cfg.num_sets
        # Each set: list of [line, dirty] entries, most recently used first.
        self.entry_sets = [[] for _ in range(self.num_sets)]
        self.n_read = 0
        self.n_write = 0
        self.n_hit = 0
        self.n_miss = 0
        self.dirty_evictions = 0

    def line_of(self, addr):
        return addr // self.cfg.line_size

    def set_of(self, line):
        return line % self.num_sets

    def find(self, line):
        entries = self.entry_sets[self.set_of(line)]
        for i in range(len(entries)):
            if entries[i][0] == line:
                return i
        return -1


def reference_simulate(hierarchy: HierarchyConfig, trace: Trace) -> SimStats:
    """Brute-force re-implementation of :func:`simulate` used as a testing
    oracle; identical outputs by construction, restricted to traces of at
    most 10^5 records."""
    _require_single_thread(trace)
    if len(trace.records) > _REFERENCE_MAX_RECORDS:
        raise ContractError(
            f"reference_simulate accepts at most {_REFERENCE_MAX_RECORDS} records, "
            f"got {len(trace.records)}"
        )
    hierarchy.validate()
    l1i = _RefLevel(hierarchy.l1i)
    l1d = _RefLevel(hierarchy.l1d)
    l2 = _RefLevel(hierarchy.l2)
    mem_counts = {"reads": 0, "writes": 0}

    def l2_install(line, dirty):
        entries = l2.entry_sets[l2.set_of(line)]
        if len(entries) >= l2.cfg.associativity:
            victim = entries.pop(len(entries) - 1)
            if victim[1]:
                l2.dirty_evictions += 1
                mem_counts["writes"] += 1
        entries.insert(0, [line, dirty])

    def l2_access(addr, is_writeback):
        if is_writeback:
            l2.n_write += 1
        else:
            l2.n_read += 1
        line = l2.line_of(addr)
        pos = l2.find(line)
        if pos >= 0:
            l2.n_hit += 1
            entries = l2.entry_sets[l2.set_of(line)]
            entry = entries.pop(pos)
            if is_writeback:
                entry[1] = True
            entries.insert(0, entry)
            return 2
        l2.n_miss += 1
        mem_counts["reads"] += 1
        l2_install(line, is_writeback)
        return 3

    def l1_access(level, addr, is_store):
        if is_store:
            level.n_write += 1
        else:
            level.n_read += 1
        line = level.line_of(addr)
        pos = level.find(line)
        entries = level.entry_sets[level.set_of(line)]
        if pos >= 0:
            level.n_hit += 1
            entry = entries.pop(pos)
            if is_store:
                entry[1] = True
            entries.insert(0, entry)
            return 1
        level.n_miss += 1
        depth = l2_access(addr, False)
        if len(entries) >= level.cfg.associativity:
            victim = entries.pop(len(entries) - 1)
            if victim[1]:
                level.dirty_evictions += 1
                l2_access(victim[0] * level.cfg.line_size, True)
        entries.insert(0, [line, is_store])
        return depth

    cycles = 0
    for rec in trace.records:
        cycles += 1
        depth = l1_access(l1i, rec.pc, False)
        cycles += hierarchy.l1i.access_latency
        if depth >= 2:
            cycles += hierarchy.l2.access_latency
        if depth == 3:
            cycles += hierarchy.mem_latency
        if rec.mem_op is not None:
            is_store = rec.mem_op.kind.value == "S"
            depth = l1_access(l1d, rec.mem_op.address, is_store)
            cycles += hierarchy.l1d.access_latency
            if depth >= 2:
                cycles += hierarchy.l2.access_latency
            if depth == 3:
                cycles += hierarchy.mem_latency

    per_level = {}
    dirty = {}
    demand_l2 = l1i.n_miss + l1d.n_miss
    for name, lvl, busy in (
        ("L1I", l1i, (l1i.n_read + l1i.n_write) * hierarchy.l1i.access_latency),
        ("L1D", l1d, (l1d.n_read + l1d.n_write) * hierarchy.l1d.access_latency),
        ("L2", l2, demand_l2 * hierarchy.l2.access_latency),
    ):
        per_level[name] = LevelStats(
            n_read=lvl.n_read,
            n_write=lvl.n_write,
            n_hit=lvl.n_hit,
            n_miss=lvl.n_miss,
            idle_cycles=cycles - busy,
        )
        dirty[name] = lvl.dirty_evictions
    return SimStats(
        per_level=per_level,
        mem_reads=mem_counts["reads"],
        mem_writes=mem_counts["writes"],
        total_cycles=cycles,
        instructions_retired=len(trace.records),
        dirty_evictions=dirty,
    )
