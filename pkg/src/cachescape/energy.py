"""Cache energy model over per-configuration parameters from a CACTI-style table.

Total energy decomposes as ``e_t = e_td + e_ts``: the dynamic part sums
per-access read/write energies over every level including main memory, the
static part sums, per cache level,

    (n_miss + idle_cycles) * e_static_per_access * miss_penalty_cycles

where the miss penalty of a level is the access latency of the next level
down (L2 latency for both L1s, memory latency for L2).  Main memory
contributes dynamic energy only.

The static formula multiplies a count, an energy per access and a cycle
count, which reads as energy only if "static energy per access" is taken as
a per-cycle leakage quantity; it is implemented verbatim in that reading.

All quantities are exact rationals (``fractions.Fraction``), so the
decomposition identities hold with zero tolerance.  Units are abstract
"energy units"; a table may document a physical unit without affecting the
math.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Union

from .cache import LEVELS, HierarchyConfig, LevelStats, SimStats
from .errors import EnergyLookupError, ValidationError

MEM_LEVEL = "MEM"

Energy = Fraction

ENERGY_CSV_HEADER = (
    "level,size_bytes,assoc,line_bytes,e_dyn_read,e_dyn_write,e_static_per_access,latency_cycles"
)


def _as_fraction(value, what: str) -> Fraction:
    try:
        f = Fraction(value)
    except (ValueError, TypeError, ZeroDivisionError):
        raise ValidationError(f"{what}: not a number: {value!r}") from None
    if f < 0:
        raise ValidationError(f"{what}: energy must be >= 0, got {value}")
    return f


@dataclass(frozen=True)
class EnergyParams:
    """Per-access energies and access latency of one configuration."""

    e_dyn_read: Fraction
    e_dyn_write: Fraction
    e_static_per_access: Fraction
    access_latency: int

    def validate(self, what: str = "params") -> None:
        for fname in ("e_dyn_read", "e_dyn_write", "e_static_per_access"):
            if getattr(self, fname) < 0:
                raise ValidationError(f"{what}.{fname} must be >= 0")
        if self.access_latency < 1:
            raise ValidationError(f"{what}.access_latency must be >= 1")


TableKey = tuple[str, int, int, int]  # (level_name, size, associativity, line_size)


@dataclass(frozen=True)
class EnergyTable:
    """Energy parameters per (level, size, assoc, line) plus one memory row.

    Lookup of a missing row is an error, never a default.  On construction
    the table checks that, within each (level, assoc, line) family,
    ``e_dyn_read`` and ``e_static_per_access`` are non-decreasing in size.
    """

    rows: dict[TableKey, EnergyParams]
    mem_params: EnergyParams
    unit: str = "energy units (non-physical)"

    def __post_init__(self):
        for key, params in self.rows.items():
            params.validate(what=str(key))
        self.mem_params.validate(what="mem")
        self._check_size_monotone()

    def _check_size_monotone(self) -> None:
        families: dict[tuple[str, int, int], list[tuple[int, EnergyParams]]] = {}
        for (level, size, assoc, line), params in self.rows.items():
            families.setdefault((level, assoc, line), []).append((size, params))
        for (level, assoc, line), rows in families.items():
            rows.sort()
            for (s_lo, p_lo), (s_hi, p_hi) in zip(rows, rows[1:]):
                if p_hi.e_dyn_read < p_lo.e_dyn_read:
                    raise ValidationError(
                        f"{level} assoc={assoc} line={line}: e_dyn_read decreases "
                        f"from size {s_lo} to {s_hi}"
                    )
                if p_hi.e_static_per_access < p_lo.e_static_per_access:
                    raise ValidationError(
                        f"{level} assoc={assoc} line={line}: e_static_per_access "
                        f"decreases from size {s_lo} to {s_hi}"
                    )

    def lookup(self, level_name: str, size: int, assoc: int, line_size: int) -> EnergyParams:
        key = (level_name, size, assoc, line_size)
        try:
            return self.rows[key]
        except KeyError:
            raise EnergyLookupError(key) from None

    def params_for(self, hierarchy: HierarchyConfig, level_name: str) -> EnergyParams:
        cfg = hierarchy.level(level_name)
        return self.lookup(level_name, cfg.size, cfg.associativity, cfg.line_size)


@dataclass(frozen=True)
class EnergyReport:
    """Full decomposition of one run's energy."""

    e_dr: Fraction
    e_dw: Fraction
    e_td: Fraction
    e_s_per_level: dict[str, Fraction]
    e_ts: Fraction
    e_t: Fraction


def dynamic_read_energy(stats: SimStats, table: EnergyTable, h: HierarchyConfig) -> Fraction:
    """Sum of reads-per-level times per-read energy, main memory included.

    The single level-1 read term of the source model is split across L1I and
    L1D: instruction fetches are reads of L1I and would otherwise vanish
    from a dominant term.
    """
    total = Fraction(0)
    for name in LEVELS:
        total += stats.per_level[name].n_read * table.params_for(h, name).e_dyn_read
    total += stats.mem_reads * table.mem_params.e_dyn_read
    return total


def dynamic_write_energy(stats: SimStats, table: EnergyTable, h: HierarchyConfig) -> Fraction:
    """Mirror of :func:`dynamic_read_energy` over write counts (L1I writes
    are zero by construction; instructions are never stored)."""
    total = Fraction(0)
    for name in LEVELS:
        total += stats.per_level[name].n_write * table.params_for(h, name).e_dyn_write
    total += stats.mem_writes * table.mem_params.e_dyn_write
    return total


def static_energy_level(
    level_stats: LevelStats, params: EnergyParams, miss_penalty_cycles: int
) -> Fraction:
    """(n_miss + idle_cycles) * e_static_per_access * miss_penalty_cycles,
    with the miss penalty being the access latency of the next level down."""
    return (
        (level_stats.n_miss + level_stats.idle_cycles)
        * params.e_static_per_access
        * miss_penalty_cycles
    )


def total_energy(stats: SimStats, table: EnergyTable, h: HierarchyConfig) -> EnergyReport:
    """Assemble the full report; ``e_ts`` sums the three cache levels only
    (main memory has no static term)."""
    e_dr = dynamic_read_energy(stats, table, h)
    e_dw = dynamic_write_energy(stats, table, h)
    e_td = e_dr + e_dw
    penalties = {
        "L1I": h.l2.access_latency,
        "L1D": h.l2.access_latency,
        "L2": h.mem_latency,
    }
    e_s = {
        name: static_energy_level(stats.per_level[name], table.params_for(h, name), penalties[name])
        for name in LEVELS
    }
    e_ts = e_s["L1I"] + e_s["L1D"] + e_s["L2"]
    return EnergyReport(
        e_dr=e_dr, e_dw=e_dw, e_td=e_td, e_s_per_level=e_s, e_ts=e_ts, e_t=e_td + e_ts
    )


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------


def load_energy_table(source: Union[str, os.PathLike, IO[str]]) -> EnergyTable:
    """Strictly parse the energy-table CSV; duplicate keys are errors."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="ascii", newline="") as fh:
            return _load(fh)
    return _load(source)


def _load(fh: IO[str]) -> EnergyTable:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("energy table: empty file") from None
    if [h.strip() for h in header] != ENERGY_CSV_HEADER.split(","):
        raise ValidationError(
            f"energy table: bad header {','.join(header)!r}, expected {ENERGY_CSV_HEADER!r}"
        )
    rows: dict[TableKey, EnergyParams] = {}
    mem_params = None
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 8:
            raise ValidationError(f"energy table line {line_no}: expected 8 fields, got {len(row)}")
        level = row[0].strip()
        try:
            size, assoc, line = int(row[1]), int(row[2]), int(row[3])
            latency = int(row[7])
        except ValueError:
            raise ValidationError(f"energy table line {line_no}: bad integer field") from None
        params = EnergyParams(
            e_dyn_read=_as_fraction(row[4], f"line {line_no} e_dyn_read"),
            e_dyn_write=_as_fraction(row[5], f"line {line_no} e_dyn_write"),
            e_static_per_access=_as_fraction(row[6], f"line {line_no} e_static_per_access"),
            access_latency=latency,
        )
        if level == MEM_LEVEL:
            if (size, assoc, line) != (0, 0, 0):
                raise ValidationError(
                    f"energy table line {line_no}: MEM row must carry size/assoc/line = 0"
                )
            if mem_params is not None:
                raise ValidationError(f"energy table line {line_no}: duplicate MEM row")
            mem_params = params
            continue
        if level not in LEVELS:
            raise ValidationError(f"energy table line {line_no}: unknown level {level!r}")
        key = (level, size, assoc, line)
        if key in rows:
            raise ValidationError(f"energy table line {line_no}: duplicate key {key}")
        rows[key] = params
    if mem_params is None:
        raise ValidationError("energy table: missing MEM row")
    return EnergyTable(rows=rows, mem_params=mem_params)


def save_energy_table(table: EnergyTable, sink: Union[str, os.PathLike, IO[str]]) -> None:
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii", newline="") as fh:
            _save(table, fh)
    else:
        _save(table, fh=sink)


def _fmt(f: Fraction) -> str:
    if f.denominator == 1:
        return str(f.numerator)
    as_float = float(f)
    if Fraction(str(as_float)) == f:
        return str(as_float)
    return f"{f.numerator}/{f.denominator}"


def _save(table: EnergyTable, fh: IO[str]) -> None:
    fh.write(ENERGY_CSV_HEADER + "\n")
    for key in sorted(table.rows):
        level, size, assoc, line = key
        p = table.rows[key]
        fh.write(
            f"{level},{size},{assoc},{line},{_fmt(p.e_dyn_read)},{_fmt(p.e_dyn_write)},"
            f"{_fmt(p.e_static_per_access)},{p.access_latency}\n"
        )
    m = table.mem_params
    fh.write(
        f"{MEM_LEVEL},0,0,0,{_fmt(m.e_dyn_read)},{_fmt(m.e_dyn_write)},"
        f"{_fmt(m.e_static_per_access)},{m.access_latency}\n"
    )


def energy_table_to_text(table: EnergyTable) -> str:
    buf = io.StringIO()
    _save(table, buf)
    return buf.getvalue()
