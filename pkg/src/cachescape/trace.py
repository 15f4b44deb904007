"""Instruction/memory trace model, text format, and synthetic workload generator.

A trace is a flat, ordered sequence of per-instruction records.  Every record
carries a fetch address (pc); data-touching records additionally carry a load
or store plus a byte address.  Register counts ride along per record so the
pipeline model can exert register-file pressure without decoding a real ISA.

Text format (one record per line, ASCII, LF endings)::

    #cachescape-trace v1
    T<tid> <pc-hex> <L|S|-> [<addr-hex>] <nsrc> <ndst>

where ``-`` marks a record with no memory operand, and ``<addr-hex>`` is
present iff the operand is ``L`` or ``S``.  Addresses are 0x-prefixed
lowercase hex.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np

from .errors import TraceParseError, ValidationError

TRACE_HEADER = "#cachescape-trace v1"

_ADDR_MASK = (1 << 64) - 1


class MemKind(enum.Enum):
    LOAD = "L"
    STORE = "S"


@dataclass(frozen=True, slots=True)
class MemOp:
    """A single load or store to a 64-bit byte address."""

    kind: MemKind
    address: int


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """One instruction: fetch address, optional memory operand, register use."""

    thread_id: int
    pc: int
    mem_op: Optional[MemOp] = None
    num_src_regs: int = 0
    num_dst_regs: int = 0

    def __post_init__(self):
        if self.thread_id < 0:
            raise ValidationError(f"thread_id must be >= 0, got {self.thread_id}")
        if not 0 <= self.pc <= _ADDR_MASK:
            raise ValidationError(f"pc out of 64-bit range: {self.pc:#x}")
        if self.mem_op is not None and not 0 <= self.mem_op.address <= _ADDR_MASK:
            raise ValidationError(f"address out of 64-bit range: {self.mem_op.address:#x}")
        if not 0 <= self.num_src_regs <= 3:
            raise ValidationError(f"num_src_regs must be in [0, 3], got {self.num_src_regs}")
        if not 0 <= self.num_dst_regs <= 1:
            raise ValidationError(f"num_dst_regs must be in [0, 1], got {self.num_dst_regs}")


@dataclass(frozen=True, init=False)
class Trace:
    """An ordered instruction stream, possibly interleaving several threads."""

    name: str
    records: tuple[TraceRecord, ...]

    def __init__(self, name: str, records: Iterable[TraceRecord]):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "records", tuple(records))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def thread_ids(self) -> set[int]:
        return {r.thread_id for r in self.records}

    def split_threads(self) -> dict[int, "Trace"]:
        """Split an interleaved trace into per-thread traces, preserving each
        thread's own record order."""
        by_tid: dict[int, list[TraceRecord]] = {}
        for rec in self.records:
            by_tid.setdefault(rec.thread_id, []).append(rec)
        return {
            tid: Trace(f"{self.name}.t{tid}", recs) for tid, recs in sorted(by_tid.items())
        }


# ---------------------------------------------------------------------------
# Synthetic workload generation
# ---------------------------------------------------------------------------

# Internal granularity of the generator's locality model; cache modules own
# the mapping of byte addresses onto their configured line sizes.
_GEN_LINE = 64


@dataclass(frozen=True)
class WorkloadProfile:
    """Tunable description of a synthetic workload.

    ``locality_alpha`` skews the reuse-distance distribution of data accesses:
    1.0 spreads accesses uniformly over the working set, larger values
    concentrate reuse at small stack distances (more temporal locality).
    The memory-reference mix defaults are fixture choices, not measurements
    of any real benchmark suite.
    """

    instr_working_set: int
    data_working_set: int
    load_fraction: float
    store_fraction: float
    locality_alpha: float
    length: int
    seed: int
    instr_base: int = 0x400000
    data_base: int = 0x10000000

    def validate(self) -> None:
        if self.length < 1:
            raise ValidationError(f"length must be >= 1, got {self.length}")
        if self.instr_working_set < 4:
            raise ValidationError(
                f"instr_working_set must be >= 4 bytes, got {self.instr_working_set}"
            )
        if self.data_working_set < 1:
            raise ValidationError(
                f"data_working_set must be >= 1 byte, got {self.data_working_set}"
            )
        if not 0.0 <= self.load_fraction <= 1.0:
            raise ValidationError(f"load_fraction must be in [0, 1], got {self.load_fraction}")
        if not 0.0 <= self.store_fraction <= 1.0:
            raise ValidationError(f"store_fraction must be in [0, 1], got {self.store_fraction}")
        if self.load_fraction + self.store_fraction > 1.0:
            raise ValidationError(
                "load_fraction + store_fraction must be <= 1, got "
                f"{self.load_fraction + self.store_fraction}"
            )
        if self.locality_alpha <= 0.0:
            raise ValidationError(f"locality_alpha must be > 0, got {self.locality_alpha}")


def generate_trace(profile: WorkloadProfile, name: str = "synthetic") -> Trace:
    """Generate a deterministic single-thread trace from ``profile``.

    Data addresses follow an LRU-stack reuse model.  The first data accesses
    walk the working set once (a warm-up scan, all compulsory); afterwards
    each access draws a stack depth ``d = floor(W * u**alpha)`` with ``u``
    uniform in [0, 1) and ``W`` the number of 64-byte working-set lines, and
    reuses the line at that depth, so ``alpha`` directly shapes the
    reuse-distance distribution.  The pc walks the instruction region
    sequentially with occasional skewed backward jumps (loops).  Identical
    ``(profile, seed)`` always produce byte-identical traces.
    """
    profile.validate()
    rng = np.random.default_rng(profile.seed)

    n = profile.length
    data_lines = max(1, profile.data_working_set // _GEN_LINE)
    offset_span = min(_GEN_LINE, profile.data_working_set)
    instr_slots = max(1, profile.instr_working_set // 4)
    alpha = profile.locality_alpha

    # One pre-drawn uniform block per decision keeps generation fast and
    # makes the draw order independent of branch outcomes.
    u_kind = rng.random(n)
    u_depth = rng.random(n)
    u_offset = rng.integers(0, offset_span, size=n)
    u_jump = rng.random(n)
    u_jump_target = rng.random(n)
    u_src = rng.integers(0, 4, size=n)
    u_dst = rng.random(n)

    stack: list[int] = []  # data line offsets, most recently used first
    next_line = 0
    pc_slot = 0
    records = []
    load_cut = profile.load_fraction
    store_cut = profile.load_fraction + profile.store_fraction

    for i in range(n):
        pc = profile.instr_base + 4 * pc_slot
        if u_jump[i] < 0.04:
            # Backward-skewed jump target models loop behavior.
            pc_slot = int(instr_slots * (u_jump_target[i] ** 2.0))
        else:
            pc_slot = (pc_slot + 1) % instr_slots

        mem_op = None
        kind_draw = u_kind[i]
        if kind_draw < store_cut:
            if next_line < data_lines:
                line = next_line  # warm-up scan
                next_line += 1
            else:
                depth = min(int(data_lines * (u_depth[i] ** alpha)), len(stack) - 1)
                line = stack.pop(depth)
            stack.insert(0, line)
            address = profile.data_base + line * _GEN_LINE + int(u_offset[i])
            kind = MemKind.LOAD if kind_draw < load_cut else MemKind.STORE
            mem_op = MemOp(kind, address)

        records.append(
            TraceRecord(
                thread_id=0,
                pc=pc,
                mem_op=mem_op,
                num_src_regs=int(u_src[i]),
                # Loads produce a value; other instructions mostly do too.
                num_dst_regs=1 if (mem_op is not None and mem_op.kind is MemKind.LOAD) or u_dst[i] < 0.7 else 0,
            )
        )
    return Trace(name, records)


# ---------------------------------------------------------------------------
# Text format I/O
# ---------------------------------------------------------------------------


def write_trace(trace: Trace, sink: Union[str, os.PathLike, IO[str]]) -> None:
    """Write ``trace`` in the text format; the header line is always emitted."""
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii", newline="\n") as fh:
            _write(trace, fh)
    else:
        _write(trace, sink)


def _write(trace: Trace, fh: IO[str]) -> None:
    fh.write(TRACE_HEADER + "\n")
    for rec in trace.records:
        if rec.mem_op is None:
            mid = "-"
        else:
            mid = f"{rec.mem_op.kind.value} {rec.mem_op.address:#x}"
        fh.write(f"T{rec.thread_id} {rec.pc:#x} {mid} {rec.num_src_regs} {rec.num_dst_regs}\n")


def trace_to_text(trace: Trace) -> str:
    buf = io.StringIO()
    _write(trace, buf)
    return buf.getvalue()


def read_trace(source: Union[str, os.PathLike, IO[str]], name: Optional[str] = None) -> Trace:
    """Parse a trace from a path or text stream.

    Parsing is strict: any malformed line raises :class:`TraceParseError`
    with its 1-based line number.  ``name`` defaults to the file stem when
    reading from a path, else ``"trace"``.
    """
    if isinstance(source, (str, os.PathLike)):
        if name is None:
            name = os.path.splitext(os.path.basename(os.fspath(source)))[0]
        with open(source, "r", encoding="ascii", newline="") as fh:
            return _read(fh, name)
    return _read(source, name if name is not None else "trace")


def _read(fh: IO[str], name: str) -> Trace:
    records = []
    header_seen = False
    for line_no, raw in enumerate(fh, start=1):
        line = raw.rstrip("\n")
        if line_no == 1:
            if line != TRACE_HEADER:
                raise TraceParseError(line_no, f"expected header {TRACE_HEADER!r}")
            header_seen = True
            continue
        records.append(_parse_record(line, line_no))
    if not header_seen:
        raise TraceParseError(1, f"expected header {TRACE_HEADER!r} (empty input)")
    return Trace(name, records)


def _parse_record(line: str, line_no: int) -> TraceRecord:
    parts = line.split(" ")
    if len(parts) < 5:
        raise TraceParseError(line_no, f"expected 5 or 6 fields, got {len(parts)}")
    tid_tok, pc_tok, op_tok = parts[0], parts[1], parts[2]
    if not tid_tok.startswith("T") or not tid_tok[1:].isdigit():
        raise TraceParseError(line_no, f"bad thread field {tid_tok!r}")
    tid = int(tid_tok[1:])
    pc = _parse_hex(pc_tok, "pc", line_no)

    if op_tok == "-":
        mem_op = None
        rest = parts[3:]
        if len(parts) != 5:
            raise TraceParseError(line_no, f"expected 5 fields for '-' record, got {len(parts)}")
    elif op_tok in ("L", "S"):
        if len(parts) != 6:
            raise TraceParseError(line_no, f"expected 6 fields for {op_tok} record, got {len(parts)}")
        addr = _parse_hex(parts[3], "address", line_no)
        mem_op = MemOp(MemKind(op_tok), addr)
        rest = parts[4:]
    else:
        raise TraceParseError(line_no, f"bad mem-op field {op_tok!r} (expected L, S or -)")

    if not (rest[0].isdigit() and rest[1].isdigit()):
        raise TraceParseError(line_no, f"bad register counts {rest[0]!r} {rest[1]!r}")
    try:
        return TraceRecord(
            thread_id=tid,
            pc=pc,
            mem_op=mem_op,
            num_src_regs=int(rest[0]),
            num_dst_regs=int(rest[1]),
        )
    except ValidationError as exc:
        raise TraceParseError(line_no, str(exc)) from exc


def _parse_hex(tok: str, what: str, line_no: int) -> int:
    if not tok.startswith("0x"):
        raise TraceParseError(line_no, f"bad {what} {tok!r} (expected 0x-prefixed hex)")
    try:
        value = int(tok, 16)
    except ValueError:
        raise TraceParseError(line_no, f"bad {what} {tok!r} (not hex)") from None
    if value > _ADDR_MASK:
        raise TraceParseError(line_no, f"{what} {tok!r} exceeds 64 bits")
    return value
