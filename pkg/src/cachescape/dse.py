"""Design-space exploration: sweeps, HCP/LCE extraction, range overlap,
saving-based pruning, register-file sizing and thread scaling.

Conventions
-----------
* Performance penalty ``pp = perf(config)/perf(baseline) - 1`` with
  ``perf = 1/cycles``; negative means slower than the baseline.
* Energy saving ``es = 1 - E_t(config)/E_t(baseline)``; positive saves
  energy.  ``es_dynamic`` is the same ratio over the dynamic part only;
  pruning tests the dynamic saving while LCE selection minimizes total
  energy.
* Tie-breaking prefers smaller area everywhere: smaller l1+l2 byte total,
  then (for equal totals) the documented secondary keys.
* All ratios are exact rationals; averages over workloads are arithmetic
  means with equal weights.  A whole exploration is a pure function of
  (grid, workloads, table, core, baseline, tolerance) and is deterministic
  regardless of evaluation parallelism.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import IO, Iterable, Optional, Sequence, Union

from .cache import CacheConfig, HierarchyConfig
from .energy import EnergyReport, EnergyTable, total_energy
from .errors import ValidationError
from .smt import CoreConfig, SmtStats, run_single, run_smt
from .trace import Trace

DEFAULT_CACHE_BASELINE = (32 * 1024, 64 * 1024)
DEFAULT_REGFILE_BASELINE = 80
DEFAULT_PP_TOLERANCE = Fraction(3, 100)

Config = tuple[int, int]


@dataclass(frozen=True)
class SweepGrid:
    """Cache-size sweep: the cross product of L1 and L2 sizes with fixed
    associativity and line size per level.  Latencies come from the energy
    table rows, so larger caches can be modeled slower."""

    l1_sizes: tuple[int, ...]
    l2_sizes: tuple[int, ...]
    l1_assoc: int = 2
    l1_line: int = 64
    l2_assoc: int = 4
    l2_line: int = 64

    def validate(self) -> None:
        if not self.l1_sizes or not self.l2_sizes:
            raise ValidationError("sweep grid must have at least one size per level")
        if len(set(self.l1_sizes)) != len(self.l1_sizes) or len(set(self.l2_sizes)) != len(
            self.l2_sizes
        ):
            raise ValidationError("sweep grid sizes must be unique per level")

    def configs(self) -> list[Config]:
        """All (l1_size, l2_size) pairs, in deterministic sorted order."""
        return [(a, b) for a in sorted(self.l1_sizes) for b in sorted(self.l2_sizes)]

    def hierarchy_for(self, table: EnergyTable, config: Config) -> HierarchyConfig:
        l1, l2 = config
        lat_i = table.lookup("L1I", l1, self.l1_assoc, self.l1_line).access_latency
        lat_d = table.lookup("L1D", l1, self.l1_assoc, self.l1_line).access_latency
        lat_2 = table.lookup("L2", l2, self.l2_assoc, self.l2_line).access_latency
        return HierarchyConfig(
            l1i=CacheConfig("L1I", l1, self.l1_line, self.l1_assoc, lat_i),
            l1d=CacheConfig("L1D", l1, self.l1_line, self.l1_assoc, lat_d),
            l2=CacheConfig("L2", l2, self.l2_line, self.l2_assoc, lat_2),
            mem_latency=table.mem_params.access_latency,
        )


@dataclass(frozen=True)
class DsePoint:
    """One evaluated configuration: cycles, energy, and baseline-relative
    performance penalty / energy saving."""

    config: Union[Config, int]
    cycles: int
    energy: EnergyReport
    pp: Fraction
    es: Fraction
    es_dynamic: Fraction


@dataclass(frozen=True)
class AveragedPoint:
    """Equal-weight mean of per-workload metrics for one configuration."""

    config: Union[Config, int]
    mean_cycles: Fraction
    pp: Fraction
    es: Fraction
    es_dynamic: Fraction


@dataclass(frozen=True)
class WorkloadSummary:
    hcp: Config
    lce: Config
    range_l1: tuple[int, int]
    range_l2: tuple[int, int]


@dataclass(frozen=True)
class DseReport:
    per_workload: dict[str, WorkloadSummary]
    overlap_candidates: frozenset[Config]
    pruned: frozenset[Config]
    chosen: Config
    baseline: Config
    pp_tolerance: Fraction


def set_baseline(config, grid: Optional[SweepGrid] = None, sizes: Optional[Sequence[int]] = None):
    """Validate a baseline choice against the swept space and return it.

    Sweep functions compute every pp/es against the baseline passed to them;
    this pins the choice once and rejects configurations outside the grid.
    """
    if isinstance(config, tuple):
        if grid is None or config not in grid.configs():
            raise ValidationError(f"baseline {config} is outside the swept grid")
    else:
        if sizes is None or config not in tuple(sizes):
            raise ValidationError(f"baseline register count {config} is outside the swept sizes")
    return config


def _area_key(config) -> tuple:
    if isinstance(config, tuple):
        return (config[0] + config[1], config[0])
    return (config, config)


def _ratio(value: Fraction, base: Fraction) -> Fraction:
    if base == 0:
        if value == 0:
            return Fraction(0)
        raise ValidationError("baseline energy is zero; savings are undefined")
    return 1 - Fraction(value, base)


def _tolerance(pp_tolerance) -> Fraction:
    # Exact tolerance: floats go through their decimal repr so 0.03 means 3/100.
    if isinstance(pp_tolerance, float):
        return Fraction(str(pp_tolerance))
    return Fraction(pp_tolerance)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

_WORKER_CTX: dict = {}


def _init_cache_worker(grid, table, core, workloads):
    _WORKER_CTX["args"] = (grid, table, core, workloads)


def _eval_cache_config(config):
    grid, table, core, workloads = _WORKER_CTX["args"]
    hierarchy = grid.hierarchy_for(table, config)
    return [run_single(core, hierarchy, w) for w in workloads]


def _init_regfile_worker(core, hierarchy, workloads):
    _WORKER_CTX["args"] = (core, hierarchy, workloads)


def _eval_regfile_size(size):
    core, hierarchy, workloads = _WORKER_CTX["args"]
    sized = CoreConfig(
        fetch_width=core.fetch_width,
        regfile_size=size,
        commit_latency=core.commit_latency,
        num_threads=1,
    )
    return [run_single(sized, hierarchy, w) for w in workloads]


def _run_tasks(tasks, eval_fn, init_fn, init_args, jobs):
    if jobs <= 1:
        _WORKER_CTX["args"] = init_args
        return [eval_fn(t) for t in tasks]
    with ProcessPoolExecutor(
        max_workers=jobs, initializer=init_fn, initargs=init_args
    ) as pool:
        return list(pool.map(eval_fn, tasks))


def _validate_workloads(workloads: Sequence[Trace]) -> None:
    if not workloads:
        raise ValidationError("at least one workload trace is required")
    names = [w.name for w in workloads]
    if len(set(names)) != len(names):
        raise ValidationError(f"workload names must be unique, got {names}")
    for w in workloads:
        if len(w) == 0:
            raise ValidationError(f"workload {w.name!r} is empty")


def sweep_cache(
    grid: SweepGrid,
    workloads: Sequence[Trace],
    table: EnergyTable,
    core: CoreConfig,
    baseline: Config = DEFAULT_CACHE_BASELINE,
    jobs: int = 1,
) -> dict[tuple[str, Config], DsePoint]:
    """Evaluate every workload on every grid configuration.

    Returns a map ``(workload name, config) -> DsePoint`` with pp/es relative
    to ``baseline`` for the same workload.  Evaluations are independent; the
    result does not depend on ``jobs``.
    """
    grid.validate()
    _validate_workloads(workloads)
    set_baseline(baseline, grid=grid)
    configs = grid.configs()
    runs = _run_tasks(
        configs, _eval_cache_config, _init_cache_worker, (grid, table, core, workloads), jobs
    )

    raw: dict[tuple[str, Config], tuple[int, EnergyReport]] = {}
    for config, per_workload in zip(configs, runs):
        hierarchy = grid.hierarchy_for(table, config)
        for w, stats in zip(workloads, per_workload):
            report = total_energy(stats.underlying, table, hierarchy)
            raw[(w.name, config)] = (stats.total_cycles, report)

    points: dict[tuple[str, Config], DsePoint] = {}
    for w in workloads:
        base_cycles, base_report = raw[(w.name, baseline)]
        for config in configs:
            cycles, report = raw[(w.name, config)]
            points[(w.name, config)] = DsePoint(
                config=config,
                cycles=cycles,
                energy=report,
                pp=Fraction(base_cycles, cycles) - 1,
                es=_ratio(report.e_t, base_report.e_t),
                es_dynamic=_ratio(report.e_td, base_report.e_td),
            )
    return points


def workload_points(
    points: dict[tuple[str, Config], DsePoint], workload: str
) -> dict[Config, DsePoint]:
    out = {cfg: p for (w, cfg), p in points.items() if w == workload}
    if not out:
        raise ValidationError(f"no points for workload {workload!r}")
    return out


def find_hcp(points: dict[Config, DsePoint]) -> Config:
    """Config with the fewest cycles; ties broken by smaller l1+l2, then l1."""
    if not points:
        raise ValidationError("find_hcp requires a non-empty point set")
    return min(points, key=lambda c: (points[c].cycles, _area_key(c)))


def find_lce(points: dict[Config, DsePoint]) -> Config:
    """Config with the lowest total energy; same tie-breaking as HCP."""
    if not points:
        raise ValidationError("find_lce requires a non-empty point set")
    return min(points, key=lambda c: (points[c].energy.e_t, _area_key(c)))


def summarize_workload(points: dict[Config, DsePoint]) -> WorkloadSummary:
    hcp = find_hcp(points)
    lce = find_lce(points)
    return WorkloadSummary(
        hcp=hcp,
        lce=lce,
        range_l1=(min(lce[0], hcp[0]), max(lce[0], hcp[0])),
        range_l2=(min(lce[1], hcp[1]), max(lce[1], hcp[1])),
    )


def overlap_ranges(
    summaries: dict[str, WorkloadSummary], grid: SweepGrid
) -> frozenset[Config]:
    """Keep, per level, the grid sizes covered by the most workload ranges,
    then form all (kept L1) x (kept L2) configurations."""
    if not summaries:
        raise ValidationError("overlap_ranges requires at least one workload summary")

    def kept(sizes: Iterable[int], ranges: list[tuple[int, int]]) -> list[int]:
        coverage = {s: sum(lo <= s <= hi for lo, hi in ranges) for s in sizes}
        best = max(coverage.values())
        return [s for s, c in coverage.items() if c == best]

    kept_l1 = kept(sorted(grid.l1_sizes), [s.range_l1 for s in summaries.values()])
    kept_l2 = kept(sorted(grid.l2_sizes), [s.range_l2 for s in summaries.values()])
    return frozenset((a, b) for a in kept_l1 for b in kept_l2)


def average_points(
    points: dict[tuple[str, Config], DsePoint]
) -> dict[Config, AveragedPoint]:
    """Arithmetic mean of pp/es/es_dynamic per config across workloads."""
    by_config: dict[Config, list[DsePoint]] = {}
    for (_, cfg), p in points.items():
        by_config.setdefault(cfg, []).append(p)
    out = {}
    for cfg, plist in sorted(by_config.items(), key=lambda kv: _area_key(kv[0])):
        n = len(plist)
        out[cfg] = AveragedPoint(
            config=cfg,
            mean_cycles=Fraction(sum(p.cycles for p in plist), n),
            pp=sum((p.pp for p in plist), Fraction(0)) / n,
            es=sum((p.es for p in plist), Fraction(0)) / n,
            es_dynamic=sum((p.es_dynamic for p in plist), Fraction(0)) / n,
        )
    return out


def prune_by_saving(
    candidates: frozenset[Config],
    averaged: dict[Config, AveragedPoint],
    pp_tolerance=DEFAULT_PP_TOLERANCE,
    baseline: Config = DEFAULT_CACHE_BASELINE,
) -> frozenset[Config]:
    """Keep candidates with positive average dynamic-energy saving and an
    average penalty no worse than the tolerance; the baseline always stays."""
    tol = _tolerance(pp_tolerance)
    survivors = set()
    for cfg in candidates:
        if cfg == baseline:
            survivors.add(cfg)
            continue
        point = averaged.get(cfg)
        if point is None:
            raise ValidationError(f"candidate {cfg} has no averaged point")
        if point.es_dynamic > 0 and point.pp >= -tol:
            survivors.add(cfg)
    return frozenset(survivors)


def choose_config(
    pruned: frozenset[Config], averaged: dict[Config, AveragedPoint]
) -> Config:
    """Smallest surviving config by l1+l2 bytes; ties by larger energy
    saving, then smaller l1."""
    if not pruned:
        raise ValidationError(
            "no configurations survived pruning; relax pp_tolerance and retry"
        )
    return min(
        pruned,
        key=lambda c: (c[0] + c[1], -averaged[c].es, c[0]),
    )


def run_cache_dse(
    grid: SweepGrid,
    workloads: Sequence[Trace],
    table: EnergyTable,
    core: CoreConfig,
    baseline: Config = DEFAULT_CACHE_BASELINE,
    pp_tolerance=DEFAULT_PP_TOLERANCE,
    jobs: int = 1,
):
    """Full pipeline: sweep, per-workload HCP/LCE, overlap, prune, choose.

    Returns ``(report, points, averaged)``.
    """
    points = sweep_cache(grid, workloads, table, core, baseline=baseline, jobs=jobs)
    summaries = {
        w.name: summarize_workload(workload_points(points, w.name)) for w in workloads
    }
    candidates = overlap_ranges(summaries, grid)
    averaged = average_points(points)
    survivors = prune_by_saving(
        candidates, averaged, pp_tolerance=pp_tolerance, baseline=baseline
    )
    chosen = choose_config(survivors, averaged)
    report = DseReport(
        per_workload=summaries,
        overlap_candidates=candidates,
        pruned=survivors,
        chosen=chosen,
        baseline=baseline,
        pp_tolerance=_tolerance(pp_tolerance),
    )
    return report, points, averaged


# ---------------------------------------------------------------------------
# Register-file exploration
# ---------------------------------------------------------------------------


def sweep_regfile(
    sizes: Sequence[int],
    core: CoreConfig,
    hierarchy: HierarchyConfig,
    workloads: Sequence[Trace],
    table: EnergyTable,
    baseline_regs: int = DEFAULT_REGFILE_BASELINE,
    jobs: int = 1,
) -> dict[int, DsePoint]:
    """Run every workload at each register-file size on the chosen hierarchy.

    Cycles and energy are summed over workloads; pp/es are equal-weight means
    of the per-workload ratios against the same workload at ``baseline_regs``.
    """
    sizes = tuple(sorted(set(sizes)))
    if not sizes:
        raise ValidationError("sweep_regfile requires at least one size")
    _validate_workloads(workloads)
    set_baseline(baseline_regs, sizes=sizes)

    runs = _run_tasks(
        sizes, _eval_regfile_size, _init_regfile_worker, (core, hierarchy, workloads), jobs
    )
    raw: dict[int, list[tuple[int, EnergyReport]]] = {}
    for size, stats_list in zip(sizes, runs):
        raw[size] = [
            (s.total_cycles, total_energy(s.underlying, table, hierarchy)) for s in stats_list
        ]

    base = raw[baseline_regs]
    points = {}
    n = len(workloads)
    for size in sizes:
        pps = []
        ess = []
        ess_dyn = []
        for (cycles, report), (b_cycles, b_report) in zip(raw[size], base):
            pps.append(Fraction(b_cycles, cycles) - 1)
            ess.append(_ratio(report.e_t, b_report.e_t))
            ess_dyn.append(_ratio(report.e_td, b_report.e_td))
        reports = [r for _, r in raw[size]]
        points[size] = DsePoint(
            config=size,
            cycles=sum(c for c, _ in raw[size]),
            energy=_sum_reports(reports),
            pp=sum(pps, Fraction(0)) / n,
            es=sum(ess, Fraction(0)) / n,
            es_dynamic=sum(ess_dyn, Fraction(0)) / n,
        )
    return points


def _sum_reports(reports: list[EnergyReport]) -> EnergyReport:
    levels = reports[0].e_s_per_level.keys()
    return EnergyReport(
        e_dr=sum((r.e_dr for r in reports), Fraction(0)),
        e_dw=sum((r.e_dw for r in reports), Fraction(0)),
        e_td=sum((r.e_td for r in reports), Fraction(0)),
        e_s_per_level={
            name: sum((r.e_s_per_level[name] for r in reports), Fraction(0)) for name in levels
        },
        e_ts=sum((r.e_ts for r in reports), Fraction(0)),
        e_t=sum((r.e_t for r in reports), Fraction(0)),
    )


def select_regfile(points: dict[int, DsePoint], objective: str) -> int:
    """Pick a register-file size.

    ``"performance"``: the smallest size reaching the global-minimum cycle
    count (first saturation point).  ``"energy"``: the size with maximal
    energy saving, ties to the smaller size.
    """
    if not points:
        raise ValidationError("select_regfile requires a non-empty sweep")
    sizes = sorted(points)
    if objective == "performance":
        best = min(points[s].cycles for s in sizes)
        return min(s for s in sizes if points[s].cycles == best)
    if objective == "energy":
        best = max(points[s].es for s in sizes)
        return min(s for s in sizes if points[s].es == best)
    raise ValidationError(f"unknown objective {objective!r}")


# ---------------------------------------------------------------------------
# Thread scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingPoint:
    threads: int
    speedup: Fraction
    per_trace: dict[str, Fraction]


@dataclass(frozen=True)
class ThreadScalingResult:
    points: dict[int, ScalingPoint]
    max_supported_threads: int


def thread_scaling(
    core: CoreConfig,
    hierarchy: HierarchyConfig,
    regfile_size: int,
    traces: Sequence[Trace],
    max_threads: int,
) -> ThreadScalingResult:
    """Compare n-thread SMT runs against the same traces run one by one.

    ``speedup(n)`` is (sum of the n single-thread cycle counts) / (cycles of
    the combined n-thread run); per-trace entries compare each trace's solo
    run with its completion time inside the SMT run.  The largest n with
    speedup above 1 is reported as the maximum supported thread count
    (1 when no multithreaded run gains).
    """
    if max_threads < 1:
        raise ValidationError(f"max_threads must be >= 1, got {max_threads}")
    if len(traces) < max_threads:
        raise ValidationError(
            f"need at least {max_threads} traces for {max_threads} threads, got {len(traces)}"
        )
    single_core = CoreConfig(
        fetch_width=core.fetch_width,
        regfile_size=regfile_size,
        commit_latency=core.commit_latency,
        num_threads=1,
    )
    singles = [run_single(single_core, hierarchy, t).total_cycles for t in traces[:max_threads]]

    points = {}
    best = 1
    for n in range(1, max_threads + 1):
        smt_core = CoreConfig(
            fetch_width=core.fetch_width,
            regfile_size=regfile_size,
            commit_latency=core.commit_latency,
            num_threads=n,
        )
        smt = run_smt(smt_core, hierarchy, list(traces[:n]))
        speedup = Fraction(sum(singles[:n]), smt.total_cycles)
        per_trace = {
            traces[k].name: Fraction(singles[k], smt.per_thread[k].cycles_active)
            for k in range(n)
        }
        points[n] = ScalingPoint(threads=n, speedup=speedup, per_trace=per_trace)
        if n > 1 and speedup > 1:
            best = n
    return ThreadScalingResult(points=points, max_supported_threads=best)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _cfg_json(config) -> Union[list, int]:
    return list(config) if isinstance(config, tuple) else config


def dse_report_to_dict(report: DseReport, averaged: dict[Config, AveragedPoint]) -> dict:
    candidates = sorted(report.overlap_candidates)
    survivors = sorted(report.pruned)
    return {
        "baseline": _cfg_json(report.baseline),
        "pp_tolerance": float(report.pp_tolerance),
        "per_workload": {
            name: {
                "hcp": _cfg_json(s.hcp),
                "lce": _cfg_json(s.lce),
                "range_l1": list(s.range_l1),
                "range_l2": list(s.range_l2),
            }
            for name, s in sorted(report.per_workload.items())
        },
        "overlap_candidates": [_cfg_json(c) for c in candidates],
        "pruned": [_cfg_json(c) for c in survivors],
        "chosen": _cfg_json(report.chosen),
        "candidate_count": len(candidates),
        "survivor_count": len(survivors),
        "reduction_percent": reduction_percent(len(candidates), len(survivors)),
        "averaged": [
            {
                "config": _cfg_json(cfg),
                "mean_cycles": float(p.mean_cycles),
                "pp": float(p.pp),
                "es": float(p.es),
                "es_dynamic": float(p.es_dynamic),
            }
            for cfg, p in sorted(averaged.items(), key=lambda kv: _area_key(kv[0]))
        ],
    }


def reduction_percent(candidates: int, survivors: int) -> int:
    if candidates == 0:
        return 0
    return round(100 * (candidates - survivors) / candidates)


def write_dse_json(report: DseReport, averaged, sink: Union[str, os.PathLike, IO[str]]) -> None:
    payload = dse_report_to_dict(report, averaged)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        json.dump(payload, sink, indent=2, sort_keys=True)
        sink.write("\n")


def write_points_csv(
    points: dict[tuple[str, Config], DsePoint], sink: Union[str, os.PathLike, IO[str]]
) -> None:
    """Flat per-point table: workload, l1, l2 (or regfile), cycles, e_t,
    e_td, pp, es."""

    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["workload", "l1", "l2", "regfile", "cycles", "e_t", "e_td", "pp", "es"])
        for (wname, cfg), p in sorted(points.items(), key=lambda kv: (kv[0][0], _area_key(kv[0][1]))):
            if isinstance(cfg, tuple):
                l1, l2, rf = cfg[0], cfg[1], ""
            else:
                l1, l2, rf = "", "", cfg
            writer.writerow(
                [wname, l1, l2, rf, p.cycles, float(p.energy.e_t), float(p.energy.e_td), float(p.pp), float(p.es)]
            )

    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii", newline="") as fh:
            emit(fh)
    else:
        emit(sink)
