"""cachescape: trace-driven cache hierarchy simulation and
performance-per-energy design space exploration."""

from .cache import (
    CacheConfig,
    HierarchyConfig,
    LevelStats,
    SimStats,
    reference_simulate,
    simulate,
)
from .dse import (
    AveragedPoint,
    DsePoint,
    DseReport,
    ScalingPoint,
    SweepGrid,
    ThreadScalingResult,
    WorkloadSummary,
    average_points,
    choose_config,
    find_hcp,
    find_lce,
    overlap_ranges,
    prune_by_saving,
    run_cache_dse,
    select_regfile,
    set_baseline,
    sweep_cache,
    sweep_regfile,
    thread_scaling,
)
from .energy import (
    EnergyParams,
    EnergyReport,
    EnergyTable,
    dynamic_read_energy,
    dynamic_write_energy,
    load_energy_table,
    save_energy_table,
    static_energy_level,
    total_energy,
)
from .errors import (
    CachescapeError,
    ContractError,
    EnergyLookupError,
    TraceParseError,
    ValidationError,
)
from .smt import CoreConfig, SmtStats, ThreadStats, offset_trace, run_single, run_smt
from .trace import (
    MemKind,
    MemOp,
    Trace,
    TraceRecord,
    WorkloadProfile,
    generate_trace,
    read_trace,
    write_trace,
)

__version__ = "0.1.0"
