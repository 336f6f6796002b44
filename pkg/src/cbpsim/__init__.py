"""Desk-scale multicore memory-system simulator with coordinated resource
management: shared-LLC way partitioning, memory bandwidth partitioning via
delay injection, and per-core prefetch throttling, individually or combined.
"""

from .config import CacheConfig, ConfigError, SimConfig, load_config
from .controllers import (AllocationError, CoordinatorInputs,
                          CoordinatorState, RmPolicy, allocate_bandwidth,
                          allocate_cache, allocate_cache_cppf,
                          coordinator_step, decide_prefetch, equal_bandwidth,
                          equal_ways, init_coordinator)
from .engine import EngineResult, SimEngine, SimulationError
from .harness import (RM_NAMES, DeskSimEnv, RmConfig, RunReport, antt,
                      classify_mix, emit_results, run_experiment, sweep,
                      weighted_speedup)
from .memsys import (HIT_L1, HIT_L2, HIT_LLC, HIT_MEM, LEVEL_NAMES,
                     AddressError, Machine, MemTiming, PartitionError,
                     PartitionState, QueueStats)
from .monitor import (IpcSample, QueueDelayTotals, UtilityMonitor, sample_ipc,
                      write_monitor_csv)
from .prefetch import PrefetchStats, StrideFlow, StridePrefetcher
from .traces import (AccessRecord, ClassifySettings, SensitivityResult,
                     SyntheticAppSpec, SyntheticStream, Trace, TraceError,
                     WorkloadMix, classify_sensitivity, generate_synthetic,
                     load_mix, load_trace, parse_synthetic_spec, write_trace)

__version__ = "0.1.0"
