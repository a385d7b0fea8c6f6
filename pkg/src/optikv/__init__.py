"""Quorum-replicated key-value store with runtime predicate monitoring."""

from .client import Consistency, ReplicationConfig, StoreClient, classify_consistency
from .harness import ExperimentConfig, compute_benefit, compute_overhead, execute, run
from .hvc import HybridVectorClock, HvcInterval, Order, compare, interval_relation
from .monitor import MonitorEngine, Violation
from .predicate import Clause, Connective, Kind, Literal, PredicateSpec, evaluate_cut, mutex_spec
from .versions import VersionedValue, VersionVector, resolve_versions

__version__ = "0.1.0"

__all__ = [
    "Clause",
    "Connective",
    "Consistency",
    "ExperimentConfig",
    "HvcInterval",
    "HybridVectorClock",
    "Kind",
    "Literal",
    "MonitorEngine",
    "Order",
    "PredicateSpec",
    "ReplicationConfig",
    "StoreClient",
    "VersionVector",
    "VersionedValue",
    "Violation",
    "classify_consistency",
    "compare",
    "compute_benefit",
    "compute_overhead",
    "evaluate_cut",
    "execute",
    "interval_relation",
    "mutex_spec",
    "resolve_versions",
    "run",
]
