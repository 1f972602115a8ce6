"""Identification, verification and run-time monitoring of process constraints."""

from .base import (
    Conflict,
    ConstraintBase,
    MetaViolation,
    check_consistency,
    evaluate_meta,
    filter_enabled,
    load_base,
    save_base,
)
from .constraints import (
    Behavior,
    Binding,
    Condition,
    Context,
    Linkage,
    MetaConstraint,
    OpaqueRule,
    ProcessConstraint,
    Relation,
    StructuralPattern,
    TriggerPosition,
)
from .dsl import parse_constraint, parse_document, serialize_constraint, serialize_document
from .errors import (
    BindError,
    IupcError,
    ModelError,
    NotIntervalDecidable,
    OrderError,
    OutOfOrderEvent,
    ParseError,
    PathExplosion,
    PatternUnmatched,
    StaleIdentification,
    VersionConflict,
)
from .identify import IdentificationResult, identify, recompute_on_change
from .matcher import holds_on_path, match_schema, match_trace_prefix
from .monitor import (
    Action,
    MonitorSession,
    Violation,
    close_instance,
    open_session,
    pending_obligations,
    replay,
    step_event,
)
from .paths import ExecutionPath, enumerate_paths
from .process import (
    ActivityRepository,
    Event,
    ProcessSchema,
    ResourceModel,
    Trace,
    parse_process_schema,
    parse_trace,
)
from .properties import classify_type, derive_properties
from .verify import Verdict, analyze_data_coverage, check_design_time, verify_all

__version__ = "0.1.0"
