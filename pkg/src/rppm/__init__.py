"""Relationship-based access control with caching and audit edges."""

from .audit import ChineseWallConfig, write_decision_audit, write_interest_edges
from .cache import CacheConfig, CacheManager, Invalidation, ObjectFocused, SubjectFocused, precache
from .constraints import (
    SodMode,
    SodSpec,
    WallLayout,
    cw_oracle,
    generate_chinese_wall,
    generate_sod,
    sod_oracle,
)
from .engine import Engine, EngineConfig
from .errors import (
    ConfigurationError,
    NameCollisionError,
    ParseError,
    RPPMError,
    UnknownNodeError,
    UnresolvedReferenceError,
    WellFormednessError,
)
from .formats import (
    DocumentSet,
    PolicyDocument,
    load_documents,
    parse_config,
    parse_graph,
    parse_model,
    parse_policy,
    serialize_config,
    serialize_graph,
    serialize_model,
    serialize_policy,
)
from .graph import Edge, EdgeKind, SystemGraph, SystemModel, allow_audit, deny_audit, validate_graph
from .matcher import EvalMetrics, satisfies
from .paths import parse_path, simplify
from .policy import (
    CRS,
    PMS,
    AuthorizationPolicy,
    AuthorizationRule,
    Decision,
    EvalOutcome,
    PrincipalMatchingPolicy,
    PrincipalMatchingRule,
    Request,
    authorize,
    match_principals,
)

__version__ = "0.1.0"
