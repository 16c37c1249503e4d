"""Contraction analysis: measures, metrics, sampled certificates, metric synthesis."""
from .certify import (
    Certificate,
    certified_rate,
    check_contraction,
    check_hierarchy,
    check_sync_condition,
    check_transverse_contraction,
    contraction_margins,
    generalized_eigvals,
    transverse_basis,
    transverse_margins,
)
from .measures import matrix_measure
from .metrics import Metric, RegionSampler, pushforward_metric
from .synthesis import (
    FullMetricBuild,
    SingularMetricBuild,
    build_full_metric,
    build_singular_metric,
    default_weight,
)
from .tube import TubeReport, condition_bound, tube_bound_check

__all__ = [
    "Certificate", "certified_rate", "check_contraction", "check_hierarchy",
    "check_sync_condition", "check_transverse_contraction", "contraction_margins",
    "generalized_eigvals", "transverse_basis", "transverse_margins", "matrix_measure",
    "Metric", "RegionSampler", "pushforward_metric", "FullMetricBuild",
    "SingularMetricBuild", "build_full_metric", "build_singular_metric", "default_weight",
    "TubeReport", "condition_bound", "tube_bound_check",
]
