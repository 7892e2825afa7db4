"""Numeric Finsler geometry built around the F-covariant coefficients H_i = g_ir G^r."""

from .classify import ClassificationReport, CoordinateMap, classify_metric
from .expr import ChartPoint, parse_metric
from .geometry import (
    Geometry,
    Metric,
    as_metric,
    covariant_coefficients,
    geometry,
    metric_tensor,
    point_geometry,
    spray_coefficients,
)
from .library import builtin, builtin_names, load_definition, parse_definition, sample_arrays
from .spherical import SphericalMetric, najafi

__all__ = [
    "ChartPoint",
    "ClassificationReport",
    "CoordinateMap",
    "Geometry",
    "Metric",
    "SphericalMetric",
    "as_metric",
    "builtin",
    "builtin_names",
    "classify_metric",
    "covariant_coefficients",
    "geometry",
    "load_definition",
    "metric_tensor",
    "najafi",
    "parse_definition",
    "parse_metric",
    "point_geometry",
    "sample_arrays",
    "spray_coefficients",
]
