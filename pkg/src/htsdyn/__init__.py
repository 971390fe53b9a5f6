"""Hierarchical time-series forecasting toolkit.

Static reconciliation (bottom-up, top-down, middle-out, WLS, MinT) plus
machine-learned dynamic disaggregation of middle-level forecasts into
time-varying bottom-level proportions, with a synthetic promotional-demand
generator and an sMAPE evaluation harness.
"""

__version__ = "0.1.0"

from htsdyn.hierarchy import (
    HierarchySpec,
    SeriesPanel,
    aggregate_panel,
    build_hierarchy,
    summing_matrix,
)

__all__ = [
    "HierarchySpec",
    "SeriesPanel",
    "aggregate_panel",
    "build_hierarchy",
    "summing_matrix",
    "__version__",
]
