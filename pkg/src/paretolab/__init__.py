"""Nondominated sorting of point clouds, Poisson point process machinery, a
monotone grid solver for the limiting first-order equation, and a Monte Carlo
verification workbench."""

__version__ = "0.1.0"

from .core import (
    BackwardSet,
    Box,
    CloudFormatError,
    DimensionMismatchError,
    DuplicatePointError,
    PointCloud,
    Simplex,
    TestFunction,
    dominates,
    filter_points,
    make_test_function,
    region_contains,
)
from .experiments import ExperimentConfig, ExperimentReport, run_experiment
from .hjsolver import (
    ConstantsTable,
    GridField,
    GridSpec,
    cd_bounds,
    exact_solution_uniform,
    local_update,
    residual_max,
    solve_hj,
    sup_norm_diff,
)
from .ppp import (
    IntensityFunction,
    ProcessRealization,
    grow_coupled,
    intensity_from_spec,
    sample_poisson,
    superpose,
    thin,
)
from .sorting import (
    ChainCertificate,
    DepthField,
    chain_length,
    depth_at,
    depth_field_on_grid,
    longest_chain,
    longest_chain_2d,
    nondominated_sort,
)

__all__ = [
    "BackwardSet",
    "Box",
    "ChainCertificate",
    "CloudFormatError",
    "ConstantsTable",
    "DepthField",
    "DimensionMismatchError",
    "DuplicatePointError",
    "ExperimentConfig",
    "ExperimentReport",
    "GridField",
    "GridSpec",
    "IntensityFunction",
    "PointCloud",
    "ProcessRealization",
    "Simplex",
    "TestFunction",
    "cd_bounds",
    "chain_length",
    "depth_at",
    "depth_field_on_grid",
    "dominates",
    "exact_solution_uniform",
    "filter_points",
    "grow_coupled",
    "intensity_from_spec",
    "local_update",
    "longest_chain",
    "longest_chain_2d",
    "make_test_function",
    "nondominated_sort",
    "region_contains",
    "residual_max",
    "run_experiment",
    "sample_poisson",
    "solve_hj",
    "sup_norm_diff",
    "superpose",
    "thin",
]
