"""specmix: spectral unmixing with multiple spectral dictionaries.

The core model factorizes a bands-by-pixels matrix as ``data ~ a @ b.T``
where the columns of ``a`` must be atoms of user-supplied dictionaries,
with exact / at-most / at-least counts per dictionary. The M2PALS /
M2PNALS alternating algorithm solves it by interleaving least-squares
factor updates with a constrained assignment of columns to atoms.
"""

from .assignment import (
    AssignmentSolution,
    CostTable,
    build_cost,
    hungarian,
    project_onto_dictionaries,
)
from .dictionaries import (
    CountConstraint,
    Dictionary,
    RegionSpec,
    from_regions,
    normalize_constraints,
    picks_by_source,
    validate_problem,
)
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    DistanceUndefined,
    Infeasible,
    ParseError,
    RankDeficient,
    UnmixError,
)
from .hsio import HsiCube, cube_to_matrix, load_hsi, matrix_to_cube, pixel_of, save_hsi
from .linalg import (
    SolverOptions,
    dist_euclid,
    dist_mrsa,
    dist_nip,
    relative_error,
    solve_ls,
    solve_nnls,
)
from .m2pals import M2palsOptions, UnmixingResult, initialize, m2pals, mpals
from .spa import SpaResult, spa
from .synthbench import (
    BenchConfig,
    SyntheticInstance,
    build_pure_dictionaries,
    default_endmembers,
    generate_synthetic,
    miss_selection_rate,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "AssignmentSolution",
    "BenchConfig",
    "CostTable",
    "CountConstraint",
    "DegenerateInput",
    "Dictionary",
    "DimensionMismatch",
    "DistanceUndefined",
    "HsiCube",
    "Infeasible",
    "M2palsOptions",
    "ParseError",
    "RankDeficient",
    "RegionSpec",
    "SolverOptions",
    "SpaResult",
    "SyntheticInstance",
    "UnmixError",
    "UnmixingResult",
    "build_cost",
    "build_pure_dictionaries",
    "cube_to_matrix",
    "default_endmembers",
    "dist_euclid",
    "dist_mrsa",
    "dist_nip",
    "from_regions",
    "generate_synthetic",
    "hungarian",
    "initialize",
    "load_hsi",
    "m2pals",
    "matrix_to_cube",
    "miss_selection_rate",
    "mpals",
    "normalize_constraints",
    "picks_by_source",
    "pixel_of",
    "project_onto_dictionaries",
    "relative_error",
    "run_benchmark",
    "save_hsi",
    "solve_ls",
    "solve_nnls",
    "spa",
    "validate_problem",
]
