"""Multiple-dictionary matching-pursuit alternating least squares.

M2PALS alternates three steps: an unconstrained least-squares proxy for the
endmember factor, a projection of that proxy onto the admissible dictionary
atoms (a constrained assignment), and a least-squares update of the
abundance factor. M2PNALS is the same loop with nonnegative updates. The
projection step can increase the residual, so the loop is not monotone and
the best iterate seen is returned.
"""

from dataclasses import dataclass, field

import numpy as np

from .assignment import METRICS, project_onto_dictionaries
from .dictionaries import CountConstraint, normalize_constraints, validate_problem
from .errors import (
    DegenerateInput,
    DimensionMismatch,
    Infeasible,
    IterationInvariantError,
)
from .linalg import SolverOptions, as_matrix, solve_ls, solve_nnls
from .spa import spa

INIT_MODES = ("spa", "factors", "indices")

# Guard against division by zero in the relative-change stopping rule.
_STOP_EPS = 1e-15

# Slack for the per-iteration monotonicity checks, relative to the data norm.
_MONOTONE_TOL = 1e-10


@dataclass
class M2palsOptions:
    """Configuration of one alternating run.

    init selects the starting point: "spa" runs the successive projection
    algorithm on the data, "factors" takes ``init_factors=(a0, b0)``, and
    "indices" takes ``init_indices`` as (dictionary, atom) pairs.
    """

    max_iterations: int = 50
    rel_change_tol: float = 1e-5
    nonnegative_b: bool = False
    nonnegative_a_proxy: bool = False
    metric: str = "nip"
    init: str = "spa"
    init_factors: tuple | None = None
    init_indices: list | None = None
    rng_seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.rel_change_tol > 0:
            raise ValueError("rel_change_tol must be > 0")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")


@dataclass
class UnmixingResult:
    """Factors, atom selection, and the per-iteration error trace of a run.

    ``a`` holds verbatim copies of the selected atom columns; ``selection``
    says which dictionary/atom each column is. ``relative_error`` equals the
    minimum of ``residual_history`` (the loop is not monotone, so the best
    iterate is returned rather than the last). ``dictionaries`` and
    ``constraints`` are the normalized problem the selection refers to.
    """

    a: np.ndarray
    b: np.ndarray
    selection: object
    residual_history: list
    iterations: int
    converged: bool
    relative_error: float
    dictionaries: list
    constraints: list


def initialize(data, dicts, constraints, r, opts):
    """Produce starting factors (a0, b0) for the alternating loop."""
    m_ = as_matrix(data, "data")
    if opts.init == "factors":
        if opts.init_factors is None:
            raise ValueError("init='factors' requires init_factors=(a0, b0)")
        a0 = as_matrix(opts.init_factors[0], "a0")
        b0 = as_matrix(opts.init_factors[1], "b0")
        if a0.shape != (m_.shape[0], r) or b0.shape != (m_.shape[1], r):
            raise DimensionMismatch(
                f"init factors have shapes {a0.shape}/{b0.shape}, expected "
                f"{(m_.shape[0], r)}/{(m_.shape[1], r)}"
            )
        return a0.copy(), b0.copy()
    if opts.init == "indices":
        pairs = opts.init_indices
        if pairs is None or len(pairs) != r:
            raise DimensionMismatch(
                f"init='indices' requires {r} (dictionary, atom) pairs"
            )
        cols = []
        for di, ai in pairs:
            if not (0 <= di < len(dicts)) or not (0 <= ai < dicts[di].size):
                raise DimensionMismatch(f"init index ({di}, {ai}) out of range")
            cols.append(dicts[di].atoms[:, ai])
        a0 = np.column_stack(cols)
        return a0, solve_nnls(m_, a0, opts.solver)
    # SPA on the data itself; abundances fit against the picked columns.
    idx = spa(m_, r).indices
    a0 = m_[:, idx].copy()
    return a0, solve_nnls(m_, a0, opts.solver)


def m2pals(data, dicts, constraints, r, opts=None):
    """Run the multiple-dictionary alternating algorithm.

    Parameters
    ----------
    data : (m, n) array
    dicts : list of Dictionary
    constraints : list of CountConstraint, one per dictionary
    r : factorization rank (number of endmembers)
    opts : M2palsOptions

    Returns
    -------
    UnmixingResult
        Best iterate by relative error. Stops when the relative error
        changes by less than ``rel_change_tol`` (relatively) between two
        successive iterations, or at ``max_iterations``.
    """
    if opts is None:
        opts = M2palsOptions()
    m_ = as_matrix(data, "data")
    data_norm = float(np.linalg.norm(m_))
    if data_norm == 0.0:
        raise DegenerateInput("all-zero data matrix")
    if r < 1:
        raise ValueError("r must be >= 1")
    if m_.shape[1] < r:
        raise DimensionMismatch(f"need at least r={r} pixels, got {m_.shape[1]}")
    report = validate_problem(dicts, constraints, r)
    if not report.ok:
        raise Infeasible(str(report), report)
    ndicts, ncons = normalize_constraints(dicts, constraints, r)

    a, b = initialize(m_, ndicts, ncons, r, opts)
    err_prev = float(np.linalg.norm(m_ - a @ b.T)) / data_norm
    slack = _MONOTONE_TOL * (1.0 + data_norm)

    history = []
    best = None
    converged = False
    for _ in range(opts.max_iterations):
        resid_before = float(np.linalg.norm(m_ - a @ b.T))
        if opts.nonnegative_a_proxy:
            proxy = solve_nnls(m_.T, b, opts.solver, init=np.maximum(a, 0.0))
        else:
            proxy = solve_ls(m_, b, opts.solver)
        resid_proxy = float(np.linalg.norm(m_ - proxy @ b.T))
        if resid_proxy > resid_before + slack:
            raise IterationInvariantError(
                f"proxy update increased the residual: {resid_before} -> {resid_proxy}"
            )

        a, sol = project_onto_dictionaries(proxy, ndicts, ncons, opts.metric)

        resid_mid = float(np.linalg.norm(m_ - a @ b.T))
        if opts.nonnegative_b:
            b = solve_nnls(m_, a, opts.solver, init=b)
        else:
            b = solve_ls(m_.T, a, opts.solver)
        resid_after = float(np.linalg.norm(m_ - a @ b.T))
        if resid_after > resid_mid + slack:
            raise IterationInvariantError(
                f"abundance update increased the residual: {resid_mid} -> {resid_after}"
            )

        err = resid_after / data_norm
        history.append(err)
        if best is None or err < best[3]:
            best = (a.copy(), b.copy(), sol, err)
        if abs(err - err_prev) / max(err_prev, _STOP_EPS) < opts.rel_change_tol:
            converged = True
            break
        err_prev = err

    a_best, b_best, sol_best, err_best = best
    return UnmixingResult(
        a=a_best,
        b=b_best,
        selection=sol_best,
        residual_history=history,
        iterations=len(history),
        converged=converged,
        relative_error=err_best,
        dictionaries=ndicts,
        constraints=ncons,
    )


def mpals(data, dictionary, r, opts=None):
    """Single-dictionary special case: exactly ``r`` atoms from one bank."""
    return m2pals(data, [dictionary], [CountConstraint("exact", r)], r, opts)
