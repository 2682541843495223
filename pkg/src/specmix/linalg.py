"""Dense least-squares / nonnegative least-squares solvers and spectral distances.

All factorizations in this package are written as ``data ~ left @ right.T``
with spectra stored as columns. The two solvers below update one factor with
the other held fixed; they are the inner kernels of the alternating methods.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DimensionMismatch, DistanceUndefined


@dataclass
class SolverOptions:
    """Knobs for the factor-update solvers.

    max_inner_iterations : sweep cap for the NNLS block coordinate descent.
    kkt_tolerance : absolute tolerance on the KKT residual used as the NNLS
        stopping test.
    ridge_epsilon : Tikhonov term added to the normal equations when the Gram
        matrix is singular or its condition number exceeds 1/ridge_epsilon.
    """

    max_inner_iterations: int = 100
    kkt_tolerance: float = 1e-8
    ridge_epsilon: float = 1e-10

    def __post_init__(self):
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be >= 1")
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be > 0")
        if self.ridge_epsilon < 0:
            raise ValueError("ridge_epsilon must be >= 0")


DEFAULT_OPTIONS = SolverOptions()


def as_matrix(x, name="matrix"):
    """Return ``x`` as a finite 2-d float64 array, validating shape and content."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _as_vector(x, name="vector"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-d, got shape {v.shape}")
    if v.size < 1:
        raise DimensionMismatch(f"{name} must be non-empty")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def solve_ls(data, factor, opts=DEFAULT_OPTIONS):
    """Least-squares update of the left factor.

    Parameters
    ----------
    data : (m, n) array
        Matrix being factorized.
    factor : (n, r) array
        Fixed right factor.
    opts : SolverOptions

    Returns
    -------
    (m, r) array
        ``argmin_X ||data - X @ factor.T||_F`` via the normal equations.
        When ``factor.T @ factor`` is singular or its condition number
        exceeds ``1/ridge_epsilon``, the ridge-regularized system
        ``(Gram + ridge_epsilon * I)`` is solved instead, so the result is
        always finite.
    """
    m_ = as_matrix(data, "data")
    b = as_matrix(factor, "factor")
    if m_.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"data has {m_.shape[1]} columns but factor has {b.shape[0]} rows"
        )
    gram = b.T @ b
    rhs = (m_ @ b).T  # r x m

    evals = np.linalg.eigvalsh(gram)
    lo = max(float(evals[0]), 0.0)
    hi = max(float(evals[-1]), 0.0)
    ridge = 0.0
    if opts.ridge_epsilon > 0 and (lo <= 0.0 or hi * opts.ridge_epsilon > lo):
        ridge = opts.ridge_epsilon
    system = gram + ridge * np.eye(gram.shape[0]) if ridge else gram
    try:
        sol = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        sol = np.linalg.lstsq(system, rhs, rcond=None)[0]
    return sol.T


def solve_nnls(data, basis, opts=DEFAULT_OPTIONS, init=None):
    """Nonnegative right-factor update by cyclic block coordinate descent.

    Parameters
    ----------
    data : (m, n) array
    basis : (m, r) array
        Fixed left factor.
    opts : SolverOptions
    init : (n, r) array, optional
        Warm start (clipped to be nonnegative). Defaults to zeros.

    Returns
    -------
    (n, r) array
        Approximate ``argmin_{C >= 0} ||data - basis @ C.T||_F``. Each of the
        r coordinate blocks is minimized exactly in cyclic order, so the
        objective never increases across sweeps. Iteration stops when every
        entry satisfies the KKT conditions at ``kkt_tolerance`` (gradient
        >= -tol where C is zero, |gradient| <= tol where C is positive) or
        after ``max_inner_iterations`` sweeps.
    """
    m_ = as_matrix(data, "data")
    a = as_matrix(basis, "basis")
    if m_.shape[0] != a.shape[0]:
        raise DimensionMismatch(
            f"data has {m_.shape[0]} rows but basis has {a.shape[0]}"
        )
    n, r = m_.shape[1], a.shape[1]
    gram = a.T @ a  # r x r
    cross = m_.T @ a  # n x r
    diag = np.diag(gram).copy()

    if init is None:
        coef = np.zeros((n, r))
    else:
        coef = np.array(init, dtype=np.float64, copy=True)
        if coef.shape != (n, r):
            raise DimensionMismatch(
                f"init has shape {coef.shape}, expected {(n, r)}"
            )
        np.maximum(coef, 0.0, out=coef)

    tol = opts.kkt_tolerance
    for _ in range(opts.max_inner_iterations):
        grad = coef @ gram - cross
        if _kkt_satisfied(coef, grad, tol):
            break
        for k in range(r):
            if diag[k] <= 0.0:
                coef[:, k] = 0.0
                continue
            step = (cross[:, k] - coef @ gram[:, k]) / diag[k]
            np.maximum(coef[:, k] + step, 0.0, out=coef[:, k])
    return coef


def _kkt_satisfied(coef, grad, tol):
    pos = coef > 0.0
    if np.any(np.abs(grad[pos]) > tol):
        return False
    return not np.any(grad[~pos] < -tol)


def dist_euclid(x, y):
    """Euclidean distance ||x - y||_2."""
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.size != yv.size:
        raise DimensionMismatch(f"length mismatch: {xv.size} vs {yv.size}")
    return float(np.linalg.norm(xv - yv))


def dist_nip(x, y):
    """Normalized-inner-product distance 1 - cos(x, y), in [0, 2]."""
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.size != yv.size:
        raise DimensionMismatch(f"length mismatch: {xv.size} vs {yv.size}")
    nx2 = float(xv @ xv)
    ny2 = float(yv @ yv)
    if nx2 == 0.0 or ny2 == 0.0:
        raise DistanceUndefined("normalized inner product needs nonzero vectors")
    c = float(xv @ yv) / float(np.sqrt(nx2 * ny2))
    return 1.0 - min(1.0, max(-1.0, c))


def dist_mrsa(x, y):
    """Mean-removed spectral angle, normalized to [0, 1].

    The inputs are centered (their means removed) before the angle is taken,
    which makes the distance invariant to additive offsets and to positive
    rescaling. The arccos argument is clamped to [-1, 1] against FP overshoot.
    """
    xv = _as_vector(x, "x")
    yv = _as_vector(y, "y")
    if xv.size != yv.size:
        raise DimensionMismatch(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise DimensionMismatch("mean-removed angle needs vectors of length >= 2")
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    nx2 = float(xc @ xc)
    ny2 = float(yc @ yc)
    if nx2 == 0.0 or ny2 == 0.0:
        raise DistanceUndefined("mean-removed angle undefined for constant vectors")
    c = float(xc @ yc) / float(np.sqrt(nx2 * ny2))
    c = min(1.0, max(-1.0, c))
    return float(np.arccos(c) / np.pi)


def relative_error(data, left, right):
    """Relative reconstruction error ||data - left @ right.T||_F / ||data||_F."""
    m_ = as_matrix(data, "data")
    a = as_matrix(left, "left")
    b = as_matrix(right, "right")
    if a.shape[0] != m_.shape[0] or b.shape[0] != m_.shape[1] or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(
            f"incompatible shapes {m_.shape}, {a.shape}, {b.shape}"
        )
    denom = float(np.linalg.norm(m_))
    if denom == 0.0:
        raise DegenerateInput("relative error undefined for an all-zero matrix")
    return float(np.linalg.norm(m_ - a @ b.T)) / denom
