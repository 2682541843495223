"""Successive projection algorithm: greedy pure-pixel selection.

Repeatedly picks the residual column of largest Euclidean norm and deflates
the residual by projecting onto the orthogonal complement of the pick. Under
the pure-pixel assumption the selected columns are the simplex vertices.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, RankDeficient
from .linalg import as_matrix

# A residual below this fraction of the initial largest column norm is
# treated as numerically zero.
_RESIDUAL_FLOOR = 1e-12


@dataclass
class SpaResult:
    indices: list  # selection order
    residual_norms: list  # max residual column norm at each step


def spa(data, r):
    """Select ``r`` column indices of ``data`` by successive projections.

    Ties in the arg-max are broken toward the lowest column index. Raises
    :class:`RankDeficient` (carrying the indices found so far) if the
    residual vanishes before ``r`` selections.
    """
    m_ = as_matrix(data, "data")
    rows, cols = m_.shape
    if r < 1 or r > min(rows, cols):
        raise ValueError(f"r must be in 1..min(m, n) = {min(rows, cols)}, got {r}")
    residual = m_.copy()
    sq_norms = np.einsum("ij,ij->j", residual, residual)
    floor = _RESIDUAL_FLOOR * float(np.sqrt(sq_norms.max()))
    if floor == 0.0:
        raise DegenerateInput("all-zero data matrix")
    indices = []
    norms = []
    for _ in range(r):
        j = int(np.argmax(sq_norms))
        best = float(np.sqrt(max(sq_norms[j], 0.0)))
        if best <= floor:
            raise RankDeficient(
                f"residual numerically zero after {len(indices)} of {r} selections",
                indices_found=indices,
            )
        indices.append(j)
        norms.append(best)
        u = residual[:, j] / best
        residual -= np.outer(u, u @ residual)
        sq_norms = np.einsum("ij,ij->j", residual, residual)
    return SpaResult(indices, norms)
