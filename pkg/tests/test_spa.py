import numpy as np
import pytest

from specmix.errors import DegenerateInput, RankDeficient
from specmix.spa import spa


def test_spa_two_step_hand_trace():
    # Columns 2e1, 3e2, e1+e2: the largest norm (3e2) goes first, then after
    # deflating e2 the remaining norms are 2 and 1, so column 0 is next.
    m = np.array([[2.0, 0.0, 1.0], [0.0, 3.0, 1.0]])
    result = spa(m, 2)
    assert result.indices == [1, 0]
    assert result.residual_norms[0] == pytest.approx(3.0, abs=1e-12)
    assert result.residual_norms[1] == pytest.approx(2.0, abs=1e-12)


def test_spa_identity_tie_break_in_index_order():
    for c in (1.0, 2.5):
        result = spa(c * np.eye(4), 4)
        assert result.indices == [0, 1, 2, 3]


def test_spa_recovers_separable_vertices():
    rng = np.random.default_rng(19)
    for trial in range(10):
        w = rng.uniform(0.5, 1.5, size=(8, 4)) + np.eye(8)[:, :4] * 2.0
        h = rng.dirichlet(np.ones(4), size=9).T  # column-stochastic mixtures
        m = np.hstack([w, w @ h])
        result = spa(m, 4)
        assert sorted(result.indices) == [0, 1, 2, 3]


def test_spa_residual_orthogonal_to_selected_columns():
    rng = np.random.default_rng(23)
    m = rng.normal(size=(7, 10))
    scale = float(np.linalg.norm(m))
    residual = m.copy()
    result = spa(m, 4)
    for j in result.indices:
        u = residual[:, j] / np.linalg.norm(residual[:, j])
        residual = residual - np.outer(u, u @ residual)
        # every residual column is now orthogonal to the original pick
        assert np.max(np.abs(m[:, j] @ residual)) / scale**2 < 1e-10


def test_spa_duplicate_scaled_vertices_pick_same_family():
    # Duplicating vertices with positive scalings must not change which
    # vertex family is selected.
    rng = np.random.default_rng(29)
    w = np.eye(3) + 0.1
    mixtures = w @ rng.dirichlet(np.ones(3), size=5).T
    m = np.hstack([w, 0.5 * w, 2.0 * w, mixtures])
    result = spa(m, 3)
    families = [j % 3 for j in result.indices if j < 9]
    assert sorted(families) == [0, 1, 2]


def test_spa_deterministic():
    rng = np.random.default_rng(31)
    m = rng.normal(size=(6, 12))
    assert spa(m, 3).indices == spa(m, 3).indices


def test_spa_rank_deficiency_reported():
    m = np.zeros((3, 4))
    m[:, 0] = [1.0, 0.0, 0.0]
    m[:, 1] = [2.0, 0.0, 0.0]  # same direction: rank 1
    with pytest.raises(RankDeficient) as excinfo:
        spa(m, 3)
    assert len(excinfo.value.indices_found) == 1


def test_spa_zero_matrix_rejected():
    with pytest.raises(DegenerateInput):
        spa(np.zeros((3, 3)), 2)


def test_spa_r_bounds():
    with pytest.raises(ValueError):
        spa(np.ones((2, 5)), 3)
