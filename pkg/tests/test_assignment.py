import itertools
from collections import Counter, defaultdict

import numpy as np
import pytest

from specmix.assignment import (
    build_cost,
    hungarian,
    assign_dictionaries,
    project_onto_dictionaries,
    resolve_atoms,
)
from specmix.dictionaries import CountConstraint, Dictionary
from specmix.errors import Infeasible
from specmix.linalg import dist_euclid, dist_mrsa, dist_nip

DIST = {"euclid": dist_euclid, "nip": dist_nip, "mrsa": dist_mrsa}


def make_dict(atoms, ident="d"):
    return Dictionary(id=ident, name=ident, atoms=np.asarray(atoms, dtype=float))


# ------------------------------------------------------------- oracles


def brute_assignment(cost):
    """Exhaustive minimum over injections, lexicographically-first winner."""
    n, m = cost.shape
    best_perm = None
    best_total = np.inf
    for perm in itertools.permutations(range(m), n):
        total = sum(cost[i, perm[i]] for i in range(n))
        if total < best_total:
            best_total = total
            best_perm = perm
    return best_perm, float(best_total)


def feasible_labelings(constraints, dict_sizes, r):
    p = len(constraints)
    for labels in itertools.product(range(p), repeat=r):
        counts = Counter(labels)
        ok = True
        for i, cons in enumerate(constraints):
            c = counts.get(i, 0)
            if cons.kind == "exact" and c != cons.count:
                ok = False
                break
            if cons.kind == "at_most" and c > cons.count:
                ok = False
                break
            if c > dict_sizes[i]:
                ok = False
                break
        if ok:
            yield labels


def brute_label_cost(table, labels):
    return sum(table.dict_costs[i, j] for j, i in enumerate(labels))


def brute_joint_minimum(table, constraints):
    """Full enumeration over (selection sets, matching): labelings x injections."""
    p, r = table.dict_costs.shape
    sizes = [t.shape[0] for t in table.per_atom_costs]
    best = np.inf
    for labels in feasible_labelings(constraints, sizes, r):
        per_dict = defaultdict(list)
        for j, i in enumerate(labels):
            per_dict[i].append(j)
        value = 0.0
        for i, cols in per_dict.items():
            sub_best = min(
                sum(table.per_atom_costs[i][a, c] for a, c in zip(atoms, cols))
                for atoms in itertools.permutations(range(sizes[i]), len(cols))
            )
            value += sub_best
        best = min(best, value)
    return float(best)


# ------------------------------------------------------------ build_cost


def test_build_cost_self_dictionary_is_zero_diagonal():
    rng = np.random.default_rng(0)
    a = rng.uniform(0.1, 1.0, size=(5, 3))
    table = build_cost(a, [make_dict(a)], "nip")
    assert np.allclose(table.dict_costs, 0.0, atol=1e-14)
    assert list(table.best_atom[0]) == [0, 1, 2]


def test_build_cost_orthogonal_atoms():
    e1 = [[1.0], [0.0]]
    e2 = [[0.0], [1.0]]
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    table = build_cost(a, [make_dict(e1, "a"), make_dict(e2, "b")], "nip")
    assert np.allclose(table.dict_costs, [[1.0, 0.0], [0.0, 1.0]])


@pytest.mark.parametrize("metric", ["euclid", "nip", "mrsa"])
def test_build_cost_matches_naive_triple_loop(metric):
    rng = np.random.default_rng(7)
    a = rng.normal(size=(4, 3))
    dicts = [make_dict(rng.normal(size=(4, 5)), "d0"),
             make_dict(rng.normal(size=(4, 4)), "d1")]
    table = build_cost(a, dicts, metric)
    for i, d in enumerate(dicts):
        for k in range(d.size):
            for j in range(3):
                expected = DIST[metric](a[:, j], d.atoms[:, k])
                assert table.per_atom_costs[i][k, j] == expected
    for i in range(2):
        for j in range(3):
            col = table.per_atom_costs[i][:, j]
            assert table.dict_costs[i, j] == col.min()
            assert table.best_atom[i, j] == col.argmin()


def test_build_cost_degenerate_pairs_pinned():
    a = np.array([[0.0, 1.0], [0.0, 2.0]])  # first column is zero
    d = make_dict([[1.0, 0.0], [1.0, 0.0]])  # second atom is zero
    table = build_cost(a, [d], "nip")
    assert table.per_atom_costs[0][0, 0] == 2.0  # zero column
    assert table.per_atom_costs[0][1, 0] == 2.0  # both zero
    assert table.per_atom_costs[0][1, 1] == 2.0  # zero atom
    assert (0, 0, 0) in table.degenerate_pairs
    mr = build_cost(np.array([[1.0], [1.0]]), [d], "mrsa")
    assert mr.per_atom_costs[0][0, 0] == 1.0  # constant column vs anything


def test_build_cost_empty_dictionary_rejected():
    with pytest.raises(Exception):
        build_cost(np.ones((2, 1)), [make_dict(np.ones((2, 0)))], "nip")


# ------------------------------------------------------------- hungarian


def test_hungarian_diagonal():
    assignment, total = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert list(assignment) == [0, 1]
    assert total == 2.0


def test_hungarian_all_ties_lexicographic():
    assignment, total = hungarian(np.zeros((2, 2)))
    assert list(assignment) == [0, 1]
    assert total == 0.0
    assignment, _ = hungarian(np.array([[1.0, 1.0, 5.0], [1.0, 1.0, 5.0]]))
    assert list(assignment) == [0, 1]


def test_hungarian_avoids_greedy_trap():
    assignment, total = hungarian(np.array([[0.0, 5.0], [0.0, 100.0]]))
    assert list(assignment) == [1, 0]
    assert total == 5.0


def test_hungarian_rectangular():
    assignment, total = hungarian(np.array([[3.0, 1.0, 2.0]]))
    assert list(assignment) == [1]
    assert total == 1.0


def test_hungarian_infeasible_shape():
    with pytest.raises(Infeasible):
        hungarian(np.zeros((3, 2)))


def test_hungarian_matches_brute_force_square():
    rng = np.random.default_rng(11)
    for trial in range(60):
        n = int(rng.integers(2, 7))
        cost = rng.uniform(size=(n, n))
        assignment, total = hungarian(cost)
        perm, best = brute_assignment(cost)
        assert total == best
        assert tuple(assignment) == perm


def test_hungarian_matches_brute_force_rectangular():
    rng = np.random.default_rng(13)
    for trial in range(40):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(n, n + 4))
        cost = rng.uniform(size=(n, m))
        assignment, total = hungarian(cost)
        perm, best = brute_assignment(cost)
        assert total == best
        assert tuple(assignment) == perm


def test_hungarian_handles_negative_costs():
    rng = np.random.default_rng(17)
    for trial in range(25):
        cost = rng.uniform(-5.0, 5.0, size=(4, 5))
        assignment, total = hungarian(cost)
        perm, best = brute_assignment(cost)
        assert total == pytest.approx(best, abs=1e-12)


def test_hungarian_total_invariant_under_permutation():
    rng = np.random.default_rng(19)
    cost = rng.uniform(size=(5, 5))
    _, total = hungarian(cost)
    rows = rng.permutation(5)
    cols = rng.permutation(5)
    _, total_p = hungarian(cost[np.ix_(rows, cols)])
    assert total_p == pytest.approx(total, abs=1e-12)


# --------------------------------------------------- assign_dictionaries


def test_assign_single_dictionary_exact_r():
    rng = np.random.default_rng(23)
    a = rng.normal(size=(4, 3))
    table = build_cost(a, [make_dict(rng.normal(size=(4, 6)))], "euclid")
    labels = assign_dictionaries(table, [CountConstraint("exact", 3)])
    assert list(labels) == [0, 0, 0]


def test_assign_two_dicts_crossing():
    table_a = np.array([[1.0, 0.0], [0.0, 1.0]])
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    dicts = [make_dict([[1.0], [0.0]], "a"), make_dict([[0.0], [1.0]], "b")]
    table = build_cost(a, dicts, "nip")
    assert np.allclose(table.dict_costs, table_a)
    labels = assign_dictionaries(
        table, [CountConstraint("exact", 1), CountConstraint("exact", 1)]
    )
    assert list(labels) == [1, 0]


def test_assign_matches_labeling_oracle():
    rng = np.random.default_rng(29)
    for trial in range(40):
        p = 3
        r = int(rng.integers(2, 6))
        sizes = [int(rng.integers(1, 6)) for _ in range(p)]
        a = rng.normal(size=(5, r))
        dicts = [make_dict(rng.normal(size=(5, s)), f"d{i}") for i, s in enumerate(sizes)]
        constraints = _random_constraints(rng, sizes, r)
        if constraints is None:
            continue
        table = build_cost(a, dicts, "euclid")
        labels = assign_dictionaries(table, constraints)
        best_labels, best_cost = None, np.inf
        for cand in feasible_labelings(constraints, sizes, r):
            cost = brute_label_cost(table, cand)
            if cost < best_cost:
                best_cost = cost
                best_labels = cand
        assert best_labels is not None
        assert tuple(labels) == best_labels
        assert brute_label_cost(table, labels) == pytest.approx(best_cost, abs=1e-12)


def _random_constraints(rng, sizes, r):
    """Random exact/at_most constraint set, or None if the draw is infeasible."""
    kinds = [rng.choice(["exact", "at_most"]) for _ in sizes]
    counts = []
    for kind, size in zip(kinds, sizes):
        if kind == "exact":
            counts.append(int(rng.integers(0, min(size, r) + 1)))
        else:
            counts.append(int(rng.integers(1, size + 2)))
    cons = [CountConstraint(k, c) for k, c in zip(kinds, counts)]
    exact_total = sum(c.count for c in cons if c.kind == "exact")
    capacity = exact_total + sum(
        min(c.count, s) for c, s in zip(cons, sizes) if c.kind == "at_most"
    )
    if exact_total > r or capacity < r:
        return None
    if all(c.kind == "exact" for c in cons) and exact_total != r:
        return None
    return cons


def test_assign_infeasible_reports():
    rng = np.random.default_rng(31)
    a = rng.normal(size=(3, 4))
    table = build_cost(a, [make_dict(rng.normal(size=(3, 2)))], "euclid")
    with pytest.raises(Infeasible):
        assign_dictionaries(table, [CountConstraint("exact", 3)])  # > atoms
    with pytest.raises(Infeasible):
        assign_dictionaries(table, [CountConstraint("at_most", 2)])  # capacity 2 < 4
    with pytest.raises(Infeasible):
        assign_dictionaries(table, [CountConstraint("at_least", 1)])  # not normalized


# ----------------------------------------------------------- resolve_atoms


def test_resolve_atoms_no_conflict_keeps_argmins():
    rng = np.random.default_rng(37)
    atoms = np.eye(4)
    a = np.eye(4)[:, :3] + 0.01 * rng.normal(size=(4, 3))
    table = build_cost(a, [make_dict(atoms)], "euclid")
    sol = resolve_atoms(table, np.zeros(3, dtype=int))
    assert list(sol.column_to_atom) == list(table.best_atom[0])


def test_resolve_atoms_conflict_matches_brute_force():
    # Both columns prefer atom 0; their second-best atoms differ.
    per_atom = np.array(
        [
            [0.10, 0.20],  # atom 0: both columns' favorite
            [0.50, 0.90],
            [0.80, 0.35],
        ]
    )
    dicts = [make_dict(np.zeros((2, 3)) + 1.0)]
    table = build_cost(np.ones((2, 2)), dicts, "euclid")
    table.per_atom_costs[0] = per_atom
    table.dict_costs = per_atom.min(axis=0, keepdims=True)
    sol = resolve_atoms(table, np.zeros(2, dtype=int))
    best = min(
        (per_atom[a0, 0] + per_atom[a1, 1], (a0, a1))
        for a0, a1 in itertools.permutations(range(3), 2)
    )
    assert (sol.column_to_atom[0], sol.column_to_atom[1]) == best[1]
    assert sol.total_cost == pytest.approx(best[0], abs=1e-14)


def test_resolve_atoms_forced_single():
    table = build_cost(np.ones((2, 1)), [make_dict([[2.0], [2.0]])], "euclid")
    sol = resolve_atoms(table, np.zeros(1, dtype=int))
    assert sol.column_to_atom[0] == 0


def test_resolve_atoms_too_many_columns():
    table = build_cost(np.ones((2, 3)), [make_dict([[2.0], [2.0]])], "euclid")
    with pytest.raises(Infeasible):
        resolve_atoms(table, np.zeros(3, dtype=int))


def test_resolve_atoms_total_recomputed_matches():
    rng = np.random.default_rng(41)
    a = rng.normal(size=(5, 4))
    dicts = [make_dict(rng.normal(size=(5, 6)), "d0"),
             make_dict(rng.normal(size=(5, 3)), "d1")]
    table = build_cost(a, dicts, "nip")
    labels = assign_dictionaries(
        table, [CountConstraint("exact", 2), CountConstraint("exact", 2)]
    )
    sol = resolve_atoms(table, labels)
    recomputed = sum(
        DIST["nip"](a[:, j], dicts[sol.column_to_dict[j]].atoms[:, sol.column_to_atom[j]])
        for j in range(4)
    )
    assert sol.total_cost == pytest.approx(recomputed, abs=1e-10)


# ------------------------------------------- project_onto_dictionaries


def test_project_fixed_point_on_exact_copies():
    rng = np.random.default_rng(43)
    d0 = make_dict(rng.uniform(0.1, 1.0, size=(5, 4)), "d0")
    d1 = make_dict(rng.uniform(0.1, 1.0, size=(5, 3)), "d1")
    a = np.column_stack([d0.atoms[:, 2], d1.atoms[:, 0], d0.atoms[:, 1]])
    proj, sol = project_onto_dictionaries(
        a, [d0, d1], [CountConstraint("exact", 2), CountConstraint("exact", 1)], "nip"
    )
    assert np.array_equal(proj, a)
    assert sol.total_cost == pytest.approx(0.0, abs=1e-12)


def test_project_self_dictionary_identity():
    rng = np.random.default_rng(47)
    data = rng.uniform(0.1, 1.0, size=(6, 8))
    picks = [1, 4, 6]
    a = data[:, picks]
    proj, sol = project_onto_dictionaries(
        a, [make_dict(data, "self")], [CountConstraint("exact", 3)], "nip"
    )
    assert np.array_equal(proj, a)
    assert [int(k) for k in sol.column_to_atom] == picks


def test_project_matches_full_enumeration():
    rng = np.random.default_rng(53)
    checked = 0
    for trial in range(40):
        p = int(rng.integers(2, 4))
        r = int(rng.integers(2, 5))
        sizes = [int(rng.integers(1, 6)) for _ in range(p)]
        constraints = _random_constraints(rng, sizes, r)
        if constraints is None:
            continue
        a = rng.normal(size=(4, r))
        dicts = [make_dict(rng.normal(size=(4, s)), f"d{i}") for i, s in enumerate(sizes)]
        table = build_cost(a, dicts, "euclid")
        _, sol = project_onto_dictionaries(a, dicts, constraints, "euclid")
        best = brute_joint_minimum(table, constraints)
        assert sol.total_cost == pytest.approx(best, abs=1e-10)
        checked += 1
    assert checked >= 20


def test_project_collision_repair_is_globally_optimal():
    # Two dictionaries, both columns nearest to the single atom of d0: the
    # two-stage route would stack both on d0 and repair expensively; the
    # exact fallback must recover the cheaper split assignment.
    u = np.array([1.0, 0.0, 0.0])
    far = np.array([0.0, 0.0, 1.0])
    d0 = make_dict(np.column_stack([u, far]), "d0")
    d1 = make_dict(np.column_stack([np.array([0.9, 0.1, 0.0])]), "d1")
    cols = np.column_stack([u + [0.0, 0.01, 0.0], u + [0.0, -0.01, 0.0]])
    constraints = [CountConstraint("at_most", 2), CountConstraint("at_most", 2)]
    table = build_cost(cols, [d0, d1], "euclid")
    _, sol = project_onto_dictionaries(cols, [d0, d1], constraints, "euclid")
    assert sol.total_cost == pytest.approx(brute_joint_minimum(table, constraints), abs=1e-12)


def test_project_metric_equivalence_unit_norm():
    # With unit-norm atoms and columns planted near distinct atoms, the
    # squared Euclidean distance is an affine function of the normalized
    # inner product, so both metrics select the same atoms.
    rng = np.random.default_rng(59)
    for trial in range(20):
        atoms = rng.normal(size=(10, 20))
        atoms /= np.linalg.norm(atoms, axis=0)
        picks = rng.choice(20, size=4, replace=False)
        cols = atoms[:, picks] + 0.02 * rng.normal(size=(10, 4))
        cols /= np.linalg.norm(cols, axis=0)
        d = make_dict(atoms)
        constraints = [CountConstraint("exact", 4)]
        _, sol_nip = project_onto_dictionaries(cols, [d], constraints, "nip")
        _, sol_euc = project_onto_dictionaries(cols, [d], constraints, "euclid")
        assert list(sol_nip.column_to_atom) == list(sol_euc.column_to_atom)
        assert list(sol_nip.column_to_atom) == [int(k) for k in picks]
