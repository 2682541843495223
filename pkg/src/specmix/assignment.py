"""Constrained assignment of factor columns to dictionary atoms.

Projecting a factor matrix onto a bank of dictionaries is solved in two
stages: a dictionary-level assignment over "count-many copies" of each
dictionary (so exact counts become a plain assignment problem), followed by
a per-dictionary matching that guarantees pairwise-distinct atoms. When the
second stage has to repair an atom collision and thereby leaves the
dictionary-level optimum, a bounded exact search over column labelings
restores global optimality.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DistanceUndefined, Infeasible
from .linalg import as_matrix, dist_euclid, dist_mrsa, dist_nip

METRICS = ("euclid", "nip", "mrsa")

_DIST_FN = {"euclid": dist_euclid, "nip": dist_nip, "mrsa": dist_mrsa}
_DEGENERATE_COST = {"nip": 2.0, "mrsa": 1.0}

# Labeling-enumeration budget for the exact repair of atom collisions.
_EXACT_SEARCH_LIMIT = 200_000


@dataclass
class CostTable:
    """Distances between factor columns and dictionaries.

    dict_costs : (p, r) array, entry (i, j) = min over atoms k of
        dist(column j, atom k of dictionary i).
    best_atom : (p, r) int array, the arg-min atom of each (i, j) pair
        (ties toward the lowest atom index).
    per_atom_costs : list of (d_i, r) arrays with the full distance tables.
    degenerate_pairs : list of (dict_index, atom_index, column) whose
        distance was undefined (zero/constant vector) and was pinned to the
        metric's maximum value.
    """

    dict_costs: np.ndarray
    best_atom: np.ndarray
    per_atom_costs: list
    degenerate_pairs: list


@dataclass
class AssignmentSolution:
    """Result of one projection: which atom each column maps to.

    column_to_dict[j] and column_to_atom[j] identify the atom matched to
    column j; total_cost is the sum of the per-column atom distances,
    accumulated in column order.
    """

    column_to_dict: np.ndarray
    column_to_atom: np.ndarray
    total_cost: float


def build_cost(proxy, dicts, metric):
    """Compute the full distance tables between proxy columns and dictionaries.

    Pairs whose distance is undefined under the metric (zero vector for
    "nip", constant vector for "mrsa") get the metric's maximum cost and are
    reported in ``degenerate_pairs``.
    """
    a = as_matrix(proxy, "proxy")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")
    if not dicts:
        raise DimensionMismatch("at least one dictionary is required")
    dist = _DIST_FN[metric]
    r = a.shape[1]
    per_atom = []
    degenerate = []
    for i, d in enumerate(dicts):
        atoms = d.atoms
        if atoms.shape[0] != a.shape[0]:
            raise DimensionMismatch(
                f"dictionary {d.id!r} has {atoms.shape[0]} rows, proxy has {a.shape[0]}"
            )
        table = np.empty((atoms.shape[1], r))
        for k in range(atoms.shape[1]):
            atom = atoms[:, k]
            for j in range(r):
                try:
                    table[k, j] = dist(atom, a[:, j])
                except DistanceUndefined:
                    table[k, j] = _DEGENERATE_COST[metric]
                    degenerate.append((i, k, j))
        per_atom.append(table)
    dict_costs = np.vstack([t.min(axis=0) for t in per_atom])
    best_atom = np.vstack([t.argmin(axis=0) for t in per_atom])
    return CostTable(dict_costs, best_atom, per_atom, degenerate)


def hungarian(cost):
    """Minimum-cost assignment of rows to pairwise-distinct columns.

    Parameters
    ----------
    cost : (n_left, n_right) array of finite values, n_left <= n_right.

    Returns
    -------
    assignment : (n_left,) int array, assignment[i] = column of row i.
    total_cost : float, the sum cost[i, assignment[i]] in row order.

    Among minimum-cost solutions the lexicographically smallest assignment
    vector is returned: each row, in order, is fixed to the smallest column
    that still extends to an optimal completion.
    """
    c = as_matrix(cost, "cost")
    n_left, n_right = c.shape
    if n_left > n_right:
        raise Infeasible(
            f"cannot assign {n_left} rows to {n_right} distinct columns"
        )
    avail = list(range(n_right))
    assignment = np.empty(n_left, dtype=np.intp)
    for i in range(n_left):
        rows_below = np.arange(i + 1, n_left)
        best_j = -1
        best_total = np.inf
        # Lower bound on any completion: sum of per-row minima over the
        # still-available columns. Lets us skip candidates that cannot win.
        if rows_below.size:
            sub_all = c[np.ix_(rows_below, avail)]
            lb_rest = float(sub_all.min(axis=1).sum())
        else:
            lb_rest = 0.0
        for pos, j in enumerate(avail):
            if c[i, j] + lb_rest >= best_total:
                continue
            if rows_below.size:
                rest = avail[:pos] + avail[pos + 1 :]
                total = c[i, j] + _optimal_value(c[np.ix_(rows_below, rest)])
            else:
                total = c[i, j]
            if total < best_total:
                best_total = total
                best_j = j
        assignment[i] = best_j
        avail.remove(best_j)
    total_cost = float(sum(c[i, assignment[i]] for i in range(n_left)))
    return assignment, total_cost


def _optimal_value(c):
    """Optimal assignment value via shortest augmenting paths with potentials."""
    n, m = c.shape
    if n == 0:
        return 0.0
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    # match[j] = row matched to column j; n marks "unmatched". Column m is
    # the virtual start column of each augmentation.
    match = np.full(m + 1, n, dtype=np.intp)
    way = np.zeros(m, dtype=np.intp)
    for i in range(n):
        match[m] = i
        j0 = m
        minv = np.full(m, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            cur = c[i0, :] - u[i0] - v[:m]
            free = ~used[:m]
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            free_idx = np.flatnonzero(free)
            j1 = int(free_idx[np.argmin(minv[free_idx])])
            delta = minv[j1]
            used_c = used[:m]
            u[match[:m][used_c]] += delta
            v[:m][used_c] -= delta
            u[match[m]] += delta
            v[m] -= delta
            minv[~used_c] -= delta
            j0 = j1
            if match[j0] == n:
                break
        while j0 != m:
            j_prev = way[j0]
            match[j0] = match[j_prev]
            j0 = j_prev
    pairs = sorted((match[j], j) for j in range(m) if match[j] != n)
    return float(sum(c[i, j] for i, j in pairs))


def assign_dictionaries(cost_table, constraints):
    """Assign each column to a dictionary, honoring normalized count constraints.

    Each dictionary contributes count-many copies as right-hand nodes with
    cost ``dict_costs[i, j]``; exact-count copies must all be used, which is
    enforced by padding the left side with dummy rows that may only consume
    at-most copies. Returns the per-column dictionary index.
    """
    p, r = cost_table.dict_costs.shape
    if len(constraints) != p:
        raise DimensionMismatch(
            f"{p} dictionaries but {len(constraints)} constraints"
        )
    copies = []  # (dict_index, optional)
    exact_total = 0
    for i, cons in enumerate(constraints):
        d_i = cost_table.per_atom_costs[i].shape[0]
        if cons.kind == "exact":
            if cons.count > d_i:
                raise Infeasible(
                    f"dictionary {i}: exact count {cons.count} exceeds its {d_i} atoms"
                )
            exact_total += cons.count
            copies.extend([(i, False)] * cons.count)
        elif cons.kind == "at_most":
            copies.extend([(i, True)] * min(cons.count, d_i, r))
        else:
            raise Infeasible(
                f"dictionary {i}: constraint kind {cons.kind!r} must be "
                "normalized to exact/at_most before assignment"
            )
    if exact_total > r:
        raise Infeasible(
            f"exact counts sum to {exact_total} but only {r} columns exist"
        )
    total_copies = len(copies)
    if total_copies < r:
        raise Infeasible(
            f"constraints admit at most {total_copies} selections for {r} columns"
        )

    copy_dict = np.array([cp[0] for cp in copies], dtype=np.intp)
    big = 1.0 + float(np.abs(cost_table.dict_costs).sum())
    cost = np.empty((total_copies, total_copies))
    cost[:r, :] = cost_table.dict_costs[copy_dict, :].T
    for t, (_, optional) in enumerate(copies):
        cost[r:, t] = 0.0 if optional else big

    assignment, _ = hungarian(cost)
    for dummy in range(r, total_copies):
        if not copies[assignment[dummy]][1]:
            raise Infeasible(
                "exact-count copy left unused; constraints are infeasible"
            )
    labels = copy_dict[assignment[:r]]

    # Verify usage against the original counts.
    counts = np.bincount(labels, minlength=p)
    for i, cons in enumerate(constraints):
        if cons.kind == "exact" and counts[i] != cons.count:
            raise Infeasible(
                f"dictionary {i}: exact count {cons.count} not met (got {counts[i]})"
            )
        if cons.kind == "at_most" and counts[i] > cons.count:
            raise Infeasible(
                f"dictionary {i}: at-most cap {cons.count} exceeded (got {counts[i]})"
            )
    return labels


def resolve_atoms(cost_table, dict_map):
    """Pick pairwise-distinct atoms within each dictionary for its columns.

    Runs a matching per dictionary on the columns routed to it, so that two
    columns never share an atom. Columns are processed in ascending index
    order, which fixes tie-breaking.
    """
    p, r = cost_table.dict_costs.shape
    dict_map = np.asarray(dict_map, dtype=np.intp)
    if dict_map.shape != (r,):
        raise DimensionMismatch(f"dict_map must have length {r}")
    col_to_atom = np.full(r, -1, dtype=np.intp)
    for i in range(p):
        cols = np.flatnonzero(dict_map == i)
        if cols.size == 0:
            continue
        table = cost_table.per_atom_costs[i]
        if cols.size > table.shape[0]:
            raise Infeasible(
                f"dictionary {i}: {cols.size} columns assigned but only "
                f"{table.shape[0]} atoms available"
            )
        sub = table[:, cols].T  # columns x atoms
        atoms, _ = hungarian(sub)
        col_to_atom[cols] = atoms
    total = float(
        sum(cost_table.per_atom_costs[dict_map[j]][col_to_atom[j], j] for j in range(r))
    )
    return AssignmentSolution(dict_map.copy(), col_to_atom, total)


def project_onto_dictionaries(proxy, dicts, constraints, metric):
    """Project each proxy column onto the nearest admissible dictionary atom.

    Returns ``(projected, solution)`` where column j of ``projected`` is the
    raw (un-normalized) atom column selected for column j. The two-stage
    solve (dictionary assignment, then per-dictionary atom matching) is
    optimal whenever no two columns collide on the same atom; on a collision
    the result is re-checked against a bounded exact search over labelings
    and replaced if that search finds a strictly cheaper solution.
    """
    a = as_matrix(proxy, "proxy")
    table = build_cost(a, dicts, metric)
    labels = assign_dictionaries(table, constraints)
    sol = resolve_atoms(table, labels)

    r = a.shape[1]
    stage_cost = float(sum(table.dict_costs[labels[j], j] for j in range(r)))
    if sol.total_cost > stage_cost + 1e-12 * (1.0 + abs(stage_cost)):
        exact = _exact_joint_solution(table, constraints)
        if exact is not None and exact.total_cost < sol.total_cost:
            sol = exact

    projected = np.column_stack(
        [
            dicts[sol.column_to_dict[j]].atoms[:, sol.column_to_atom[j]]
            for j in range(r)
        ]
    )
    return projected, sol


def _exact_joint_solution(cost_table, constraints, limit=_EXACT_SEARCH_LIMIT):
    """Exact minimum over feasible labelings, or None if the search is too large.

    Enumerates column-to-dictionary labelings in lexicographic order and
    scores each with the optimal per-dictionary atom matching, so atom
    distinctness is accounted for exactly.
    """
    p, r = cost_table.dict_costs.shape
    caps = np.empty(p, dtype=np.intp)
    needs = np.zeros(p, dtype=np.intp)
    for i, cons in enumerate(constraints):
        d_i = cost_table.per_atom_costs[i].shape[0]
        if cons.kind == "exact":
            caps[i] = cons.count
            needs[i] = cons.count
        else:
            caps[i] = min(cons.count, d_i, r)
    col_min = cost_table.dict_costs.min(axis=0)  # lower bound per column

    best = {"labels": None, "value": np.inf}
    visited = [0]
    labels = np.zeros(r, dtype=np.intp)
    used = np.zeros(p, dtype=np.intp)

    def score(full_labels):
        value = 0.0
        for i in range(p):
            cols = np.flatnonzero(full_labels == i)
            if cols.size == 0:
                continue
            value += _optimal_value(cost_table.per_atom_costs[i][:, cols].T)
        return value

    def dfs(j, partial):
        if visited[0] > limit:
            return
        if j == r:
            visited[0] += 1
            value = score(labels)
            if value < best["value"]:
                best["value"] = value
                best["labels"] = labels.copy()
            return
        remaining = r - j
        lower_rest = float(col_min[j + 1 :].sum()) if j + 1 < r else 0.0
        for i in range(p):
            if used[i] >= caps[i]:
                continue
            deficit = int(np.maximum(needs - used, 0).sum())
            deficit -= 1 if used[i] < needs[i] else 0
            if deficit > remaining - 1:
                continue
            cand = partial + cost_table.dict_costs[i, j]
            if cand + lower_rest >= best["value"]:
                # dict_costs underestimates collision repairs, so this only
                # prunes provably-worse branches.
                continue
            labels[j] = i
            used[i] += 1
            dfs(j + 1, cand)
            used[i] -= 1
        labels[j] = 0

    dfs(0, 0.0)
    if best["labels"] is None or visited[0] > limit:
        return None
    return resolve_atoms(cost_table, best["labels"])
