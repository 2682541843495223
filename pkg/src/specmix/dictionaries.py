"""Spectral dictionaries, count constraints, and their normalization.

A problem instance is a list of dictionaries (banks of candidate spectra)
plus one count constraint per dictionary. Lower-bound ("at least") counts
are reduced to exact counts by appending one augmented dictionary that
concatenates all banks and absorbs the slack, after which only exact and
at-most counts remain.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, Infeasible, ParseError
from .linalg import as_matrix

CONSTRAINT_KINDS = ("exact", "at_most", "at_least")

SOURCE_TAGS = ("external-library", "image-region", "augmented")


@dataclass
class CountConstraint:
    """How many atoms must/may be selected from one dictionary."""

    kind: str
    count: int

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ValueError(f"kind must be one of {CONSTRAINT_KINDS}, got {self.kind!r}")
        if self.count < 0:
            raise ValueError("count must be nonnegative")


@dataclass
class Dictionary:
    """A named bank of spectral atoms (one atom per column).

    atom_refs optionally records where each atom came from: an image column
    index, or a (row, col) pixel pair for region dictionaries. Augmented
    dictionaries keep the ids and column ranges of their sources so picks
    can be attributed back by position.
    """

    id: str
    name: str
    atoms: np.ndarray
    source: str = "external-library"
    source_ids: tuple = ()
    source_ranges: tuple = ()
    atom_refs: list | None = None
    atom_labels: list | None = None

    def __post_init__(self):
        self.atoms = as_matrix(self.atoms, f"atoms of dictionary {self.id!r}")
        if self.source not in SOURCE_TAGS:
            raise ValueError(f"source must be one of {SOURCE_TAGS}, got {self.source!r}")
        if self.source == "augmented" and not self.source_ids:
            raise ValueError("augmented dictionaries must record their source ids")
        for name, seq in (("atom_refs", self.atom_refs), ("atom_labels", self.atom_labels)):
            if seq is not None and len(seq) != self.atoms.shape[1]:
                raise DimensionMismatch(
                    f"{name} has {len(seq)} entries for {self.atoms.shape[1]} atoms"
                )

    @property
    def size(self):
        return self.atoms.shape[1]


@dataclass
class RegionSpec:
    """An axis-aligned image rectangle expected to contain pure pixels."""

    rect: tuple  # (row0, col0, height, width)
    count_constraint: CountConstraint
    label: str = ""

    def __post_init__(self):
        if len(self.rect) != 4:
            raise ValueError("rect must be (row0, col0, height, width)")
        r0, c0, h, w = (int(v) for v in self.rect)
        if r0 < 0 or c0 < 0 or h < 1 or w < 1:
            raise ValueError(f"invalid rect {self.rect}")
        self.rect = (r0, c0, h, w)


@dataclass
class ProblemReport:
    """Feasibility report; ``ok`` is False when ``problems`` is non-empty."""

    ok: bool
    problems: list = field(default_factory=list)

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.problems)


def lower_bound(cons):
    """Number of selections a constraint forces (exact and at-least counts)."""
    return cons.count if cons.kind in ("exact", "at_least") else 0


def selectable(cons, dict_size):
    """Maximum selections a constraint admits from a dictionary of given size."""
    if cons.kind == "exact":
        return cons.count
    if cons.kind == "at_most":
        return min(cons.count, dict_size)
    return dict_size  # at_least: anything above the bound, up to the bank size


def normalize_constraints(dicts, constraints, rank):
    """Reduce lower-bound constraints to exact/at-most form.

    Every ``at_least(c)`` becomes ``exact(c)`` on its dictionary, and one
    shared augmented dictionary (the horizontal concatenation of all banks)
    is appended with an exact count equal to the leftover
    ``rank - sum(lower bounds)``. Inputs that already contain only exact and
    at-most constraints pass through unchanged, which makes the operation
    idempotent.
    """
    if len(dicts) != len(constraints):
        raise DimensionMismatch(
            f"{len(dicts)} dictionaries but {len(constraints)} constraints"
        )
    if rank < 1:
        raise ValueError("rank must be >= 1")
    _check_counts_fit(dicts, constraints)

    lower_total = sum(lower_bound(c) for c in constraints)
    if lower_total > rank:
        raise Infeasible(
            f"lower bounds sum to {lower_total}, exceeding rank {rank}"
        )
    has_lower = any(c.kind == "at_least" for c in constraints)
    if not has_lower:
        exact_total = sum(c.count for c in constraints if c.kind == "exact")
        if all(c.kind == "exact" for c in constraints) and exact_total != rank:
            raise Infeasible(
                f"exact counts sum to {exact_total} != rank {rank} and no "
                "slack constraint exists"
            )
        capacity = sum(selectable(c, d.size) for d, c in zip(dicts, constraints))
        if capacity < rank:
            raise Infeasible(
                f"constraints admit at most {capacity} selections for rank {rank}"
            )
        return list(dicts), list(constraints)

    out_cons = [
        CountConstraint("exact", c.count) if c.kind == "at_least" else c
        for c in constraints
    ]
    out_dicts = list(dicts)
    slack = rank - lower_total
    if slack > 0:
        union = concat_dictionaries(dicts)
        if slack > union.size:
            raise Infeasible(
                f"slack {slack} exceeds the {union.size} atoms available in total"
            )
        out_dicts.append(union)
        out_cons.append(CountConstraint("exact", slack))
    return out_dicts, out_cons


def _check_counts_fit(dicts, constraints):
    for d, c in zip(dicts, constraints):
        if c.kind in ("exact", "at_least") and c.count > d.size:
            raise Infeasible(
                f"dictionary {d.id!r}: {c.kind} count {c.count} exceeds its "
                f"{d.size} atoms"
            )


def concat_dictionaries(dicts, id="union", name="union of all dictionaries"):
    """Horizontal concatenation of dictionaries, keeping per-source ranges."""
    ranges = []
    start = 0
    refs = []
    have_refs = all(d.atom_refs is not None for d in dicts)
    for d in dicts:
        ranges.append((d.id, start, start + d.size))
        start += d.size
        if have_refs:
            refs.extend(d.atom_refs)
    return Dictionary(
        id=id,
        name=name,
        atoms=np.hstack([d.atoms for d in dicts]),
        source="augmented",
        source_ids=tuple(d.id for d in dicts),
        source_ranges=tuple(ranges),
        atom_refs=refs if have_refs else None,
    )


def attribute_atom(d, atom_index):
    """Map an atom pick back to (source dictionary id, source atom index).

    For augmented dictionaries attribution is by column position within the
    concatenation, not by value.
    """
    if d.source != "augmented":
        return d.id, int(atom_index)
    for sid, start, stop in d.source_ranges:
        if start <= atom_index < stop:
            return sid, int(atom_index - start)
    raise IndexError(f"atom {atom_index} outside dictionary {d.id!r}")


def picks_by_source(dicts, solution):
    """Count selections per original dictionary id, mapping augmented picks back."""
    counts = {}
    for j in range(len(solution.column_to_dict)):
        d = dicts[solution.column_to_dict[j]]
        sid, _ = attribute_atom(d, solution.column_to_atom[j])
        counts[sid] = counts.get(sid, 0) + 1
    return counts


def from_regions(cube, regions):
    """Build one dictionary per image region.

    The atoms of each dictionary are the spectra of all pixels inside the
    rectangle, in row-major scan order, with the pixel coordinate of every
    atom retained in ``atom_refs``.
    """
    dicts = []
    constraints = []
    for k, spec in enumerate(regions):
        r0, c0, h, w = spec.rect
        if r0 + h > cube.height or c0 + w > cube.width:
            raise DimensionMismatch(
                f"region {spec.label or k}: rect {spec.rect} exceeds image "
                f"{cube.height}x{cube.width}"
            )
        if spec.count_constraint.kind in ("exact", "at_least") and (
            spec.count_constraint.count > h * w
        ):
            raise Infeasible(
                f"region {spec.label or k}: count {spec.count_constraint.count} "
                f"exceeds its {h * w} pixels"
            )
        coords = [(r0 + dr, c0 + dc) for dr in range(h) for dc in range(w)]
        atoms = np.column_stack([cube.data[:, row, col] for row, col in coords])
        label = spec.label or f"region-{k}"
        dicts.append(
            Dictionary(
                id=f"region-{k}",
                name=label,
                atoms=atoms,
                source="image-region",
                atom_refs=coords,
            )
        )
        constraints.append(spec.count_constraint)
    return dicts, constraints


def validate_problem(dicts, constraints, rank):
    """Check an instance for structural feasibility without raising."""
    problems = []
    if len(dicts) != len(constraints):
        problems.append(
            f"{len(dicts)} dictionaries but {len(constraints)} constraints"
        )
        return ProblemReport(False, problems)
    if not dicts:
        problems.append("no dictionaries given")
        return ProblemReport(False, problems)
    rows = dicts[0].atoms.shape[0]
    for d in dicts:
        if d.atoms.shape[0] != rows:
            problems.append(
                f"dictionary {d.id!r} has {d.atoms.shape[0]} bands, expected {rows}"
            )
    for d, c in zip(dicts, constraints):
        if c.kind in ("exact", "at_least") and c.count > d.size:
            problems.append(
                f"dictionary {d.id!r}: {c.kind} count {c.count} exceeds its {d.size} atoms"
            )
    lower_total = sum(lower_bound(c) for c in constraints)
    if lower_total > rank:
        problems.append(f"lower bounds sum to {lower_total} > rank {rank}")
    capacity = sum(selectable(c, d.size) for d, c in zip(dicts, constraints))
    has_slack = any(c.kind != "exact" for c in constraints)
    if not has_slack and capacity != rank:
        problems.append(f"exact counts sum to {capacity} != rank {rank}")
    elif capacity < rank:
        problems.append(f"constraints admit at most {capacity} selections for rank {rank}")
    return ProblemReport(not problems, problems)


# ---------------------------------------------------------------------------
# File formats: dictionary = CSV (one atom per column, optional label row)
# with a JSON sidecar; regions = a JSON array.


def constraint_to_json(cons):
    return {"kind": cons.kind, "count": cons.count}


def constraint_from_json(obj):
    try:
        return CountConstraint(str(obj["kind"]), int(obj["count"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad constraint object {obj!r}: {exc}") from exc


def save_regions(path, regions):
    payload = [
        {
            "rect": list(spec.rect),
            "constraint": constraint_to_json(spec.count_constraint),
            "label": spec.label,
        }
        for spec in regions
    ]
    from .hsio import write_text_atomic

    write_text_atomic(path, json.dumps(payload, indent=2) + "\n")


def load_regions(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise ParseError(f"{path}: expected a JSON array of regions")
    regions = []
    for k, obj in enumerate(payload):
        try:
            rect = tuple(int(v) for v in obj["rect"])
            cons = constraint_from_json(obj["constraint"])
            label = str(obj.get("label", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad region #{k}: {exc}") from exc
        regions.append(RegionSpec(rect=rect, count_constraint=cons, label=label))
    return regions


def save_dictionary(path, d, constraint=None):
    """Write a dictionary as CSV (one atom per column) plus a JSON sidecar."""
    from .hsio import sidecar_path, write_text_atomic

    buf = io.StringIO()
    writer = csv.writer(buf)
    labels = d.atom_labels or [f"atom-{k}" for k in range(d.size)]
    writer.writerow(labels)
    for row in d.atoms:
        writer.writerow([repr(float(v)) for v in row])
    write_text_atomic(path, buf.getvalue())

    meta = {"id": d.id, "name": d.name, "source": d.source}
    if d.atom_refs is not None:
        meta["pixel_coords"] = [_ref_to_pixel(ref) for ref in d.atom_refs]
    if constraint is not None:
        meta["constraint"] = constraint_to_json(constraint)
    write_text_atomic(sidecar_path(path), json.dumps(meta, indent=2) + "\n")


def _ref_to_pixel(ref):
    if isinstance(ref, (tuple, list)):
        return [int(ref[0]), int(ref[1])]
    return [0, int(ref)]  # bare column index: single-row image convention


def load_dictionary(path, default_id=None):
    """Read a dictionary CSV and its JSON sidecar.

    Returns ``(dictionary, constraint_or_None)``. The first CSV row is
    treated as atom labels when it is not numeric.
    """
    from .hsio import sidecar_path

    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [row for row in rows if row]
    if not rows:
        raise ParseError(f"{path}: empty dictionary file")
    labels = None
    if not _is_numeric_row(rows[0]):
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    try:
        atoms = np.array([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric entry: {exc}") from exc
    if not np.all(np.isfinite(atoms)):
        raise ParseError(f"{path}: non-finite entries rejected")

    meta = {}
    sc = sidecar_path(path)
    try:
        with open(sc, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    except json.JSONDecodeError as exc:
        raise ParseError(f"{sc}: not valid JSON: {exc}") from exc

    refs = None
    if "pixel_coords" in meta:
        refs = [tuple(int(v) for v in pc) for pc in meta["pixel_coords"]]
    constraint = None
    if "constraint" in meta:
        constraint = constraint_from_json(meta["constraint"])
    d = Dictionary(
        id=str(meta.get("id", default_id or path)),
        name=str(meta.get("name", default_id or path)),
        atoms=atoms,
        source=str(meta.get("source", "external-library")),
        atom_refs=refs,
        atom_labels=labels,
    )
    return d, constraint


def _is_numeric_row(row):
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True
