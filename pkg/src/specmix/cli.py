"""Command-line interface: unmix, bench, and synth subcommands.

Exit codes: 0 success, 1 infeasible constraints, 2 parse/usage errors.
"""

import argparse
import json
import os
import sys

import numpy as np

from .dictionaries import (
    CountConstraint,
    Dictionary,
    attribute_atom,
    from_regions,
    load_dictionary,
    load_regions,
    save_dictionary,
)
from .errors import Infeasible, ParseError, UnmixError
from .hsio import (
    HsiCube,
    cube_to_matrix,
    load_hsi,
    pixel_of,
    save_hsi,
    write_json_atomic,
    write_text_atomic,
)
from .linalg import SolverOptions
from .m2pals import M2palsOptions, m2pals
from .synthbench import (
    BenchConfig,
    build_pure_dictionaries,
    default_endmembers,
    generate_synthetic,
    records_to_jsonl,
    run_benchmark,
    summary_to_csv,
)

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_PARSE = 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="specmix", description="spectral unmixing with multiple dictionaries"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_unmix = sub.add_parser("unmix", help="unmix an HSI cube")
    p_unmix.add_argument("--image", required=True, help="cube file (csv or raw + sidecar)")
    src = p_unmix.add_mutually_exclusive_group()
    src.add_argument("--regions", help="region JSON file defining pure-pixel areas")
    src.add_argument("--dicts", nargs="+", help="dictionary CSV files")
    p_unmix.add_argument("--r", type=int, required=True, help="number of endmembers")
    p_unmix.add_argument("--metric", choices=["euclid", "nip", "mrsa"], default="nip")
    p_unmix.add_argument("--nonneg", action="store_true", help="nonnegative abundances")
    p_unmix.add_argument("--max-iter", type=int, default=50)
    p_unmix.add_argument("--tol", type=float, default=1e-5)
    p_unmix.add_argument("--seed", type=int, default=0)
    p_unmix.add_argument("--out", required=True, help="output directory")
    p_unmix.set_defaults(func=cmd_unmix)

    p_bench = sub.add_parser("bench", help="run the synthetic miss-selection benchmark")
    p_bench.add_argument("--snr", required=True, help="comma-separated SNR values in dB")
    p_bench.add_argument("--trials", type=int, default=20)
    p_bench.add_argument("--n", type=int, default=200)
    p_bench.add_argument("--r", type=int, default=6)
    p_bench.add_argument("--dict-sizes", default="1,10,25,50",
                         help="sizes expanded for a bare 'm2pnals' entry")
    p_bench.add_argument("--algorithms", required=True,
                         help="comma-separated: spa, mpnals, m2pnals-<size>")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--endmembers", help="CSV of endmember spectra (one per column)")
    p_bench.add_argument("--out", default=".", help="output directory")
    p_bench.set_defaults(func=cmd_bench)

    p_synth = sub.add_parser("synth", help="emit one synthetic instance to files")
    p_synth.add_argument("--n", type=int, default=200)
    p_synth.add_argument("--snr", type=float, default=30.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--dict-size", type=int, default=10)
    p_synth.add_argument("--endmembers", help="CSV of endmember spectra (one per column)")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.report is not None:
            for problem in exc.report.problems:
                print(f"  - {problem}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except UnmixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


def _load_endmember_csv(path):
    try:
        w = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return w


def cmd_unmix(args):
    cube = load_hsi(args.image)
    data = cube_to_matrix(cube)
    if args.regions:
        regions = load_regions(args.regions)
        dicts, constraints = from_regions(cube, regions)
    elif args.dicts:
        dicts = []
        constraints = []
        for k, path in enumerate(args.dicts):
            d, cons = load_dictionary(path, default_id=f"dict-{k}")
            if cons is None:
                # No constraint in the sidecar: allow anything up to the bank size.
                cons = CountConstraint("at_most", min(d.size, args.r))
            dicts.append(d)
            constraints.append(cons)
    else:
        # Pure-pixel mode: the image itself is the dictionary.
        coords = [pixel_of(j, cube.width) for j in range(cube.height * cube.width)]
        dicts = [
            Dictionary(
                id="self",
                name="image pixels",
                atoms=data,
                source="image-region",
                atom_refs=coords,
            )
        ]
        constraints = [CountConstraint("exact", args.r)]

    opts = M2palsOptions(
        max_iterations=args.max_iter,
        rel_change_tol=args.tol,
        nonnegative_b=args.nonneg,
        metric=args.metric,
        rng_seed=args.seed,
        solver=SolverOptions(),
    )
    result = m2pals(data, dicts, constraints, args.r, opts)

    os.makedirs(args.out, exist_ok=True)
    _write_endmembers(os.path.join(args.out, "endmembers.csv"), result)
    _write_abundances(os.path.join(args.out, "abundances.raw"), result, cube)
    write_json_atomic(
        os.path.join(args.out, "selection.json"), _selection_payload(result)
    )
    write_json_atomic(
        os.path.join(args.out, "report.json"),
        {
            "relative_error": result.relative_error,
            "iterations": result.iterations,
            "converged": result.converged,
            "residual_history": result.residual_history,
        },
    )
    return EXIT_OK


def _write_endmembers(path, result):
    sel = result.selection
    labels = []
    for j in range(result.a.shape[1]):
        d = result.dictionaries[sel.column_to_dict[j]]
        labels.append(f"{d.id}:{int(sel.column_to_atom[j])}")
    lines = [",".join(labels)]
    for row in result.a:
        lines.append(",".join(repr(float(v)) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")


def _write_abundances(path, result, cube):
    maps = HsiCube(
        cube.height,
        cube.width,
        result.b.shape[1],
        result.b.T.reshape(result.b.shape[1], cube.height, cube.width),
    )
    save_hsi(maps, path, format="raw")


def _selection_payload(result):
    sel = result.selection
    rows = []
    for j in range(len(sel.column_to_dict)):
        d = result.dictionaries[sel.column_to_dict[j]]
        atom = int(sel.column_to_atom[j])
        source_id, source_atom = attribute_atom(d, atom)
        entry = {
            "column": j,
            "dictionary": d.id,
            "atom": atom,
            "source_dictionary": source_id,
            "source_atom": source_atom,
            "pixel": None,
            "label": d.name,
        }
        if d.atom_refs is not None:
            ref = d.atom_refs[atom]
            if isinstance(ref, (tuple, list)):
                entry["pixel"] = [int(ref[0]), int(ref[1])]
            else:
                entry["pixel"] = [0, int(ref)]
        rows.append(entry)
    return {"selected": rows, "total_cost": sel.total_cost}


def _parse_float_list(text, flag):
    values = [v.strip() for v in text.split(",") if v.strip()]
    if not values:
        raise ParseError(f"{flag} must list at least one value")
    try:
        return [float(v) for v in values]
    except ValueError as exc:
        raise ParseError(f"{flag}: {exc}") from exc


def cmd_bench(args):
    snr_grid = _parse_float_list(args.snr, "--snr")
    sizes = [int(v) for v in _parse_float_list(args.dict_sizes, "--dict-sizes")]
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if not algorithms:
        raise ParseError("--algorithms must list at least one algorithm")
    cfg = BenchConfig(
        snr_grid=snr_grid,
        n_trials=args.trials,
        n=args.n,
        r=args.r,
        dict_size_grid=sizes,
        algorithms=algorithms,
        base_seed=args.seed,
    )
    if args.endmembers:
        w = _load_endmember_csv(args.endmembers)
    else:
        w = default_endmembers(count=args.r)
    result = run_benchmark(cfg, w)
    os.makedirs(args.out, exist_ok=True)
    write_text_atomic(os.path.join(args.out, "rates.csv"), summary_to_csv(result.summary))
    write_text_atomic(
        os.path.join(args.out, "trials.jsonl"), records_to_jsonl(result.records)
    )
    sys.stdout.write(summary_to_csv(result.summary))
    return EXIT_OK


def cmd_synth(args):
    if args.endmembers:
        w = _load_endmember_csv(args.endmembers)
    else:
        w = default_endmembers()
    inst = generate_synthetic(w, args.n, args.snr, args.seed)
    os.makedirs(args.out, exist_ok=True)

    cube = HsiCube(1, args.n, w.shape[0], inst.data.reshape(w.shape[0], 1, args.n))
    save_hsi(cube, os.path.join(args.out, "image.raw"), format="raw")

    lines = [",".join(repr(float(v)) for v in row) for row in inst.endmembers]
    write_text_atomic(os.path.join(args.out, "endmembers.csv"), "\n".join(lines) + "\n")
    write_json_atomic(
        os.path.join(args.out, "truth.json"),
        {
            "pure_indices": [int(i) for i in inst.pure_indices],
            "snr_db": inst.snr_db,
            "seed": inst.seed,
            "n": args.n,
        },
    )
    dicts, constraints = build_pure_dictionaries(inst, args.dict_size, args.seed)
    for d, cons in zip(dicts, constraints):
        save_dictionary(os.path.join(args.out, f"{d.id}.csv"), d, constraint=cons)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
