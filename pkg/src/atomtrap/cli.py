"""Command-line front end.

Subcommands: simulate, analyze, classify, fit, validate-seq. Exit codes:
0 success, 1 usage error, 2 data error (unreadable/invalid input files,
non-converging fits, sequence violations).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .analysis import (
    FitError,
    classify_burst,
    detect_steps,
    fit_exponential_survival,
    fit_relaxation,
    fit_relaxation_joint,
    infer_atom_numbers,
)
from .runner import ConfigError, export_dataset, load_config, run_experiment
from .sequence import DIPOLE_HOLD, MOT_OPERATION, sequence_from_csv, validate_sequence
from .signals import BurstModel, DetectorModel, PhotonTrace

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _build_parser() -> _Parser:
    parser = _Parser(prog="atomtrap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--out", default=None,
                       help="output directory (simulate) or file (other commands)")
        p.add_argument("--format", choices=("csv", "json", "both"), default="both",
                       help="export format for datasets")

    p = sub.add_parser("simulate", help="run a configured experiment and export the dataset")
    p.add_argument("config", help="INI experiment configuration file")
    add_common(p)

    p = sub.add_parser("analyze", help="change-point segmentation of a photon trace CSV")
    p.add_argument("trace", help="photon trace CSV (header: bin_start_s,counts)")
    p.add_argument("--penalty", type=float, default=None,
                   help="log-likelihood penalty per change point (default 1.5*ln(n))")
    p.add_argument("--per-atom-rate", type=float, default=1.6e4)
    p.add_argument("--background-rate", type=float, default=5e3)
    add_common(p)

    p = sub.add_parser("classify", help="posterior over bright atoms in a detection window")
    p.add_argument("counts", type=int, help="photon counts in the detection window")
    p.add_argument("--atoms", type=int, required=True, help="number of atoms in the trap")
    p.add_argument("--mean-photons", type=float, default=3.0)
    p.add_argument("--background", type=float, default=0.5)
    add_common(p)

    p = sub.add_parser("fit", help="maximum-likelihood fit of a dataset CSV")
    p.add_argument("data", nargs="+",
                   help="CSV file(s); survival: t_s,survived,total; relaxation: t_s,p4,n; "
                        "two relaxation files (F=3 then F=4) select the joint fit")
    p.add_argument("--model", choices=("survival", "relaxation"), required=True)
    p.add_argument("--offset-free", action="store_true",
                   help="fit the survival amplitude instead of pinning it to 1")
    p.add_argument("--f-initial", type=int, choices=(3, 4), default=None,
                   help="prepared state for a single-arm relaxation fit")
    p.add_argument("--bootstrap", type=int, default=0,
                   help="number of parametric bootstrap resamples")
    add_common(p)

    p = sub.add_parser("validate-seq", help="check a switching-sequence CSV for violations")
    p.add_argument("sequence", help="sequence CSV (header: time_s,channel,state)")
    p.add_argument("--initial-state", choices=("mot", "hold"), default="mot")
    add_common(p)

    return parser


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_fit_csv(path: str, header: list[str]):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != header:
        raise ValueError(f"{path}: expected header '{','.join(header)}'")
    return [tuple(float(x) for x in row) for row in rows[1:] if row]


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    ds = run_experiment(cfg)
    formats = ("csv", "json") if args.format == "both" else (args.format,)
    out_dir = args.out if args.out is not None else cfg.output_dir
    for path in export_dataset(ds, out_dir, formats=formats):
        print(path)
    return 0


def _cmd_analyze(args) -> int:
    trace = PhotonTrace.from_csv(args.trace)
    seg = detect_steps(trace, penalty=args.penalty)
    det = DetectorModel(per_atom_rate=args.per_atom_rate,
                        background_rate=args.background_rate,
                        bin_width=trace.bin_width)
    infer_atom_numbers(seg, det)
    rec = {
        "n_bins": seg.n_bins,
        "bin_width_s": seg.bin_width,
        "change_points": seg.change_points,
        "levels_per_s": seg.levels,
        "inferred_n": seg.inferred_n,
        "ambiguous": seg.ambiguous,
    }
    _write_or_print(json.dumps(rec, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_classify(args) -> int:
    if args.counts < 0 or args.atoms < 0:
        raise ValueError("counts and atoms must be non-negative")
    model = BurstModel(mean_photons_per_atom=args.mean_photons,
                       background_photons_per_window=args.background)
    cl = classify_burst(args.counts, args.atoms, model)
    rec = {
        "n_atoms": cl.n_atoms,
        "posterior": [float(p) for p in cl.posterior],
        "map_bright_atoms": cl.map_k,
    }
    if cl.n_atoms == 1:
        rec["map_state"] = cl.map_state
    _write_or_print(json.dumps(rec, sort_keys=True, indent=2) + "\n", args.out)
    return 0


def _cmd_fit(args) -> int:
    if args.model == "survival":
        if len(args.data) != 1:
            raise ValueError("the survival model takes exactly one data file")
        pts = _read_fit_csv(args.data[0], ["t_s", "survived", "total"])
        fit = fit_exponential_survival(
            [(t, int(s), int(n)) for t, s, n in pts],
            offset_free=args.offset_free,
            bootstrap=args.bootstrap,
        )
    elif len(args.data) == 1:
        if args.f_initial is None:
            raise ValueError("a single-arm relaxation fit needs --f-initial {3,4}")
        pts = _read_fit_csv(args.data[0], ["t_s", "p4", "n"])
        fit = fit_relaxation([(t, p, int(n)) for t, p, n in pts],
                             f_initial=args.f_initial, bootstrap=args.bootstrap)
    elif len(args.data) == 2:
        p3 = _read_fit_csv(args.data[0], ["t_s", "p4", "n"])
        p4 = _read_fit_csv(args.data[1], ["t_s", "p4", "n"])
        fit = fit_relaxation_joint([(t, p, int(n)) for t, p, n in p3],
                                   [(t, p, int(n)) for t, p, n in p4],
                                   bootstrap=args.bootstrap)
    else:
        raise ValueError("the relaxation model takes one or two data files")
    _write_or_print(fit.to_json() + "\n", args.out)
    return 0


def _cmd_validate_seq(args) -> int:
    initial = MOT_OPERATION if args.initial_state == "mot" else DIPOLE_HOLD
    seq = sequence_from_csv(args.sequence, initial_state=initial)
    violations = validate_sequence(seq)
    rec = {
        "valid": not violations,
        "violations": [
            {"code": v.code, "time_s": v.time, "message": v.message} for v in violations
        ],
    }
    _write_or_print(json.dumps(rec, sort_keys=True, indent=2) + "\n", args.out)
    return 0 if not violations else DATA_EXIT


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "analyze": _cmd_analyze,
        "classify": _cmd_classify,
        "fit": _cmd_fit,
        "validate-seq": _cmd_validate_seq,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FitError, OSError, ValueError) as exc:
        print(f"atomtrap: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
