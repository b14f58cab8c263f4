#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""
Channel Explorer

Converts quantum channels between Kraus, Choi and superoperator form, verifies
complete positivity and trace preservation, simulates and reconstructs process
tomography experiments, and dumps the permutation matrices behind it all.
Documents are JSON (see channel_documents.py); PATH "-" means stdin/stdout.

Usage:
    python channel_explorer.py convert --from kraus --to choi --in channel.json --out choi.json
    python channel_explorer.py verify --in choi.json [--json]
    python channel_explorer.py tomo simulate --scheme spt --in channel.json --out run.json [--shots N] [--seed S]
    python channel_explorer.py tomo reconstruct --in run.json --out superop.json [--pinv]
    python channel_explorer.py dump swap --r 2 --p 3
    python channel_explorer.py dump reshuffle --p 2 --q 2 --r 2 --s 2
    python channel_explorer.py dump bell --d 2
    python channel_explorer.py dump channel depolarizing 2 0.3

Exit codes:
    0  success
    1  verification failed (map is not CP and TP)
    2  bad flags or malformed document
    3  map is not completely positive (Kraus extraction refused)
    4  ill-conditioned input set or ancilla state
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import channels
import tomography
from channel_documents import (CHANNEL_TYPES, DocumentError, TomographyRun, channel_to_document, document_to_channel,
                               document_to_run, document_to_state, matrix_document, read_document,
                               run_to_document, state_document, write_document)
from channels import NotCompletelyPositive
from tomography import IllConditionedSet
from veclib import reshuffle_spec, swap_spec


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_BAD_INPUT = 2
EXIT_NOT_CP = 3
EXIT_ILL_CONDITIONED = 4

DEFAULT_LOG_LEVEL = "WARNING"
DEFAULT_SEED = 0
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger('channel_explorer')


def configure_logging(level_name=DEFAULT_LOG_LEVEL, log_file=None):
    """Configure the root logger: stderr always, plus a log file when asked."""
    level = getattr(logging, level_name.upper(), logging.WARNING)
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


def print_report(report, as_json=False, stream=None):
    stream = stream or sys.stdout
    if as_json:
        stream.write(json.dumps(report.as_dict(), indent=2) + "\n")
    else:
        stream.write(pd.Series(report.as_dict(), dtype=object).to_string() + "\n")


# -----------------------------
# Commands
# -----------------------------

def cmd_convert(args):
    doc = read_document(args.in_path)
    if doc.get("type") != args.source:
        raise DocumentError(f"Document type {doc.get('type')!r} does not match --from {args.source}")
    C = document_to_channel(doc)
    extracting = args.to == "kraus" and args.source != "kraus"
    result = channels.convert(C, args.to, cutoff=args.tol)
    if extracting:
        lam_min = float(channels.eigenvalues(C)[0])
        print(f"lambda_min = {lam_min!r} ({len(result.operators)} Kraus operators)", file=sys.stderr)
    write_document(channel_to_document(result), args.out)
    logger.info(f"Converted {args.source} -> {args.to} (d={C.dim})")
    return EXIT_OK


def cmd_verify(args):
    C = document_to_channel(read_document(args.in_path))
    report = channels.verify_channel(C, tol=args.tol, cp_tol=args.cp_tol)
    print_report(report, as_json=args.json)
    if not report.is_channel:
        logger.warning(f"Not a channel: cp={report.cp}, tp={report.tp}, lambda_min={report.min_eigenvalue!r}")
        return EXIT_VERIFY_FAILED
    return EXIT_OK


def _simulate_run(C, args) -> TomographyRun:
    d = C.dim
    rng = np.random.default_rng(args.seed)
    if args.scheme == "spt":
        tset = tomography.qubit_input_set() if d == 2 else tomography.random_input_set(d, rng)
        if args.measure == "outputs":
            if args.shots is not None:
                logger.warning("--shots is ignored when recording output states")
            return TomographyRun(scheme="spt", dim=d, inputs=tset, outputs=tomography.simulate_outputs(C, tset))
        meas = tomography.tetrahedral_povm() if d == 2 else tomography.random_povm(d, d * d, rng, rank=1)
        probs = tomography.simulate_probs(C, tset, meas, shots=args.shots, seed=args.seed)
        if args.csv:
            Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
            probs.to_frame().to_csv(args.csv)
            logger.info(f"Wrote {probs.kind} table to {args.csv}")
        return TomographyRun(scheme="spt", dim=d, inputs=tset, povm=meas, probabilities=probs)

    if args.shots is not None:
        logger.warning(f"--shots is ignored for {args.scheme}; joint output states are recorded exactly")
    if args.scheme == "aapt":
        d2 = args.ancilla_dim or d
        if args.product:
            tau_in = tomography.product_joint_state(channels.random_density_matrix(d, rng),
                                                    channels.random_density_matrix(d2, rng))
        else:
            tau_in = tomography.random_joint_pure_state(d, d2, rng)
        tau_out = tomography.simulate_joint_output(C, tau_in)
        return TomographyRun(scheme="aapt", dim=d, joint_in=tau_in, joint_out=tau_out)

    tau_out = tomography.simulate_joint_output(C, tomography.maximally_entangled_state(d))
    return TomographyRun(scheme="eapt", dim=d, joint_out=tau_out)


def _reconstruct(run: TomographyRun, args):
    if run.path == "probs":
        duals = tomography.dual_basis(run.inputs, pinv=args.pinv, cond_max=args.cond_max)
        return tomography.spt_from_probs(run.povm, run.probabilities, duals,
                                         cond_max=args.cond_max, pinv=args.pinv)
    if run.path == "outputs":
        return tomography.spt_from_outputs(run.inputs, run.outputs, pinv=args.pinv, cond_max=args.cond_max)
    if run.path == "aapt":
        return tomography.aapt_reconstruct(run.joint_in, run.joint_out, pinv=args.pinv, cond_max=args.cond_max)
    return tomography.eapt_reconstruct(run.joint_out)


def cmd_tomo(args):
    doc = read_document(args.in_path)
    if args.action == "simulate":
        C = document_to_channel(doc)
        run = _simulate_run(C, args)
        write_document(run_to_document(run), args.out)
        logger.info(f"Simulated {run.scheme} run ({run.path}) for d={run.dim}")
        return EXIT_OK

    if doc.get("type") == "state":
        tau = document_to_state(doc)
        run = TomographyRun(scheme="eapt", dim=tau.d1, joint_out=tau)
    else:
        run = document_to_run(doc)
    if args.scheme and args.scheme != run.scheme:
        raise DocumentError(f"Document holds a {run.scheme} run, not --scheme {args.scheme}")
    Phi = _reconstruct(run, args)
    write_document(channel_to_document(Phi), args.out)
    print_report(channels.verify_channel(Phi, tol=args.tol), stream=sys.stderr)
    return EXIT_OK


def _number(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def cmd_dump(args):
    if args.what == "swap":
        doc = matrix_document(swap_spec(args.r, args.p).as_matrix(), "swap", {"r": args.r, "p": args.p})
    elif args.what == "reshuffle":
        params = {"p": args.p, "q": args.q, "r": args.r, "s": args.s}
        doc = matrix_document(reshuffle_spec(args.p, args.q, args.r, args.s).as_matrix(), "reshuffle", params)
    elif args.what == "bell":
        doc = state_document(tomography.maximally_entangled_state(args.d))
    else:
        C = channels.standard_channel(args.name, *(_number(x) for x in args.params))
        doc = channel_to_document(C)
    write_document(doc, args.out)
    return EXIT_OK


# -----------------------------
# Argument parsing
# -----------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--log-level', default=DEFAULT_LOG_LEVEL, choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help=f"Logging level (default: {DEFAULT_LOG_LEVEL})")
    common.add_argument('--log-file', help="Also write log records to this file (e.g. Logs/channel_explorer.log)")

    parser = argparse.ArgumentParser(description="Convert, verify and reconstruct quantum channels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[common], help="Convert a channel between representations")
    p.add_argument('--from', dest="source", required=True, choices=CHANNEL_TYPES)
    p.add_argument('--to', required=True, choices=CHANNEL_TYPES)
    p.add_argument('--in', dest="in_path", default="-", help="Input document (default: stdin)")
    p.add_argument('--out', default="-", help="Output document (default: stdout)")
    p.add_argument('--tol', type=float, default=None,
                   help="Kraus cutoff; eigenvalues at or below it are dropped (default: 1e-12 * tr(D))")
    p.set_defaults(handler=cmd_convert)

    p = sub.add_parser("verify", parents=[common], help="Check CP, TP and unitality")
    p.add_argument('--in', dest="in_path", default="-", help="Input document (default: stdin)")
    p.add_argument('--tol', type=float, default=channels.DEFAULT_TOL,
                   help=f"TP/unital tolerance (default: {channels.DEFAULT_TOL})")
    p.add_argument('--cp-tol', type=float, default=None,
                   help="CP tolerance on lambda_min (default: 1e-10 * tr(D))")
    p.add_argument('--json', action='store_true', help="Print the report as JSON")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("tomo", parents=[common], help="Simulate or reconstruct process tomography")
    p.add_argument('action', choices=["simulate", "reconstruct"])
    p.add_argument('--scheme', choices=["spt", "aapt", "eapt"], default=None,
                   help="Tomography scheme (simulate default: spt; reconstruct: taken from the document)")
    p.add_argument('--in', dest="in_path", default="-",
                   help="simulate: channel document; reconstruct: tomography run or state document")
    p.add_argument('--out', default="-")
    p.add_argument('--shots', type=_positive_int, default=None, help="Sample frequencies with N shots per input")
    p.add_argument('--seed', type=int, default=DEFAULT_SEED, help=f"Random seed (default: {DEFAULT_SEED})")
    p.add_argument('--measure', choices=["probs", "outputs"], default="probs",
                   help="SPT data: POVM probabilities or output states (default: probs)")
    p.add_argument('--ancilla-dim', type=_positive_int, default=None, help="AAPT ancilla dimension (default: d)")
    p.add_argument('--product', action='store_true', help="AAPT with a product joint input state")
    p.add_argument('--csv', default=None, help="Also export the probability table as CSV")
    p.add_argument('--pinv', action='store_true', help="Use pseudo-inverses instead of refusing ill-conditioned data")
    p.add_argument('--cond-max', type=float, default=tomography.CONDITION_LIMIT,
                   help=f"Condition number limit (default: {tomography.CONDITION_LIMIT:g})")
    p.add_argument('--tol', type=float, default=channels.DEFAULT_TOL, help="Tolerance of the verification report")
    p.set_defaults(handler=cmd_tomo)

    p = sub.add_parser("dump", help="Write a permutation matrix, Bell state or standard channel")
    dump = p.add_subparsers(dest="what", required=True)
    q = dump.add_parser("swap", parents=[common])
    q.add_argument('--r', type=_positive_int, required=True)
    q.add_argument('--p', type=_positive_int, required=True)
    q = dump.add_parser("reshuffle", parents=[common])
    for name in "pqrs":
        q.add_argument(f'--{name}', type=_positive_int, required=True)
    q = dump.add_parser("bell", parents=[common])
    q.add_argument('--d', type=_positive_int, required=True)
    q = dump.add_parser("channel", parents=[common])
    q.add_argument('name', choices=sorted(channels.CONSTRUCTORS))
    q.add_argument('params', nargs='*', help="Constructor arguments, e.g. '2 0.3' for depolarizing")
    for q in (dump.choices[name] for name in ("swap", "reshuffle", "bell", "channel")):
        q.add_argument('--out', default="-")
        q.set_defaults(handler=cmd_dump)
    return parser


def main(argv=None):
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    if getattr(args, "action", None) == "simulate" and args.scheme is None:
        args.scheme = "spt"

    try:
        return args.handler(args)
    except DocumentError as e:
        logger.error(f"Bad document: {str(e)}")
        return EXIT_BAD_INPUT
    except NotCompletelyPositive as e:
        logger.error(f"{str(e)} (lambda_min = {e.min_eigenvalue!r})")
        return EXIT_NOT_CP
    except IllConditionedSet as e:
        logger.error(f"{str(e)} (condition number = {e.condition_number:g})")
        return EXIT_ILL_CONDITIONED
    except (ValueError, TypeError) as e:
        logger.error(f"Invalid input: {str(e)}")
        return EXIT_BAD_INPUT
    except OSError as e:
        logger.error(f"I/O error: {str(e)}")
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
