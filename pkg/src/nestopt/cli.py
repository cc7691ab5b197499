"""Command-line driver.

Subcommands:

    optimize <in> --pass dme [--pass bankmap] [--mode global|local]
             [--banks B] [--anchors file] -o <out> [--report <json>]
    verify <a> <b> [--trials N] [--seed S]
    report <in> [--json <out>] [--count-all-onchip] [--interbank-via-dram]
    gen wavenet <pairs> <non_invertible> [--seed S] -o <out>
    gen resnet <blocks> <transposes> [--seed S] -o <out>

Exit status: 0 success, 1 diagnostics (invalid program, non-equivalence),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bankmap import AnchorRegistry, run_global_mapping, run_local_baseline
from .dme import run_dme
from .generators import generate_resnet_analog, generate_wavenet_analog
from .interp import equivalent
from .ir import Program, validate
from .report import bankmap_pass_entry, build_document, dme_pass_entry
from .textual import ParseError, parse, print_program
from .traffic import account


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestopt")
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="run optimization passes over a program")
    opt.add_argument("input", type=Path)
    opt.add_argument(
        "--pass",
        dest="passes",
        action="append",
        choices=["dme", "bankmap"],
        required=True,
        help="pass to run; may be repeated to form a pipeline",
    )
    opt.add_argument("--mode", choices=["global", "local"], default="global")
    opt.add_argument("--banks", type=int, default=None)
    opt.add_argument("--anchors", type=Path, default=None, help="anchor registry JSON")
    opt.add_argument("--count-all-onchip", action="store_true")
    opt.add_argument("--interbank-via-dram", action="store_true")
    opt.add_argument("-o", "--output", type=Path, required=True)
    opt.add_argument("--report", type=Path, default=None)

    ver = sub.add_parser("verify", help="check two programs for behavioural equivalence")
    ver.add_argument("left", type=Path)
    ver.add_argument("right", type=Path)
    ver.add_argument("--trials", type=int, default=5)
    ver.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("report", help="traffic accounting for one program")
    rep.add_argument("input", type=Path)
    rep.add_argument("--json", dest="json_out", type=Path, default=None)
    rep.add_argument("--count-all-onchip", action="store_true")
    rep.add_argument("--interbank-via-dram", action="store_true")

    gen = sub.add_parser("gen", help="generate a benchmark program")
    gen_sub = gen.add_subparsers(dest="benchmark", required=True)
    gw = gen_sub.add_parser("wavenet", help="copy-chain analog")
    gw.add_argument("pairs", type=int)
    gw.add_argument("non_invertible", type=int)
    gw.add_argument("--seed", type=int, default=0)
    gw.add_argument("-o", "--output", type=Path, required=True)
    gr = gen_sub.add_parser("resnet", help="anchored-block analog")
    gr.add_argument("blocks", type=int)
    gr.add_argument("transposes", type=int)
    gr.add_argument("--seed", type=int, default=0)
    gr.add_argument("-o", "--output", type=Path, required=True)
    return parser


def _load_program(path: Path) -> Program:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SystemExit(f"nestopt: cannot read {path}: {exc.strerror}")
    try:
        program = parse(text)
    except ParseError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        raise _Diagnostic()
    violations = validate(program)
    if violations:
        for v in violations:
            print(f"{path}: {v}", file=sys.stderr)
        raise _Diagnostic()
    return program


class _Diagnostic(Exception):
    pass


def _cmd_optimize(args) -> int:
    program = _load_program(args.input)
    registry = (
        AnchorRegistry.from_file(args.anchors, args.banks)
        if args.anchors is not None
        else AnchorRegistry.default(args.banks)
    )
    traffic_opts = {
        "count_all_onchip": args.count_all_onchip,
        "interbank_via_dram": args.interbank_via_dram,
    }
    before = account(program, **traffic_opts)
    pipeline = []
    pass_entries = []
    current = program
    eliminated_pairs = 0
    for name in args.passes:
        if name == "dme":
            result = run_dme(current)
            current = result.program
            eliminated_pairs += len(result.eliminated)
            pipeline.append({"pass": "dme"})
            pass_entries.append(dme_pass_entry(result))
        else:
            if args.mode == "global":
                current, _, report = run_global_mapping(current, registry)
            else:
                current, report = run_local_baseline(current, registry)
            pipeline.append({"pass": "bankmap", "options": {"mode": args.mode, "banks": registry.banks}})
            pass_entries.append(bankmap_pass_entry(report, registry.banks))
    violations = validate(current)
    if violations:
        for v in violations:
            print(f"optimized program is invalid: {v}", file=sys.stderr)
        return 1
    after = account(current, **traffic_opts, copy_pairs_eliminated=eliminated_pairs)
    args.output.write_text(print_program(current), encoding="utf-8")
    if args.report is not None:
        doc = build_document(pipeline, pass_entries, before, after)
        args.report.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_verify(args) -> int:
    left = _load_program(args.left)
    right = _load_program(args.right)
    result = equivalent(left, right, trials=args.trials, seed=args.seed)
    if result.equivalent:
        print(f"equivalent: {args.trials} trial(s), seed {args.seed}")
        return 0
    print(f"NOT equivalent: {result.counterexample}", file=sys.stderr)
    return 1


def _cmd_report(args) -> int:
    program = _load_program(args.input)
    report = account(
        program,
        count_all_onchip=args.count_all_onchip,
        interbank_via_dram=args.interbank_via_dram,
    )
    doc = build_document([], [], report, None)
    text = json.dumps(doc, indent=2)
    if args.json_out is not None:
        args.json_out.write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def _cmd_gen(args) -> int:
    if args.benchmark == "wavenet":
        if args.non_invertible > args.pairs or args.pairs < 0:
            print("gen wavenet: need 0 <= non_invertible <= pairs", file=sys.stderr)
            return 2
        program = generate_wavenet_analog(args.pairs, args.non_invertible, args.seed)
    else:
        if args.blocks < 1 or args.transposes < 0:
            print("gen resnet: need blocks >= 1 and transposes >= 0", file=sys.stderr)
            return 2
        program = generate_resnet_analog(args.blocks, args.transposes, args.seed)
    args.output.write_text(print_program(program), encoding="utf-8")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "optimize":
            return _cmd_optimize(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_gen(args)
    except _Diagnostic:
        return 1
    except SystemExit as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
