"""Command-line front end.

Every subcommand reads stacks/maps in the JSON + raw format, writes its
products under ``--out <basename>`` and a ``<basename>.manifest.json``
recording the resolved parameters.  Failures print one JSON line on stderr
and exit with 64 (usage), 65 (precondition), 66 (bad input file) or 70
(numerical failure).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, backend, polarimetry, scan, simulator
from .mcv import GAMMA_FLOOR, McvKind, UndefinedEstimate
from .stack import (
    PreconditionError,
    SpeckleStack,
    StackFormatError,
    read_map,
    read_stack,
    slice_channel,
    write_map,
    write_stack,
)

EXIT_OK = 0
EXIT_USAGE = 64
EXIT_PRECONDITION = 65
EXIT_INPUT = 66
EXIT_NUMERIC = 70


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _base(out: str) -> Path:
    path = Path(out)
    return path.with_suffix("") if path.suffix == ".json" else path


def _sibling(base: Path, suffix: str) -> Path:
    return base.with_name(base.name + suffix)


def _read_stack(path) -> SpeckleStack:
    try:
        return read_stack(path)
    except FileNotFoundError as e:
        raise StackFormatError(f"{path}: not found") from e


def _read_map(path):
    try:
        return read_map(path)
    except FileNotFoundError as e:
        raise StackFormatError(f"{path}: not found") from e


def _kind(args) -> McvKind:
    if args.estimator == "single":
        return McvKind.single(args.channel)
    return McvKind(args.estimator)


def _mode(args) -> scan.EstimationMode:
    if args.mode == "spatial":
        return scan.EstimationMode.spatial(args.window, args.frame)
    return scan.EstimationMode.temporal()


def _real_input(stack: SpeckleStack) -> SpeckleStack:
    if stack.kind == "complex":
        raise PreconditionError(
            "input is complex; run `amplitudes` or `stokes` first"
        )
    return stack


# -- subcommands -------------------------------------------------------------
# Each returns (outputs, extra manifest fields).


def cmd_simulate(args):
    sc = simulator.Scenario.load(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
        sc.validate()
    stack = simulator.simulate(sc, threads=args.threads)
    base = _base(args.out)
    outputs = [write_stack(stack, base)]
    change, ps = simulator.ground_truth(sc)
    outputs.append(write_map(change, _sibling(base, "_change_truth")))
    outputs.append(write_map(ps, _sibling(base, "_ps_truth")))
    scenario_copy = _sibling(base, ".scenario.json")
    sc.save(scenario_copy)
    outputs.append(scenario_copy)
    return outputs, {"seed": int(sc.seed)}


def cmd_amplitudes(args):
    stack = _read_stack(args.input)
    out = polarimetry.intensities(stack) if args.squared else polarimetry.amplitudes(stack)
    return [write_stack(out, _base(args.out))], {}


def cmd_stokes(args):
    stack = _read_stack(args.input)
    return [write_stack(polarimetry.to_stokes(stack), _base(args.out))], {}


def cmd_compute(args):
    stack = _real_input(_read_stack(args.input))
    gamma = scan.compute_map(stack, _kind(args), _mode(args), threads=args.threads)
    return [write_map(gamma, _base(args.out))], {"backend": backend.NAME}


def cmd_vmai(args):
    stack = _real_input(_read_stack(args.input))
    vm = scan.compute_vmai_map(
        stack, _kind(args), _mode(args), threads=args.threads, gamma_floor=args.gamma_floor
    )
    return [write_map(vm, _base(args.out))], {"backend": backend.NAME}


def cmd_dop(args):
    stack = _read_stack(args.input)
    if stack.kind == "complex":
        stack = polarimetry.to_stokes(stack)
    return [write_map(polarimetry.temporal_dop(stack), _base(args.out))], {}


def cmd_invdop(args):
    dop = _read_map(args.input)
    inv = polarimetry.inverse_dop(dop, args.dop_floor)
    return [write_map(inv, _base(args.out))], {}


def cmd_reactiv(args):
    stack = _read_stack(args.input)
    if stack.kind == "complex":
        stack = polarimetry.intensities(stack)
    if stack.n_chan > 1:
        stack = slice_channel(stack, args.channel)
    rgb = analysis.reactiv(stack, cv_sat=args.cv_sat, hue_span=args.hue_span)
    path = _sibling(_base(args.out), ".png")
    path.parent.mkdir(parents=True, exist_ok=True)
    analysis.render_rgb_png(rgb, path)
    return [path], {}


def cmd_detect(args):
    smap = _read_map(args.input)
    return [write_map(analysis.detect(smap, args.polarity, args.threshold), _base(args.out))], {}


def cmd_eval(args):
    smap = _read_map(args.input)
    truth = _read_map(args.truth)
    curve = analysis.roc(smap, truth, args.polarity)
    base = _base(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = _sibling(base, ".csv")
    json_path = _sibling(base, ".json")
    curve.write_csv(csv_path)
    curve.write_json(json_path)
    print(f"auc {curve.auc:.6f}")
    return [csv_path, json_path], {"auc": curve.auc}


def cmd_compare(args):
    a, b = (_read_map(p) for p in args.pearson)
    r = analysis.pearson(a, b)
    print(repr(r))
    return [], {"pearson": r}


def cmd_render(args):
    smap = _read_map(args.input)
    path = _sibling(_base(args.out), ".png")
    path.parent.mkdir(parents=True, exist_ok=True)
    analysis.render_png(smap, path, args.stretch)
    return [path], {}


# -- parser ------------------------------------------------------------------


def _positive_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return n


def _u64(text):
    try:
        n = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specklevar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"specklevar {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $SPECKLEVAR_THREADS or logical cores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_text, needs_input=True, needs_out=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if needs_input:
            p.add_argument("--input", required=True, help="input header (.json)")
        if needs_out:
            p.add_argument("--out", required=True, help="output basename")
        p.set_defaults(func=fn)
        return p

    def estimator_flags(p):
        p.add_argument("--estimator", choices=["r", "vv", "vn", "az", "single"], default="vv")
        p.add_argument("--channel", type=int, default=0, help="channel for --estimator single")
        p.add_argument("--mode", choices=["temporal", "spatial"], default="temporal")
        p.add_argument("--window", type=int, default=5, help="odd boxcar size (spatial mode)")
        p.add_argument("--frame", type=int, default=0, help="frame index (spatial mode)")

    p = add("simulate", cmd_simulate, "generate a synthetic stack from a scenario", needs_input=False)
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")

    p = add("amplitudes", cmd_amplitudes, "complex stack -> per-channel amplitudes")
    p.add_argument("--squared", action="store_true", help="emit intensities |E|^2 instead")

    add("stokes", cmd_stokes, "dual-pol complex stack -> Stokes stack")

    p = add("compute", cmd_compute, "estimator map")
    estimator_flags(p)

    p = add("vmai", cmd_vmai, "VMAI (1/gamma^2) map")
    estimator_flags(p)
    p.add_argument("--gamma-floor", type=float, default=GAMMA_FLOOR)

    add("dop", cmd_dop, "temporal degree of polarization map")

    p = add("invdop", cmd_invdop, "depolarization map 1/DOP")
    p.add_argument("--dop-floor", type=float, default=polarimetry.DOP_FLOOR)

    p = add("reactiv", cmd_reactiv, "REACTIV colour change composite (PNG)")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--cv-sat", type=float, default=1.0)
    p.add_argument("--hue-span", type=float, default=300.0)

    p = add("detect", cmd_detect, "threshold a map")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--polarity", choices=["high", "low"], default="high")

    p = add("eval", cmd_eval, "ROC/AUC of a map against a truth map")
    p.add_argument("--truth", required=True)
    p.add_argument("--polarity", choices=["high", "low"], default="high")

    p = add("compare", cmd_compare, "Pearson correlation of two maps",
            needs_input=False, needs_out=False)
    p.add_argument("--pearson", nargs=2, required=True, metavar="MAP")
    p.add_argument("--out", default=None, help="optional basename for the manifest")

    p = add("render", cmd_render, "8-bit grayscale PNG of a map")
    p.add_argument("--stretch", choices=list(analysis.STRETCHES), default="minmax")
    return parser


def _manifest(args, argv, outputs, extra, wall):
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    params["threads"] = args.threads or scan.default_threads()
    return {
        "subcommand": args.command,
        "argv": list(argv),
        "parameters": params,
        "inputs": [p for p in (getattr(args, "input", None), getattr(args, "truth", None),
                               getattr(args, "scenario", None)) if p]
        + list(getattr(args, "pearson", None) or []),
        "outputs": [str(p) for p in outputs],
        "seed": extra.pop("seed", None),
        "version": __version__,
        "wall_time_s": wall,
        **extra,
    }


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(EXIT_USAGE, "usage", str(e))
    start = time.perf_counter()
    try:
        with np.errstate(all="ignore"):
            outputs, extra = args.func(args)
    except (StackFormatError, json.JSONDecodeError, OSError) as e:
        return _fail(EXIT_INPUT, "input", str(e))
    except (UndefinedEstimate, ArithmeticError, np.linalg.LinAlgError) as e:
        return _fail(EXIT_NUMERIC, "numeric", str(e))
    except (PreconditionError, IndexError, ValueError) as e:
        return _fail(EXIT_PRECONDITION, "precondition", str(e))
    wall = time.perf_counter() - start
    out = getattr(args, "out", None)
    if out:
        base = _base(out)
        base.parent.mkdir(parents=True, exist_ok=True)
        with open(_sibling(base, ".manifest.json"), "w") as f:
            json.dump(_manifest(args, argv, outputs, extra, wall), f, indent=2, default=str)
            f.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
