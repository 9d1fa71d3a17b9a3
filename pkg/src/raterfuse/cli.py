"""Command-line front end.

Subcommands: synth, calibrate, baseline, fuse, eval, hq, report.
Exit codes: 0 success, 2 usage, 3 I/O, 4 file format, 5 shape mismatch,
6 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import fileio
from .baselines import (
    StapleConfig,
    empirical_class_prior,
    majority_vote,
    staple,
    symmetric_confusions,
)
from .calibrate import (
    HQConfig,
    RecurrenceConfig,
    hq_solve,
    recur,
)
from .errors import (
    DegenerateModelError,
    FileFormatError,
    InvalidClassError,
    LogDomainError,
    NumericalFailureError,
    ShapeMismatchError,
)
from .expertness import ConfusionEstimate
from .fusion import ExpertnessMaps, FusionMode, _log_likelihood_maps, fuse, self_fuse
from .grids import (
    ClassGrid,
    GridShape,
    LabelStack,
    PriorMap,
    ProbMap,
    argmax_grid,
    uniform_prior,
)
from .metrics import DiceSpec, cross_entropy, dice, ssim
from .synth import GoldSpec, RaterSpec, corrupt, make_gold

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_SHAPE = 5
EXIT_NUMERIC = 6

_MODES = {"prop1": FusionMode.LIKELIHOOD, "literal": FusionMode.LITERAL}


def _parse_float_list(text: str, count: int, flag: str) -> "list[float]":
    parts = text.split(",")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag}: expected comma-separated reals, got {text!r}")
    if len(vals) == 1:
        return vals * count
    if len(vals) != count:
        raise argparse.ArgumentTypeError(f"{flag}: expected 1 or {count} values, got {len(vals)}")
    return vals


def _parse_int_list(text: str, count: int, flag: str) -> "list[int]":
    parts = text.split(",")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{flag}: expected comma-separated integers, got {text!r}")
    if len(vals) == 1:
        return vals * count
    if len(vals) != count:
        raise argparse.ArgumentTypeError(f"{flag}: expected 1 or {count} values, got {len(vals)}")
    return vals


def _parse_class_sets(text: str) -> DiceSpec:
    sets: "dict[str, frozenset[int]]" = {}
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise argparse.ArgumentTypeError(f"--classes: expected name=indices, got {chunk!r}")
        name, _, idx = chunk.partition("=")
        try:
            sets[name.strip()] = frozenset(int(v) for v in idx.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"--classes: bad indices in {chunk!r}")
    if not sets:
        raise argparse.ArgumentTypeError("--classes: no class sets given")
    return DiceSpec(sets)


def _prior_from_arg(value: str, stack: LabelStack) -> PriorMap:
    """Resolve --prior: the keywords ``uniform`` and ``empirical``, or an MRP path."""
    shape = stack.shape
    if value == "uniform":
        return uniform_prior(shape)
    if value == "empirical":
        return PriorMap.from_class_probs(shape, empirical_class_prior(stack))
    pmap = fileio.read_prob_map(value)
    if not pmap.shape.same_grid(shape):
        raise ShapeMismatchError(f"prior grid {pmap.shape} does not match stack {shape}")
    return PriorMap(pmap.shape, np.log(np.maximum(pmap.values, 1e-6)))


def _grid_from_file(path: str) -> ClassGrid:
    if fileio.sniff_format(path) == "mrp":
        return argmax_grid(fileio.read_prob_map(path))
    return fileio.read_class_grid(path)


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = GoldSpec(args.height, args.width)
    gold = make_gold(spec)
    diags = _parse_float_list(args.noise_diag, args.raters, "--noise-diag")
    jitters = _parse_int_list(args.jitter, args.raters, "--jitter")
    raters = []
    for m in range(args.raters):
        theta = symmetric_confusions(1, 3, diags[m])[0]
        raters.append(RaterSpec(theta, boundary_jitter=jitters[m], seed_offset=m))
    stack = corrupt(gold, raters, args.seed)
    fileio.write_class_grid(args.out_gold, gold)
    print(f"wrote_gold={args.out_gold}")
    fileio.write_label_stack(args.out_stack, stack)
    print(f"wrote_stack={args.out_stack}")
    return EXIT_OK


def _recur_from_args(args: argparse.Namespace):
    stack = fileio.read_label_stack(args.stack)
    prior = _prior_from_arg(args.prior, stack) if args.prior else None
    config = RecurrenceConfig(
        max_recurrences=args.iters,
        tol=args.tol,
        mode=_MODES[args.mode],
        prior=prior,
    )
    ref = None
    if args.ref:
        ref = fileio.read_class_grid(args.ref)
        if not ref.shape.same_grid(stack.shape):
            raise ShapeMismatchError(
                f"reference grid {ref.shape} does not match stack {stack.shape}"
            )
    return stack, config, ref


def _cmd_calibrate(args: argparse.Namespace) -> int:
    stack, config, ref = _recur_from_args(args)
    trace = recur(stack, config)
    for line in fileio.format_trace_report(trace, ref=ref):
        print(line)
    fileio.write_prob_map(args.out, trace.final_fused)
    return EXIT_OK


def _cmd_baseline(args: argparse.Namespace) -> int:
    stack = fileio.read_label_stack(args.stack)
    if args.method == "mv":
        pmap, grid = majority_vote(stack)
        freq = grid.class_counts() / stack.shape.pixels
        for c, f in enumerate(freq):
            print(f"freq_{c}={f:.9f}")
    else:
        config = StapleConfig(
            max_iterations=args.max_iters, tol=args.tol, init_diagonal=args.diag
        )
        pmap, estimate = staple(stack, config)
        grid = argmax_grid(pmap)
        for m in range(estimate.raters):
            for k in range(estimate.classes):
                for c in range(estimate.classes):
                    print(f"theta_r{m + 1}_{k}_{c}={estimate.confusions[m, k, c]:.9f}")
    if args.out:
        fileio.write_prob_map(args.out, pmap)
        print(f"wrote={args.out}")
    return EXIT_OK


def _cmd_fuse(args: argparse.Namespace) -> int:
    stack = fileio.read_label_stack(args.stack)
    s = stack.shape
    if args.probs:
        paths = args.probs.split(",")
        if len(paths) != s.raters:
            raise ShapeMismatchError(
                f"--probs needs {s.raters} files (one per rater), got {len(paths)}"
            )
        probs = []
        for p in paths:
            pm = fileio.read_prob_map(p)
            if not pm.shape.same_grid(s):
                raise ShapeMismatchError(f"{p}: grid {pm.shape} does not match stack {s}")
            probs.append(pm)
        fused = self_fuse(stack, probs, _MODES[args.mode])
    else:
        prior = _prior_from_arg(args.prior, stack) if args.prior else uniform_prior(s)
        theta = symmetric_confusions(s.raters, s.classes, args.diag)
        maps = ExpertnessMaps(s, _log_likelihood_maps(stack.labels, theta))
        fused = fuse(stack, maps, prior)
    fileio.write_prob_map(args.out, fused)
    print(f"wrote={args.out}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    if args.metric == "dice":
        pred = _grid_from_file(args.pred)
        ref = _grid_from_file(args.ref)
        spec = args.classes if args.classes else DiceSpec.default_for(pred.shape.classes)
        scores = dice(pred, ref, spec)
        print(" ".join(f"{name}={value:.6f}" for name, value in scores.items()))
    elif args.metric == "ssim":
        a = fileio.read_prob_map(args.pred)
        b = fileio.read_prob_map(args.ref)
        print(f"ssim={ssim(a, b):.6f}")
    else:
        pred = fileio.read_prob_map(args.pred)
        ref = fileio.read_class_grid(args.ref)
        print(f"ce={cross_entropy(pred, ref):.6f}")
    return EXIT_OK


def _cmd_hq(args: argparse.Namespace) -> int:
    stack = fileio.read_label_stack(args.stack)
    config = HQConfig(
        beta0=args.beta0,
        kappa=args.kappa,
        gamma=args.gamma,
        inner_iterations=args.inner,
        max_outer=args.outer,
        tol=args.tol,
    )
    state = hq_solve(stack, config)
    for i, (beta, obj) in enumerate(zip(state.betas, state.objectives), start=1):
        print(f"iter={i} beta={beta:.6g} objective={obj:.12g}")
    print(f"iterations={state.iterations}")
    if args.out_mask:
        cells = np.argmax(state.auxiliary, axis=-1)
        s = stack.shape
        fileio.write_class_grid(
            args.out_mask, ClassGrid(GridShape(s.height, s.width, s.classes), cells)
        )
        print(f"wrote={args.out_mask}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    from .plots import save_trace_figures

    stack, config, ref = _recur_from_args(args)
    trace = recur(stack, config)
    os.makedirs(args.out_dir, exist_ok=True)
    lines = fileio.format_trace_report(trace, ref=ref)
    trace_path = os.path.join(args.out_dir, "trace.txt")
    with open(trace_path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    fused_path = os.path.join(args.out_dir, "fused.mrp")
    fileio.write_prob_map(fused_path, trace.final_fused)
    print(f"wrote={trace_path}")
    print(f"wrote={fused_path}")
    for path in save_trace_figures(trace, args.out_dir, ref=ref):
        print(f"figure={path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raterfuse",
        description="Fuse multi-rater segmentation labels with self-calibrated expertness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a gold mask and a corrupted rater stack")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--raters", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise-diag", default="0.9",
                   help="confusion diagonal per rater, comma-separated or one value")
    p.add_argument("--jitter", default="0",
                   help="boundary jitter radius per rater, comma-separated or one value")
    p.add_argument("--out-gold", required=True, help="write the gold mask (single-rater MRL)")
    p.add_argument("--out-stack", required=True, help="write the rater stack (MRL)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="run the recurrence and print the trace report")
    p.add_argument("--stack", required=True)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--mode", choices=sorted(_MODES), default="prop1")
    p.add_argument("--prior", help="class prior: 'uniform', 'empirical', or an MRP path")
    p.add_argument("--ref", help="reference mask for Dice reporting (single-rater MRL)")
    p.add_argument("--out", required=True, help="write the final fused map (MRP)")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("baseline", help="majority vote or EM consensus")
    p.add_argument("--stack", required=True)
    p.add_argument("--method", choices=["mv", "staple"], required=True)
    p.add_argument("--out", help="write the consensus map (MRP)")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--diag", type=float, default=0.9)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("fuse", help="one-shot fusion of a stack")
    p.add_argument("--stack", required=True)
    p.add_argument("--probs", help="comma-separated per-rater reconstruction maps (MRP)")
    p.add_argument("--mode", choices=sorted(_MODES), default="prop1")
    p.add_argument("--diag", type=float, default=0.9,
                   help="symmetric confusion diagonal when --probs is absent")
    p.add_argument("--prior", help="class prior: 'uniform', 'empirical', or an MRP path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("eval", help="score a prediction against a reference")
    p.add_argument("--metric", choices=["dice", "ssim", "ce"], required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--classes", type=_parse_class_sets,
                   help='named class sets, e.g. "disc=1,2;cup=2"')
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("hq", help="half-quadratic weight solve")
    p.add_argument("--stack", required=True)
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--inner", type=int, default=50)
    p.add_argument("--outer", type=int, default=25)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out-mask", help="write argmax of the auxiliary field (MRL)")
    p.set_defaults(func=_cmd_hq)

    p = sub.add_parser("report", help="calibrate plus figures in an output directory")
    p.add_argument("--stack", required=True)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--mode", choices=sorted(_MODES), default="prop1")
    p.add_argument("--prior", help="class prior: 'uniform', 'empirical', or an MRP path")
    p.add_argument("--ref")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, InvalidClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ShapeMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (DegenerateModelError, LogDomainError, NumericalFailureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
