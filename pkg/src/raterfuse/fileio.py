"""ASCII file formats and the per-iteration text report.

MRL (labels)::

    MRL 1
    H W K M
    ... M blocks, each H lines of W space-separated class indices ...

MRP (probabilities)::

    MRP 1
    H W K
    ... K blocks, each H lines of W reals ...

Both formats are LF-terminated with no trailing whitespace. Reals are
written with 17 significant digits so a read-back reproduces the exact
float64 bit pattern.
"""

from __future__ import annotations

import os
from typing import TYPE_CHECKING

import numpy as np

from .errors import FileFormatError
from .grids import ClassGrid, GridShape, LabelStack, ProbMap
from .metrics import DiceSpec, dice
from .grids import argmax_grid

if TYPE_CHECKING:
    from .calibrate import RecurrenceTrace

MRL_MAGIC = "MRL 1"
MRP_MAGIC = "MRP 1"


def _fmt_real(v: float) -> str:
    return format(v, ".17g")


def _read_lines(path: "str | os.PathLike[str]") -> "list[str]":
    with open(path, "r", encoding="ascii", newline="") as fh:
        text = fh.read()
    if text and not text.endswith("\n"):
        raise FileFormatError(f"{path}: missing trailing newline")
    return text.split("\n")[:-1] if text else []

def _parse_ints(line: str, count: int, path: object, what: str) -> "list[int]":
    parts = line.split(" ")
    if len(parts) != count or any(p != p.strip() or not p for p in parts):
        raise FileFormatError(f"{path}: expected {count} {what} fields, got {line!r}")
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise FileFormatError(f"{path}: bad {what} field in {line!r}") from exc


def write_label_stack(path: "str | os.PathLike[str]", stack: LabelStack) -> None:
    s = stack.shape
    lines = [MRL_MAGIC, f"{s.height} {s.width} {s.classes} {s.raters}"]
    for m in range(s.raters):
        for row in stack.labels[m]:
            lines.append(" ".join(str(int(c)) for c in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_label_stack(path: "str | os.PathLike[str]") -> LabelStack:
    lines = _read_lines(path)
    if len(lines) < 2 or lines[0] != MRL_MAGIC:
        raise FileFormatError(f"{path}: not an {MRL_MAGIC} file")
    h, w, k, m = _parse_ints(lines[1], 4, path, "header")
    if h < 1 or w < 1 or k < 2 or m < 1:
        raise FileFormatError(f"{path}: bad dimensions {h} {w} {k} {m}")
    expected = 2 + m * h
    if len(lines) != expected:
        raise FileFormatError(f"{path}: expected {expected} lines, found {len(lines)}")
    labels = np.empty((m, h, w), dtype=np.int64)
    ln = 2
    for block in range(m):
        for row in range(h):
            vals = _parse_ints(lines[ln], w, path, "label")
            if any(v < 0 or v >= k for v in vals):
                raise FileFormatError(f"{path}: class index out of [0, {k}) on line {ln + 1}")
            labels[block, row] = vals
            ln += 1
    return LabelStack(GridShape(h, w, k, m), labels)


def write_class_grid(path: "str | os.PathLike[str]", grid: ClassGrid) -> None:
    """A single grid is stored as a one-rater label stack."""
    s = grid.shape
    stack = LabelStack(GridShape(s.height, s.width, s.classes, 1), grid.cells[None])
    write_label_stack(path, stack)


def read_class_grid(path: "str | os.PathLike[str]") -> ClassGrid:
    stack = read_label_stack(path)
    if stack.shape.raters != 1:
        raise FileFormatError(f"{path}: expected a single-rater file, found M = {stack.shape.raters}")
    return stack.rater(0)


def write_prob_map(path: "str | os.PathLike[str]", pmap: ProbMap) -> None:
    s = pmap.shape
    lines = [MRP_MAGIC, f"{s.height} {s.width} {s.classes}"]
    for k in range(s.classes):
        for row in pmap.values[..., k]:
            lines.append(" ".join(_fmt_real(v) for v in row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_prob_map(path: "str | os.PathLike[str]") -> ProbMap:
    lines = _read_lines(path)
    if len(lines) < 2 or lines[0] != MRP_MAGIC:
        raise FileFormatError(f"{path}: not an {MRP_MAGIC} file")
    h, w, k = _parse_ints(lines[1], 3, path, "header")
    if h < 1 or w < 1 or k < 2:
        raise FileFormatError(f"{path}: bad dimensions {h} {w} {k}")
    expected = 2 + k * h
    if len(lines) != expected:
        raise FileFormatError(f"{path}: expected {expected} lines, found {len(lines)}")
    values = np.empty((h, w, k))
    ln = 2
    for channel in range(k):
        for row in range(h):
            parts = lines[ln].split(" ")
            if len(parts) != w or any(p != p.strip() or not p for p in parts):
                raise FileFormatError(f"{path}: expected {w} reals on line {ln + 1}")
            try:
                values[row, :, channel] = [float(p) for p in parts]
            except ValueError as exc:
                raise FileFormatError(f"{path}: bad real on line {ln + 1}") from exc
            ln += 1
    try:
        return ProbMap.from_array(values)
    except ValueError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def sniff_format(path: "str | os.PathLike[str]") -> str:
    """'mrl' or 'mrp' from the magic line."""
    with open(path, "r", encoding="ascii", newline="") as fh:
        first = fh.readline().rstrip("\n")
    if first == MRL_MAGIC:
        return "mrl"
    if first == MRP_MAGIC:
        return "mrp"
    raise FileFormatError(f"{path}: unrecognized magic {first!r}")


def format_trace_report(
    trace: "RecurrenceTrace",
    ref: ClassGrid | None = None,
    dice_spec: DiceSpec | None = None,
) -> "list[str]":
    """Key=value record lines, one per recurrence iteration.

    Fields: iteration index, ssim_prev (from the second iteration on),
    per-rater cross-entropy, Dice against ``ref`` per class set plus their
    mean (when a reference is given), and the convergence flag.
    """
    if ref is not None and dice_spec is None:
        dice_spec = DiceSpec.default_for(ref.shape.classes)
    lines = []
    for idx, step in enumerate(trace.steps, start=1):
        parts = [f"iter={idx}"]
        if step.ssim_prev is not None:
            parts.append(f"ssim_prev={step.ssim_prev:.9f}")
        for m, ce in enumerate(step.rater_ce, start=1):
            parts.append(f"ce_r{m}={ce:.9f}")
        if ref is not None:
            scores = dice(argmax_grid(step.fused), ref, dice_spec)
            parts.append(f"dice_vs_ref={np.mean(list(scores.values())):.9f}")
            for name, value in scores.items():
                parts.append(f"dice_{name}={value:.9f}")
        parts.append(f"converged={'true' if step.converged else 'false'}")
        lines.append(" ".join(parts))
    return lines
