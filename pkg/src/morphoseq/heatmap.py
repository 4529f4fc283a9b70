"""Attention-trace export: full-precision CSV and a grayscale SVG grid."""

from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

import numpy as np

from .seq2seq import AttentionTrace

CELL = 24
LABEL_PAD = 8
CHAR_W = 7


def trace_to_csv(trace: AttentionTrace) -> str:
    """Header row = input tokens (after an empty corner cell); one row per output token."""
    if trace.weights.size == 0:
        raise ValueError("empty attention trace")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [str(t) for t in trace.input_tokens])
    for tok, row in zip(trace.output_tokens, trace.weights):
        w.writerow([str(tok)] + [repr(float(x)) for x in row])
    return buf.getvalue()


def csv_to_trace(text: str) -> AttentionTrace:
    rows = list(csv.reader(io.StringIO(text)))
    inputs = rows[0][1:]
    outputs = [r[0] for r in rows[1:]]
    weights = np.array([[float(x) for x in r[1:]] for r in rows[1:]], dtype=np.float64)
    return AttentionTrace(weights, outputs, inputs)


def gray(weight: float) -> str:
    level = int(round(255 * (1.0 - min(max(weight, 0.0), 1.0))))
    return f"#{level:02x}{level:02x}{level:02x}"


def trace_to_svg(trace: AttentionTrace, title: str = "") -> str:
    """Grid of cells, 0 -> white and 1 -> black; inputs on x, outputs on y."""
    if trace.weights.size == 0:
        raise ValueError("empty attention trace")
    rows, cols = trace.weights.shape
    in_labels = [str(t) for t in trace.input_tokens]
    out_labels = [str(t) for t in trace.output_tokens]
    left = LABEL_PAD + CHAR_W * max(len(s) for s in out_labels)
    top = LABEL_PAD + CHAR_W * max(len(s) for s in in_labels) + (20 if title else 0)
    width = left + cols * CELL + LABEL_PAD
    height = top + rows * CELL + LABEL_PAD
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">',
    ]
    if title:
        out.append(f'<text x="{LABEL_PAD}" y="14">{escape(title)}</text>')
    for j, label in enumerate(in_labels):
        x = left + j * CELL + CELL / 2
        out.append(f'<text class="col-label" transform="translate({x:.1f},{top - 4}) rotate(-90)">'
                   f'{escape(label)}</text>')
    for i, label in enumerate(out_labels):
        y = top + i * CELL + CELL * 0.65
        out.append(f'<text class="row-label" x="{left - 4}" y="{y:.1f}" text-anchor="end">'
                   f'{escape(label)}</text>')
    for i in range(rows):
        for j in range(cols):
            w = float(trace.weights[i, j])
            out.append(f'<rect class="cell" x="{left + j * CELL}" y="{top + i * CELL}" '
                       f'width="{CELL}" height="{CELL}" fill="{gray(w)}">'
                       f'<title>{escape(out_labels[i])} / {escape(in_labels[j])}: {w:.4f}</title></rect>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def attn_heatmap(trace: AttentionTrace, fmt: str, title: str = "") -> str:
    if fmt == "csv":
        return trace_to_csv(trace)
    if fmt == "svg":
        return trace_to_svg(trace, title)
    raise ValueError(f"unknown heatmap format {fmt!r}")
