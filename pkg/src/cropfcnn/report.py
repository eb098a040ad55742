"""Evaluation report as a sequence of CSV blocks.

Each block is a ``# <name>`` line, a header row, data rows and a blank
line. Block names and headers:

    confusion_matrix   true,pred_1,pred_2,pred_3
    class_metrics      class,precision,recall,f1
    accuracy           accuracy
    bootstrap_ci       metric,point,lower,upper,confidence,resamples
    importance         feature,importance
    fold_scores        fold,score_a,score_b
    ttest              model_a,model_b,metric,t,df,p,mean_difference,degenerate
"""

from __future__ import annotations

import csv
import io
from typing import Dict, List, Sequence

HEADERS = {
    "confusion_matrix": ["true", "pred_1", "pred_2", "pred_3"],
    "class_metrics": ["class", "precision", "recall", "f1"],
    "accuracy": ["accuracy"],
    "bootstrap_ci": ["metric", "point", "lower", "upper", "confidence", "resamples"],
    "importance": ["feature", "importance"],
    "fold_scores": ["fold", "score_a", "score_b"],
    "ttest": ["model_a", "model_b", "metric", "t", "df", "p", "mean_difference", "degenerate"],
}


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_blocks(blocks: Dict[str, Sequence[Sequence]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for name, rows in blocks.items():
        buf.write(f"# {name}\n")
        writer.writerow(HEADERS[name])
        for row in rows:
            if len(row) != len(HEADERS[name]):
                raise ValueError(f"block {name}: row has {len(row)} cells, header has {len(HEADERS[name])}")
            writer.writerow([_cell(v) for v in row])
        buf.write("\n")
    return buf.getvalue()


def parse_blocks(text: str) -> Dict[str, List[List[str]]]:
    """Inverse of :func:`format_blocks`; checks every header and row width."""
    blocks: Dict[str, List[List[str]]] = {}
    name = None
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            name = None
            continue
        if line.startswith("# "):
            name = line[2:].strip()
            if name not in HEADERS:
                raise ValueError(f"line {lineno}: unknown block {name!r}")
            blocks[name] = []
            header_seen = False
            continue
        if name is None:
            raise ValueError(f"line {lineno}: data outside a block")
        row = next(csv.reader([line]))
        if not header_seen:
            if row != HEADERS[name]:
                raise ValueError(f"line {lineno}: bad header for block {name}")
            header_seen = True
            continue
        if len(row) != len(HEADERS[name]):
            raise ValueError(f"line {lineno}: expected {len(HEADERS[name])} cells")
        blocks[name].append(row)
    return blocks
