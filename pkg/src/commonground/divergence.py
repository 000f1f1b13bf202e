"""Policy divergence and the reconciliation completion test.

``d_hr`` compares the robot's own plan with the human's prediction of it;
``d_rh`` compares the human's own plan with the robot's prediction. Both
use Levenshtein distance over grounded action name sequences. Dialogue is
complete when both fall below epsilon; the default epsilon of 1 with a
strict comparison demands exact plan agreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .planning import Plan

DEFAULT_EPSILON = 1.0

CSV_HEADER = "t,d_hr,d_rh,ed_r_gt,ed_h_gt,ed_r_h"


@dataclass(frozen=True)
class DivergenceReport:
    iteration: int
    d_hr: float
    d_rh: float
    epsilon: float = DEFAULT_EPSILON
    ed_r_gt: int | None = None
    ed_h_gt: int | None = None
    ed_r_h: int | None = None

    def csv_row(self) -> str:
        def cell(v):
            if v is None:
                return ""
            return str(int(v)) if float(v).is_integer() else str(v)

        return ",".join(
            (str(self.iteration), cell(self.d_hr), cell(self.d_rh),
             cell(self.ed_r_gt), cell(self.ed_h_gt), cell(self.ed_r_h))
        )


def levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    """Classic edit distance (insert/delete/substitute, all cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        current = [i]
        for j, y in enumerate(b, start=1):
            current.append(min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (x != y),
            ))
        previous = current
    return previous[-1]


def plan_divergence(p: Plan | Sequence[str], q: Plan | Sequence[str]) -> int:
    """Edit distance between two plans' action name sequences."""
    names_p = p.step_names if isinstance(p, Plan) else tuple(p)
    names_q = q.step_names if isinstance(q, Plan) else tuple(q)
    return levenshtein(names_p, names_q)


def reconciliation_complete(report: DivergenceReport) -> bool:
    return report.d_hr < report.epsilon and report.d_rh < report.epsilon


def objective(report: DivergenceReport) -> float:
    """The quantity the exchanged explanations are meant to minimize."""
    return report.d_hr + report.d_rh
