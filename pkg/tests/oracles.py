"""Naive reference implementations used to cross-check the fast code paths."""

from typing import Sequence


def oracle_p_value(cal_scores: Sequence[float], test: float) -> float:
    """Linear-scan conformal p-value; an empty calibration set gives 1.0."""
    count = 0
    for s in cal_scores:
        if s >= test:
            count += 1
    return (count + 1) / (len(cal_scores) + 1)


def oracle_auroc(id_p: Sequence[float], ood_p: Sequence[float]) -> float:
    """All-pairs AUROC with half credit for ties."""
    if len(id_p) == 0 or len(ood_p) == 0:
        raise ValueError("Both p-value lists must be nonempty")
    wins = 0.0
    for o in ood_p:
        for i in id_p:
            if o < i:
                wins += 1.0
            elif o == i:
                wins += 0.5
    return wins / (len(id_p) * len(ood_p))
