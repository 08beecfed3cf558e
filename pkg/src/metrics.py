"""Detection metrics on p-values and the FDR sweep experiment."""

import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy import stats
from sklearn.metrics import roc_auc_score

from .conformal import build_artifact, p_value, p_value_smoothed, p_values
from .core_types import RngStream, derive_stream
from .errors import EmptyInput, EmptyPool, OffGridValue

DEFAULT_TPR_LEVEL = 0.90
DEFAULT_EPSILONS = tuple(round(0.05 * j, 2) for j in range(1, 11))
GRID_TOLERANCE = 1e-9


class EvaluationReport(BaseModel):
    """AUROC and TNR at a fixed TPR for one iD / OOD comparison."""

    auroc: float = Field(..., ge=0.0, le=1.0)
    tnr_at_level: float = Field(..., ge=0.0, le=1.0)
    tpr_level: float = Field(DEFAULT_TPR_LEVEL, gt=0.0, le=1.0)
    n_id: int = Field(..., gt=0)
    n_ood: int = Field(..., gt=0)


class FdrSweepRow(BaseModel):
    """False detection rates at one epsilon across resampled calibration sets."""

    epsilon: float = Field(..., gt=0.0, lt=1.0)
    replicate_fdrs: Tuple[float, ...]
    mean_fdr: float = Field(..., ge=0.0, le=1.0)

    @model_validator(mode="after")
    def validate_rates(self) -> "FdrSweepRow":
        if not self.replicate_fdrs:
            raise ValueError("At least one replicate is required")
        if any(not 0.0 <= f <= 1.0 for f in self.replicate_fdrs):
            raise ValueError("Each FDR must lie in [0, 1]")
        return self

    @property
    def stderr(self) -> float:
        r = len(self.replicate_fdrs)
        if r < 2:
            return 0.0
        return float(np.std(self.replicate_fdrs, ddof=1) / math.sqrt(r))


def _nonempty(id_pvalues: Sequence[float], ood_pvalues: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    if len(id_pvalues) == 0 or len(ood_pvalues) == 0:
        raise EmptyInput("Both iD and OOD p-value lists must be nonempty")
    return np.asarray(id_pvalues, dtype=np.float64), np.asarray(ood_pvalues, dtype=np.float64)


def auroc(id_pvalues: Sequence[float], ood_pvalues: Sequence[float]) -> float:
    """
    Probability that an OOD p-value is below an iD p-value, ties counted half.

    OOD is the positive class and lower p-values rank as more anomalous.
    """
    id_p, ood_p = _nonempty(id_pvalues, ood_pvalues)
    labels = np.concatenate([np.zeros(id_p.size), np.ones(ood_p.size)])
    return float(roc_auc_score(labels, -np.concatenate([id_p, ood_p])))


def tnr_at_tpr(
    id_pvalues: Sequence[float],
    ood_pvalues: Sequence[float],
    level: float = DEFAULT_TPR_LEVEL,
) -> float:
    """
    TNR of the rule "OOD iff p < t" at the largest observed t that keeps at
    least `level` of the iD p-values at or above t.
    """
    if not 0.0 < level <= 1.0:
        raise ValueError(f"level must lie in (0, 1], got {level}")
    id_p, ood_p = _nonempty(id_pvalues, ood_pvalues)

    candidates = np.unique(id_p)
    sorted_id = np.sort(id_p)
    retained = (id_p.size - np.searchsorted(sorted_id, candidates, side="left")) / id_p.size
    threshold = candidates[retained >= level].max()
    return float(np.mean(ood_p < threshold))


def evaluate_pvalues(
    id_pvalues: Sequence[float],
    ood_pvalues: Sequence[float],
    level: float = DEFAULT_TPR_LEVEL,
) -> EvaluationReport:
    return EvaluationReport(
        auroc=auroc(id_pvalues, ood_pvalues),
        tnr_at_level=tnr_at_tpr(id_pvalues, ood_pvalues, level),
        tpr_level=level,
        n_id=len(id_pvalues),
        n_ood=len(ood_pvalues),
    )


def fdr_sweep(
    held_out_id_scores: Sequence[float],
    cal_pool: Sequence[float],
    cal_size: int,
    replicates: int,
    epsilons: Sequence[float],
    seed: int,
) -> List[FdrSweepRow]:
    """
    Resample calibration sets with replacement and record iD flag rates.

    Replicate r draws its calibration indices from derive(RngStream(seed), r).

    Raises:
        EmptyPool: If the pool or the held-out set is empty
    """
    if len(cal_pool) == 0:
        raise EmptyPool("Calibration pool is empty")
    if len(held_out_id_scores) == 0:
        raise EmptyPool("Held-out iD set is empty")
    if replicates < 1 or cal_size < 1:
        raise ValueError("replicates and cal_size must be at least 1")

    pool = np.asarray(cal_pool, dtype=np.float64)
    held_out = np.asarray(held_out_id_scores, dtype=np.float64)
    root = RngStream(seed=seed)

    rates = np.zeros((len(epsilons), replicates))
    for r in range(replicates):
        idx = derive_stream(root, r).generator().integers(0, pool.size, size=cal_size)
        art = build_artifact(pool[idx], n=1, seed=seed, fingerprint="fdr-sweep")
        pvals = p_values(art, held_out)
        for e, eps in enumerate(epsilons):
            rates[e, r] = float(np.mean(pvals < eps))

    return [
        FdrSweepRow(
            epsilon=eps,
            replicate_fdrs=tuple(float(f) for f in rates[e]),
            mean_fdr=float(np.mean(rates[e])),
        )
        for e, eps in enumerate(epsilons)
    ]


def resampled_pvalues(
    pool: Sequence[float],
    k: int,
    draws: int,
    seed: int,
    smoothed: bool = False,
) -> np.ndarray:
    """
    p-values of exchangeable (calibration, test) draws taken from a scored pool.

    Each draw picks k + 1 distinct pool entries, calibrates on the first k and
    tests the last; a fresh calibration set per draw keeps the p-values
    marginally uniform rather than conditioned on one calibration set.

    Raises:
        EmptyPool: If the pool holds fewer than k + 1 scores
    """
    if k < 1 or draws < 1:
        raise ValueError("k and draws must be at least 1")
    scores = np.asarray(pool, dtype=np.float64)
    if scores.size < k + 1:
        raise EmptyPool(f"Pool of {scores.size} scores cannot supply {k + 1} per draw")

    gen = RngStream(seed=seed).generator()
    out = np.empty(draws)
    for j in range(draws):
        idx = gen.choice(scores.size, size=k + 1, replace=False)
        art = build_artifact(scores[idx[:k]], n=1, seed=seed, fingerprint="resampled")
        test = float(scores[idx[k]])
        if smoothed:
            out[j] = p_value_smoothed(art, test, float(gen.random())).value
        else:
            out[j] = p_value(art, test).value
    return out


def grid_counts(pvalues: Sequence[float], k: int) -> np.ndarray:
    """
    Count p-values per atom j/(k+1), j = 1..k+1.

    Raises:
        OffGridValue: If a p-value is not one of the atoms
    """
    pv = np.asarray(pvalues, dtype=np.float64)
    atoms = np.rint(pv * (k + 1)).astype(np.int64)
    off = (atoms < 1) | (atoms > k + 1) | (np.abs(atoms / (k + 1) - pv) > GRID_TOLERANCE)
    if np.any(off):
        raise OffGridValue(
            f"p-value {pv[off][0]} is not on the grid {{1/{k + 1}, ..., 1}}"
        )
    return np.bincount(atoms - 1, minlength=k + 1)


def uniformity_test(pvalues: Sequence[float], k: int) -> Tuple[float, float]:
    """Pearson chi-square statistic and p-value against the uniform grid law."""
    result = stats.chisquare(grid_counts(pvalues, k))
    return float(result.statistic), float(result.pvalue)


def uniformity_stat(pvalues: Sequence[float], k: int) -> float:
    return uniformity_test(pvalues, k)[0]


def smoothed_uniformity_test(pvalues: Sequence[float]) -> Tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value against U(0, 1)."""
    result = stats.kstest(np.asarray(pvalues, dtype=np.float64), "uniform")
    return float(result.statistic), float(result.pvalue)
