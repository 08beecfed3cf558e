"""Run drivers behind the CLI subcommands."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .artifact_io import (
    atomic_write_text,
    read_artifact,
    read_feature_file,
    write_artifact,
    write_feature_file,
    write_table,
)
from .conformal import (
    CalibrationArtifact,
    ProgressCallback,
    aggregate,
    build_artifact,
    calibrate,
    detect,
    detection_stream,
    p_value_smoothed,
    p_values,
    score_points,
    score_vector,
    smoothing_stream,
)
from .core_types import RngStream, Tensor, derive_seed, derive_stream, split_points
from .errors import EmptyCalibration, FingerprintMismatch, MissingSeed
from .metrics import (
    auroc,
    evaluate_pvalues,
    fdr_sweep,
    grid_counts,
    resampled_pvalues,
    smoothed_uniformity_test,
    uniformity_test,
)
from .model_zoo import ingest_external
from .models import RunConfig, ScoreFileRecord, ScoreSplit
from .ncm import KnnIndex, NcmKind
from .renderer import ReportTable, render_report
from .score_file import read_score_file, records_by_split, write_score_file
from .synthetic import SyntheticKind, SyntheticSpec, generate

# path roots for data generation and replicate seeds
DATA_STREAM = 2**64 - 3
REPLICATE_STREAM = 2**64 - 4

WarningCallback = Callable[[str], None]


class Role:
    CALIBRATION = 0
    TEST_ID = 1
    TEST_OOD = 2
    TRAINING = 3
    POOL = 4
    HELD_OUT = 5


@dataclass
class CalibrationResult:
    artifact: CalibrationArtifact
    artifact_path: Path


@dataclass
class DetectionRow:
    id: str
    split: str
    score: float
    p_value: float
    flags: List[bool]


@dataclass
class DetectionRun:
    rows: List[DetectionRow]
    epsilons: List[float]
    table_path: Path


@dataclass
class EvaluationRow:
    n: int
    replicate: int
    auroc: float
    tnr_at_level: float
    base_auroc: float


@dataclass
class ReportRun:
    """Paths written by a report subcommand plus the headline numbers."""

    paths: List[Path] = field(default_factory=list)
    summary: Dict[str, float] = field(default_factory=dict)


def require_seed(config: RunConfig) -> int:
    if config.seed is None:
        raise MissingSeed("A seed is required: pass --seed or set 'seed' in the config")
    return config.seed


def synthetic_points(config: RunConfig, role: int, count: int, seed: int) -> List[Tensor]:
    """Generate iD (annulus) or OOD (ring) points for one data role."""
    data = config.data
    is_ood = role == Role.TEST_OOD
    spec = SyntheticSpec(
        kind=SyntheticKind.RING_OOD if is_ood else SyntheticKind.ANNULUS_ID,
        count=count,
        radius_mean=data.ood_radius_mean if is_ood else data.id_radius_mean,
        radius_sd=data.ood_radius_sd if is_ood else data.id_radius_sd,
        seed=derive_seed(RngStream(seed=seed, path=(DATA_STREAM, role))),
    )
    return generate(spec)


def training_features(config: RunConfig, seed: int) -> Optional[KnnIndex]:
    """Proper-training index for the k-NN measure, None for model-based measures."""
    if config.ncm.ncm_kind is not NcmKind.KNN_DISTANCE:
        return None
    return KnnIndex(synthetic_points(config, Role.TRAINING, config.data.training_count, seed))


def _score(
    config: RunConfig,
    points: Sequence[Tensor],
    root: RngStream,
    n: int,
    train: Optional[KnnIndex],
    on_progress: Optional[ProgressCallback],
) -> List[float]:
    return score_points(
        points, config.ncm, config.model, config.family, n, root,
        aggregation=config.aggregation, train_features=train,
        workers=config.workers, on_progress=on_progress,
    )


def _external_scores(config: RunConfig, split: ScoreSplit) -> Tuple[int, List[Tuple[str, float]]]:
    header, records = read_score_file(config.data.score_file)
    table = ingest_external(records_by_split(records, split), header.n)
    return header.n, [(rid, aggregate(config.aggregation, v)) for rid, v in table.items()]


def _write_html(
    out_dir: Path,
    name: str,
    title: str,
    tables: Sequence[ReportTable],
    summary: Dict[str, object],
    template_path: Optional[str],
) -> Path:
    path = out_dir / name
    atomic_write_text(path, render_report(title, tables, summary, template_path=template_path))
    return path


# ── synth ─────────────────────────────────────────────────────────────

def run_synth(
    config: RunConfig,
    with_scores: bool = False,
    on_progress: Optional[ProgressCallback] = None,
) -> ReportRun:
    """
    Write synthetic calibration / test points, optionally with their score vectors.

    Calibration points are scored on the calibration streams and test points on
    the detection streams, so the score file reproduces the synthetic pipeline.
    """
    seed = require_seed(config)
    data = config.data
    splits = [
        (ScoreSplit.CAL, synthetic_points(config, Role.CALIBRATION, data.calibration_count, seed)),
        (ScoreSplit.TEST_ID, synthetic_points(config, Role.TEST_ID, data.test_id_count, seed)),
        (ScoreSplit.TEST_OOD, synthetic_points(config, Role.TEST_OOD, data.test_ood_count, seed)),
    ]
    items = [
        (f"{split.value}-{j:05d}", split.value, x)
        for split, points in splits
        for j, x in enumerate(points)
    ]

    result = ReportRun()
    points_path = config.out / "points.csv"
    write_feature_file(points_path, items)
    result.paths.append(points_path)

    if with_scores:
        train = training_features(config, seed)
        records = []
        test_index = 0
        total = len(items)
        for done, (pid, split, x) in enumerate(items, start=1):
            if split == ScoreSplit.CAL.value:
                stream = derive_stream(RngStream(seed=seed), int(pid.split("-")[-1]))
            else:
                stream = derive_stream(detection_stream(seed), test_index)
                test_index += 1
            v = score_vector(
                config.ncm, config.model, config.family, x, config.n, stream,
                point_id=pid, train_features=train,
            )
            records.append(ScoreFileRecord(id=pid, split=split, scores=list(v.scores)))
            if on_progress:
                on_progress(done, total, pid)
        scores_path = config.out / "scores.jsonl"
        write_score_file(scores_path, config.n, records)
        result.paths.append(scores_path)

    result.summary = {"points": float(len(items))}
    return result


# ── calibrate ─────────────────────────────────────────────────────────

def run_calibrate(
    config: RunConfig,
    on_progress: Optional[ProgressCallback] = None,
) -> CalibrationResult:
    """
    Build a calibration artifact from synthetic data or the cal split of a score file.

    Raises:
        MissingSeed: If no seed is configured
        EmptyCalibration: If there are no calibration points or records
    """
    seed = require_seed(config)
    artifact_path = config.artifact or config.out / "calibration.json"

    if config.uses_external_scores:
        n, scored = _external_scores(config, ScoreSplit.CAL)
        if not scored:
            raise EmptyCalibration("Score file has no 'cal' records")
        artifact = build_artifact(
            [s for _, s in scored], n, seed, config.fingerprint(), config.aggregation
        )
    else:
        points = synthetic_points(config, Role.CALIBRATION, config.data.calibration_count, seed)
        artifact = calibrate(
            points, config.ncm, config.model, config.family, config.n, seed,
            aggregation=config.aggregation,
            train_features=training_features(config, seed),
            workers=config.workers,
            on_progress=on_progress,
        )

    write_artifact(artifact_path, artifact)
    return CalibrationResult(artifact=artifact, artifact_path=artifact_path)


# ── detect ────────────────────────────────────────────────────────────

def check_fingerprint(
    config: RunConfig,
    art: CalibrationArtifact,
    allow_mismatch: bool = False,
    on_warning: Optional[WarningCallback] = None,
) -> None:
    """
    Raises:
        FingerprintMismatch: If the artifact was built under another configuration
    """
    problems = []
    if art.config_fingerprint != config.fingerprint():
        problems.append(
            f"artifact fingerprint {art.config_fingerprint} != config {config.fingerprint()}"
        )
    if not config.uses_external_scores and art.n != config.n:
        problems.append(f"artifact n = {art.n} != config n = {config.n}")
    if not problems:
        return
    message = "; ".join(problems)
    if not allow_mismatch:
        raise FingerprintMismatch(message)
    if on_warning:
        on_warning(f"{message} (continuing because the mismatch override is set)")


def _detection_inputs(
    config: RunConfig,
    art: CalibrationArtifact,
    seed: int,
    inputs: Optional[Path],
    on_progress: Optional[ProgressCallback],
) -> List[Tuple[str, str, float]]:
    if config.uses_external_scores:
        items = []
        for split in (ScoreSplit.TEST_ID, ScoreSplit.TEST_OOD):
            _, scored = _external_scores(config, split)
            items.extend((rid, split.value, s) for rid, s in scored)
        return items

    if inputs is not None:
        labelled = [(pid, split, x) for pid, split, x in read_feature_file(inputs)]
    else:
        data = config.data
        id_points = synthetic_points(config, Role.TEST_ID, data.test_id_count, seed)
        ood_points = synthetic_points(config, Role.TEST_OOD, data.test_ood_count, seed)
        labelled = [
            (f"{ScoreSplit.TEST_ID.value}-{j:05d}", ScoreSplit.TEST_ID.value, x)
            for j, x in enumerate(id_points)
        ] + [
            (f"{ScoreSplit.TEST_OOD.value}-{j:05d}", ScoreSplit.TEST_OOD.value, x)
            for j, x in enumerate(ood_points)
        ]

    scores = _score(
        config, [x for _, _, x in labelled], detection_stream(seed), art.n,
        training_features(config, seed), on_progress,
    )
    return [(pid, split, s) for (pid, split, _), s in zip(labelled, scores)]


def epsilon_column(eps: float) -> str:
    return f"is_ood@{eps!r}"


def run_detect(
    config: RunConfig,
    artifact_path: Optional[Path] = None,
    inputs: Optional[Path] = None,
    allow_mismatch: bool = False,
    on_progress: Optional[ProgressCallback] = None,
    on_warning: Optional[WarningCallback] = None,
) -> DetectionRun:
    """
    Compute p-values and per-epsilon OOD flags for every test input.

    Test points are scored on fresh detection streams; the smoothed variant
    draws its tie-breaking u for row j from the smoothing stream.

    Raises:
        FingerprintMismatch: If the artifact does not match the config
    """
    seed = require_seed(config)
    art_path = artifact_path or config.artifact or config.out / "calibration.json"
    art = read_artifact(art_path)
    check_fingerprint(config, art, allow_mismatch, on_warning)

    items = _detection_inputs(config, art, seed, inputs, on_progress)
    epsilons = list(config.epsilons)
    u_root = smoothing_stream(seed)

    rows = []
    for j, (pid, split, score) in enumerate(items):
        u = derive_stream(u_root, j).draws().next_f64() if config.smoothed else None
        results = [detect(art, score, eps, u) for eps in epsilons]
        rows.append(DetectionRow(
            id=pid,
            split=split,
            score=score,
            p_value=results[0].p.value,
            flags=[r.is_ood for r in results],
        ))

    table_path = config.out / "detections.csv"
    write_table(
        table_path,
        ["id", "split", "score", "p_value"] + [epsilon_column(e) for e in epsilons],
        [[r.id, r.split, r.score, r.p_value, *r.flags] for r in rows],
    )
    return DetectionRun(rows=rows, epsilons=epsilons, table_path=table_path)


# ── evaluate ──────────────────────────────────────────────────────────

def _pvalues_for(
    config: RunConfig, art: CalibrationArtifact, scores: Sequence[float], seed: int, offset: int
) -> np.ndarray:
    if not config.smoothed:
        return p_values(art, scores)
    u_root = smoothing_stream(seed)
    return np.array([
        p_value_smoothed(art, s, derive_stream(u_root, offset + j).draws().next_f64()).value
        for j, s in enumerate(scores)
    ])


def replicate_seed(seed: int, replicate: int) -> int:
    return derive_seed(RngStream(seed=seed, path=(REPLICATE_STREAM, replicate)))


def evaluate_once(
    config: RunConfig,
    n: int,
    seed: int,
    cal_points: Sequence[Tensor],
    id_points: Sequence[Tensor],
    ood_points: Sequence[Tensor],
    train: Optional[KnnIndex] = None,
) -> Tuple[float, float, float]:
    """AUROC, TNR at the configured TPR and raw-score AUROC for one transform draw."""
    art = calibrate(
        cal_points, config.ncm, config.model, config.family, n, seed,
        aggregation=config.aggregation, train_features=train, workers=config.workers,
    )
    test_scores = _score(config, list(id_points) + list(ood_points), detection_stream(seed), n, train, None)
    id_scores = test_scores[:len(id_points)]
    ood_scores = test_scores[len(id_points):]
    id_p = _pvalues_for(config, art, id_scores, seed, 0)
    ood_p = _pvalues_for(config, art, ood_scores, seed, len(id_scores))
    report = evaluate_pvalues(id_p, ood_p, config.sweep.tpr_level)
    base = auroc(-np.asarray(id_scores), -np.asarray(ood_scores))
    return report.auroc, report.tnr_at_level, base


def run_evaluate(
    config: RunConfig,
    html: bool = False,
    template_path: Optional[str] = None,
    on_progress: Optional[ProgressCallback] = None,
) -> ReportRun:
    """
    AUROC and TNR per n (and per replicate transform draw).

    Synthetic data is drawn once; each replicate resamples the transforms.
    A score file yields a single row at its declared n.
    """
    seed = require_seed(config)
    sweep = config.sweep
    rows: List[EvaluationRow] = []

    if config.uses_external_scores:
        n, cal = _external_scores(config, ScoreSplit.CAL)
        _, test_id = _external_scores(config, ScoreSplit.TEST_ID)
        _, test_ood = _external_scores(config, ScoreSplit.TEST_OOD)
        if not cal:
            raise EmptyCalibration("Score file has no 'cal' records")
        art = build_artifact([s for _, s in cal], n, seed, config.fingerprint(), config.aggregation)
        id_scores = [s for _, s in test_id]
        ood_scores = [s for _, s in test_ood]
        id_p = _pvalues_for(config, art, id_scores, seed, 0)
        ood_p = _pvalues_for(config, art, ood_scores, seed, len(id_scores))
        report = evaluate_pvalues(id_p, ood_p, sweep.tpr_level)
        base = auroc(-np.asarray(id_scores), -np.asarray(ood_scores))
        rows.append(EvaluationRow(n, 0, report.auroc, report.tnr_at_level, base))
    else:
        data = config.data
        cal_points = synthetic_points(config, Role.CALIBRATION, data.calibration_count, seed)
        id_points = synthetic_points(config, Role.TEST_ID, data.test_id_count, seed)
        ood_points = synthetic_points(config, Role.TEST_OOD, data.test_ood_count, seed)
        train = training_features(config, seed)
        total = len(sweep.n_values) * sweep.replicates
        done = 0
        for n in sweep.n_values:
            for r in range(sweep.replicates):
                auc, tnr, base = evaluate_once(
                    config, n, replicate_seed(seed, r), cal_points, id_points, ood_points, train
                )
                rows.append(EvaluationRow(n, r, auc, tnr, base))
                done += 1
                if on_progress:
                    on_progress(done, total, f"n={n} replicate={r}")

    means = []
    for n in dict.fromkeys(row.n for row in rows):
        group = [row for row in rows if row.n == n]
        means.append([
            n,
            float(np.mean([row.auroc for row in group])),
            float(np.mean([row.tnr_at_level for row in group])),
            float(np.mean([row.base_auroc for row in group])),
        ])

    tnr_column = f"tnr_at_tpr{sweep.tpr_level!r}"
    detail_header = ["n", "replicate", "auroc", tnr_column, "base_auroc"]
    detail_rows = [[r.n, r.replicate, r.auroc, r.tnr_at_level, r.base_auroc] for r in rows]
    summary_header = ["n", "mean_auroc", f"mean_{tnr_column}", "mean_base_auroc"]

    result = ReportRun()
    detail_path = config.out / "evaluate.csv"
    summary_path = config.out / "evaluate_summary.csv"
    write_table(detail_path, detail_header, detail_rows)
    write_table(summary_path, summary_header, means)
    result.paths += [detail_path, summary_path]
    result.summary = {f"auroc@n={m[0]}": m[1] for m in means}

    if html:
        result.paths.append(_write_html(
            config.out, "evaluate.html", "Detection quality by number of transforms",
            [ReportTable("Means per n", summary_header, means),
             ReportTable("Replicates", detail_header, detail_rows)],
            {"seed": seed, "tpr_level": sweep.tpr_level},
            template_path,
        ))
    return result


# ── fdr-sweep ─────────────────────────────────────────────────────────

def run_fdr_sweep(
    config: RunConfig,
    html: bool = False,
    template_path: Optional[str] = None,
    on_progress: Optional[ProgressCallback] = None,
) -> ReportRun:
    """False detection rate per epsilon over resampled calibration sets."""
    seed = require_seed(config)
    sweep = config.sweep

    if config.uses_external_scores:
        _, pool = _external_scores(config, ScoreSplit.CAL)
        _, held = _external_scores(config, ScoreSplit.TEST_ID)
        pool_scores = [s for _, s in pool]
        held_scores = [s for _, s in held]
    else:
        # one iD draw partitioned into proper-training, calibration pool and held-out
        n_train = config.data.training_count if config.ncm.ncm_kind is NcmKind.KNN_DISTANCE else 0
        points = synthetic_points(
            config, Role.POOL, n_train + sweep.fdr_pool_size + sweep.fdr_held_out, seed
        )
        split = split_points(
            points, n_train, sweep.fdr_pool_size,
            RngStream(seed=seed, path=(DATA_STREAM, Role.HELD_OUT)),
        )
        train = KnnIndex(split.proper_training) if n_train else None
        pool_scores = _score(config, split.calibration, RngStream(seed=seed), config.n, train, on_progress)
        held_scores = _score(config, split.held_out, detection_stream(seed), config.n, train, on_progress)

    sweep_rows = fdr_sweep(
        held_scores, pool_scores, sweep.fdr_cal_size, sweep.fdr_replicates,
        config.epsilons, seed,
    )

    detail = [
        [row.epsilon, r, fdr]
        for row in sweep_rows
        for r, fdr in enumerate(row.replicate_fdrs)
    ]
    summary = [[row.epsilon, row.mean_fdr, row.stderr] for row in sweep_rows]

    result = ReportRun()
    detail_path = config.out / "fdr_sweep.csv"
    summary_path = config.out / "fdr_sweep_summary.csv"
    write_table(detail_path, ["epsilon", "replicate_id", "fdr"], detail)
    write_table(summary_path, ["epsilon", "mean_fdr", "stderr"], summary)
    result.paths += [detail_path, summary_path]
    result.summary = {f"mean_fdr@{row.epsilon!r}": row.mean_fdr for row in sweep_rows}

    if html:
        result.paths.append(_write_html(
            config.out, "fdr_sweep.html", "False detection rate by threshold",
            [ReportTable("Mean FDR", ["epsilon", "mean_fdr", "stderr"], summary),
             ReportTable("Replicates", ["epsilon", "replicate_id", "fdr"], detail)],
            {"seed": seed, "calibration size": sweep.fdr_cal_size,
             "replicates": sweep.fdr_replicates},
            template_path,
        ))
    return result


# ── pvalue-hist ───────────────────────────────────────────────────────

def run_pvalue_hist(
    config: RunConfig,
    html: bool = False,
    template_path: Optional[str] = None,
    on_progress: Optional[ProgressCallback] = None,
) -> ReportRun:
    """
    Grid-atom counts of resampled iD p-values and their uniformity statistics.

    A pool of iD scores is scored once; every draw then takes a fresh
    calibration set of hist_calibration_count scores plus one test score
    from it. Scores must be tie-free (noise_sd > 0, or external scores)
    for the strict p-values to be uniform.
    """
    seed = require_seed(config)
    sweep = config.sweep
    k = sweep.hist_calibration_count

    if config.uses_external_scores:
        _, cal = _external_scores(config, ScoreSplit.CAL)
        if not cal:
            raise EmptyCalibration("Score file has no 'cal' records")
        pool = [s for _, s in cal]
    else:
        train = training_features(config, seed)
        pool_points = synthetic_points(config, Role.POOL, sweep.hist_pool_size, seed)
        pool = _score(config, pool_points, RngStream(seed=seed), config.n, train, on_progress)

    strict = resampled_pvalues(pool, k, sweep.hist_test_count, seed)
    counts = grid_counts(strict, k)
    chi2, chi2_p = uniformity_test(strict, k)
    metrics: List[Tuple[str, float]] = [
        ("k", k),
        ("draws", sweep.hist_test_count),
        ("chi_square", chi2),
        ("chi_square_pvalue", chi2_p),
    ]
    if config.smoothed:
        smooth_seed = derive_seed(smoothing_stream(seed))
        smoothed = resampled_pvalues(pool, k, sweep.hist_test_count, smooth_seed, smoothed=True)
        ks, ks_p = smoothed_uniformity_test(smoothed)
        metrics += [("ks_statistic", ks), ("ks_pvalue", ks_p)]

    atoms = [[(j + 1) / (k + 1), int(c)] for j, c in enumerate(counts)]

    result = ReportRun()
    hist_path = config.out / "pvalue_hist.csv"
    stats_path = config.out / "pvalue_hist_summary.csv"
    write_table(hist_path, ["atom", "count"], atoms)
    write_table(stats_path, ["metric", "value"], metrics)
    result.paths += [hist_path, stats_path]
    result.summary = dict(metrics)

    if html:
        result.paths.append(_write_html(
            config.out, "pvalue_hist.html", "p-value uniformity",
            [ReportTable("Uniformity", ["metric", "value"], metrics),
             ReportTable("Grid atoms", ["atom", "count"], atoms)],
            {"seed": seed},
            template_path,
        ))
    return result
