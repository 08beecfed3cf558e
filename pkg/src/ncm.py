"""Base nonconformity measures: equivariance error, auxiliary task and k-NN distance."""

from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import rel_entr
from sklearn.neighbors import BallTree

from .core_types import Tensor
from .errors import (
    EmptyTrainingSet,
    IncompatibleShape,
    InvalidDistribution,
    KTooLarge,
)
from .model_zoo import Model, evaluate, predict_transform
from .transforms import OutputRule, TransformInstance, apply, output_transform

PROB_FLOOR = 1e-12
SUM_TOLERANCE = 1e-9


class NcmKind(str, Enum):
    EQUIVARIANCE_ERROR = "equivariance_error"
    AUXILIARY_TASK = "auxiliary_task"
    KNN_DISTANCE = "knn_distance"


class LossKind(str, Enum):
    SQUARED_ERROR = "squared_error"
    CROSS_ENTROPY = "cross_entropy"
    KL_DIVERGENCE = "kl_divergence"


DISTRIBUTION_LOSSES = frozenset({LossKind.CROSS_ENTROPY, LossKind.KL_DIVERGENCE})


class NcmConfig(BaseModel):
    """Which nonconformity measure and loss to use."""

    model_config = ConfigDict(frozen=True)

    ncm_kind: NcmKind = NcmKind.EQUIVARIANCE_ERROR
    loss_kind: LossKind = LossKind.SQUARED_ERROR
    k: int = Field(1, ge=1, description="Neighbour count for knn_distance")

    @model_validator(mode="after")
    def validate_loss(self) -> "NcmConfig":
        # distribution losses need one-hot targets, which only transform encodings provide
        if (
            self.loss_kind in DISTRIBUTION_LOSSES
            and self.ncm_kind is not NcmKind.AUXILIARY_TASK
        ):
            raise ValueError(f"{self.loss_kind.value} loss requires ncm_kind auxiliary_task")
        return self


def _same_shape(a: Tensor, b: Tensor) -> tuple:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise IncompatibleShape(f"Loss inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def _check_distribution(p: np.ndarray, name: str) -> None:
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > SUM_TOLERANCE:
        raise InvalidDistribution(f"{name} is not a probability vector")


def loss_squared_error(a: Tensor, b: Tensor) -> float:
    """Sum of squared element differences."""
    a, b = _same_shape(a, b)
    return float(np.sum((a - b) ** 2))


def loss_cross_entropy(probs: Tensor, onehot: Tensor) -> float:
    """-log(probs[c]) for the hot index c; probabilities are clamped to [1e-12, 1]."""
    probs, onehot = _same_shape(probs, onehot)
    _check_distribution(probs, "probs")
    hot = np.flatnonzero(onehot)
    if hot.size != 1 or onehot[hot[0]] != 1.0:
        raise InvalidDistribution("Target is not a one-hot vector")
    return float(-np.log(np.clip(probs[hot[0]], PROB_FLOOR, 1.0)))


def loss_kl(p: Tensor, q: Tensor) -> float:
    """KL(p || q) with 0 * log 0 = 0."""
    p, q = _same_shape(p, q)
    _check_distribution(p, "p")
    _check_distribution(q, "q")
    if np.any(q <= 0):
        raise InvalidDistribution("q must be strictly positive")
    return float(np.sum(rel_entr(p, q)))


LOSSES = {
    LossKind.SQUARED_ERROR: loss_squared_error,
    LossKind.CROSS_ENTROPY: loss_cross_entropy,
    LossKind.KL_DIVERGENCE: loss_kl,
}


class KnnIndex:
    """Ball tree over the proper-training features, built once and queried per point."""

    def __init__(self, train_features: Sequence[Tensor]):
        if len(train_features) == 0:
            raise EmptyTrainingSet("k-NN scoring needs at least one training point")
        self.features = np.stack(
            [np.asarray(t, dtype=np.float64).ravel() for t in train_features]
        )
        self.tree = BallTree(self.features, metric="euclidean")

    def __len__(self) -> int:
        return self.features.shape[0]

    def mean_distance(self, x: Tensor, k: int) -> float:
        if k > len(self):
            raise KTooLarge(f"k = {k} exceeds {len(self)} training points")
        x = np.asarray(x, dtype=np.float64).ravel()
        if self.features.shape[1] != x.size:
            raise IncompatibleShape(
                f"Feature size {x.size} differs from training size {self.features.shape[1]}"
            )
        dists, _ = self.tree.query(x.reshape(1, -1), k=k)
        return float(dists[0].mean())


KnnFeatures = Union[Sequence[Tensor], KnnIndex]


def base_ncm_knn(train_features: KnnFeatures, x: Tensor, k: int) -> float:
    """
    Mean Euclidean distance from x to its k nearest training points.

    Raises:
        EmptyTrainingSet: If there are no training features
        KTooLarge: If k exceeds the number of training features
    """
    index = train_features if isinstance(train_features, KnnIndex) else KnnIndex(train_features)
    return index.mean_distance(x, k)


def base_ncm(
    cfg: NcmConfig,
    m: Model,
    x: Tensor,
    g: TransformInstance,
    train_features: Optional[KnnFeatures] = None,
) -> float:
    """
    Base nonconformity score of x under one transform g.

    EquivarianceError: L[M(g(x)), M(x)].
    AuxiliaryTask: L[predicted transform of (x, g(x)), encode_params(g)];
        with KL the divergence runs from the encoding to the prediction.
    KnnDistance: k-NN distance of g(x) to the training features.
    """
    gx = apply(g, x)
    loss = LOSSES[cfg.loss_kind]

    if cfg.ncm_kind is NcmKind.EQUIVARIANCE_ERROR:
        target = output_transform(g, evaluate(m, x), rule=OutputRule.IDENTITY_OUTPUT)
        return loss(evaluate(m, gx), target)

    if cfg.ncm_kind is NcmKind.AUXILIARY_TASK:
        target = output_transform(g, None, rule=OutputRule.PARAMS_TARGET)
        prediction = predict_transform(m, x, gx)
        if cfg.loss_kind is LossKind.KL_DIVERGENCE:
            # KL(target || prediction); the softmax is strictly positive, the one-hot target is not
            return loss(target, prediction)
        return loss(prediction, target)

    if train_features is None:
        raise EmptyTrainingSet("knn_distance needs proper-training features")
    return base_ncm_knn(train_features, gx, cfg.k)
