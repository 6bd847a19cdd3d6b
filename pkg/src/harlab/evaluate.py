"""Train/test splitting, classification metrics, and the lr-by-epochs
hyperparameter grid experiment.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import models, nn
from .core import ActivityClass, Dataset, N_CLASSES, sample_label
from .rng import make_rng

GRID_LRS = (0.01, 0.1)
GRID_EPOCHS = (50, 20)


class EvalError(ValueError):
    """Raised on invalid splits or metric inputs."""


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.80
    seed: int = 42
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise EvalError(f"train_fraction must be in (0, 1), got {self.train_fraction}")


def _train_count(fraction: float, n: int) -> int:
    # Within +/-1 of fraction*n, and both splits non-empty.
    return min(max(int(round(fraction * n)), 1), n - 1)


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded, disjoint, exhaustive split; stratified per class by default."""
    rng = make_rng(spec.seed, "split")
    samples = dataset.samples
    if spec.stratified:
        train_idx: list[int] = []
        test_idx: list[int] = []
        for cls in ActivityClass:
            members = [i for i, s in enumerate(samples) if sample_label(s) is cls]
            if not members:
                raise EvalError(f"class {cls.class_name} has no samples")
            if len(members) < 2:
                raise EvalError(
                    f"class {cls.class_name} has {len(members)} sample(s); "
                    "both splits need at least one")
            perm = rng.permutation(len(members))
            n_train = _train_count(spec.train_fraction, len(members))
            train_idx.extend(members[i] for i in perm[:n_train])
            test_idx.extend(members[i] for i in perm[n_train:])
    else:
        if len(samples) < 2:
            raise EvalError("need at least 2 samples to split")
        perm = rng.permutation(len(samples))
        n_train = _train_count(spec.train_fraction, len(samples))
        train_idx = list(perm[:n_train])
        test_idx = list(perm[n_train:])
    train_idx.sort()
    test_idx.sort()
    train = Dataset.from_samples([samples[i] for i in train_idx], seed=dataset.seed)
    test = Dataset.from_samples([samples[i] for i in test_idx], seed=dataset.seed)
    return train, test


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    mean_loss: float
    confusion: np.ndarray             # [C, C] counts, rows = true class
    confusion_normalized: np.ndarray  # rows sum to 1 (all-zero rows stay zero)
    empty_classes: tuple[int, ...]    # true classes absent from the test set


def compute_metrics(true_labels, pred_labels, losses) -> MetricsReport:
    """Accuracy, macro precision/recall/F1, mean loss, confusion matrices.

    Per-class precision and recall define 0/0 as 0; macro averages run
    over all classes regardless of support.
    """
    true_arr = np.asarray(true_labels, dtype=np.int64)
    pred_arr = np.asarray(pred_labels, dtype=np.int64)
    loss_arr = np.asarray(losses, dtype=np.float64)
    if not (true_arr.shape == pred_arr.shape == loss_arr.shape) or true_arr.ndim != 1:
        raise EvalError(
            f"length mismatch: true {true_arr.shape}, pred {pred_arr.shape}, "
            f"losses {loss_arr.shape}")
    if true_arr.size < 1:
        raise EvalError("need at least one prediction")
    if np.any((true_arr < 0) | (true_arr >= N_CLASSES)) or \
       np.any((pred_arr < 0) | (pred_arr >= N_CLASSES)):
        raise EvalError(f"labels must lie in 0..{N_CLASSES - 1}")
    confusion = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(confusion, (true_arr, pred_arr), 1)
    diag = np.diag(confusion).astype(np.float64)
    row_sums = confusion.sum(axis=1).astype(np.float64)
    col_sums = confusion.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(col_sums > 0, diag / col_sums, 0.0)
        recall = np.where(row_sums > 0, diag / row_sums, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
        normalized = np.where(row_sums[:, None] > 0,
                              confusion / np.where(row_sums[:, None] > 0, row_sums[:, None], 1.0),
                              0.0)
    return MetricsReport(
        accuracy=float(diag.sum() / true_arr.size),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        mean_loss=float(loss_arr.mean()),
        confusion=confusion,
        confusion_normalized=normalized,
        empty_classes=tuple(int(c) for c in np.flatnonzero(row_sums == 0)),
    )


def evaluate_model(model: models.TrainedModel, tensors) -> MetricsReport:
    """Predict a sample list and compute its metrics report."""
    x, y = models.stack_features(tensors)
    probs = model.predict_probs(x)
    preds = probs.argmax(axis=1)
    n = x.shape[0]
    picked = np.clip(probs[np.arange(n), y], nn.PROB_FLOOR, 1.0)
    return compute_metrics(y, preds, -np.log(picked))


# ---------------------------------------------------------------------------
# Hyperparameter grid

@dataclass(frozen=True)
class GridCell:
    kind: str
    epochs: int
    lr: float
    accuracy: float | None
    mean_loss: float | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


_GRID_DATA: dict = {}


def _grid_worker_init(train_xy, test_xy, base_spec_fields):
    _GRID_DATA["train"] = train_xy
    _GRID_DATA["test"] = test_xy
    _GRID_DATA["base"] = base_spec_fields


def _run_grid_cell(cell_key: tuple[str, int, float]) -> GridCell:
    kind, epochs, lr = cell_key
    try:
        base = dict(_GRID_DATA["base"])
        base.update(kind=kind, epochs=epochs, lr0=lr)
        spec = models.ModelSpec(**base)
        net = models.build(spec)
        trained = models.train(net, _GRID_DATA["train"], _GRID_DATA["test"])
        x_test, y_test = _GRID_DATA["test"]
        probs = trained.predict_probs(x_test)
        loss = nn.cross_entropy(probs, y_test)
        if not np.isfinite(loss):
            raise ArithmeticError(f"non-finite test loss {loss}")
        return GridCell(kind, epochs, lr, nn.accuracy(probs, y_test), loss)
    except Exception as exc:  # keep the grid running; the cell is marked
        return GridCell(kind, epochs, lr, None, None, error=f"{type(exc).__name__}: {exc}")


def run_grid(dataset: Dataset, kinds=models.KINDS, lrs=GRID_LRS,
             epochs_grid=GRID_EPOCHS, seed: int = 42, workers: int = 1,
             timesteps: int | None = None, hidden_size: int = 50) -> list[GridCell]:
    """Train every (kind, lr, epochs) cell on one shared stratified split.

    Cells are independent and seeded, so results do not depend on the
    worker count; failed cells are marked and the run continues.
    """
    train_ds, test_ds = split(dataset, SplitSpec(seed=seed))
    train_xy = models.stack_features(train_ds.samples)
    test_xy = models.stack_features(test_ds.samples)
    if timesteps is None:
        timesteps = train_xy[0].shape[1]
    base = dict(kind="lstm", timesteps=timesteps, n_features=train_xy[0].shape[2],
                hidden_size=hidden_size, seed=seed)
    cells = [(kind, ep, lr) for kind in kinds for ep in epochs_grid for lr in lrs]
    workers = max(1, min(workers, len(cells)))
    if workers == 1:
        _grid_worker_init(train_xy, test_xy, base)
        return [_run_grid_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers, initializer=_grid_worker_init,
                             initargs=(train_xy, test_xy, base)) as pool:
        return list(pool.map(_run_grid_cell, cells))


def default_grid_workers(n_cells: int) -> int:
    return max(1, min(os.cpu_count() or 1, n_cells))
