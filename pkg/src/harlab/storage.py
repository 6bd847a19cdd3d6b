"""File formats: dataset roots with a manifest, flat label+amplitude CSV
export, model files, experiment configs, and the report CSVs.

All numeric serialization uses Python's shortest round-trip decimal
repr, so loading never loses precision.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp, models
from .core import (ActivityClass, CaptureMeta, CsiSample, Dataset, FeatureTensor,
                   Sample, class_from_name, sample_label)
from .evaluate import GridCell, MetricsReport, SplitSpec
from .synth import GeneratorConfig

MANIFEST_NAME = "manifest.csv"
MANIFEST_FIELDS = ("sample_id", "class_name", "relative_path", "seed",
                   "n_packets", "n_subcarriers", "is_complex", "lineage")
MODEL_FORMAT_VERSION = 1


class StorageError(ValueError):
    """Raised on malformed or inconsistent files."""


def fmt(x: float) -> str:
    """Shortest decimal that round-trips to the exact float64 value."""
    return repr(float(x))


def _parse_float(text: str, path: Path, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise StorageError(f"{path}:{line_no}: malformed number {text!r}") from None


class _RootLock:
    """Exclusive advisory lock on a dataset root while writing."""

    def __init__(self, root: Path):
        self.path = root / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StorageError(f"dataset root is locked by another writer: {self.path}") from None
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _sample_rows(sample: Sample) -> np.ndarray:
    if isinstance(sample, CsiSample):
        frames = sample.frames
        rows = np.empty((frames.shape[0], frames.shape[1] * 2))
        rows[:, 0::2] = frames.real
        rows[:, 1::2] = frames.imag
        return rows
    return sample.values


class DatasetWriter:
    """Streaming dataset writer: add samples one at a time, then close."""

    def __init__(self, root: Path | str, seed: int | None = None):
        self.root = Path(root)
        self.seed = seed
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = _RootLock(self.root)
        self._lock.__enter__()
        self._rows: list[dict] = []
        self._counters: dict[str, int] = {}

    def add(self, sample: Sample, sample_id: str | None = None) -> None:
        label = sample_label(sample)
        if sample_id is None:
            if isinstance(sample, CsiSample):
                sample_id = sample.sample_id
            else:
                # FeatureTensor carries no id; assign by arrival order.
                n = self._counters.get(label.class_name, 0)
                self._counters[label.class_name] = n + 1
                sample_id = f"{label.class_name}-{n:04d}"
        rel = Path("samples") / label.class_name / f"{sample_id}.csv"
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = _sample_rows(sample)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
        is_complex = isinstance(sample, CsiSample)
        lineage = sample.capture_meta.lineage if is_complex else sample.lineage
        n_features = rows.shape[1] // 2 if is_complex else rows.shape[1]
        self._rows.append({
            "sample_id": sample_id,
            "class_name": label.class_name,
            "relative_path": rel.as_posix(),
            "seed": "" if self.seed is None else str(self.seed),
            "n_packets": str(rows.shape[0]),
            "n_subcarriers": str(n_features),
            "is_complex": "1" if is_complex else "0",
            "lineage": "|".join(lineage),
        })

    def abort(self) -> None:
        self._lock.__exit__(None, None, None)

    def close(self) -> None:
        manifest = self.root / MANIFEST_NAME
        with open(manifest, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
            writer.writeheader()
            for row in self._rows:
                writer.writerow(row)
        self._lock.__exit__(None, None, None)


def save_dataset(dataset: Dataset, root: Path | str) -> None:
    """Write manifest.csv plus one CSV per sample under samples/<class>/."""
    writer = DatasetWriter(root, seed=dataset.seed)
    try:
        for sample in dataset.samples:
            writer.add(sample)
    except BaseException:
        writer.abort()
        raise
    writer.close()


def _load_matrix(path: Path, expected_cols: int, expected_rows: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if len(row) != expected_cols:
                raise StorageError(
                    f"{path}:{line_no}: expected {expected_cols} columns, got {len(row)}")
            rows.append([_parse_float(v, path, line_no) for v in row])
    if len(rows) != expected_rows:
        raise StorageError(
            f"{path}: manifest says {expected_rows} rows, file has {len(rows)}")
    return np.array(rows, dtype=np.float64)


def _manifest_rows(root: Path) -> list[dict]:
    manifest = root / MANIFEST_NAME
    if not manifest.exists():
        raise StorageError(f"manifest.csv not found in {root}")
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(MANIFEST_FIELDS) - set(reader.fieldnames):
            raise StorageError(f"{manifest}: missing manifest columns")
        rows = list(reader)
    # Canonical order regardless of manifest row order.
    rows.sort(key=lambda r: (int(class_from_name(r["class_name"])), r["sample_id"]))
    return rows


def _row_to_sample(root: Path, row: dict) -> Sample:
    path = root / row["relative_path"]
    if not path.exists():
        raise StorageError(f"missing sample file: {path}")
    n_packets = int(row["n_packets"])
    n_sub = int(row["n_subcarriers"])
    label = class_from_name(row["class_name"])
    lineage = tuple(s for s in row["lineage"].split("|") if s)
    if row["is_complex"] == "1":
        mat = _load_matrix(path, 2 * n_sub, n_packets)
        frames = mat[:, 0::2] + 1j * mat[:, 1::2]
        return CsiSample(frames, label, row["sample_id"], CaptureMeta(lineage=lineage))
    mat = _load_matrix(path, n_sub, n_packets)
    return FeatureTensor(mat, int(label), lineage)


def load_dataset_seed(root: Path | str) -> int | None:
    rows = _manifest_rows(Path(root))
    seeds = {r["seed"] for r in rows if r["seed"]}
    return int(next(iter(seeds))) if len(seeds) == 1 else None


def load_dataset(root: Path | str) -> Dataset:
    root = Path(root)
    rows = _manifest_rows(root)
    seeds = {r["seed"] for r in rows if r["seed"]}
    seed = int(next(iter(seeds))) if len(seeds) == 1 else None
    return Dataset.from_samples([_row_to_sample(root, r) for r in rows], seed=seed)


def iter_dataset(root: Path | str):
    """Yield samples in canonical order without holding them all."""
    root = Path(root)
    for row in _manifest_rows(root):
        yield _row_to_sample(root, row)


def dataset_is_complex(root: Path | str) -> bool:
    rows = _manifest_rows(Path(root))
    return all(r["is_complex"] == "1" for r in rows)


# ---------------------------------------------------------------------------
# Flat label-first CSV

def export_flat(dataset: Dataset, path: Path | str) -> None:
    """One CSV: label code in column 0, then the feature columns, one row
    per timestep, samples in class-major order."""
    tensors = list(dataset.samples)
    if not tensors:
        raise StorageError("cannot export an empty dataset")
    shape = None
    for t in tensors:
        if not isinstance(t, FeatureTensor):
            raise StorageError("flat export needs amplitude-typed samples")
        if shape is None:
            shape = t.values.shape
        elif t.values.shape != shape:
            raise StorageError(f"inconsistent sample shapes {t.values.shape} vs {shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for t in tensors:
            label = str(t.label_code)
            for row in t.values:
                writer.writerow([label] + [fmt(v) for v in row])


def load_flat(path: Path | str, n_packets: int) -> list[FeatureTensor]:
    """Read a flat export back into per-sample tensors."""
    path = Path(path)
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) % n_packets:
        raise StorageError(
            f"{path}: row count {len(rows)} is not a multiple of n_packets={n_packets}")
    tensors = []
    for start in range(0, len(rows), n_packets):
        block = rows[start:start + n_packets]
        labels = {r[0] for r in block}
        if len(labels) != 1:
            raise StorageError(f"{path}: label changes inside sample block at row {start + 1}")
        values = np.array([[_parse_float(v, path, start + i + 1)
                            for v in row[1:]] for i, row in enumerate(block)])
        tensors.append(FeatureTensor(values, int(block[0][0]), ("flat_import",)))
    return tensors


# ---------------------------------------------------------------------------
# Model files

def save_model(model: models.TrainedModel, path: Path | str) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "spec": dataclasses.asdict(model.spec),
        "weights": {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                    for name, arr in sorted(model.weights.items())},
        "history": [dataclasses.asdict(h) for h in model.history],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path: Path | str) -> models.TrainedModel:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StorageError(f"{path}: truncated or malformed model file ({exc})") from None
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise StorageError(
            f"{path}: unsupported format_version {version!r} "
            f"(this build reads {MODEL_FORMAT_VERSION})")
    spec_doc = dict(doc["spec"])
    spec_doc["conv_filters"] = tuple(spec_doc.get("conv_filters", ()))
    spec = models.ModelSpec(**spec_doc)
    net = models.build(spec)
    weights = {}
    for name, block in doc["weights"].items():
        shape = tuple(block["shape"])
        data = np.array(block["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise StorageError(
                f"{path}: weight block {name!r} has {data.size} values, "
                f"shape {shape} needs {int(np.prod(shape))}")
        weights[name] = data.reshape(shape)
    try:
        net.set_weights(weights)
    except models.ModelError as exc:
        raise StorageError(f"{path}: {exc}") from None
    history = [models.EpochStats(**h) for h in doc.get("history", [])]
    return models.TrainedModel(spec, net, history)


# ---------------------------------------------------------------------------
# Experiment config (key = value text file)

@dataclass
class ExperimentConfig:
    generator: GeneratorConfig | None = None
    model: models.ModelSpec | None = None
    split: SplitSpec | None = None
    stages: list | None = None


def _value_to_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def save_experiment_config(path: Path | str, config: ExperimentConfig) -> None:
    """Write every configured field as a "<section>.<field> = <value>" line.

    Sections: generator (GeneratorConfig), model (ModelSpec), split
    (SplitSpec), pipeline (pipeline.stages, see dsp.parse_stages).
    """
    lines = ["# harlab experiment configuration"]
    for section, obj in (("generator", config.generator), ("model", config.model),
                         ("split", config.split)):
        if obj is None:
            continue
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {_value_to_text(getattr(obj, f.name))}")
    if config.stages is not None:
        lines.append(f"pipeline.stages = {dsp.stages_to_text(config.stages)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _coerce(field: dataclasses.Field, text: str):
    if field.type in ("int", int):
        return int(text)
    if field.type in ("float", float):
        return float(text)
    if field.type in ("bool", bool):
        if text not in ("true", "false"):
            raise StorageError(f"boolean field {field.name} must be true/false, got {text!r}")
        return text == "true"
    if "tuple" in str(field.type):
        return tuple(int(v) for v in text.split(",") if v)
    return text


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    sections: dict[str, dict[str, str]] = {}
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or "." not in key:
            raise StorageError(f"{path}:{line_no}: expected '<section>.<field> = <value>'")
        section, _, field_name = key.strip().partition(".")
        sections.setdefault(section, {})[field_name.strip()] = value.strip()
    config = ExperimentConfig()
    for section, cls, attr in (("generator", GeneratorConfig, "generator"),
                               ("model", models.ModelSpec, "model"),
                               ("split", SplitSpec, "split")):
        if section not in sections:
            continue
        kwargs = {}
        by_name = {f.name: f for f in dataclasses.fields(cls)}
        for name, text in sections[section].items():
            if name not in by_name:
                raise StorageError(f"{path}: unknown key {section}.{name}")
            kwargs[name] = _coerce(by_name[name], text)
        setattr(config, attr, cls(**kwargs))
    if "pipeline" in sections:
        stages_text = sections["pipeline"].get("stages")
        if stages_text is None:
            raise StorageError(f"{path}: pipeline section needs a 'stages' key")
        config.stages = dsp.parse_stages(stages_text)
    return config


# ---------------------------------------------------------------------------
# Report CSVs

def write_metrics_csv(report: MetricsReport, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["accuracy", "macro_precision", "macro_recall",
                         "macro_f1", "mean_loss"])
        writer.writerow([fmt(report.accuracy), fmt(report.macro_precision),
                         fmt(report.macro_recall), fmt(report.macro_f1),
                         fmt(report.mean_loss)])


def write_confusion_csv(matrix: np.ndarray, path: Path | str, normalized: bool) -> None:
    names = [c.class_name for c in ActivityClass]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_class"] + names)
        for cls, row in zip(ActivityClass, matrix):
            values = [fmt(v) if normalized else str(int(v)) for v in row]
            writer.writerow([cls.class_name] + values)


def write_history_csv(history, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
        for i, h in enumerate(history, start=1):
            writer.writerow([str(i), fmt(h.train_loss), fmt(h.train_acc),
                             fmt(h.val_loss), fmt(h.val_acc)])


def write_grid_csv(cells: list[GridCell], path: Path | str) -> None:
    """Long-format grid table; failed cells leave accuracy/loss empty."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "epochs", "lr", "accuracy", "mean_loss"])
        for c in cells:
            writer.writerow([c.kind, str(c.epochs), fmt(c.lr),
                             "" if c.accuracy is None else fmt(c.accuracy),
                             "" if c.mean_loss is None else fmt(c.mean_loss)])


def read_grid_csv(path: Path | str) -> list[GridCell]:
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cells.append(GridCell(
                kind=row["model"], epochs=int(row["epochs"]), lr=float(row["lr"]),
                accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                mean_loss=float(row["mean_loss"]) if row["mean_loss"] else None,
                error="marked failed" if not row["accuracy"] else None))
    return cells
