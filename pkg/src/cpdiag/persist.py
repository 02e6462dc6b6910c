"""File formats: signal datasets (CSV + binary), indicator matrices, models.

CSV floats are written with ``repr`` (shortest round-trip form, at most 17
significant digits) so parsing them back reproduces the exact doubles; the
binary dataset form is a length-prefixed record stream and round-trips
bit for bit.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .forest import ForestModel, ForestParams, Tree
from .indicators import (
    Aggregator,
    ConsecutiveRatio,
    GlobalRatio,
    IndicatorMatrix,
    IndicatorSpec,
    LocalRatio,
    Simple,
)
from .naive_bayes import NaiveBayesModel
from .signals import AnomalyClass, Signal
from .stat_tests import TestKind

_BINARY_MAGIC = b"CPDS"
_BINARY_VERSION = 1
_MODEL_VERSION = 1


# ---------------------------------------------------------------------------
# signal datasets


def write_signals_csv(signals: Sequence[Signal], path) -> None:
    """One row per signal: id, label, m, change index, shift param, then m values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for s in signals:
            meta = [
                s.id,
                int(s.label),
                s.m,
                "" if s.change_index is None else s.change_index,
                "" if s.shift_param is None else repr(s.shift_param),
            ]
            writer.writerow(meta + [repr(float(v)) for v in s.values])


def read_signals_csv(path) -> list[Signal]:
    signals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            sid, label, m = int(row[0]), AnomalyClass(int(row[1])), int(row[2])
            change = int(row[3]) if row[3] != "" else None
            shift = float(row[4]) if row[4] != "" else None
            values = np.array([float(v) for v in row[5 : 5 + m]], dtype=np.float64)
            if len(values) != m:
                raise InvalidInputError(f"signal {sid}: expected {m} values, got {len(values)}")
            signals.append(
                Signal(id=sid, values=values, label=label, change_index=change, shift_param=shift)
            )
    return signals


def write_signals_binary(signals: Sequence[Signal], path) -> None:
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<IQ", _BINARY_VERSION, len(signals)))
        for s in signals:
            change = -1 if s.change_index is None else s.change_index
            shift = np.nan if s.shift_param is None else s.shift_param
            fh.write(struct.pack("<qbIid", s.id, int(s.label), s.m, change, shift))
            fh.write(s.values.astype("<f8").tobytes())


def read_signals_binary(path) -> list[Signal]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise InvalidInputError(f"{path}: not a signal dataset file")
        version, count = struct.unpack("<IQ", fh.read(12))
        if version != _BINARY_VERSION:
            raise InvalidInputError(f"{path}: unsupported version {version}")
        signals = []
        header = struct.Struct("<qbIid")
        for _ in range(count):
            sid, label, m, change, shift = header.unpack(fh.read(header.size))
            values = np.frombuffer(fh.read(8 * m), dtype="<f8").astype(np.float64)
            signals.append(
                Signal(
                    id=sid,
                    values=values,
                    label=AnomalyClass(label),
                    change_index=None if change < 0 else change,
                    shift_param=None if np.isnan(shift) else shift,
                )
            )
    return signals


# ---------------------------------------------------------------------------
# indicator matrices


def _aggregator_fields(agg: Aggregator) -> dict:
    if isinstance(agg, Simple):
        return {"aggregator": "simple"}
    if isinstance(agg, GlobalRatio):
        return {"aggregator": "global_ratio", "beta": repr(agg.beta), "delta": agg.delta}
    if isinstance(agg, ConsecutiveRatio):
        return {"aggregator": "consecutive_ratio", "beta": repr(agg.beta), "delta": agg.delta}
    return {"aggregator": "local_ratio", "l": agg.l, "k": agg.k, "delta": agg.delta}


def _aggregator_from_fields(row: dict) -> Aggregator:
    kind = row["aggregator"]
    if kind == "simple":
        return Simple()
    if kind == "global_ratio":
        return GlobalRatio(beta=float(row["beta"]), delta=int(row["delta"]))
    if kind == "consecutive_ratio":
        return ConsecutiveRatio(beta=float(row["beta"]), delta=int(row["delta"]))
    if kind == "local_ratio":
        return LocalRatio(l=int(row["l"]), k=int(row["k"]), delta=int(row["delta"]))
    raise InvalidInputError(f"unknown aggregator kind {kind!r}")


_CATALOG_FIELDS = [
    "column",
    "name",
    "test",
    "tau",
    "level",
    "smoothed",
    "aggregator",
    "beta",
    "delta",
    "l",
    "k",
]


def write_catalog(catalog: Sequence[IndicatorSpec], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CATALOG_FIELDS, restval="")
        writer.writeheader()
        for j, spec in enumerate(catalog):
            row = {
                "column": j,
                "name": spec.name,
                "test": spec.test_kind.value,
                "tau": spec.tau,
                "level": repr(spec.level),
                "smoothed": int(spec.smoothed),
            }
            row.update(_aggregator_fields(spec.aggregator))
            writer.writerow(row)


def read_catalog(path) -> list[IndicatorSpec]:
    specs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            specs.append(
                IndicatorSpec(
                    test_kind=TestKind(row["test"]),
                    tau=int(row["tau"]),
                    level=float(row["level"]),
                    smoothed=bool(int(row["smoothed"])),
                    aggregator=_aggregator_from_fields(row),
                )
            )
    return specs


def write_matrix(matrix: IndicatorMatrix, directory) -> None:
    """catalog.csv + matrix.npy + labels.csv in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_catalog(matrix.catalog, directory / "catalog.csv")
    np.save(directory / "matrix.npy", matrix.rows)
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "signal_id", "label"])
        for i, (sid, label) in enumerate(zip(matrix.observation_ids, matrix.labels)):
            writer.writerow([i, int(sid), int(label)])


def read_matrix(directory) -> IndicatorMatrix:
    directory = Path(directory)
    catalog = read_catalog(directory / "catalog.csv")
    rows = np.load(directory / "matrix.npy")
    ids, labels = [], []
    with open(directory / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(int(row["signal_id"]))
            labels.append(int(row["label"]))
    return IndicatorMatrix(
        rows=rows,
        catalog=catalog,
        observation_ids=np.array(ids, dtype=np.int64),
        labels=np.array(labels, dtype=np.int8),
    )


def write_matrix_csv(matrix: IndicatorMatrix, path) -> None:
    """Human-readable export with named column headers."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["signal_id", "label"] + [spec.name for spec in matrix.catalog])
        for i in range(len(matrix.rows)):
            writer.writerow(
                [int(matrix.observation_ids[i]), int(matrix.labels[i])]
                + matrix.rows[i].tolist()
            )


def write_dedup_map(duplicates: dict[int, list[IndicatorSpec]], catalog, path) -> None:
    """One row per merged column: kept column index/name, merged indicator name."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kept_column", "kept_name", "merged_name"])
        for kept, merged in sorted(duplicates.items()):
            for spec in merged:
                writer.writerow([kept, catalog[kept].name, spec.name])


# ---------------------------------------------------------------------------
# models


def save_nb_model(model: NaiveBayesModel, path) -> None:
    np.savez(
        path,
        format_version=_MODEL_VERSION,
        kind="naive_bayes",
        class_priors=model.class_priors,
        cond_prob=model.cond_prob,
    )


def load_nb_model(path) -> NaiveBayesModel:
    data = np.load(path, allow_pickle=False)
    if int(data["format_version"]) != _MODEL_VERSION or str(data["kind"]) != "naive_bayes":
        raise InvalidInputError(f"{path}: not a supported naive Bayes model file")
    return NaiveBayesModel(class_priors=data["class_priors"], cond_prob=data["cond_prob"])


def save_rf_model(model: ForestModel, path) -> None:
    arrays = {
        "format_version": _MODEL_VERSION,
        "kind": "random_forest",
        "oob_accuracy": model.oob_accuracy,
        "n_columns": model.n_columns,
        "n_trees": model.params.n_trees,
        "mtry": -1 if model.params.mtry is None else model.params.mtry,
        "seed": model.params.seed,
        "tree_sizes": np.array([len(t.feature) for t in model.trees], dtype=np.int64),
        "feature": np.concatenate([t.feature for t in model.trees]),
        "left": np.concatenate([t.left for t in model.trees]),
        "right": np.concatenate([t.right for t in model.trees]),
        "leaf": np.concatenate([t.leaf for t in model.trees]),
    }
    np.savez(path, **arrays)


def load_rf_model(path) -> ForestModel:
    data = np.load(path, allow_pickle=False)
    if int(data["format_version"]) != _MODEL_VERSION or str(data["kind"]) != "random_forest":
        raise InvalidInputError(f"{path}: not a supported random forest model file")
    sizes = data["tree_sizes"]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    trees = [
        Tree(
            feature=data["feature"][offsets[i] : offsets[i + 1]],
            left=data["left"][offsets[i] : offsets[i + 1]],
            right=data["right"][offsets[i] : offsets[i + 1]],
            leaf=data["leaf"][offsets[i] : offsets[i + 1]],
        )
        for i in range(len(sizes))
    ]
    mtry = int(data["mtry"])
    params = ForestParams(
        n_trees=int(data["n_trees"]), mtry=None if mtry < 0 else mtry, seed=int(data["seed"])
    )
    return ForestModel(
        trees=trees,
        oob_accuracy=float(data["oob_accuracy"]),
        n_columns=int(data["n_columns"]),
        params=params,
    )


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
