"""Chunked net containers and streaming three-pass normalization.

Containers are HDF5 by default (datasets ``/nets``, ``/mol_ids``,
``/conformer_idx``, ``/unfolding_idx``, ``/labels/<name>``,
``/descriptors/<name>``), with a dependency-light flat fallback (one JSON
header line followed by raw little-endian float32/int32 payloads).

Normalization runs in three sequential passes so datasets never need to fit
in memory:

1. element-wise mean map ``t`` and max map ``u`` (floored at 0.1 so later
   divisions are safe),
2. mean normalization ``x - t``, L2 normalization ``2x/u - 1`` and the
   element-wise population standard deviation,
3. standardization ``(x - t) / sigma`` (0 where sigma vanishes).

Test or generalisation data is normalized with the maps frozen from the
training set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import h5py
import numpy as np

from .augment import NetRecord
from .errors import (DatastoreError, FileFormatError, LabelMismatch,
                     MixedLevels, StatsMismatch)

MAX_FLOOR = 0.1
SIGMA_EPSILON = 1e-12
DEFAULT_BATCH = 64

_FLAT_MAGIC = "icochem-flat-v1"


class NormalizationMode(Enum):
    MEAN = "mean"
    L2 = "l2"
    STANDARDIZE = "std"


@dataclass
class DatasetHeader:
    level: int
    n_nets: int
    n_molecules: int
    channel_count: int
    label_names: list[str]
    descriptor_names: list[str] = field(default_factory=list)
    created_at: str = ""
    tool: str = "icochem"

    @property
    def n_faces(self) -> int:
        return 20 * 4 ** self.level


@dataclass
class StatsMaps:
    """Element-wise dataset statistics driving all normalization modes."""

    mean: np.ndarray            # (F, 3)
    max: np.ndarray             # (F, 3), floored at 0.1
    std: np.ndarray | None      # (F, 3), filled by pass 2
    batch_size: int

    def validate_against(self, n_faces: int) -> None:
        if self.mean.shape != (n_faces, 3) or self.max.shape != (n_faces, 3):
            raise StatsMismatch(
                f"stats maps shaped {self.mean.shape}, dataset has "
                f"{n_faces} faces")
        if self.std is not None and self.std.shape != (n_faces, 3):
            raise StatsMismatch("std map does not match the dataset")


# --- writing ------------------------------------------------------------------

def write_dataset(records: Iterable[NetRecord], path: str | Path,
                  labels: dict[str, dict[str, float]] | None = None,
                  descriptors: dict[str, dict[str, float]] | None = None,
                  chunk_nets: int = DEFAULT_BATCH,
                  fmt: str = "hdf5") -> DatasetHeader:
    """Stream NetRecords into a container file.

    ``labels`` and ``descriptors`` map mol_id to name->value rows; every
    molecule in the stream must be covered when they are given.
    """
    records = iter(records)
    try:
        first = next(records)
    except StopIteration:
        raise DatastoreError("record stream is empty; refusing to write "
                             "an empty dataset") from None

    label_names = _row_names(labels, "label")
    desc_names = _row_names(descriptors, "descriptor")
    level = first.level
    n_faces = 20 * 4 ** level

    writer = _open_writer(path, fmt, n_faces, label_names, desc_names,
                          chunk_nets)
    mol_ids_seen: dict[str, None] = {}
    n_nets = 0
    try:
        for record in _chain_first(first, records):
            if record.level != level:
                raise MixedLevels(
                    f"record level {record.level} != dataset level {level}")
            mol_ids_seen[record.mol_id] = None
            writer.append(
                record.map.astype("<f4"), record.mol_id,
                record.conformer_idx, record.unfolding_idx,
                _lookup_row(labels, record.mol_id, label_names, "label"),
                _lookup_row(descriptors, record.mol_id, desc_names,
                            "descriptor"))
            n_nets += 1
        header = DatasetHeader(
            level=level, n_nets=n_nets, n_molecules=len(mol_ids_seen),
            channel_count=3, label_names=label_names,
            descriptor_names=desc_names,
            created_at=datetime.now(timezone.utc).isoformat())
        writer.finalize(header)
    except BaseException:
        writer.close()
        Path(path).unlink(missing_ok=True)  # never leave a partial file
        raise
    finally:
        writer.close()
    return header


def _chain_first(first, rest):
    yield first
    yield from rest


def _row_names(rows, what: str) -> list[str]:
    if not rows:
        return []
    names = sorted(next(iter(rows.values())).keys())
    for mol_id, row in rows.items():
        if sorted(row.keys()) != names:
            raise LabelMismatch(
                f"{what} row for {mol_id!r} does not match {names}")
    return names


def _lookup_row(rows, mol_id: str, names: list[str], what: str):
    if not names:
        return None
    if rows is None or mol_id not in rows:
        raise LabelMismatch(f"no {what} row for molecule {mol_id!r}")
    return np.array([rows[mol_id][n] for n in names])


class _H5Writer:
    def __init__(self, path, n_faces, label_names, desc_names, chunk):
        self.file = h5py.File(path, "w")
        chunk_shape = (max(1, chunk), n_faces, 3)
        self.nets = self.file.create_dataset(
            "nets", shape=(0, n_faces, 3), maxshape=(None, n_faces, 3),
            dtype="<f4", chunks=chunk_shape)
        self.mol_ids = self.file.create_dataset(
            "mol_ids", shape=(0,), maxshape=(None,),
            dtype=h5py.string_dtype("utf-8"))
        self.conformer = self.file.create_dataset(
            "conformer_idx", shape=(0,), maxshape=(None,), dtype="<i4")
        self.unfolding = self.file.create_dataset(
            "unfolding_idx", shape=(0,), maxshape=(None,), dtype="<i4")
        self.labels = {n: self.file.create_dataset(
            f"labels/{n}", shape=(0,), maxshape=(None,), dtype="<f8")
            for n in label_names}
        self.descs = {n: self.file.create_dataset(
            f"descriptors/{n}", shape=(0,), maxshape=(None,), dtype="<f8")
            for n in desc_names}
        self._buffer: list[tuple] = []
        self._chunk = max(1, chunk)

    def append(self, net, mol_id, conf, unf, label_row, desc_row):
        self._buffer.append((net, mol_id, conf, unf, label_row, desc_row))
        if len(self._buffer) >= self._chunk:
            self.flush()

    def flush(self):
        if not self._buffer:
            return
        n_old = self.nets.shape[0]
        n_new = n_old + len(self._buffer)
        nets, ids, confs, unfs, lrows, drows = zip(*self._buffer)
        for ds in (self.nets, self.mol_ids, self.conformer, self.unfolding,
                   *self.labels.values(), *self.descs.values()):
            ds.resize(n_new, axis=0)
        self.nets[n_old:] = np.stack(nets)
        self.mol_ids[n_old:] = list(ids)
        self.conformer[n_old:] = confs
        self.unfolding[n_old:] = unfs
        for j, name in enumerate(self.labels):
            self.labels[name][n_old:] = [row[j] for row in lrows]
        for j, name in enumerate(self.descs):
            self.descs[name][n_old:] = [row[j] for row in drows]
        self._buffer.clear()

    def finalize(self, header: DatasetHeader):
        self.flush()
        for key, value in _header_attrs(header).items():
            self.file.attrs[key] = value

    def close(self):
        self.file.close()


class _FlatWriter:
    """Single-file fallback: JSON header line, then raw payload arrays."""

    def __init__(self, path, n_faces, label_names, desc_names, chunk):
        self.path = Path(path)
        self.n_faces = n_faces
        self.label_names = label_names
        self.desc_names = desc_names
        self.tmp = self.path.with_suffix(self.path.suffix + ".payload")
        self.fh = open(self.tmp, "wb")
        self.mol_ids: list[str] = []
        self.confs: list[int] = []
        self.unfs: list[int] = []
        self.labels: dict[str, list[float]] = {n: [] for n in label_names}
        self.descs: dict[str, list[float]] = {n: [] for n in desc_names}

    def append(self, net, mol_id, conf, unf, label_row, desc_row):
        self.fh.write(np.ascontiguousarray(net, dtype="<f4").tobytes())
        self.mol_ids.append(mol_id)
        self.confs.append(int(conf))
        self.unfs.append(int(unf))
        for j, name in enumerate(self.label_names):
            self.labels[name].append(float(label_row[j]))
        for j, name in enumerate(self.desc_names):
            self.descs[name].append(float(desc_row[j]))

    def finalize(self, header: DatasetHeader):
        self.fh.close()
        meta = _header_attrs(header)
        meta.update({
            "magic": _FLAT_MAGIC,
            "mol_ids": self.mol_ids,
            "conformer_idx": self.confs,
            "unfolding_idx": self.unfs,
            "labels": self.labels,
            "descriptors": self.descs,
        })
        head = json.dumps(meta).encode() + b"\n"
        with open(self.path, "wb") as out:
            out.write(head)
            with open(self.tmp, "rb") as payload:
                while chunk := payload.read(1 << 20):
                    out.write(chunk)
        self.tmp.unlink()
        self.fh = None

    def close(self):
        if self.fh is not None and not self.fh.closed:
            self.fh.close()
        if self.tmp.exists():
            self.tmp.unlink()


def _header_attrs(header: DatasetHeader) -> dict:
    return {
        "level": header.level,
        "n_nets": header.n_nets,
        "n_molecules": header.n_molecules,
        "channel_count": header.channel_count,
        "label_names": json.dumps(header.label_names),
        "descriptor_names": json.dumps(header.descriptor_names),
        "created_at": header.created_at,
        "tool": header.tool,
    }


def _open_writer(path, fmt, n_faces, label_names, desc_names, chunk):
    if fmt == "hdf5":
        return _H5Writer(path, n_faces, label_names, desc_names, chunk)
    if fmt == "flat":
        return _FlatWriter(path, n_faces, label_names, desc_names, chunk)
    raise ValueError(f"unknown container format {fmt!r}")


# --- reading ------------------------------------------------------------------

class DatasetReader:
    """Batch-oriented access to a container file (HDF5 or flat)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(self.path)
        if h5py.is_hdf5(str(self.path)):
            self.format = "hdf5"
            self._file = h5py.File(self.path, "r")
            attrs = dict(self._file.attrs)
            if "level" not in attrs or "nets" not in self._file:
                raise FileFormatError(f"{self.path} lacks icochem metadata")
            self._meta = attrs
            self._nets = self._file["nets"]
        else:
            self.format = "flat"
            with open(self.path, "rb") as fh:
                head = fh.readline()
                offset = fh.tell()
            try:
                meta = json.loads(head.decode())
            except (UnicodeDecodeError, json.JSONDecodeError):
                raise FileFormatError(
                    f"{self.path} is neither HDF5 nor icochem flat") from None
            if meta.get("magic") != _FLAT_MAGIC:
                raise FileFormatError(f"{self.path} has wrong magic")
            self._file = None
            self._meta = meta
            n = int(meta["n_nets"])
            n_faces = 20 * 4 ** int(meta["level"])
            self._nets = np.memmap(self.path, dtype="<f4", mode="r",
                                   offset=offset, shape=(n, n_faces, 3))

    @property
    def header(self) -> DatasetHeader:
        m = self._meta
        def names(key):
            raw = m.get(key, "[]")
            return json.loads(raw) if isinstance(raw, str) else list(raw)
        return DatasetHeader(
            level=int(m["level"]), n_nets=int(m["n_nets"]),
            n_molecules=int(m["n_molecules"]),
            channel_count=int(m.get("channel_count", 3)),
            label_names=names("label_names"),
            descriptor_names=names("descriptor_names"),
            created_at=str(m.get("created_at", "")),
            tool=str(m.get("tool", "icochem")))

    @property
    def n_nets(self) -> int:
        return int(self._meta["n_nets"])

    @property
    def level(self) -> int:
        return int(self._meta["level"])

    @property
    def n_faces(self) -> int:
        return 20 * 4 ** self.level

    def read(self, start: int, stop: int) -> np.ndarray:
        return np.asarray(self._nets[start:stop], dtype="<f4")

    def iter_batches(self, batch_size: int = DEFAULT_BATCH
                     ) -> Iterator[tuple[int, np.ndarray]]:
        for start in range(0, self.n_nets, batch_size):
            stop = min(start + batch_size, self.n_nets)
            yield start, self.read(start, stop)

    def mol_ids(self) -> list[str]:
        if self.format == "hdf5":
            return [s.decode() if isinstance(s, bytes) else str(s)
                    for s in self._file["mol_ids"][:]]
        return list(self._meta["mol_ids"])

    def int_column(self, name: str) -> np.ndarray:
        if self.format == "hdf5":
            return self._file[name][:].astype(np.int64)
        return np.asarray(self._meta[name], dtype=np.int64)

    def labels(self) -> dict[str, np.ndarray]:
        return self._float_group("labels")

    def descriptors(self) -> dict[str, np.ndarray]:
        return self._float_group("descriptors")

    def _float_group(self, group: str) -> dict[str, np.ndarray]:
        if self.format == "hdf5":
            if group not in self._file:
                return {}
            return {name: ds[:] for name, ds in self._file[group].items()}
        return {name: np.asarray(vals, dtype=np.float64)
                for name, vals in self._meta.get(group, {}).items()}

    def close(self):
        if self._file is not None:
            self._file.close()
        self._nets = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _writer_like(reader: DatasetReader, path: str | Path,
                 fmt: str | None = None):
    header = reader.header
    fmt = fmt or reader.format
    writer = _open_writer(path, fmt, reader.n_faces, header.label_names,
                          header.descriptor_names, DEFAULT_BATCH)
    return writer, header


def _copy_aux_rows(reader: DatasetReader):
    mol_ids = reader.mol_ids()
    confs = reader.int_column("conformer_idx")
    unfs = reader.int_column("unfolding_idx")
    labels = reader.labels()
    descs = reader.descriptors()
    label_names = sorted(labels)
    desc_names = sorted(descs)
    for i in range(reader.n_nets):
        lrow = np.array([labels[n][i] for n in label_names]) if label_names else None
        drow = np.array([descs[n][i] for n in desc_names]) if desc_names else None
        yield mol_ids[i], int(confs[i]), int(unfs[i]), lrow, drow


def _write_transformed(reader: DatasetReader, out_path: str | Path,
                       batches: Iterator[np.ndarray],
                       fmt: str | None = None) -> None:
    """Write a container mirroring ``reader`` with transformed net values."""
    writer, header = _writer_like(reader, out_path, fmt)
    aux = _copy_aux_rows(reader)
    try:
        for batch in batches:
            for net in batch:
                mol_id, conf, unf, lrow, drow = next(aux)
                writer.append(net.astype("<f4"), mol_id, conf, unf, lrow, drow)
        header.created_at = datetime.now(timezone.utc).isoformat()
        writer.finalize(header)
    except BaseException:
        writer.close()
        Path(out_path).unlink(missing_ok=True)
        raise
    finally:
        writer.close()


# --- normalization passes -----------------------------------------------------

def pass1_mean_max(reader: DatasetReader,
                   batch_size: int = DEFAULT_BATCH
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise mean map and (0.1-floored) max map, one sequential pass."""
    if reader.n_nets == 0:
        raise DatastoreError("dataset is empty")
    total = np.zeros((reader.n_faces, 3))
    running_max = np.full((reader.n_faces, 3), MAX_FLOOR)
    for _, batch in reader.iter_batches(batch_size):
        batch = batch.astype(np.float64)
        total += batch.sum(axis=0)
        np.maximum(running_max, batch.max(axis=0), out=running_max)
    return total / reader.n_nets, running_max


def pass2_norms_and_std(reader: DatasetReader, mean_map: np.ndarray,
                        max_map: np.ndarray,
                        batch_size: int = DEFAULT_BATCH,
                        mean_out: str | Path | None = None,
                        l2_out: str | Path | None = None) -> np.ndarray:
    """Second pass: emit mean/L2-normalized variants, return the std map.

    The standard deviation accumulates with a numerically stable batch
    combine, so results do not depend on the batch size.
    """
    _check_maps(reader, mean_map, max_map)
    count = 0
    running_mean = np.zeros((reader.n_faces, 3))
    m2 = np.zeros((reader.n_faces, 3))

    def batches():
        nonlocal count, running_mean, m2
        for _, batch in reader.iter_batches(batch_size):
            batch = batch.astype(np.float64)
            n_b = len(batch)
            mean_b = batch.mean(axis=0)
            m2_b = ((batch - mean_b) ** 2).sum(axis=0)
            delta = mean_b - running_mean
            total = count + n_b
            running_mean = running_mean + delta * (n_b / total)
            m2 = m2 + m2_b + delta ** 2 * (count * n_b / total)
            count = total
            yield batch

    if mean_out is not None and l2_out is not None:
        # tee the single pass into both output containers
        writer_m, header_m = _writer_like(reader, mean_out)
        writer_l, header_l = _writer_like(reader, l2_out)
        aux_m = _copy_aux_rows(reader)
        aux_l = _copy_aux_rows(reader)
        try:
            for batch in batches():
                for net in batch - mean_map:
                    mol_id, conf, unf, lrow, drow = next(aux_m)
                    writer_m.append(net.astype("<f4"), mol_id, conf, unf,
                                    lrow, drow)
                for net in (2.0 * batch / max_map) - 1.0:
                    mol_id, conf, unf, lrow, drow = next(aux_l)
                    writer_l.append(net.astype("<f4"), mol_id, conf, unf,
                                    lrow, drow)
            stamp = datetime.now(timezone.utc).isoformat()
            header_m.created_at = header_l.created_at = stamp
            writer_m.finalize(header_m)
            writer_l.finalize(header_l)
        except BaseException:
            writer_m.close()
            writer_l.close()
            Path(mean_out).unlink(missing_ok=True)
            Path(l2_out).unlink(missing_ok=True)
            raise
        finally:
            writer_m.close()
            writer_l.close()
    elif mean_out is not None:
        _write_transformed(reader, mean_out,
                           (b - mean_map for b in batches()))
    elif l2_out is not None:
        _write_transformed(reader, l2_out,
                           ((2.0 * b / max_map) - 1.0 for b in batches()))
    else:
        for _ in batches():
            pass
    return np.sqrt(m2 / count)


def pass3_standardize(reader: DatasetReader, mean_map: np.ndarray,
                      std_map: np.ndarray, out_path: str | Path,
                      batch_size: int = DEFAULT_BATCH) -> None:
    """Third pass: (x - mean) / sigma, with constant pixels pinned to 0."""
    _check_maps(reader, mean_map, std_map)
    safe = np.where(std_map > SIGMA_EPSILON, std_map, 1.0)
    live = std_map > SIGMA_EPSILON
    _write_transformed(
        reader, out_path,
        (((b.astype(np.float64) - mean_map) / safe) * live
         for _, b in reader.iter_batches(batch_size)))


def apply_train_stats(reader: DatasetReader, stats: StatsMaps,
                      mode: NormalizationMode, out_path: str | Path,
                      batch_size: int = DEFAULT_BATCH) -> None:
    """Normalize a test/generalisation dataset with frozen training maps."""
    stats.validate_against(reader.n_faces)
    if mode is NormalizationMode.MEAN:
        def transform(b):
            return b - stats.mean
    elif mode is NormalizationMode.L2:
        def transform(b):
            return (2.0 * b / stats.max) - 1.0
    else:
        if stats.std is None:
            raise StatsMismatch("stats carry no std map; run pass 2 first")
        safe = np.where(stats.std > SIGMA_EPSILON, stats.std, 1.0)
        live = stats.std > SIGMA_EPSILON

        def transform(b):
            return ((b - stats.mean) / safe) * live
    _write_transformed(
        reader, out_path,
        (transform(b.astype(np.float64))
         for _, b in reader.iter_batches(batch_size)))


def _check_maps(reader: DatasetReader, *maps: np.ndarray) -> None:
    for m in maps:
        if m.shape != (reader.n_faces, 3):
            raise StatsMismatch(
                f"map shaped {m.shape} does not fit a level-{reader.level} "
                f"dataset ({reader.n_faces} faces)")


# --- stats sidecar ------------------------------------------------------------

def stats_sidecar_path(dataset_path: str | Path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".stats.h5")


def save_stats(stats: StatsMaps, path: str | Path) -> None:
    with h5py.File(path, "w") as fh:
        fh.create_dataset("mean", data=stats.mean)
        fh.create_dataset("max", data=stats.max)
        if stats.std is not None:
            fh.create_dataset("std", data=stats.std)
        fh.create_dataset("batch_size", data=stats.batch_size)


def load_stats(path: str | Path) -> StatsMaps:
    with h5py.File(path, "r") as fh:
        return StatsMaps(
            mean=fh["mean"][:], max=fh["max"][:],
            std=fh["std"][:] if "std" in fh else None,
            batch_size=int(fh["batch_size"][()]))


def compute_stats(reader: DatasetReader,
                  batch_size: int = DEFAULT_BATCH) -> StatsMaps:
    """Passes 1 and 2 without emitting normalized variants."""
    mean_map, max_map = pass1_mean_max(reader, batch_size)
    std_map = pass2_norms_and_std(reader, mean_map, max_map, batch_size)
    return StatsMaps(mean_map, max_map, std_map, batch_size)


# --- small utilities ----------------------------------------------------------

def minmax_scale(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Scale labels into [0, 1]; constant labels map to 0."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if math.isclose(lo, hi):
        return np.zeros_like(values), lo, hi
    return (values - lo) / (hi - lo), lo, hi


def seeded_split(mol_ids: list[str], fractions: tuple[float, float, float],
                 seed: int) -> dict[str, list[str]]:
    """Shuffled molecule-level train/val/test split."""
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must sum to 1")
    unique = sorted(set(mol_ids))
    rng = np.random.default_rng(seed)
    rng.shuffle(unique)
    n = len(unique)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": unique[:n_train],
        "val": unique[n_train:n_train + n_val],
        "test": unique[n_train + n_val:],
    }
