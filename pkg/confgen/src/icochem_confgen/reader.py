"""Read icochem net containers for ML consumption.

Understands both container layouts the featurizer emits: HDF5 files with
``/nets``, ``/mol_ids``, ``/labels/<name>`` datasets, and the flat fallback
(one JSON header line followed by raw little-endian float32 nets, which is
memory-mapped so batch slices are zero-copy).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import h5py
import numpy as np

from .errors import FileFormatError

_FLAT_MAGIC = "icochem-flat-v1"


class DatasetReader:
    """Batch access to a net container written by the featurizer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            raise FileNotFoundError(self.path)
        if h5py.is_hdf5(str(self.path)):
            self.format = "hdf5"
            self._file = h5py.File(self.path, "r")
            if "nets" not in self._file or "level" not in self._file.attrs:
                raise FileFormatError(f"{self.path} lacks net metadata")
            self._meta = dict(self._file.attrs)
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
            shape = (int(meta["n_nets"]), 20 * 4 ** int(meta["level"]), 3)
            self._nets = np.memmap(self.path, dtype="<f4", mode="r",
                                   offset=offset, shape=shape)

    @property
    def level(self) -> int:
        return int(self._meta["level"])

    @property
    def n_nets(self) -> int:
        return int(self._meta["n_nets"])

    @property
    def n_faces(self) -> int:
        return 20 * 4 ** self.level

    @property
    def label_names(self) -> list[str]:
        raw = self._meta.get("label_names", "[]")
        return json.loads(raw) if isinstance(raw, str) else list(raw)

    def metadata(self) -> dict:
        return {
            "level": self.level,
            "n_nets": self.n_nets,
            "n_molecules": int(self._meta.get("n_molecules", 0)),
            "n_faces": self.n_faces,
            "label_names": self.label_names,
        }

    def nets(self, start: int, stop: int) -> np.ndarray:
        if self.format == "flat":
            return self._nets[start:stop]  # memmap slice, zero-copy
        return self._nets[start:stop]

    def mol_ids(self) -> list[str]:
        if self.format == "hdf5":
            return [s.decode() if isinstance(s, bytes) else str(s)
                    for s in self._file["mol_ids"][:]]
        return list(self._meta["mol_ids"])

    def labels(self) -> dict[str, np.ndarray]:
        if self.format == "hdf5":
            if "labels" not in self._file:
                return {}
            return {name: ds[:] for name, ds in self._file["labels"].items()}
        return {name: np.asarray(vals, dtype=np.float64)
                for name, vals in self._meta.get("labels", {}).items()}

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
        self._nets = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def dataset_iterator(path: str | Path, batch: int
                     ) -> Iterator[tuple[np.ndarray, dict[str, np.ndarray]]]:
    """Yield (nets, labels) batches in storage order.

    ``nets`` has shape (batch, F, 3) with F = 20 * 4**level; the final
    batch may be shorter.  ``labels`` maps each label name to its slice.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    with DatasetReader(path) as reader:
        labels = reader.labels()
        for start in range(0, reader.n_nets, batch):
            stop = min(start + batch, reader.n_nets)
            rows = {name: values[start:stop]
                    for name, values in labels.items()}
            yield reader.nets(start, stop), rows
