"""Sampled trajectories and their CSV / JSON-lines export."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PathSample:
    """One trajectory on ``times`` with its realized length.

    ``absorbed[i]`` is true exactly when ``times[i] >= realized_length``; the
    value there is the endpoint ``z``.
    """

    times: np.ndarray
    values: np.ndarray
    realized_length: float
    absorbed: np.ndarray

    def to_dict(self, path_id: int = 0) -> dict:
        return {
            "path_id": path_id,
            "realized_length": float(self.realized_length),
            "t": self.times.tolist(),
            "value": self.values.tolist(),
            "absorbed": [bool(a) for a in self.absorbed],
        }


@dataclass(frozen=True, eq=False)
class PathBatch:
    """``n`` trajectories sharing one time grid, stored as arrays of shape ``(n, m+1)``."""

    times: np.ndarray
    values: np.ndarray
    realized_length: np.ndarray
    absorbed: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> PathSample:
        return PathSample(self.times, self.values[i], float(self.realized_length[i]), self.absorbed[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def concatenate(cls, batches: list[PathBatch]) -> PathBatch:
        return cls(
            batches[0].times,
            np.concatenate([b.values for b in batches]),
            np.concatenate([b.realized_length for b in batches]),
            np.concatenate([b.absorbed for b in batches]),
        )

    def write_csv(self, path) -> None:
        """Long format with columns ``path_id, t, value, absorbed``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "t", "value", "absorbed"])
            ts = [repr(float(t)) for t in self.times]
            for i in range(len(self)):
                for j, t in enumerate(ts):
                    w.writerow([i, t, repr(float(self.values[i, j])), int(self.absorbed[i, j])])

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i, p in enumerate(self):
                fh.write(json.dumps(p.to_dict(i)) + "\n")
