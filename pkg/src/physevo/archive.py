"""Append-only evaluation log shared by the optimizers and the explainability tools."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import EvalResult


@dataclass(frozen=True)
class ArchiveRecord:
    run_id: int
    iteration: int
    eval_index: int
    genotype: tuple[float, ...]
    objective: float
    hard_violations: tuple[float, ...]
    soft_penalties: tuple[float, ...]
    fidelity: int
    wall_time_ns: int = 0

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.genotype, dtype=float)

    @property
    def total_violation(self) -> float:
        return float(sum(self.hard_violations))

    @property
    def feasible(self) -> bool:
        return not any(v > 0 for v in self.hard_violations)

    def result(self) -> EvalResult:
        return EvalResult(self.objective, np.asarray(self.hard_violations), np.asarray(self.soft_penalties),
                          self.fidelity, self.eval_index)

    def to_dict(self, wall_time: bool = True) -> dict:
        d = {
            "run_id": self.run_id,
            "iteration": self.iteration,
            "eval_index": self.eval_index,
            "genotype": list(self.genotype),
            "objective": self.objective,
            "hard_violations": list(self.hard_violations),
            "soft_penalties": list(self.soft_penalties),
            "fidelity": self.fidelity,
        }
        if wall_time:
            d["wall_time_ns"] = self.wall_time_ns
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchiveRecord":
        return cls(int(d["run_id"]), int(d["iteration"]), int(d["eval_index"]),
                   tuple(float(v) for v in d["genotype"]), float(d["objective"]),
                   tuple(float(v) for v in d["hard_violations"]), tuple(float(v) for v in d["soft_penalties"]),
                   int(d["fidelity"]), int(d.get("wall_time_ns", 0)))


class EvaluationArchive:
    """Ordered log of every evaluation of one run."""

    def __init__(self, run_id: int = 0, records: Iterable[ArchiveRecord] = ()):
        self.run_id = run_id
        self._records: list[ArchiveRecord] = list(records)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[ArchiveRecord]:
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def append(self, iteration: int, x, result: EvalResult, wall_time_ns: int = 0) -> ArchiveRecord:
        if self._records and result.eval_index <= self._records[-1].eval_index:
            raise ValueError("archive records must be appended in increasing eval_index order")
        rec = ArchiveRecord(self.run_id, int(iteration), int(result.eval_index),
                            tuple(float(v) for v in np.asarray(x, dtype=float)), float(result.objective),
                            tuple(float(v) for v in result.hard_violations),
                            tuple(float(v) for v in result.soft_penalties), int(result.fidelity),
                            int(wall_time_ns))
        self._records.append(rec)
        return rec

    def extend(self, iteration: int, xs, results, wall_times=None):
        pairs = sorted(zip(results, xs, wall_times if wall_times is not None else [0] * len(results)),
                       key=lambda p: p[0].eval_index)
        for res, x, wt in pairs:
            self.append(iteration, x, res, wt)

    @property
    def genotypes(self) -> np.ndarray:
        return np.array([r.genotype for r in self._records], dtype=float)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self._records], dtype=float)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self._records], dtype=int)

    def to_jsonl(self, wall_time: bool = True) -> str:
        return "".join(json.dumps(r.to_dict(wall_time), separators=(",", ":")) + "\n" for r in self._records)

    def write(self, path, wall_time: bool = True) -> None:
        Path(path).write_text(self.to_jsonl(wall_time))

    @classmethod
    def read(cls, path) -> "EvaluationArchive":
        records = [ArchiveRecord.from_dict(json.loads(line))
                   for line in Path(path).read_text().splitlines() if line.strip()]
        run_id = records[0].run_id if records else 0
        return cls(run_id, records)

    def digest(self) -> str:
        """SHA-256 of the archive content with wall-clock times removed."""
        return hashlib.sha256(self.to_jsonl(wall_time=False).encode()).hexdigest()
