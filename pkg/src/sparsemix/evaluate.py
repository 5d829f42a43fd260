"""Scoring of fitted assignments and Monte Carlo aggregation.

Cluster labels are arbitrary, so a fit is scored by the best match over
all relabelings: the count of indices where some permutation of the
fitted labels agrees with the truth.  The Monte Carlo driver runs one
(dimension, dilation, method) cell, records every replicate and reports
the mean matched count (ANCRCI, average number of correctly recovered
class indices).
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baseline import baseline_fit
from .model import Hyperparams, SampleSet
from .simulate import ScenarioConfig, data_hash, fit_seed_seq, gen_replicate
from .sparse_em import run as sparse_fit

MAX_PERMUTATION_K = 5
METHODS = ("sparse", "baseline")


@dataclass(frozen=True)
class ReplicateRecord:
    replicate: int
    correct: int
    converged: bool
    seconds: float
    data_hash: str


@dataclass(frozen=True)
class McResult:
    """Per-replicate records plus their mean correct count for one cell."""

    cell: tuple          # (dim, dilation, method)
    records: tuple       # ReplicateRecord, ordered by replicate index
    ancrci: float

    @property
    def correct_counts(self) -> np.ndarray:
        return np.array([r.correct for r in self.records])


def best_permutation_correct(assignments, truth, K: int) -> int:
    """Max agreement count over all K! relabelings of ``assignments``.

    Exhaustive enumeration, deliberately capped at K <= 5.
    """
    if K > MAX_PERMUTATION_K:
        raise ValueError(f"K > {MAX_PERMUTATION_K} is unsupported (exhaustive matching only)")
    a = np.asarray(assignments, dtype=int)
    t = np.asarray(truth, dtype=int)
    if a.shape != t.shape or a.ndim != 1:
        raise ValueError("assignments and truth must be equal-length vectors")
    if np.any(a < 0) or np.any(a >= K) or np.any(t < 0) or np.any(t >= K):
        raise ValueError("labels out of range [0, K)")
    confusion = np.zeros((K, K), dtype=int)
    np.add.at(confusion, (a, t), 1)
    best = 0
    for perm in itertools.permutations(range(K)):
        matched = int(confusion[np.arange(K), perm].sum())
        if matched > best:
            best = matched
    return best


def fit_replicate(scenario: ScenarioConfig, method: str, hp: Hyperparams, replicate: int) -> ReplicateRecord:
    """Generate, fit and score one replicate of a cell."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    sample = gen_replicate(scenario, replicate)
    Y = SampleSet.from_points(sample.points)
    seed = fit_seed_seq(scenario, replicate)
    start = time.perf_counter()
    if method == "sparse":
        report = sparse_fit(Y, scenario.K, hp, seed=seed)
    else:
        report = baseline_fit(Y, scenario.K, hp, seed=seed)
    seconds = time.perf_counter() - start
    correct = best_permutation_correct(report.assignments, sample.labels, scenario.K)
    return ReplicateRecord(
        replicate=replicate,
        correct=correct,
        converged=bool(report.converged),
        seconds=seconds,
        data_hash=data_hash(sample),
    )


def _worker(args) -> ReplicateRecord:
    return fit_replicate(*args)


def run_mc_cell(scenario: ScenarioConfig, method: str, hp: Hyperparams, jobs: int = 1) -> McResult:
    """All replicates of one (dim, dilation, method) cell.

    Replicates run independently (optionally in a process pool); results
    are ordered by replicate index, so the output does not depend on
    scheduling.  Non-converged fits are recorded with their final
    assignments scored like any other, never dropped.
    """
    tasks = [(scenario, method, hp, r) for r in range(scenario.replicates)]
    if jobs > 1 and scenario.replicates > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_worker, tasks, chunksize=8))
    else:
        records = [fit_replicate(*t) for t in tasks]
    records.sort(key=lambda rec: rec.replicate)
    ancrci = float(np.mean([rec.correct for rec in records]))
    return McResult(
        cell=(scenario.dim, scenario.dilation, method),
        records=tuple(records),
        ancrci=ancrci,
    )
