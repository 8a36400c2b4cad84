"""Training corpus generation: permuted trader schedules, batched sessions,
snapshot CSVs, and corpus-wide normalization statistics.
"""

from __future__ import annotations

import csv
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .features import FIELDS, NormStats
from .session import (LOCKSTEP, SessionConfig, run_session, write_snapshots_csv,
                      read_snapshots_csv)

# strategy order for proportion tuples
SCHEDULE_STRATEGIES = ("ZIC", "ZIP", "GDX", "AA", "GVWY")

# the ten base proportions of 20 traders per side used for data generation
BASE_PROPORTIONS = (
    (5, 5, 5, 5, 0),
    (8, 4, 4, 4, 0),
    (8, 8, 2, 2, 0),
    (10, 4, 4, 2, 0),
    (12, 4, 2, 2, 0),
    (14, 2, 2, 2, 0),
    (16, 2, 2, 0, 0),
    (16, 4, 0, 0, 0),
    (18, 2, 0, 0, 0),
    (20, 0, 0, 0, 0),
)

MANIFEST_NAME = "manifest.csv"
MANIFEST_HEADER = ("file,rows,seed,schedule,"
                   "ppt_zic,ppt_zip,ppt_gdx,ppt_aa,ppt_gvwy")


def enumerate_schedules(bases=BASE_PROPORTIONS) -> list[tuple[int, ...]]:
    """All distinct permutations of each base proportion tuple, deduplicated.

    Each result assigns counts to (ZIC, ZIP, GDX, AA, GVWY) in that order
    and sums to 20 per side.
    """
    out = set()
    for base in bases:
        if len(base) != len(SCHEDULE_STRATEGIES):
            raise ValueError("proportion tuple %r must have %d entries"
                             % (base, len(SCHEDULE_STRATEGIES)))
        if sum(base) != 20:
            raise ValueError("proportion tuple %r must sum to 20" % (base,))
        if any(c < 0 for c in base):
            raise ValueError("proportion tuple %r has negative counts" % (base,))
        out.update(itertools.permutations(base))
    return sorted(out)


def schedule_population(schedule) -> list[tuple[str, int]]:
    """Turn a proportion tuple into a (strategy, count) population list."""
    return [(name, count) for name, count in zip(SCHEDULE_STRATEGIES, schedule)
            if count > 0]


def schedule_label(schedule) -> str:
    return "-".join(str(c) for c in schedule)


@dataclass
class GenPlan:
    """What to generate: schedules x trials, seeded from ``base_seed``."""

    schedules: list[tuple[int, ...]] = field(default_factory=enumerate_schedules)
    trials_per_schedule: int = 2
    base_seed: int = 0
    duration: float = 3600.0
    mode: str = LOCKSTEP

    def validate(self):
        if self.trials_per_schedule < 1:
            raise ValueError("trials_per_schedule must be >= 1")
        if len(set(self.schedules)) != len(self.schedules):
            raise ValueError("schedules must be unique")
        for s in self.schedules:
            if sum(s) != 20:
                raise ValueError("schedule %r must sum to 20" % (s,))


def _session_config(plan: GenPlan, schedule, seed: int) -> SessionConfig:
    population = schedule_population(schedule)
    return SessionConfig(buyers=list(population), sellers=list(population),
                         seed=seed, duration=plan.duration, mode=plan.mode)


def _run_one(args):
    plan, schedule, seed, out_path = args
    result = run_session(_session_config(plan, schedule, seed))
    write_snapshots_csv(result.snapshots, out_path)
    return len(result.snapshots), result.ppt_by_strategy


def generate(plan: GenPlan, out_dir, workers: int = 1) -> str:
    """Run every planned session, write one snapshot CSV each, and a manifest.

    Session seeds are ``base_seed + session_index``. Returns the manifest
    path. The manifest lists file names relative to its own directory.
    """
    plan.validate()
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w") as f:
            f.write("ok")
        os.remove(probe)
    except OSError as e:
        raise OSError("output directory %r is not writable: %s" % (out_dir, e))

    tasks = []
    index = 0
    for schedule in plan.schedules:
        for _ in range(plan.trials_per_schedule):
            seed = plan.base_seed + index
            name = "session_%05d.csv" % index
            tasks.append((plan, schedule, seed, os.path.join(out_dir, name)))
            index += 1

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(t) for t in tasks]

    manifest_path = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest_path, "w", newline="") as f:
        f.write(MANIFEST_HEADER + "\n")
        writer = csv.writer(f)
        for (plan_, schedule, seed, path), (rows, ppt) in zip(tasks, outcomes):
            cells = [os.path.basename(path), rows, seed, schedule_label(schedule)]
            for name in SCHEDULE_STRATEGIES:
                cells.append(repr(ppt[name]) if name in ppt else "")
            writer.writerow(cells)
    return manifest_path


def manifest_files(manifest_path) -> list[str]:
    """Absolute snapshot-file paths listed in a manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    out = []
    with open(manifest_path) as f:
        header = f.readline().strip()
        if header != MANIFEST_HEADER:
            raise ValueError("%s: unexpected manifest header" % manifest_path)
        for row in csv.reader(f):
            if row:
                out.append(os.path.join(base, row[0]))
    return out


def fit_norm_stats(manifest_path, out_path=None) -> NormStats:
    """Per-field min/max over every row of every file in the manifest."""
    files = manifest_files(manifest_path)
    if not files:
        raise ValueError("empty corpus: %s lists no files" % manifest_path)
    mins = [float("inf")] * len(FIELDS)
    maxs = [float("-inf")] * len(FIELDS)
    seen = 0
    for path in files:
        for row in read_snapshots_csv(path):
            seen += 1
            for i, v in enumerate(row):
                if v < mins[i]:
                    mins[i] = v
                if v > maxs[i]:
                    maxs[i] = v
    if seen == 0:
        raise ValueError("empty corpus: no snapshot rows in %s" % manifest_path)
    stats = NormStats(mins, maxs)
    if out_path is not None:
        stats.save(out_path)
    return stats


def load_training_arrays(manifest_path, stats: NormStats, seq_len: int = 1):
    """Normalized (x, y) training arrays from a corpus manifest.

    Windows longer than one snapshot are built from consecutive rows within
    a session file; the target is the last row's trade price.
    """
    import numpy as np

    from .features import N_INPUTS, normalize_inputs, normalize_target

    xs, ys = [], []
    for path in manifest_files(manifest_path):
        rows = read_snapshots_csv(path)
        scaled = [normalize_inputs(r[:N_INPUTS], stats) for r in rows]
        for end in range(seq_len - 1, len(rows)):
            xs.append(scaled[end - seq_len + 1:end + 1])
            ys.append(normalize_target(rows[end][-1], stats))
    if not xs:
        raise ValueError("corpus has no usable windows (seq_len %d)" % seq_len)
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
