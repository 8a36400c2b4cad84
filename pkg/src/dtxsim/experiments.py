"""Head-to-head experiment harness: Balanced Group and One-to-Many tests.

A Balanced Group test (BGT) splits each side of the market evenly between
two strategies; a One-to-Many test (OTM) plants a single defector of
strategy B inside an otherwise homogeneous population of strategy A, one
defector on each side. Trials are seeded in batches of fifty: every batch
shares a base seed, and in LOCKSTEP mode each trial derives a distinct
child seed from it so that repeated trials explore different markets.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .session import (LOCKSTEP, THREADED, SessionConfig, derive_seed,
                      run_session)
from .traders import canonical_strategy

BGT = "BGT"
OTM = "OTM"

SEED_BATCH = 50

# the eight canonical head-to-head experiments
PRESETS = {
    "bgt-zic": (BGT, "ZIC", "DTX"),
    "bgt-zip": (BGT, "ZIP", "DTX"),
    "bgt-gdx": (BGT, "GDX", "DTX"),
    "bgt-aa": (BGT, "AA", "DTX"),
    "otm-zic": (OTM, "ZIC", "DTX"),
    "otm-zip": (OTM, "ZIP", "DTX"),
    "otm-gdx": (OTM, "GDX", "DTX"),
    "otm-aa": (OTM, "AA", "DTX"),
}


@dataclass
class ExperimentSpec:
    kind: str
    strategy_a: str
    strategy_b: str           # the defector in OTM
    trials: int = 50
    base_seed: int = 0
    duration: float = 3600.0
    mode: str = LOCKSTEP

    def validate(self):
        if self.kind not in (BGT, OTM):
            raise ValueError("kind must be BGT or OTM")
        canonical_strategy(self.strategy_a)
        canonical_strategy(self.strategy_b)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.mode not in (LOCKSTEP, THREADED):
            raise ValueError("mode must be LOCKSTEP or THREADED")


@dataclass
class PairedObservations:
    """Per-trial (ppt_a, ppt_b) pairs, aligned with their session seeds."""

    strategy_a: str
    strategy_b: str
    pairs: list[tuple[float, float]] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)


def build_population(spec: ExperimentSpec) -> list[tuple[str, int]]:
    """Per-side strategy counts: 10+10 for BGT, 19+1 for OTM."""
    a = canonical_strategy(spec.strategy_a)
    b = canonical_strategy(spec.strategy_b)
    if spec.kind == BGT:
        return [(a, 10), (b, 10)]
    return [(a, 19), (b, 1)]


def trial_seed(spec: ExperimentSpec, trial: int) -> int:
    """Batch-of-50 seeding: a batch shares one base seed.

    THREADED trials reuse the batch seed directly (thread timing makes the
    trials differ); LOCKSTEP trials derive a distinct child per trial since
    identical seeds would replay the identical session.
    """
    batch_seed = spec.base_seed + trial // SEED_BATCH
    if spec.mode == THREADED:
        return batch_seed
    return derive_seed(batch_seed, "trial:%d" % (trial % SEED_BATCH))


def _trial_config(spec: ExperimentSpec, trial: int) -> SessionConfig:
    population = build_population(spec)
    return SessionConfig(buyers=list(population), sellers=list(population),
                         seed=trial_seed(spec, trial), duration=spec.duration,
                         mode=spec.mode)


def _run_trial(args):
    spec, trial, model_path = args
    model = None
    if model_path is not None:
        from .neural import load_model
        model = load_model(model_path)
    config = _trial_config(spec, trial)
    try:
        result = run_session(config, model)
    except Exception as e:
        raise RuntimeError("trial %d (seed %d) failed: %s"
                           % (trial, config.seed, e)) from e
    a = canonical_strategy(spec.strategy_a)
    b = canonical_strategy(spec.strategy_b)
    return config.seed, result.ppt_by_strategy[a], result.ppt_by_strategy[b]


def run_experiment(spec: ExperimentSpec, model=None, model_path=None,
                   workers: int = 1) -> PairedObservations:
    """Run all trials; both strategies' PPT in a pair come from one session."""
    spec.validate()
    needs_model = "DTX" in (canonical_strategy(spec.strategy_a),
                            canonical_strategy(spec.strategy_b))
    if needs_model and model is None and model_path is None:
        raise ValueError("experiment includes DTX but no model was given")

    obs = PairedObservations(canonical_strategy(spec.strategy_a),
                             canonical_strategy(spec.strategy_b))
    can_parallel = workers > 1 and (not needs_model or model_path is not None)
    if can_parallel:
        tasks = [(spec, t, model_path) for t in range(spec.trials)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_trial, tasks))
        for seed, a, b in rows:
            obs.seeds.append(seed)
            obs.pairs.append((a, b))
        return obs

    if model is None and model_path is not None:
        from .neural import load_model
        model = load_model(model_path)
    for trial in range(spec.trials):
        config = _trial_config(spec, trial)
        try:
            result = run_session(config, model)
        except Exception as e:
            raise RuntimeError("trial %d (seed %d) failed: %s"
                               % (trial, config.seed, e)) from e
        obs.seeds.append(config.seed)
        obs.pairs.append((result.ppt_by_strategy[obs.strategy_a],
                          result.ppt_by_strategy[obs.strategy_b]))
    return obs


def write_trials_csv(obs: PairedObservations, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["trial", "seed", "ppt_a", "ppt_b"])
        for i, ((a, b), seed) in enumerate(zip(obs.pairs, obs.seeds)):
            writer.writerow([i, seed, repr(a), repr(b)])


def read_trials_csv(path) -> PairedObservations:
    obs = PairedObservations("A", "B")
    with open(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["trial", "seed", "ppt_a", "ppt_b"]:
            raise ValueError("%s: unexpected trials header" % path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                obs.seeds.append(int(row[1]))
                obs.pairs.append((float(row[2]), float(row[3])))
            except (IndexError, ValueError):
                raise ValueError("%s: line %d: malformed trial row"
                                 % (path, lineno)) from None
    return obs
