"""Schedule enumeration, corpus generation, and normalization statistics."""

import math
from collections import Counter

import pytest

from dtxsim.datagen import (BASE_PROPORTIONS, GenPlan, enumerate_schedules,
                            fit_norm_stats, generate, manifest_files,
                            schedule_label, schedule_population,
                            load_training_arrays)
from dtxsim.features import FIELDS
from dtxsim.session import read_snapshots_csv


def multiset_permutation_count(counts):
    """Independent oracle: n! / prod(multiplicities!)."""
    mult = Counter(counts)
    total = math.factorial(len(counts))
    for m in mult.values():
        total //= math.factorial(m)
    return total


class TestEnumerateSchedules:
    def test_builtin_bases_give_270(self):
        assert len(enumerate_schedules()) == 270

    def test_single_dominant_tuple(self):
        assert len(enumerate_schedules([(20, 0, 0, 0, 0)])) == 5

    def test_two_pair_tuple(self):
        assert len(enumerate_schedules([(8, 8, 2, 2, 0)])) == 30

    def test_every_base_matches_the_permutation_oracle(self):
        for base in BASE_PROPORTIONS:
            got = len(enumerate_schedules([base]))
            assert got == multiset_permutation_count(base), base

    def test_all_bases_sum_matches_oracle(self):
        # bases have pairwise distinct multisets, so the union is the sum
        expected = sum(multiset_permutation_count(b) for b in BASE_PROPORTIONS)
        assert len(enumerate_schedules()) == expected

    def test_schedules_are_unique_and_sum_twenty(self):
        schedules = enumerate_schedules()
        assert len(set(schedules)) == len(schedules)
        assert all(sum(s) == 20 for s in schedules)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            enumerate_schedules([(5, 5, 5, 5, 1)])

    def test_population_drops_zero_counts(self):
        pop = schedule_population((12, 4, 2, 2, 0))
        assert pop == [("ZIC", 12), ("ZIP", 4), ("GDX", 2), ("AA", 2)]


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    plan = GenPlan(schedules=[(20, 0, 0, 0, 0), (10, 10, 0, 0, 0)],
                   trials_per_schedule=2, base_seed=5, duration=300.0)
    manifest = generate(plan, out)
    return plan, manifest


class TestGenerate:
    def test_manifest_lists_all_sessions(self, small_corpus):
        plan, manifest = small_corpus
        files = manifest_files(manifest)
        assert len(files) == 4

    def test_row_counts_match_files(self, small_corpus):
        _, manifest = small_corpus
        with open(manifest) as f:
            f.readline()
            for line in f:
                name, rows = line.split(",")[:2]
                path = manifest_files(manifest)[0].rsplit("/", 1)[0] + "/" + name
                assert len(read_snapshots_csv(path)) == int(rows)

    def test_seeds_are_base_plus_index(self, small_corpus):
        _, manifest = small_corpus
        with open(manifest) as f:
            f.readline()
            seeds = [int(line.split(",")[2]) for line in f if line.strip()]
        assert seeds == [5, 6, 7, 8]

    def test_ppt_covers_scheduled_strategies(self, small_corpus):
        _, manifest = small_corpus
        with open(manifest) as f:
            header = f.readline().strip().split(",")
            rows = [line.strip().split(",") for line in f if line.strip()]
        zic_col = header.index("ppt_zic")
        zip_col = header.index("ppt_zip")
        gdx_col = header.index("ppt_gdx")
        for row in rows:
            assert row[zic_col] != ""
            assert row[gdx_col] == ""  # no GDX in either schedule
        assert rows[2][zip_col] != ""  # second schedule includes ZIP
        assert rows[0][zip_col] == ""

    def test_schedule_labels(self, small_corpus):
        _, manifest = small_corpus
        with open(manifest) as f:
            f.readline()
            labels = [line.split(",")[3] for line in f if line.strip()]
        assert labels[0] == schedule_label((20, 0, 0, 0, 0))

    def test_deterministic_regeneration(self, small_corpus, tmp_path):
        plan, manifest = small_corpus
        again = generate(plan, tmp_path / "again")
        first = [open(p).read() for p in manifest_files(manifest)]
        second = [open(p).read() for p in manifest_files(again)]
        assert first == second

    def test_unwritable_path_fails_before_running(self, tmp_path):
        blocker = tmp_path / "blocked"
        blocker.write_text("a file sits where the directory should go")
        plan = GenPlan(schedules=[(20, 0, 0, 0, 0)], trials_per_schedule=1,
                       duration=60.0)
        with pytest.raises(OSError):
            generate(plan, blocker / "out")


class TestNormStats:
    def test_minmax_over_whole_corpus(self, small_corpus):
        _, manifest = small_corpus
        stats = fit_norm_stats(manifest)
        rows = []
        for path in manifest_files(manifest):
            rows.extend(read_snapshots_csv(path))
        for i, name in enumerate(FIELDS):
            column = [r[i] for r in rows]
            assert stats.mins[i] == min(column), name
            assert stats.maxs[i] == max(column), name

    def test_time_field_bounds(self, small_corpus):
        _, manifest = small_corpus
        stats = fit_norm_stats(manifest)
        t = FIELDS.index("t")
        assert stats.mins[t] >= 0.0
        assert stats.maxs[t] <= 3600.0

    def test_stats_file_written(self, small_corpus, tmp_path):
        _, manifest = small_corpus
        path = tmp_path / "norm.txt"
        fit_norm_stats(manifest, path)
        assert path.read_text().startswith("t,")

    def test_training_arrays_shapes(self, small_corpus):
        _, manifest = small_corpus
        stats = fit_norm_stats(manifest)
        x, y = load_training_arrays(manifest, stats)
        assert x.ndim == 3 and x.shape[1:] == (1, 13)
        assert len(x) == len(y)
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_training_windows_seq_len_two(self, small_corpus):
        _, manifest = small_corpus
        stats = fit_norm_stats(manifest)
        x1, _ = load_training_arrays(manifest, stats, seq_len=1)
        x2, y2 = load_training_arrays(manifest, stats, seq_len=2)
        # each file loses seq_len - 1 windows
        assert len(x2) == len(x1) - len(manifest_files(manifest))
        assert x2.shape[1] == 2


class TestPlanValidation:
    def test_duplicate_schedules_rejected(self):
        plan = GenPlan(schedules=[(20, 0, 0, 0, 0), (20, 0, 0, 0, 0)])
        with pytest.raises(ValueError):
            plan.validate()

    def test_bad_trials_rejected(self):
        plan = GenPlan(schedules=[(20, 0, 0, 0, 0)], trials_per_schedule=0)
        with pytest.raises(ValueError):
            plan.validate()
