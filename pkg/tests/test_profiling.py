import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alkdrec import profiling
from alkdrec.backbone import RecommenderModel
from alkdrec.profiling import TypeCounts


class TestDifficulty:
    def test_zero_embeddings(self):
        m = RecommenderModel(np.zeros((4, 3)))
        assert profiling.difficulty(m, [0, 1, 2]) == -0.5

    def test_single_item_analytic(self):
        E = np.zeros((2, 2))
        E[0, 0] = math.sqrt(math.log(3))
        assert profiling.difficulty(RecommenderModel(E), [0]) == pytest.approx(-0.75, abs=1e-12)

    def test_empty_session(self):
        with pytest.raises(ValueError):
            profiling.difficulty(RecommenderModel(np.zeros((2, 2))), [])

    def test_open_interval(self, trained_pair, small_ds):
        teacher, _ = trained_pair
        for s in small_ds.part("train"):
            assert -1 < profiling.difficulty(teacher, s.items) < 0


class TestAssignGains:
    def test_rank_one_and_two(self):
        prof = profiling.assign_gains({7: -0.2, 3: -0.9})
        assert [p.sid for p in prof] == [7, 3]
        assert (prof[0].g_ef, prof[0].g_si, prof[0].g_in) == (1.0, 0.5, 0.5)
        assert prof[1].g_ef == 0.0009765625

    def test_ties_go_to_smaller_sid(self):
        prof = profiling.assign_gains({9: -0.5, 4: -0.5, 6: -0.1})
        assert [(p.sid, p.rank) for p in prof] == [(6, 1), (4, 2), (9, 3)]

    def test_easy_first(self):
        prof = profiling.assign_gains({1: -0.2, 2: -0.9}, rank_direction="easy-first")
        assert prof[0].sid == 2

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            profiling.assign_gains({1: -0.5}, mu=0)
        with pytest.raises(ValueError):
            profiling.assign_gains({1: float("nan")})

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.integers(0, 10_000), st.floats(-0.999, -0.001), min_size=1, max_size=40))
    def test_permutation_and_monotone(self, dfs):
        prof = profiling.assign_gains(dfs)
        assert sorted(p.sid for p in prof) == sorted(dfs)
        assert [p.rank for p in prof] == list(range(1, len(dfs) + 1))
        g = [p.g_ef for p in prof]
        assert all(a > b for a, b in zip(g, g[1:]) if b > 0)
        assert all(p.g_si + p.g_in == p.g_ef and p.g_si < p.g_ef for p in prof)


class TestTypeCounts:
    @pytest.mark.parametrize("n,ratio,want", [
        (500, (1, 5, 4), (50, 250, 200)),
        (10, (1, 5, 4), (1, 5, 4)),
        (7, (1, 1, 1), (2, 3, 2)),
        (8, (1, 1, 1), (2, 3, 3)),
        (5, (0, 1, 0), (0, 5, 0)),
    ])
    def test_examples(self, n, ratio, want):
        assert profiling.type_counts(n, ratio).as_tuple() == want

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 5000), st.tuples(st.integers(0, 9), st.integers(0, 9), st.integers(0, 9)).filter(lambda r: sum(r) > 0))
    def test_sums_to_n(self, n, ratio):
        c = profiling.type_counts(n, ratio)
        assert c.n == n
        for k, r in zip(c.as_tuple(), ratio):
            assert k >= math.floor(n * r / sum(ratio))
            if r == 0:
                assert k == 0

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            profiling.type_counts(5, (0, 0, 0))

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            TypeCounts(-1, 2, 0)


def test_profiles_roundtrip(tmp_path):
    prof = profiling.assign_gains({1: -0.3, 2: -0.4})
    profiling.write_profiles(tmp_path / "p.jsonl", prof)
    assert profiling.read_profiles(tmp_path / "p.jsonl") == prof
