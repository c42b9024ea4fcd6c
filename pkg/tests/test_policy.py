import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alkdrec import policy
from alkdrec.policy import InsufficientSupport, build_policy, find_k_star, prefix_sums, sample_batch
from alkdrec.profiling import TypeCounts, assign_gains, type_counts

MU = 10


def rank_gains(n, mu=MU):
    return np.arange(1, n + 1, dtype=float) ** -mu


def hand_example():
    """N=3, counts (1,1,1), gains 1, 2^-10, 3^-10 worked by hand in rationals."""
    g = [Fraction(1), Fraction(1, 2**10), Fraction(1, 3**10)]
    H = [1 / g[0], 1 / g[0] + 1 / g[1], 1 / g[0] + 1 / g[1] + 1 / (g[2] * Fraction(3, 2))]
    G = [Fraction(1, 2), Fraction(1), Fraction(1) + Fraction(2, 3)]
    gamma = (1 + 1 - 3 + G[2]) / H[2]
    p = [1 / (H[2] * g[0]), 1 / (H[2] * g[1]), 1 / (H[2] * g[2] * Fraction(3, 2))]
    return H, G, gamma, p


class TestPrefixSums:
    def test_unit_denominators(self):
        g = np.array([2.0, 1.5, 1.0])
        H, G = prefix_sums(g, np.full(3, 0.5), np.full(3, 0.5), TypeCounts(1, 1, 1))
        assert H[1] == 2.0
        assert G[1] == 1.0

    def test_worked_example(self):
        H, G = prefix_sums(rank_gains(3), rank_gains(3) / 2, rank_gains(3) / 2, TypeCounts(1, 1, 1))
        Hx, Gx, _, _ = hand_example()
        assert H[2] == pytest.approx(40391, abs=1e-9)
        np.testing.assert_allclose(H, [float(h) for h in Hx], rtol=1e-14)
        np.testing.assert_allclose(G, [float(x) for x in Gx], rtol=1e-14)

    def test_requires_strictly_decreasing(self):
        with pytest.raises(ValueError):
            prefix_sums(np.array([1.0, 1.0]), np.ones(2), np.ones(2), TypeCounts(1, 1, 0))

    def test_non_positive_denominator(self):
        g = np.array([2.0, 1.0])
        with pytest.raises(ValueError, match="position 1"):
            prefix_sums(g, np.array([-1.0, 0.5]), np.array([0.5, 0.5]), TypeCounts(0, 1, 1))

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            prefix_sums(rank_gains(3), rank_gains(3) / 2, rank_gains(3) / 2, TypeCounts(1, 1, 2))


class TestKStar:
    @pytest.mark.parametrize("rule", ["gamma", "ratio"])
    def test_worked_example(self, rule):
        g = rank_gains(3)
        H, G = prefix_sums(g, g / 2, g / 2, TypeCounts(1, 1, 1))
        assert find_k_star(g, TypeCounts(1, 1, 1), H, G, rule) == 3

    def test_ratio_values(self):
        g = rank_gains(3)
        H, _ = prefix_sums(g, g / 2, g / 2, TypeCounts(1, 1, 1))
        assert (g[1] - 1) / H[1] == pytest.approx(-9.75e-4, rel=1e-3)
        assert (g[2] - 1) / H[2] == pytest.approx(-2.476e-5, rel=1e-3)

    def test_no_effective_forces_n(self):
        g = rank_gains(5)
        assert build_policy(g, TypeCounts(0, 3, 2)).k_star == 5

    def test_tie_goes_to_smaller(self):
        g = np.array([3.0, 2.0, 1.0])
        H = np.array([1.0, 2.0, 6.0])
        G = np.array([1.0, 2.0, 3.0])
        assert find_k_star(g, TypeCounts(3, 0, 0), H, G) == 1
        assert find_k_star(np.array([1.0, 2.0, 0.5]), TypeCounts(3, 0, 0), H, G, rule="ratio") == 1


class TestBuildPolicy:
    def test_worked_example(self):
        pol = build_policy(rank_gains(3), TypeCounts(1, 1, 1))
        _, _, gamma, p = hand_example()
        assert pol.k_star == 3
        np.testing.assert_allclose(pol.p, [float(x) for x in p], atol=1e-15)
        # the quoted decimals are rounded; the third is one unit high in its last place
        np.testing.assert_allclose(pol.p, [2.476e-5, 0.025352, 0.974624], atol=1e-6)
        assert pol.gamma == pytest.approx(float(gamma), rel=1e-12)
        assert pol.gamma == pytest.approx(1.6505e-5, abs=1e-9)

    def test_support_on_first_branch_only(self):
        # no effective instances: k* = k_si + k_in = N, so only the first branch is used
        g = rank_gains(4)
        pol = build_policy(g, TypeCounts(0, 2, 2))
        np.testing.assert_allclose(pol.p, (1 / g) / (1 / g).sum())

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 60), st.data())
    def test_invariants(self, n, data):
        k_ef = data.draw(st.integers(0, n - 1))
        k_si = data.draw(st.integers(0, n - k_ef))
        counts = TypeCounts(k_ef, k_si, n - k_ef - k_si)
        mu = data.draw(st.sampled_from([1.0, 2.0, 10.0]))
        pol = build_policy(rank_gains(n, mu), counts)
        m = counts.k_si + counts.k_in
        assert abs(pol.p.sum() - 1) <= 1e-12
        assert np.all(pol.p >= 0)
        assert np.all(pol.p[pol.k_star:] == 0)
        assert max(1, m) <= pol.k_star <= n
        assert np.all(np.diff(pol.H) > 0)
        # p grows within each branch because it is proportional to 1/g
        first, second = pol.p[: min(m, pol.k_star)], pol.p[m: pol.k_star]
        assert np.all(np.diff(first) >= 0) and np.all(np.diff(second) >= 0)
        if pol.k_star < n:
            assert pol.gamma >= pol.g_ef[pol.k_star] - 1e-12

    def test_underflowed_tail_excluded(self, caplog):
        g = np.concatenate([rank_gains(5), np.zeros(3)])
        pol = build_policy(g, TypeCounts(1, 4, 3))
        assert "underflowed" in caplog.text
        assert np.all(pol.p[5:] == 0)
        assert abs(pol.p.sum() - 1) < 1e-12

    def test_large_pool_stays_finite(self):
        prof = assign_gains({i: -i / 2000 for i in range(1, 1201)})
        pol = policy.policy_from_profiles(prof, type_counts(1200))
        assert np.isfinite(pol.gamma) and abs(pol.p.sum() - 1) < 1e-12
        assert pol.sids[0] == 1  # largest df is the hardest

    def test_json_shape(self, tmp_path):
        pol = build_policy(rank_gains(3), TypeCounts(1, 1, 1), sids=[7, 8, 9])
        policy.write_policy(tmp_path / "p.json", pol)
        raw = json.loads((tmp_path / "p.json").read_text())
        assert raw["k_star"] == 3 and raw["counts"] == [1, 1, 1]
        assert [e["sid"] for e in raw["p"]] == [7, 8, 9]


def algorithm_one(p, tau, rng):
    """Literal rejection loop: draw with replacement, keep first occurrences."""
    out = []
    while len(out) < tau:
        s = int(rng.choice(len(p), p=p))
        if s not in out:
            out.append(s)
    return out


class TestSampling:
    def test_single_draw_frequencies(self):
        pol = build_policy(rank_gains(6, 2.0), TypeCounts(1, 3, 2))
        draws = policy.draw(pol, 100_000, np.random.default_rng(0))
        freq = np.bincount(draws, minlength=6) / 1e5
        sigma = np.sqrt(pol.p * (1 - pol.p) / 1e5)
        assert np.all(np.abs(freq - pol.p) <= 3 * sigma + 1e-12)

    def test_three_sigma_miss_rate(self):
        # across seeds, the chance that some support index leaves its 3-sigma band
        # should match the family-wise rate of independent normal checks
        from scipy.stats import norm
        pol = build_policy(rank_gains(12), type_counts(12))
        sup = np.flatnonzero(pol.p > 0)
        sigma = np.sqrt(pol.p[sup] * (1 - pol.p[sup]) / 1e5)
        misses = 0
        for seed in range(200):
            freq = np.bincount(policy.draw(pol, 100_000, np.random.default_rng(seed)), minlength=12)[sup] / 1e5
            misses += bool(np.any(np.abs(freq - pol.p[sup]) > 3 * sigma))
        expected = 1 - (1 - 2 * norm.sf(3)) ** len(sup)
        assert abs(misses / 200 - expected) <= 3 * np.sqrt(expected * (1 - expected) / 200)

    def test_tau_equal_support(self):
        g = rank_gains(5, 1.0)
        pol = build_policy(g, TypeCounts(3, 1, 1))
        b = sample_batch(pol, pol.support_size, seed=1)
        assert sorted(b.sids) == sorted(np.flatnonzero(pol.p > 0).tolist())

    def test_tau_zero_and_too_large(self):
        pol = build_policy(rank_gains(5), TypeCounts(1, 2, 2))
        assert len(sample_batch(pol, 0, 0)) == 0
        with pytest.raises(InsufficientSupport, match="insufficient support"):
            sample_batch(pol, pol.support_size + 1, 0)

    def test_deterministic_and_distinct(self):
        pol = build_policy(rank_gains(30, 1.0), type_counts(30))
        a, b = sample_batch(pol, 10, 5), sample_batch(pol, 10, 5)
        assert a == b and len(set(a.sids)) == 10

    def test_matches_rejection_loop(self):
        # ordered first two picks should follow the same law as the literal loop
        pol = build_policy(rank_gains(4, 1.0), TypeCounts(1, 2, 1))
        rng = np.random.default_rng(3)
        trials = 20_000
        race = np.zeros((4, 4))
        loop = np.zeros((4, 4))
        for t in range(trials):
            a = sample_batch(pol, 2, t).sids
            race[a[0], a[1]] += 1
            b = algorithm_one(pol.p, 2, rng)
            loop[b[0], b[1]] += 1
        p = pol.p
        exact = np.array([[0 if i == j else p[i] * p[j] / (1 - p[i]) for j in range(4)] for i in range(4)])
        sigma = np.sqrt(exact * (1 - exact) / trials)
        assert np.all(np.abs(race / trials - exact) <= 4 * sigma + 1e-12)
        assert np.all(np.abs(loop / trials - exact) <= 4 * sigma + 1e-12)

    def test_batch_roundtrip(self, tmp_path):
        policy.write_batch(tmp_path / "b.txt", policy.Batch((5, 2, 9)))
        assert policy.read_batch(tmp_path / "b.txt").sids == (5, 2, 9)
