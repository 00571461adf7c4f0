import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keypredist import analytics as A
from keypredist.analytics import DomainError, UnsupportedFormula
from keypredist.keyspace import Scheme, SchemeParams
from keypredist.validation import grid_optimal_f_2pwr

TP = Scheme.TWO_PHASE
RND = Scheme.RANDOM
WR = Scheme.TWO_PHASE_WR


def P(N=1000, L=10000, k=100, f=0.5, scheme=TP):
    return SchemeParams(N, L, k, None if scheme is RND else f, scheme)


class TestSharedKeys:
    def test_distance_zero(self):
        assert A.expected_shared_keys(P(), 0) == 100

    def test_reference_distance_one(self):
        assert float(A.expected_shared_keys(P(), 1)) == pytest.approx(50.0, abs=1e-12)

    def test_random_any_distance(self):
        for d in (1, 5, 50):
            assert A.expected_shared_keys(P(scheme=RND), d) == pytest.approx(1.0)

    def test_random_mean_by_enumeration(self):
        # all C(10,3)^2 ring pairs
        rings = list(itertools.combinations(range(10), 3))
        total = sum(len(set(a) & set(b)) for a in rings for b in rings)
        assert total / len(rings) ** 2 == pytest.approx(float(A.expected_shared_keys(P(5, 10, 3, scheme=RND), 1)))

    def test_2pwr_unsupported(self):
        with pytest.raises(UnsupportedFormula):
            A.expected_shared_keys(P(scheme=WR), 1)

    def test_recurrence_matches_closed_form(self):
        p = P(200, 1000, 30, 0.2)
        for d in range(0, 12):
            assert A.expected_shared_keys_recurrence(p, d) == pytest.approx(float(A.expected_shared_keys(p, d)))

    def test_equal_at_f_equals_x(self):
        p = P(100, 1000, 100, 0.1)
        for d in range(1, 30):
            assert abs(float(A.expected_shared_keys(p, d)) - 10.0) <= 1e-12

    @pytest.mark.parametrize("f", [0.01, 0.2, 0.5, 0.9])
    def test_monotone_gap(self, f):
        p = P(f=f)
        gaps = [abs(float(A.expected_shared_keys(p, d)) - 1.0) for d in range(1, 40)]
        assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))
        if p.B > 0:
            vals = [float(A.expected_shared_keys(p, d)) for d in range(1, 40)]
            assert all(b < a or a - 1.0 < 1e-12 for a, b in zip(vals, vals[1:]))

    def test_exact_chain_mean_matches(self):
        p = P(200, 1000, 30, 0.2)
        for d in (1, 2, 3, 7):
            assert A.share_count_exact(p, d).mean() == pytest.approx(float(A.expected_shared_keys(p, d)), rel=1e-9)

    def test_exact_chain_2pwr_distance_one(self):
        p = P(20, 60, 10, 0.3, WR)
        dist = A.share_count_exact(p, 1)
        assert dist.pmf[:3].sum() == pytest.approx(0.0, abs=1e-15)
        assert dist.pmf.sum() == pytest.approx(1.0)


class TestSharePmf:
    def test_full_overlap_l10_k3(self):
        dist = A.share_count_pmf(P(5, 10, 3, scheme=RND), 1)
        assert dist.pmf[3] == pytest.approx(1 / 120)
        assert not dist.approximate

    def test_pmf_by_enumeration(self):
        rings = list(itertools.combinations(range(10), 3))
        counts = np.zeros(4)
        for b in rings:
            counts[len({0, 1, 2} & set(b))] += 1
        dist = A.share_count_pmf(P(5, 10, 3, scheme=RND), 1)
        assert np.allclose(dist.pmf, counts / counts.sum())

    def test_two_phase_far_is_binomial(self):
        from scipy import stats

        dist = A.share_count_pmf(P(), 400)
        assert np.allclose(dist.pmf, stats.binom.pmf(np.arange(101), 100, 0.01), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 20), st.integers(0, 30), st.sampled_from([RND, TP]))
    def test_normalised_and_mean(self, k, d, scheme):
        fk = max(1, k // 3) if k > 1 else None
        if scheme is TP and fk is None:
            scheme = RND
        p = P(50, 10 * k, k, (fk or 1) / k, scheme)
        dist = A.share_count_pmf(p, max(d, 1))
        assert dist.pmf.sum() == pytest.approx(1.0, abs=1e-9)
        assert dist.mean() == pytest.approx(float(A.expected_shared_keys(p, max(d, 1))), abs=1e-9)

    def test_threshold_favours_two_phase(self):
        # f >= k/L at full scale: P(share >= q) higher under 2-Phase
        for d in range(1, 11):
            for q in range(1, 6):
                assert A.prob_share_at_least(P(), d, q) > A.prob_share_at_least(P(scheme=RND), d, q)


class TestExclusivity:
    def test_two_nodes(self):
        p = P(2, 100, 10, scheme=RND)
        assert float(A.exclusivity_random(p)) == pytest.approx(0.01)

    def test_full_scale_value(self):
        assert float(A.exclusivity_random(P(scheme=RND))) == pytest.approx(4.4e-9, rel=0.02)

    def test_full_pool_is_zero(self):
        assert A.exclusivity_random(SchemeParams(5, 7, 7, None, RND)) == 0

    @pytest.mark.parametrize("adjacent", [False, True])
    def test_two_phase_vanishes_as_f_nears_one(self, adjacent):
        k = 1000
        base = float(A.exclusivity_two_phase(P(200, 100000, k, 0.5), adjacent=adjacent))
        near = float(A.exclusivity_two_phase(P(200, 100000, k, (k - 1) / k), adjacent=adjacent))
        assert near < 1e-4 * base

    def test_two_phase_beats_random_in_range(self):
        p = P(f=0.01)
        assert A.exclusivity_two_phase(p) > A.exclusivity_random(p)

    def test_small_network_domain(self):
        with pytest.raises(DomainError):
            A.exclusivity_two_phase(P(4, 100, 10, 0.5))
        with pytest.raises(DomainError):
            A.exclusivity_two_phase(P(3, 100, 10, 0.5), adjacent=True)

    def test_closed_forms_match_chain_for_interior_lids(self):
        p = P(50, 500, 20, 0.05)
        assert float(A.exclusivity_exact(p, 10, 20)) == pytest.approx(float(A.exclusivity_two_phase(p)), rel=1e-12)
        assert float(A.exclusivity_exact(p, 10, 11)) == pytest.approx(
            float(A.exclusivity_two_phase(p, adjacent=True)), rel=1e-12
        )
        r = P(50, 500, 20, scheme=RND)
        assert float(A.exclusivity_exact(r, 1, 50)) == pytest.approx(float(A.exclusivity_random(r)), rel=1e-12)

    def test_chain_by_enumeration(self):
        # tiny 2-Phase network: enumerate every ring sequence
        N, L, k, fk = 4, 5, 2, 1
        p = SchemeParams(N, L, k, fk / k, TP)

        def extend(seqs):
            out = []
            for prob, rings in seqs:
                prev = rings[-1]
                for kept in itertools.combinations(sorted(prev), fk):
                    rest = [x for x in range(L) if x not in prev]
                    for new in itertools.combinations(rest, k - fk):
                        w = 1 / math.comb(k, fk) / math.comb(len(rest), k - fk)
                        out.append((prob * w, rings + [set(kept) | set(new)]))
            return out

        seqs = [(1 / math.comb(L, k), [set(r)]) for r in itertools.combinations(range(L), k)]
        for _ in range(N - 1):
            seqs = extend(seqs)
        key = 0
        for i, j in ((1, 2), (1, 3), (2, 4), (1, 4)):
            want = sum(
                prob
                for prob, rings in seqs
                if {n + 1 for n, r in enumerate(rings) if key in r} == {i, j}
            )
            assert float(A.exclusivity_exact(p, i, j)) == pytest.approx(want, rel=1e-12)

    def test_2pwr_scaling_limit(self):
        p = P(1000, 10**6, 1000, 0.001, WR)
        ratio = float(A.exclusivity_2pwr(p)) / float(A.exclusivity_random(p))
        assert ratio == pytest.approx(1.0, abs=0.01)

    def test_2pwr_ratio_grows_with_n(self):
        ratios = []
        for N in (100, 500, 1000, 2000):
            p = P(N, f=0.5, scheme=WR)
            ratios.append(float(A.exclusivity_2pwr(p)) / float(A.exclusivity_random(p)))
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_2pwr_flagged_approximate(self):
        assert not A.exclusivity_2pwr(P(scheme=WR)).exact


class TestOptimalF2pwr:
    def test_reference_value(self):
        assert float(A.optimal_f_2pwr(P(scheme=WR))) == pytest.approx((9.99 - 4) / 9.95, abs=1e-12)

    def test_grid_oracle(self):
        p = P(200, 1000, 40, 0.5, WR)
        assert abs(float(A.optimal_f_2pwr(p)) - grid_optimal_f_2pwr(200, 40, 1000)) <= 1e-3

    def test_infeasible(self):
        ev = A.optimal_f_2pwr(P(200, 10000, 100, 0.5, WR))
        assert "infeasible" in ev.flags and ev.clamped
        assert ev.extra["raw"] <= 0 and float(ev) == 0.01


class TestLemma2:
    def test_collapse_when_b_zero(self):
        p = P(100, 1000, 100, 0.1)
        assert float(A.e_z_expected(p, 99, 2, 5, 1)) == pytest.approx(0.1)

    def test_reference_value(self):
        assert float(A.e_z_expected(P(), 0, 2, 3, 1)) == pytest.approx(50.0)

    def test_zero_at_endpoint(self):
        assert float(A.e_z_expected(P(), 3, 2, 3, 3)) == 0

    def test_domain(self):
        with pytest.raises(DomainError):
            A.e_z_expected(P(), 100, 2, 5, 1)
        with pytest.raises(DomainError):
            A.e_z_expected(P(), 0, 5, 2, 1)


class TestCapture:
    def test_random_reference_value(self):
        ev = A.pcr_random(P(scheme=RND), approximate=True)
        assert float(ev) == pytest.approx(0.3697, abs=1e-4)
        assert abs(float(A.pcr_random(P(scheme=RND))) - float(ev)) / float(ev) < 0.01

    def test_random_full_pool(self):
        assert float(A.pcr_random(SchemeParams(5, 8, 8, None, RND))) == pytest.approx(1.0)

    def test_log_comb_ratio(self):
        assert math.exp(A.log_comb_ratio(8, 10, 3)) == pytest.approx(math.comb(8, 3) / math.comb(10, 3))
        assert A.log_comb_ratio(2, 10, 3) == -math.inf
        assert A.log_comb_ratio(9000, 10000, 100) == pytest.approx(
            math.log(math.comb(9000, 100)) - math.log(math.comb(10000, 100))
        )

    def test_position_mapping(self):
        assert A.capture_position(10, 16, 7) == ("outside", 3)
        assert A.capture_position(10, 16, 19) == ("outside", 3)
        assert A.capture_position(10, 16, 11) == ("inside", 1)
        assert A.capture_position(10, 16, 15) == ("inside", 1)
        with pytest.raises(DomainError):
            A.capture_position(10, 16, 10)

    def test_bound_mirror_symmetry(self):
        p = P(60, 600, 20, 0.1)
        for t in (1, 2, 5):
            assert A.pcr_two_phase_bound(p, 20, 26, 20 - t) == A.pcr_two_phase_bound(p, 20, 26, 26 + t)
        assert A.pcr_two_phase_bound(p, 20, 26, 21) == A.pcr_two_phase_bound(p, 20, 26, 25)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 30), st.integers(1, 9), st.integers(1, 8), st.integers(1, 12), st.booleans())
    def test_bound_is_probability(self, k, fk_tenths, y, t, reduced):
        fk = max(1, min(k - 1, round(k * fk_tenths / 10)))
        p = P(80, 4 * k + 10, k, fk / k)
        i, j = 30, 30 + y
        for l in {i - min(t, 29), j + t, i + 1 if y > 1 else j + 1}:
            assert 0.0 <= float(A.pcr_two_phase_bound(p, i, j, l, reduced)) <= 1.0

    def test_exact_chain_is_symmetric(self):
        p = P(60, 600, 20, 0.1)
        assert float(A.pcr_two_phase_exact(p, 20, 26, 17)) == pytest.approx(
            float(A.pcr_two_phase_exact(p, 20, 26, 29)), rel=1e-9
        )


class TestOptimalFTwoPhase:
    def test_separated_nodes(self):
        ev = A.optimal_f_two_phase(P(), 3, 10, "inside")
        assert abs(float(ev) - 0.01) <= 0.005

    def test_beats_grid(self):
        p = P()
        for side in ("outside", "inside", "worst"):
            f_star = float(A.optimal_f_two_phase(p, 3, 10, side))
            if side == "worst":
                fn = lambda f: A.worst_case_objective(p, f, 10)
            else:
                fn = lambda f: A.link_vulnerability_objective(p, f, 3, 10, side)
            best = max(fn(f) for f in np.arange(0.01, 1.0, 1e-3))
            assert fn(f_star) >= best - 1e-12

    def test_adjacent_pair(self):
        ev = A.optimal_f_two_phase(P(), 1, 1, "outside")
        assert 0.01 <= float(ev) < 1

    def test_golden_section(self):
        assert A.golden_section_max(lambda v: -(v - 0.3) ** 2, 0, 1, 1e-9) == pytest.approx(0.3, abs=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            A.optimal_f_two_phase(P(), 0, 5)


class TestComparativeBound:
    def test_reference_value(self):
        assert float(A.comparative_f_upper_bound(P(scheme=RND))) == pytest.approx(0.01 * 1.99 / 1.02)

    def test_small_x_limit(self):
        ev = A.comparative_f_upper_bound(SchemeParams(10, 10**6, 100, None, RND))
        assert float(ev) == pytest.approx(2e-4, rel=0.01)
        assert "empty-range" in ev.flags

    def test_feasible(self):
        assert not A.comparative_f_upper_bound(P(scheme=RND)).flags


class TestClusterCapture:
    def test_extremes(self):
        assert float(A.cluster_single_capture(P(), M=50, pcr=0.0)) == 0.0
        assert float(A.cluster_single_capture(P(), M=50, pcr=1.0)) == 1.0

    def test_complement_exposed(self):
        ev = A.cluster_single_capture(P(60, 600, 20, 0.1), M=10)
        assert ev.extra["complement"] == pytest.approx(1 - float(ev))
        assert ev.extra["offset"] == 6

    def test_density_one_rejected(self):
        with pytest.raises(DomainError):
            A.cluster_single_capture(P(), M=1)


class TestVC:
    def test_random_equals_pcr(self):
        p = P(60, 600, 20, scheme=RND)
        assert float(A.vc_metric(p, None, 3, 9)) == pytest.approx(float(A.pcr_random(p)))

    def test_three_nodes(self):
        p = P(3, 600, 20, 0.1)
        assert float(A.vc_metric(p, None, 1, 2)) == pytest.approx(float(A.pcr_two_phase_bound(p, 1, 2, 3)))

    def test_two_phase_lower_in_range(self):
        p = P(200, 10000, 100, 0.01)
        assert A.vc_metric(p, None, 50, 120) <= A.vc_metric(p.replace(scheme=RND, f=None), None, 50, 120)

    def test_2pwr_unsupported(self):
        with pytest.raises(UnsupportedFormula):
            A.vc_metric(P(scheme=WR), None, 2, 5)


class TestEvaluations:
    def test_eligibility(self):
        assert A.eligibility_value(0) == 1.0
        assert A.eligibility_value(4) == 0.25
        with pytest.raises(DomainError):
            A.eligibility_value(-1)

    def test_pure(self):
        p = P(60, 600, 20, 0.1)
        a = [float(A.pcr_two_phase_bound(p, 20, 26, l)) for l in (1, 21, 40)]
        b = [float(A.pcr_two_phase_bound(p, 20, 26, l)) for l in (1, 21, 40)]
        assert a == b

    def test_clamp_flag(self):
        ev = A._prob(1.0000001, "x")
        assert float(ev) == 1.0 and ev.clamped
