import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keypredist.adversary import estimate_shared_keys
from keypredist.keyspace import (
    KeyRing,
    ParameterError,
    Scheme,
    SchemeParams,
    _sample_excluding,
    _subset,
    assign,
    assign_random,
    assign_two_phase,
    assign_two_phase_wr,
    check_rings,
    format_rings,
    parse_rings,
)
from keypredist.seeding import rng_for


def ring_sets(rings):
    return [set(r.keys) for r in rings]


class TestSchemeParams:
    def test_scheme_aliases(self):
        assert Scheme.parse("2-phase") is Scheme.TWO_PHASE
        assert Scheme.parse("TWO_PHASE") is Scheme.TWO_PHASE
        assert Scheme.parse("2pwr") is Scheme.TWO_PHASE_WR
        with pytest.raises(ValueError):
            Scheme.parse("quantum")

    def test_derived_quantities(self):
        p = SchemeParams(1000, 10000, 100, 0.5, Scheme.TWO_PHASE)
        assert p.x == pytest.approx(0.01)
        assert p.B == pytest.approx(4900 / 9900)
        assert (p.inherited, p.fresh) == (50, 50)

    def test_random_ignores_f(self):
        p = SchemeParams(10, 100, 5, None, Scheme.RANDOM)
        assert p.inherited == 0
        with pytest.raises(ParameterError):
            p.B

    @pytest.mark.parametrize(
        "N, L, k, f, scheme",
        [
            (1, 100, 10, 0.5, Scheme.TWO_PHASE),  # N < 2
            (10, 10, 10, 0.5, Scheme.TWO_PHASE),  # k == L
            (10, 100, 10, None, Scheme.TWO_PHASE),  # missing f
            (10, 100, 10, 0.05, Scheme.TWO_PHASE),  # f < 1/k
            (10, 100, 10, 1.0, Scheme.TWO_PHASE),  # f == 1
            (10, 100, 10, 0.25, Scheme.TWO_PHASE),  # f*k = 2.5
            (10, 25, 10, 0.1, Scheme.TWO_PHASE),  # 9 > 25 - 20 + 1
            (10, 10, 10, 0.1, Scheme.TWO_PHASE_WR),  # k == L
            (0, 10, 3, None, Scheme.RANDOM),
            (5, 10, 11, None, Scheme.RANDOM),
        ],
    )
    def test_rejects_invalid(self, N, L, k, f, scheme):
        with pytest.raises(ParameterError):
            SchemeParams(N, L, k, f, scheme)

    def test_pool_constraint_boundaries(self):
        # (1-f)k == L - 2k + fk is allowed
        SchemeParams(5, 29, 10, 0.1, Scheme.TWO_PHASE)
        # for 2PWR the pool condition reduces to k <= L
        SchemeParams(5, 10, 9, 8 / 9, Scheme.TWO_PHASE_WR)

    def test_replace_revalidates(self):
        p = SchemeParams(10, 100, 10, 0.5, Scheme.TWO_PHASE)
        assert p.replace(f=0.2).inherited == 2
        with pytest.raises(ParameterError):
            p.replace(f=0.25)


class TestSampling:
    def test_subset_is_uniform(self):
        rng = rng_for(3)
        counts = {}
        for _ in range(6000):
            s = tuple(sorted(_subset(rng, 4, 2).tolist()))
            counts[s] = counts.get(s, 0) + 1
        assert set(counts) == set(itertools.combinations(range(4), 2))
        assert max(counts.values()) - min(counts.values()) < 200

    def test_sample_excluding_avoids_excluded(self):
        rng = rng_for(4)
        excluded = np.array([0, 3, 4, 9])
        for _ in range(200):
            got = _sample_excluding(rng, 10, excluded, 6)
            assert sorted(got.tolist()) == [1, 2, 5, 6, 7, 8]
        got = _sample_excluding(rng, 10, excluded, 3)
        assert len(set(got.tolist())) == 3 and not set(got.tolist()) & set(excluded.tolist())


class TestAssignRandom:
    def test_full_pool_single_node(self):
        rings = assign_random(SchemeParams(1, 5, 5, None, Scheme.RANDOM), seed=1)
        assert ring_sets(rings) == [{0, 1, 2, 3, 4}]

    def test_deterministic(self):
        p = SchemeParams(30, 300, 12, None, Scheme.RANDOM)
        assert assign(p, 9) == assign(p, 9)
        assert assign(p, 9) != assign(p, 10)

    def test_wrong_scheme_rejected(self):
        with pytest.raises(ParameterError):
            assign_random(SchemeParams(5, 50, 5, 0.2, Scheme.TWO_PHASE), 1)

    def test_mean_overlap_full_scale(self):
        p = SchemeParams(1000, 10000, 100, None, Scheme.RANDOM)
        rings = [np.array(sorted(r.keys)) for r in assign(p, 5)]
        rng = rng_for(6)
        pairs = [rng.choice(1000, 2, replace=False) for _ in range(4000)]
        vals = [np.intersect1d(rings[a], rings[b]).size for a, b in pairs]
        mean, se = np.mean(vals), np.std(vals, ddof=1) / np.sqrt(len(vals))
        assert abs(mean - 1.0) <= 3 * se


class TestAssignTwoPhase:
    def test_consecutive_overlap_is_exactly_inherited(self):
        p = SchemeParams(200, 1000, 30, 0.2, Scheme.TWO_PHASE)
        rings = ring_sets(assign_two_phase(p, 2))
        assert all(len(a & b) == 6 for a, b in zip(rings, rings[1:]))

    def test_full_scale_distance_one(self):
        p = SchemeParams(1000, 10000, 100, 0.5, Scheme.TWO_PHASE)
        rings = ring_sets(assign(p, 8))
        assert {len(a & b) for a, b in zip(rings, rings[1:])} == {50}

    def test_far_pairs_approach_random_overlap(self):
        p = SchemeParams(1000, 10000, 100, 0.5, Scheme.TWO_PHASE)
        est = estimate_shared_keys(p, [(1, 41)], 3000, 11)[(1, 41)]
        assert est.agrees(1.0)

    def test_wr_inherits_at_least_fk(self):
        p = SchemeParams(100, 60, 10, 0.3, Scheme.TWO_PHASE_WR)
        rings = ring_sets(assign_two_phase_wr(p, 3))
        overlaps = [len(a & b) for a, b in zip(rings, rings[1:])]
        assert min(overlaps) >= 3
        assert max(overlaps) > 3  # phase 2 may redraw predecessor keys

    def test_wr_smallest_pool(self):
        p = SchemeParams(40, 10, 2, 0.5, Scheme.TWO_PHASE_WR)
        rings = ring_sets(assign(p, 1))
        assert all(len(a & b) >= 1 for a, b in zip(rings, rings[1:]))


@st.composite
def any_params(draw):
    scheme = draw(st.sampled_from(list(Scheme)))
    k = draw(st.integers(1, 12))
    N = draw(st.integers(2, 25))
    if scheme is Scheme.RANDOM:
        return SchemeParams(N, draw(st.integers(k, 60)), k, None, scheme)
    k = max(k, 2)
    fk = draw(st.integers(1, k - 1))
    floor = 3 * k - 2 * fk if scheme is Scheme.TWO_PHASE else k
    L = draw(st.integers(floor + 1, floor + 40))
    return SchemeParams(N, L, k, fk / k, scheme)


class TestRingInvariants:
    @settings(max_examples=120, deadline=None)
    @given(any_params(), st.integers(0, 2**31))
    def test_rings_valid_for_every_scheme(self, params, seed):
        rings = assign(params, seed)
        check_rings(rings, params)
        if params.scheme is Scheme.TWO_PHASE:
            sets = ring_sets(rings)
            assert all(len(a & b) == params.inherited for a, b in zip(sets, sets[1:]))

    def test_check_rings_catches_bad_ring(self):
        p = SchemeParams(2, 10, 2, None, Scheme.RANDOM)
        with pytest.raises(ParameterError):
            check_rings([KeyRing(1, frozenset({0, 1})), KeyRing(2, frozenset({0}))], p)
        with pytest.raises(ParameterError):
            check_rings([KeyRing(1, frozenset({0, 1})), KeyRing(2, frozenset({0, 10}))], p)
        with pytest.raises(ParameterError):
            check_rings([KeyRing(1, frozenset({0, 1})), KeyRing(1, frozenset({2, 3}))], p)

    def test_format_round_trip(self):
        p = SchemeParams(6, 40, 4, 0.5, Scheme.TWO_PHASE)
        rings = assign(p, 4)
        text = format_rings(rings)
        assert parse_rings(text) == rings
        assert format_rings(parse_rings(text)) == text
        first = text.splitlines()[0].split(",")
        assert first[0] == "1" and [int(v) for v in first[1:]] == sorted(int(v) for v in first[1:])
