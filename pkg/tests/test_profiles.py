import json
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import nice_families, profiles
from fairpost.errors import EmptyCommonSupport, EmptyGroup, InputError
from fairpost.ingest import dataset_from_counts
from fairpost.profiles import (AccuracyProfile, CalibratedJoint, ProfileFamily, base_rate,
                               common_mass, family_from_json, family_to_json, from_weights,
                               is_nice, pointwise_min_normalized, profile_from_dict,
                               profile_to_dict, reflect, snap, strictly_dominates, tv_distance,
                               uniform, validate_calibration)


def ap(mass, group="g"):
    return AccuracyProfile(group, mass)


class TestConstruction:
    def test_zero_mass_entries_leave_support(self):
        assert ap({0.1: 0.0, 0.5: 1.0}).support == (0.5,)

    def test_negative_mass_rejected(self):
        with pytest.raises(InputError):
            ap({0.1: -0.1, 0.5: 1.1})

    def test_mass_must_sum_to_one(self):
        with pytest.raises(InputError):
            ap({0.1: 0.5, 0.5: 0.4})
        with pytest.raises(InputError):
            ap({F(1, 10): F(1, 2), F(1, 2): F(1, 3)})

    def test_empty_support_rejected(self):
        with pytest.raises(InputError):
            ap({})

    def test_normalize(self):
        a = AccuracyProfile("g", {0.2: 2.0, 0.8: 6.0}, normalize=True)
        assert a.mass == {0.2: 0.25, 0.8: 0.75}
        # integer weights select exact arithmetic, with decimal score keys
        b = AccuracyProfile("g", {0.2: 2, 0.8: 6}, normalize=True)
        assert b.mass == {F(1, 5): F(1, 4), F(4, 5): F(3, 4)}

    def test_scores_outside_unit_interval(self):
        with pytest.raises(InputError):
            ap({1.5: 1.0})
        with pytest.raises(InputError):
            ap({F(3, 2): F(1)})

    def test_grid_snapping_merges_float_noise(self):
        a = ap([(0.1 + 0.2, 0.5), (0.3, 0.5)])
        assert a.support == (0.3,)
        assert snap(0.1 + 0.2) == snap(0.3)

    def test_grid_env_override(self, monkeypatch):
        monkeypatch.setenv("FAIRPOST_GRID", "0.1")
        assert ap([(0.32, 0.5), (0.28, 0.5)]).support == (0.3,)
        monkeypatch.setenv("FAIRPOST_GRID", "2")
        with pytest.raises(InputError):
            snap(0.5)

    def test_exact_mode_keeps_fractions(self):
        a = ap({F(1, 3): F(1, 2), F(2, 3): F(1, 2)})
        assert a.exact and a.support == (F(1, 3), F(2, 3))

    def test_attached_values(self):
        a = AccuracyProfile("g", {0.5: 0.4, 1.0: 0.6}, {0.5: 0.2, 1.0: 0.9})
        assert a.bucketed and a.values == (0.2, 0.9)
        with pytest.raises(InputError):
            AccuracyProfile("g", {0.5: 0.4, 1.0: 0.6}, {0.5: 0.2})

    def test_family_rejects_duplicates_and_empty(self):
        with pytest.raises(InputError):
            ProfileFamily([ap({0.5: 1.0}), ap({0.5: 1.0})])
        with pytest.raises(InputError):
            ProfileFamily([])


class TestBaseRate:
    def test_all_positive(self):
        assert base_rate(ap({1.0: 1.0})) == 1.0

    def test_uniform_three_points(self):
        assert base_rate(ap({F(0): F(1, 3), F(1, 2): F(1, 3), F(1): F(1, 3)})) == F(1, 2)

    def test_hand_sum(self):
        assert base_rate(ap({0.2: 0.25, 0.8: 0.75})) == pytest.approx(0.65, abs=1e-15)

    def test_uses_attached_values(self):
        a = AccuracyProfile("g", {0.5: 0.5, 1.0: 0.5}, {0.5: 0.1, 1.0: 0.3})
        assert base_rate(a) == pytest.approx(0.2)

    @given(profiles())
    def test_within_support_range(self, a):
        br = base_rate(a)
        assert a.support[0] - 1e-12 <= br <= a.support[-1] + 1e-12


class TestTotalVariation:
    def test_identical(self):
        a = ap({0.2: 0.5, 0.8: 0.5})
        assert tv_distance(a, a) == 0

    def test_hand_value(self):
        assert tv_distance(ap({0.2: 0.5, 0.8: 0.5}), ap({0.2: 0.3, 0.8: 0.7})) == pytest.approx(0.2)

    def test_disjoint(self):
        assert tv_distance(ap({0.0: 1.0}), ap({1.0: 1.0})) == 1

    @given(profiles(exact=True), profiles(exact=True), profiles(exact=True))
    def test_metric_axioms(self, a, b, c):
        assert tv_distance(a, b) == tv_distance(b, a)
        assert (tv_distance(a, b) == 0) == (a.mass == b.mass)
        assert tv_distance(a, c) <= tv_distance(a, b) + tv_distance(b, c)
        assert 0 <= tv_distance(a, b) <= 1


class TestPointwiseMin:
    def test_equal_profiles(self):
        a = ap({0.2: 0.5, 0.8: 0.5})
        out = pointwise_min_normalized(ProfileFamily([a, a.with_group("h")]))
        assert out.mass == a.mass

    def test_hand_value(self):
        fam = ProfileFamily([ap({0.2: 0.5, 0.8: 0.5}, "a"), ap({0.2: 0.3, 0.8: 0.7}, "b")])
        out = pointwise_min_normalized(fam)
        assert out.p(0.2) == pytest.approx(0.375)
        assert out.p(0.8) == pytest.approx(0.625)

    def test_disjoint(self):
        fam = ProfileFamily([ap({0.0: 1.0}, "a"), ap({1.0: 1.0}, "b")])
        with pytest.raises(EmptyCommonSupport):
            pointwise_min_normalized(fam)

    @given(nice_families(min_groups=2, max_groups=2, exact=True))
    def test_two_group_missing_mass_is_tv(self, fam):
        a, b = fam.values()
        _, total = common_mass(fam)
        assert 1 - total == tv_distance(a, b)

    @given(nice_families())
    def test_normalized_and_dominated(self, fam):
        out = pointwise_min_normalized(fam)
        _, total = common_mass(fam)
        assert abs(sum(out.probs) - 1) <= 1e-12
        for g, a in fam.items():
            for s in out.support:
                assert out.p(s) * total <= a.p(s) + 1e-12


class TestNiceness:
    def test_single_group(self):
        assert is_nice(ProfileFamily([ap({0.2: 1.0})]))

    def test_same_support_different_mass(self):
        assert is_nice(ProfileFamily([ap({0.2: 0.5, 0.8: 0.5}, "a"), ap({0.2: 0.1, 0.8: 0.9}, "b")]))

    def test_different_constant_scores(self):
        assert not is_nice(ProfileFamily([ap({0.3: 1.0}, "a"), ap({0.6: 1.0}, "b")]))


class TestDominanceAndReflection:
    def test_strict_dominance(self):
        low, high = ap({0.2: 0.6, 0.8: 0.4}), ap({0.2: 0.4, 0.8: 0.6})
        assert strictly_dominates(high, low)
        assert not strictly_dominates(low, high)
        assert not strictly_dominates(low, low)

    @given(profiles(exact=True))
    def test_reflection_is_involution(self, a):
        r = reflect(a)
        assert base_rate(r) == 1 - base_rate(a)
        assert reflect(r).mass == a.mass


class TestCalibratedJoint:
    def test_analytic_cells(self):
        a = ap({0.2: 0.5, 0.8: 0.5})
        joint = CalibratedJoint(ProfileFamily([a]))
        pos, neg = joint.cell("g", 0.8)
        assert pos == pytest.approx(0.4) and neg == pytest.approx(0.1)
        assert joint.positive_rate("g", 0.8) == pytest.approx(0.8)
        assert joint.cell("g", 0.5) == (0, 0)


class TestValidateCalibration:
    def test_three_of_four(self):
        ds = dataset_from_counts({"g": {0.75: (4, 3)}})
        rep = validate_calibration(ds, 0.0)
        assert rep.ok and rep.cells[0].deviation == 0

    def test_flagged_bucket(self):
        ds = dataset_from_counts({"g": {0.9: (2, 1)}})
        rep = validate_calibration(ds, 0.1)
        assert not rep.ok
        assert rep.flagged[0].deviation == pytest.approx(0.4)

    def test_empty_group(self):
        ds = dataset_from_counts({"g": {0.5: (2, 1)}}, order=("g", "h"))
        with pytest.raises(EmptyGroup):
            validate_calibration(ds)


class TestSerialization:
    def test_profile_document_shape(self):
        doc = profile_to_dict(ap({0.2: 0.5, 0.8: 0.5}))
        assert doc == {"group": "g", "mass": [{"score": 0.2, "p": 0.5}, {"score": 0.8, "p": 0.5}]}
        assert profile_from_dict(doc).mass == {0.2: 0.5, 0.8: 0.5}

    def test_bucketed_round_trip(self):
        a = AccuracyProfile("g", {0.5: 0.4, 1.0: 0.6}, {0.5: 0.2, 1.0: 0.9})
        back = profile_from_dict(json.loads(json.dumps(profile_to_dict(a))))
        assert back.values == (0.2, 0.9)

    @given(nice_families())
    def test_family_round_trip(self, fam):
        back = family_from_json(family_to_json(fam))
        for g in fam:
            assert back[g].support == fam[g].support
            assert all(abs(x - y) <= 1e-15 for x, y in zip(back[g].probs, fam[g].probs))

    def test_helpers(self):
        assert uniform("g", [0.1, 0.2], exact=True).probs == (0.5, 0.5)
        assert from_weights("g", {0.1: 1, 0.9: 3}, exact=True).p(F(9, 10)) == F(3, 4)

    @given(st.floats(0, 1))
    def test_snap_idempotent(self, x):
        assert snap(snap(x)) == snap(x)
