import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from conftest import nice_families, profiles
from fairpost.errors import EmptyGroup, InputError, MissingStatistic
from fairpost.ingest import dataset_from_counts
from fairpost.metrics import (ALWAYS_DEFER, DEFERRED, BlindRule, GroupStats, Outcome,
                              Prediction, TableRule, always_defer, always_positive,
                              assert_equalized, check_convex_combination, stats_analytic,
                              stats_empirical, stats_family, stats_to_csv, stats_to_json)
from fairpost.oracle import joint_enumerate_stats
from fairpost.profiles import AccuracyProfile, ProfileFamily
from fairpost.thresholding import ThresholdRule, apply_threshold


@st.composite
def outcomes(draw, defer=True, exact=False):
    a, b = draw(st.integers(0, 20)), draw(st.integers(0, 20))
    c = draw(st.integers(0, 20)) if defer else 0
    if a + b + c == 0:
        a = 1
    t = a + b + c
    if exact:
        return Outcome(neg=F(a, t), pos=F(b, t), defer=F(c, t))
    if not defer:
        return Outcome(neg=a / t, pos=b / t)
    return Outcome(neg=a / t, pos=b / t, defer=c / t)


def table_rules(scores, defer=True, exact=False):
    return st.lists(outcomes(defer, exact), min_size=len(scores), max_size=len(scores)).map(
        lambda outs: TableRule({None: dict(zip(scores, outs))}))


@st.composite
def profile_and_rule(draw, defer=True, exact=False):
    a = draw(profiles(max_size=8, exact=exact))
    return a, draw(table_rules(a.support, defer, exact))


class TestOutcome:
    def test_must_sum_to_one(self):
        with pytest.raises(InputError):
            Outcome(neg=0.5, pos=0.4)
        with pytest.raises(InputError):
            Outcome(neg=1.5, pos=-0.5)

    def test_of_and_sample(self):
        assert Outcome.of(Prediction.DEFER) == ALWAYS_DEFER
        o = Outcome(neg=0.2, pos=0.5, defer=0.3)
        assert [o.sample(u) for u in (0.1, 0.3, 0.9)] == [
            Prediction.NEGATIVE, Prediction.POSITIVE, Prediction.DEFER]

    def test_deferred_input_is_deferred(self):
        assert always_positive.outcome(DEFERRED) == ALWAYS_DEFER
        assert always_positive.propagates_defer()
        leaky = BlindRule(lambda s: Outcome(pos=1), defer_outcome=Outcome(pos=1))
        assert not leaky.propagates_defer()


class TestAnalytic:
    def test_always_positive(self):
        st_ = stats_analytic(AccuracyProfile("g", {0.2: 0.25, 0.8: 0.75}), always_positive)
        assert st_.ppv == pytest.approx(0.65, abs=1e-15)
        assert st_.npv is None
        assert st_.fpr == 1 and st_.fnr == 0

    def test_defer_everything(self):
        st_ = stats_analytic(AccuracyProfile("g", {0.2: 0.25, 0.8: 0.75}), always_defer)
        for f in ("ppv", "npv", "cfpr", "cfnr"):
            assert getattr(st_, f) is None
        assert st_.defer_rate == 1

    def test_perfect_classifier(self):
        a = AccuracyProfile("g", {0.0: 0.3, 1.0: 0.7})
        st_ = stats_analytic(a, apply_threshold(ThresholdRule(0.5, 1)))
        assert st_.fpr == 0 and st_.fnr == 0 and st_.ppv == 1 and st_.npv == 1

    def test_threshold_hand_value(self):
        # Pr[Positive] = 0.5 + 0.2 * 0.5
        a = AccuracyProfile("g", {0.2: 0.5, 0.8: 0.5})
        st_ = stats_analytic(a, apply_threshold(ThresholdRule(0.2, 0.2)))
        assert st_.positive_rate == pytest.approx(0.6)
        assert st_.ppv == pytest.approx(0.7)

    def test_exact_inputs_give_exact_stats(self):
        a = AccuracyProfile("g", {F(1, 5): F(1, 2), F(4, 5): F(1, 2)})
        st_ = stats_analytic(a, apply_threshold(ThresholdRule(F(1, 5), F(1, 5))))
        assert st_.ppv == F(7, 10)

    def test_missing_table_entry(self):
        rule = TableRule({None: {0.5: Outcome(pos=1)}})
        with pytest.raises(InputError):
            stats_analytic(AccuracyProfile("g", {0.2: 1.0}), rule)


class TestAgreementWithJointEnumeration:
    @given(profile_and_rule())
    def test_float(self, pair):
        a, rule = pair
        mine, ref = stats_analytic(a, rule), joint_enumerate_stats(a, rule)
        for f in GroupStats.__dataclass_fields__:
            x, y = getattr(mine, f), getattr(ref, f)
            assert (x is None) == (y is None), f
            if x is not None:
                assert abs(x - y) <= 1e-12, f

    @given(profile_and_rule(exact=True))
    def test_exact(self, pair):
        a, rule = pair
        assert stats_analytic(a, rule) == joint_enumerate_stats(a, rule)


class TestIdentities:
    @given(profile_and_rule(defer=False))
    def test_ppv_is_conditional_mean(self, pair):
        a, rule = pair
        st_ = stats_analytic(a, rule)
        w = [(p * rule.outcome(s).pos, s) for s, p in a.items()]
        tot = math.fsum(x for x, _ in w)
        if tot > 1e-12:
            assert abs(st_.ppv - math.fsum(x * s for x, s in w) / tot) <= 1e-12

    @given(profile_and_rule(defer=False))
    def test_fpr_formula(self, pair):
        a, rule = pair
        st_ = stats_analytic(a, rule)
        if 1e-9 < st_.base_rate < 1 - 1e-9 and st_.ppv is not None:
            expect = st_.positive_rate * (1 - st_.ppv) / (1 - st_.base_rate)
            assert abs(st_.fpr - expect) <= 1e-12

    @given(profile_and_rule(defer=False))
    def test_no_deferral_variants_coincide(self, pair):
        st_ = stats_analytic(*pair)
        assert st_.cfpr == st_.fpr and st_.cfnr == st_.fnr

    @given(profile_and_rule())
    def test_deferral_accounting_order(self, pair):
        st_ = stats_analytic(*pair)
        if st_.cfpr is not None and st_.ufpr is not None:
            assert st_.ufpr <= st_.cfpr + 1e-15
        if st_.ufpr is not None:
            assert st_.ufpr <= st_.tn_based_error + 1e-15

    @given(profile_and_rule())
    def test_fields_are_probabilities(self, pair):
        for v in stats_analytic(*pair).to_dict().values():
            assert 0 <= v <= 1

    @given(profile_and_rule(defer=False))
    def test_convex_combination(self, pair):
        st_ = stats_analytic(*pair)
        if st_.ppv is not None and st_.npv is not None:
            assert check_convex_combination(st_) <= 1e-12

    def test_convex_combination_preconditions(self):
        a = AccuracyProfile("g", {0.2: 0.5, 0.8: 0.5})
        with pytest.raises(MissingStatistic):
            check_convex_combination(stats_analytic(a, always_positive))
        mixed = TableRule({None: {0.2: Outcome(neg=1), 0.8: Outcome(pos=0.5, defer=0.5)}})
        with pytest.raises(MissingStatistic):
            check_convex_combination(stats_analytic(a, mixed))


class TestGroupBlindOnEqualProfiles:
    @given(nice_families(max_groups=3), st.data())
    def test_equal_profiles(self, fam, data):
        base = next(iter(fam.values()))
        same = ProfileFamily([base.with_group(g) for g in fam])
        rule = data.draw(table_rules(base.support, defer=False))
        rep = assert_equalized(stats_family(same, rule), ("ppv", "npv", "fpr", "fnr"), 1e-12)
        assert rep.ok


class TestEmpirical:
    def test_direct_count(self):
        ds = dataset_from_counts({"g": {0.75: (4, 3)}})
        assert stats_empirical(ds, always_positive, axis="raw")["g"].ppv == 0.75

    def test_row_order_invariance(self):
        ds = dataset_from_counts({"a": {0.2: (5, 1), 0.8: (5, 4)}, "b": {0.2: (3, 1), 0.8: (7, 5)}})
        rev = type(ds)(ds.raw_scores[::-1], ds.groups[::-1], ds.labels[::-1], ds.group_order)
        rule = apply_threshold(ThresholdRule(0.8, 0.5))
        one = stats_empirical(ds, rule, axis="raw")
        two = stats_empirical(rev, rule, axis="raw")
        for g in one:
            for f, v in one[g].to_dict().items():
                assert abs(v - two[g].to_dict()[f]) <= 1e-15

    def test_sampled_reproducible(self):
        ds = dataset_from_counts({"a": {0.2: (50, 10), 0.8: (50, 40)}})
        rule = apply_threshold(ThresholdRule(0.8, 0.5))
        one = stats_empirical(ds, rule, mode="sampled", seed=7, axis="raw")
        two = stats_empirical(ds, rule, mode="sampled", seed=7, axis="raw")
        assert one == two
        with pytest.raises(InputError):
            stats_empirical(ds, rule, mode="sampled", axis="raw")

    def test_empty_group(self):
        ds = dataset_from_counts({"a": {0.2: (2, 1)}}, order=("a", "b"))
        with pytest.raises(EmptyGroup):
            stats_empirical(ds, always_positive, axis="raw")


class TestEqualization:
    def test_identical(self):
        s = GroupStats(ppv=0.7, npv=0.6)
        rep = assert_equalized({"a": s, "b": s})
        assert rep.ok and rep.gaps == {"ppv": 0, "npv": 0}

    def test_within_tolerance(self):
        rep = assert_equalized({"a": GroupStats(ppv=0.7), "b": GroupStats(ppv=0.7 + 1e-10)},
                               ("ppv",), 1e-9)
        assert rep.ok

    def test_constant_scores_never_equal(self):
        fam = ProfileFamily([AccuracyProfile("a", {0.3: 1.0}), AccuracyProfile("b", {0.6: 1.0})])
        rep = assert_equalized(stats_family(fam, always_positive), ("ppv",))
        assert not rep.ok and rep.gaps["ppv"] == pytest.approx(0.3)

    def test_simultaneously_undefined(self):
        rep = assert_equalized({"a": GroupStats(), "b": GroupStats()}, ("ppv",))
        assert rep.ok and rep.undefined == ("ppv",)

    def test_partially_undefined(self):
        rep = assert_equalized({"a": GroupStats(ppv=0.5), "b": GroupStats()}, ("ppv",))
        assert not rep.ok and rep.gaps["ppv"] == math.inf


class TestSerialization:
    def test_absent_fields_omitted(self):
        a = AccuracyProfile("g", {0.2: 0.25, 0.8: 0.75})
        st_ = stats_analytic(a, always_positive)
        assert "npv" not in st_.to_dict()
        assert GroupStats.from_dict(st_.to_dict()).ppv == pytest.approx(st_.ppv)

    def test_csv_one_row_per_group(self):
        fam = ProfileFamily([AccuracyProfile("a", {0.2: 1.0}), AccuracyProfile("b", {0.8: 1.0})])
        text = stats_to_csv(stats_family(fam, always_positive))
        lines = text.strip().splitlines()
        assert lines[0].startswith("group,") and len(lines) == 3
        assert '"a"' in stats_to_json(stats_family(fam, always_positive))
