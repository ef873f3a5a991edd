"""Tests for the deterministic lemma checks and the lemma dispatcher."""

import numpy as np
import pytest

from polyattn.attention import AttentionWeights
from polyattn.datasets import build_selfattn_instance, sample_score
from polyattn.exceptions import ConfigError
from polyattn.lemmas import (
    LEMMA_IDS,
    check_c_bounds,
    check_entry_formulas,
    check_lemma,
    check_score_bounds,
    parse_lemma_id,
)
from polyattn.regimes import Regime, RegimeConfig

HIGH = RegimeConfig(regime=Regime.HIGH_BETA, beta=0.0, trials=400, master_seed=3)
LOW = RegimeConfig(regime=Regime.LOW_BETA, beta=0.0, trials=400, master_seed=3)


def d0_instance(j3=500, t=32):
    n = 1024
    return build_selfattn_instance(n, n // t + 2, t, j3, 0.05, 0.5, 0.5, 'd0')


def d1_instance(a=1.0, j3=500, t=32):
    n = 1024
    return build_selfattn_instance(n, n // t + 2, t, j3, a, 0.5, 0.5, 'd1')


class TestLemmaIds:
    """Tests for the lemma id set."""

    def test_documented_ids(self):
        """Test that every documented id is accepted."""
        for lemma_id in ('p4-d0', 'p4-d1', 's5-high', 's5-low', 's6-f-exp-d0', 's6-c-lin-d1', 's6-random-exp-d1'):
            assert lemma_id in LEMMA_IDS
        assert len(LEMMA_IDS) == 4 + 12

    def test_parse(self):
        """Test that a self-attention id splits into part, regime and label."""
        part, regime, label = parse_lemma_id('s6-c-lin-d0')

        assert part == 'c'
        assert regime is Regime.LOW_BETA
        assert label.value == 'd0'

    def test_unknown_id(self):
        """Test that an unknown id raises ConfigError."""
        with pytest.raises(ConfigError):
            parse_lemma_id('s7-f-exp-d0')


class TestEntryFormulas:
    """Tests for check_entry_formulas."""

    def test_example_instance_high_d1(self, example_instance):
        """Test that every clause holds on the example instance at beta = 4."""
        report = check_entry_formulas(example_instance, 4.0, HIGH.with_beta(4.0))

        assert report.passed, report.failed_clauses()
        spike = next(v for v in report.verdicts if v.clause == "j0 = j3, j1 = j3: f ≥ 1/2")
        assert spike.observed == pytest.approx(2 / 3, abs=1e-12)
        other = next(v for v in report.verdicts if v.clause == "j0 = j3, j1 ≠ j3: f ≤ 1/n")
        assert other.observed == pytest.approx(1 / 24, abs=1e-12)

    def test_high_d0_at_1024(self):
        """Test the D0 bounds at n = 1024, a = 0.05, beta = 11."""
        report = check_entry_formulas(d0_instance(), 11.0, HIGH.with_beta(11.0))

        assert report.passed, report.failed_clauses()
        assert report.kind == 'entry_formulas'

    def test_low_beta_d1(self):
        """Test the low-beta D1 bounds at n = 1024, a = 0.7, beta = 1."""
        report = check_entry_formulas(d1_instance(a=0.7), 1.0, LOW.with_beta(1.0))

        assert report.passed, report.failed_clauses()

    def test_perturbed_matrix_fails(self, example_instance):
        """Test that moving one entry by 1e-3 breaks a closed-form clause."""
        matrix = example_instance.materialize()
        matrix[0, -1] += 1e-3

        report = check_entry_formulas(example_instance, 4.0, HIGH.with_beta(4.0), matrix=matrix)

        assert not report.passed

    def test_gate_failure(self, example_instance):
        """Test that beta = 2 on the example instance fails the (a+1)^beta >= n gate."""
        with pytest.raises(ConfigError) as excinfo:
            check_entry_formulas(example_instance, 2.0, HIGH.with_beta(2.0))

        assert any("(a+1)^β ≥ n" in item for item in excinfo.value.failed)

    def test_needs_all_ones_qk(self, example_instance):
        """Test that another QK^T is refused."""
        with pytest.raises(ConfigError):
            check_entry_formulas(example_instance, 4.0, HIGH.with_beta(4.0), AttentionWeights.identity(5))


class TestCBounds:
    """Tests for check_c_bounds."""

    def test_example_instance_high_d1(self, example_instance):
        """Test the Type I, II and III clauses on the example instance."""
        report = check_c_bounds(example_instance, 4.0, HIGH.with_beta(4.0))

        assert report.passed, report.failed_clauses()
        type_iii = [v for v in report.verdicts if v.clause.endswith("i0 = d: c = c")]
        assert len(type_iii) == 2
        assert all(v.observed == pytest.approx(0.5, abs=1e-12) for v in type_iii)

    @pytest.mark.parametrize(
        "instance, regime, beta",
        [
            (d0_instance(), HIGH, 11.0),
            (d1_instance(a=0.7), LOW, 1.0),
            (d0_instance(), LOW, 1.0),
            (d0_instance(j3=3, t=1), HIGH, 11.0),
        ],
    )
    def test_bounds_hold(self, instance, regime, beta):
        """Test the c_poly clauses for each regime and label."""
        report = check_c_bounds(instance, beta, regime.with_beta(beta))

        assert report.passed, report.failed_clauses()

    def test_low_d0_needs_beta_at_most_one(self):
        """Test that the low-beta D0 c_poly bounds refuse beta > 1."""
        with pytest.raises(ConfigError):
            check_c_bounds(d0_instance(), 1.5, LOW.with_beta(1.5))

    def test_needs_identity_v(self, example_instance):
        """Test that V other than the identity is refused."""
        w = AttentionWeights.all_ones(5).with_v(2 * np.eye(5))

        with pytest.raises(ConfigError):
            check_c_bounds(example_instance, 4.0, HIGH.with_beta(4.0), w)


class TestScoreBounds:
    """Tests for check_score_bounds."""

    def test_d1_high_beta(self):
        """Test the spike >= 1/2 and non-spike <= 2^beta / n clauses at beta = 4."""
        report = check_score_bounds(sample_score(1024, 'd1', 8), 4.0, HIGH)

        assert report.passed, report.failed_clauses()
        assert len(report.verdicts) == 2

    def test_d1_low_beta(self):
        """Test the spike <= 16^beta / n clause at beta = 0.05."""
        report = check_score_bounds(sample_score(1024, 'd1', 8), 0.05, LOW)

        assert report.passed, report.failed_clauses()

    def test_d0_only_has_the_non_spike_clause(self):
        """Test that a D0 vector is checked against 2^beta / n only."""
        report = check_score_bounds(sample_score(1024, 'd0', 8), 4.0, HIGH)

        assert [v.clause for v in report.verdicts] == ["non-spike f_i ≤ 2^β/n"]
        assert report.passed

    def test_unlabelled_vector(self):
        """Test that an unlabelled score vector is refused."""
        s = sample_score(16, 'd0', 1).scaled(1.0)

        with pytest.raises(ConfigError):
            check_score_bounds(s, 1.0, HIGH)


class TestCheckLemma:
    """Tests for the check_lemma dispatcher."""

    def test_entry_formula_lemma(self, example_instance):
        """Test that s6-f-exp-d1 runs the entry formula checks."""
        report = check_lemma('s6-f-exp-d1', example_instance, 4.0, LOW)

        assert report.kind == 's6-f-exp-d1'
        assert report.config['regime'] == 'high_beta'
        assert report.passed

    def test_label_mismatch(self, example_instance):
        """Test that a D1 instance under a D0 lemma raises ConfigError."""
        with pytest.raises(ConfigError, match="d0"):
            check_lemma('s6-f-exp-d0', example_instance, 4.0, HIGH)

    def test_score_lemma_needs_a_score_vector(self, example_instance):
        """Test that p4-d1 refuses a self-attention instance."""
        with pytest.raises(ConfigError):
            check_lemma('p4-d1', example_instance, 4.0, HIGH)

    def test_p4_d1_high_beta(self):
        """Test Pr[<f, sigma> >= 1/3] >= 1/4 on a sampled D1 vector at n = 1024, beta = 4."""
        report = check_lemma('p4-d1', None, 4.0, HIGH, n=1024)

        assert report.passed, report.failed_clauses()
        assert report.tails[0]['empirical'] >= 0.25

    def test_p4_d0(self):
        """Test the D0 concentration and its Hoeffding comparison at n = 1024, beta = 4."""
        report = check_lemma('p4-d0', None, 4.0, HIGH, n=1024)

        assert report.passed, report.failed_clauses()
        assert report.tails[0]['hoeffding'] < 0.1

    def test_p4_d1_outside_both_bands(self):
        """Test that beta = 1 fits neither p4-d1 band at n = 1024."""
        with pytest.raises(ConfigError):
            check_lemma('p4-d1', None, 1.0, HIGH, n=1024)

    def test_random_lemma_on_example_instance(self, example_instance):
        """Test Pr[<c, sigma> >= c + 0.1] >= 1/10 on the example instance."""
        report = check_lemma('s6-random-exp-d1', example_instance, 4.0, HIGH)

        assert report.passed, report.failed_clauses()
        assert all(tail['empirical'] >= 0.1 for tail in report.tails)

    @pytest.mark.parametrize(
        "lemma_id, instance, beta",
        [
            ('s6-random-exp-d0', d0_instance(t=1), 11.0),
            ('s6-random-lin-d1', d1_instance(a=0.7, t=1), 1.0),
            ('s6-random-lin-d0', d0_instance(t=1), 1.0),
        ],
    )
    def test_random_lemmas_on_wide_layout(self, lemma_id, instance, beta):
        """Test the |<c, sigma>| < tau concentration on the d = n + 2 layout."""
        report = check_lemma(lemma_id, instance, beta, HIGH)

        assert report.passed, report.failed_clauses()
