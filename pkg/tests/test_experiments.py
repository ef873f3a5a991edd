"""Tests for separation experiments and beta sweeps."""

import pytest

from polyattn.datasets import to_document
from polyattn.exceptions import ConfigError
from polyattn.experiments import SelfAttnParams, beta_sweep, parse_sweep, separation_experiment
from polyattn.regimes import Regime, RegimeConfig


def rates(report):
    return {(o['regime'], o['label']): o for o in report.outcomes}


class TestParseSweep:
    """Tests for the start:stop:count sweep syntax."""

    def test_even_spacing(self):
        """Test that both ends are included."""
        assert parse_sweep("0:2:5") == [0.0, 0.5, 1.0, 1.5, 2.0]

    @pytest.mark.parametrize("spec", ["0:2", "a:b:c", "0:1:0"])
    def test_invalid(self, spec):
        """Test that malformed sweeps raise ConfigError."""
        with pytest.raises(ConfigError):
            parse_sweep(spec)


class TestScoreSeparation:
    """Separation on the score dataset at n = 1024."""

    def test_high_and_low_beta(self, celery_app):
        """Test F > 0 on D1 and F = 0 on D0 at beta = 4, and F = 0 on both at beta = 0.05."""
        regimes = [
            RegimeConfig(regime=Regime.HIGH_BETA, beta=4.0, trials=40, master_seed=11),
            RegimeConfig(regime=Regime.LOW_BETA, beta=0.05, trials=40, master_seed=11),
        ]
        report = separation_experiment(regimes, 'score', [1024], celery_app=celery_app)

        assert report.passed, report.failed_clauses()
        outcomes = rates(report)
        assert outcomes[('high_beta', 'd1')]['rate_F_positive'] >= 0.95
        assert outcomes[('high_beta', 'd0')]['rate_F_zero'] >= 0.95
        assert outcomes[('low_beta', 'd1')]['rate_F_zero'] >= 0.95
        assert outcomes[('low_beta', 'd0')]['rate_F_zero'] >= 0.95
        assert outcomes[('high_beta', 'd1')]['m'] == 167
        assert len(report.trials) == 4 * 40

    def test_trial_rows_are_sorted_per_cell(self, celery_app, high_beta):
        """Test that each cell's rows come back in trial order."""
        report = separation_experiment(high_beta, 'score', [1024], trials=12, celery_app=celery_app)

        first_cell = report.trials[:12]
        assert [row['trial_index'] for row in first_cell] == list(range(12))
        assert {row['label'] for row in first_cell} == {'d0'}

    def test_thread_count_does_not_change_the_report(self, celery_app, high_beta):
        """Test that 1 and 4 worker threads give the same canonical bytes."""
        one = separation_experiment(high_beta, 'score', [512], trials=16, celery_app=celery_app, threads=1)
        four = separation_experiment(high_beta, 'score', [512], trials=16, celery_app=celery_app, threads=4)

        assert one.canonical_bytes() == four.canonical_bytes()

    def test_softmax_kind(self, celery_app, high_beta):
        """Test that the softmax readout runs and is recorded in the config."""
        report = separation_experiment(high_beta, 'score', [1024], trials=5, kind='softmax', celery_app=celery_app)

        assert report.config['kind'] == 'softmax'
        assert len(report.outcomes) == 2

    def test_gates_fail_before_any_trial(self, mocker, celery_app):
        """Test that a failed band gate raises ConfigError without running trials."""
        run_trials = mocker.patch('polyattn.experiments.run_trials')
        regimes = [
            RegimeConfig(regime=Regime.HIGH_BETA, beta=4.0, trials=5),
            RegimeConfig(regime=Regime.LOW_BETA, beta=4.0, trials=5),
        ]

        with pytest.raises(ConfigError) as excinfo:
            separation_experiment(regimes, 'score', [1024], celery_app=celery_app)

        run_trials.assert_not_called()
        assert any("0.01 log n" in item for item in excinfo.value.failed)

    def test_unknown_dataset(self, celery_app, high_beta):
        """Test that an unknown dataset name raises ConfigError."""
        with pytest.raises(ConfigError):
            separation_experiment(high_beta, 'images', [16], celery_app=celery_app)


class TestSelfAttnSeparation:
    """Separation on the self-attention dataset with one row per Type II column."""

    def test_high_beta(self, celery_app):
        """Test F > 0 on D1 (a1 = 1) and F = 0 on D0 (a0 = 0.05) at n = 1024, beta = 11."""
        cfg = RegimeConfig(regime=Regime.HIGH_BETA, beta=11.0, trials=20, master_seed=5)
        report = separation_experiment(cfg, 'selfattn', [1024], selfattn=SelfAttnParams(t=1), celery_app=celery_app)

        assert report.passed, report.failed_clauses()
        assert rates(report)[('high_beta', 'd1')]['d'] == 1026
        assert any("D0 statement" in note for note in report.notes)

    def test_low_beta(self, celery_app):
        """Test F = 0 on both labels at n = 1024, beta = 1, a1 = 0.7."""
        cfg = RegimeConfig(regime=Regime.LOW_BETA, beta=1.0, trials=20, master_seed=5)
        params = SelfAttnParams(t=1, a1=0.7)
        report = separation_experiment(cfg, 'selfattn', [1024], selfattn=params, celery_app=celery_app)

        assert report.passed, report.failed_clauses()
        assert all(o['rate_F_zero'] == 1.0 for o in report.outcomes)

    def test_structured_path_at_n_65536(self, celery_app):
        """Test the d = 34, t = 2048 layout at n = 2**16, where Type II noise keeps F above zero."""
        cfg = RegimeConfig(regime=Regime.LOW_BETA, beta=2.0, trials=100, master_seed=5)
        params = SelfAttnParams(d=34, a1=0.7)
        report = separation_experiment(cfg, 'selfattn', [2**16], selfattn=params, celery_app=celery_app)

        assert not report.passed
        for label in ('d0', 'd1'):
            outcome = rates(report)[('low_beta', label)]
            assert (outcome['n'], outcome['d'], outcome['t']) == (2**16, 34, 2048)
            assert outcome['rate_F_zero'] <= 0.05

    def test_needs_params(self, celery_app):
        """Test that the selfattn dataset without SelfAttnParams raises ConfigError."""
        cfg = RegimeConfig(regime=Regime.HIGH_BETA, beta=11.0, trials=2)

        with pytest.raises(ConfigError):
            separation_experiment(cfg, 'selfattn', [1024], celery_app=celery_app)

    def test_softmax_kind_is_refused(self, mocker, celery_app):
        """Test that kind=softmax on the selfattn dataset fails before any trial."""
        run_trials = mocker.patch('polyattn.experiments.run_trials')
        cfg = RegimeConfig(regime=Regime.HIGH_BETA, beta=11.0, trials=2)

        with pytest.raises(ConfigError, match="polynomial attention"):
            separation_experiment(cfg, 'selfattn', [1024], selfattn=SelfAttnParams(t=1), kind='softmax', celery_app=celery_app)

        run_trials.assert_not_called()

    def test_params_need_one_layout(self):
        """Test that giving both t and d is rejected."""
        with pytest.raises(ConfigError):
            SelfAttnParams(t=1, d=34)

    def test_replayed_instance(self, celery_app, example_instance):
        """Test that a replayed instance runs only its own label and size."""
        cfg = RegimeConfig(regime=Regime.HIGH_BETA, beta=4.0, trials=10, master_seed=1)
        report = separation_experiment(
            cfg, 'selfattn', [], instance=to_document(example_instance, 1), celery_app=celery_app
        )

        assert report.passed, report.failed_clauses()
        assert [(o['n'], o['label']) for o in report.outcomes] == [(9, 'd1')]

    def test_replayed_instance_of_the_wrong_dataset(self, celery_app, example_instance):
        """Test that a self-attention document cannot be replayed on the score dataset."""
        cfg = RegimeConfig(regime=Regime.HIGH_BETA, beta=4.0, trials=2)

        with pytest.raises(ConfigError):
            separation_experiment(cfg, 'score', [], instance=to_document(example_instance, 1), celery_app=celery_app)


class TestBetaSweep:
    """Tests for beta_sweep."""

    def test_rows_per_beta_and_label(self, celery_app, high_beta):
        """Test one sweep row per (beta, label) with gate failures recorded, not raised."""
        report = beta_sweep(high_beta, 'score', 256, [0.05, 3.0], trials=6, celery_app=celery_app)

        assert [(row['beta'], row['label']) for row in report.sweep] == [
            (0.05, 'd0'), (0.05, 'd1'), (3.0, 'd0'), (3.0, 'd1'),
        ]
        assert report.outcomes[0]['gates_hold'] is False
        assert report.outcomes[2]['gates_hold'] is True
        assert all(0.0 <= row['rate_F_positive'] <= 1.0 for row in report.sweep)

    def test_sweep_is_deterministic(self, celery_app, high_beta):
        """Test that the same sweep twice gives the same canonical bytes."""
        run = lambda: beta_sweep(high_beta, 'score', 128, [1.0, 2.0], trials=4, celery_app=celery_app)  # noqa: E731

        assert run().canonical_bytes() == run().canonical_bytes()
