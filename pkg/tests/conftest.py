"""Pytest fixtures for polyattn tests."""

from datetime import datetime
from unittest.mock import MagicMock, Mock

import pytest
from celery import Celery

from polyattn.attention import AttentionWeights
from polyattn.datasets import build_selfattn_instance
from polyattn.regimes import Regime, RegimeConfig
from polyattn.store import ReportStore


@pytest.fixture
def celery_app():
    """Create an eager Celery application with polyattn and SurrealDB configuration."""
    app = Celery('test_app')
    app.conf.update(
        task_always_eager=True,
        task_eager_propagates=True,
        polyattn_threads=2,
        polyattn_chunk_size=8,
        surrealdb_url='ws://localhost:8000/rpc',
        surrealdb_namespace='test_namespace',
        surrealdb_database='test_database',
        surrealdb_username='test_user',
        surrealdb_password='test_pass',
        result_expires=86400,  # 1 day
    )

    # Mock the now() method to return a consistent datetime
    app.now = Mock(return_value=datetime(2026, 1, 14, 12, 0, 0))

    return app


@pytest.fixture
def mock_surreal(mocker):
    """Create a mock Surreal client."""
    mock_client = MagicMock()

    mock_surreal_class = mocker.patch('polyattn.store.Surreal')
    mock_surreal_class.return_value = mock_client

    return mock_client


@pytest.fixture
def store(celery_app, mock_surreal):
    """Create a ReportStore with a mocked client."""
    return ReportStore(app=celery_app)


@pytest.fixture
def example_instance():
    """The n=9, d=5, t=3 D1 instance with its spike on (1-based) row 2."""
    return build_selfattn_instance(9, 5, 3, 1, 1.0, 0.5, 0.5, 'd1')


@pytest.fixture
def ones_weights():
    """Build QK^T = all-ones, V = I weights for a given d."""
    return AttentionWeights.all_ones


@pytest.fixture
def high_beta():
    """A high-beta regime with few trials, for quick checks."""
    return RegimeConfig(regime=Regime.HIGH_BETA, beta=4.0, trials=50, master_seed=7)


@pytest.fixture
def low_beta():
    """A low-beta regime with few trials, for quick checks."""
    return RegimeConfig(regime=Regime.LOW_BETA, beta=0.05, trials=50, master_seed=7)
