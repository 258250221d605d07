import pytest

from adapcomfl.config import ExperimentConfig


@pytest.fixture
def small_config():
    """A few rounds on a small problem; cheap predictor."""
    return ExperimentConfig().replace(
        rounds=6,
        clients=4,
        predictor={"kind": "window_ar"},
        data={"samples": 600},
    )
