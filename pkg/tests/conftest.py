import os
import sys

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.domain import Bins, Job, PredictionSpec


@pytest.fixture
def token_bins():
    return Bins.default_token_bins()


@pytest.fixture
def make_job():
    def _make(id, arrival, size, prediction=None, trajectory=None):
        spec = PredictionSpec(initial=float(prediction if prediction is not None else size),
                              trajectory=trajectory)
        return Job(id=id, arrival_time=float(arrival), size=float(size), prediction=spec)
    return _make
