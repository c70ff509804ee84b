"""Shared fixtures for the primary test suite.

The expensive piece is the five-seed benchmark sweep (generate + full
training per seed), built once per session and shared by every test that
compares scorers, rejection rates, or selection strategies on it.
"""

import time

import pytest

from idc.data import default_benchmark_spec, generate
from idc.training import TrainConfig, train

BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


@pytest.fixture(scope="session")
def benchmark_runs():
    """(dataset, model) per benchmark seed, plus the total training time."""
    runs = []
    start = time.monotonic()
    for seed in BENCHMARK_SEEDS:
        dataset = generate(default_benchmark_spec(seed=seed))
        model = train(TrainConfig(seed=seed), dataset)
        runs.append((dataset, model))
    return {"runs": runs, "train_seconds": time.monotonic() - start}
