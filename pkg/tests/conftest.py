import time

import numpy as np
import pytest

from mspoe.harness.fixtures import load_fixture
from mspoe.model import ModelConfig, TransformerModel, random_weights


def make_random_model(n_layers=2, n_heads=4, head_dim=8, mlp_dim=16, vocab_size=32, max_seq_len=96, seed=0,
                      tied=False, scale=0.3):
    cfg = ModelConfig(n_layers, n_heads, head_dim, mlp_dim, vocab_size, max_seq_len, tied_embeddings=tied)
    return TransformerModel(cfg, random_weights(cfg, seed=seed, scale=scale))


@pytest.fixture(scope="session")
def fixture():
    """The shipped induction model and its vocabulary."""
    return load_fixture("induction")


@pytest.fixture
def small_model():
    return make_random_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_sessionstart(session):
    session.config._mspe_t0 = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # the suite-runtime criterion has to observe every other test first
    last = [it for it in items if it.get_closest_marker("suite_last")]
    items[:] = [it for it in items if not it.get_closest_marker("suite_last")] + last


def pytest_configure(config):
    config.addinivalue_line("markers", "suite_last: run after every other collected test")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
