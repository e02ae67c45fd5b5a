"""Shared fixtures.

The full-size QR trace and its classification are expensive enough that the
non-timed tests share one copy; timed acceptance checks build their own.
"""

import pytest

from cachepred import CacheConfig, classify_trace, generate_trace, lru_oracle

HEADLINE_N = 1568
HEADLINE_B = 32


@pytest.fixture(scope="session")
def headline_trace():
    return generate_trace("geqrf", HEADLINE_N, HEADLINE_B)


@pytest.fixture(scope="session")
def headline_config():
    return CacheConfig()


@pytest.fixture(scope="session")
def headline_classification(headline_trace, headline_config):
    return classify_trace(headline_trace, headline_config)


@pytest.fixture(scope="session")
def headline_oracle(headline_trace, headline_config):
    return lru_oracle(headline_trace, headline_config)
