"""Shared fixtures: the bundled corpus, canned model, and replay backend."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from reviewlens.domain import ProductRecord, load_product_records
from reviewlens.gateway import ReplayBackend, RetryPolicy
from reviewlens.testing import CannedReviewModel

TESTDATA = Path(__file__).resolve().parent.parent / "testdata"

# A retry policy that never sleeps; tests that need backoff timing build
# their own.
FAST_RETRY = RetryPolicy(max_attempts=3, base_delay_ms=0, backoff_factor=1.0)


@pytest.fixture(scope="session")
def testdata_dir() -> Path:
    return TESTDATA


@pytest.fixture(scope="session")
def products() -> list[ProductRecord]:
    return load_product_records(TESTDATA / "dataset.json")


@pytest.fixture(scope="session")
def products_by_id(products: list[ProductRecord]) -> dict[str, ProductRecord]:
    return {product.product_id: product for product in products}


@pytest.fixture(scope="session")
def canned_config() -> dict:
    return json.loads((TESTDATA / "canned_model.json").read_text(encoding="utf-8"))


@pytest.fixture()
def canned_model(products, canned_config) -> CannedReviewModel:
    return CannedReviewModel.from_config(products, canned_config)


@pytest.fixture()
def replay_backend() -> ReplayBackend:
    return ReplayBackend(TESTDATA / "fixtures")


@pytest.fixture()
def fast_retry() -> RetryPolicy:
    return FAST_RETRY


def golden(mode: str, product_id: str, name: str) -> bytes:
    return (TESTDATA / "golden" / mode / product_id / name).read_bytes()


@pytest.fixture(scope="session")
def golden_bytes():
    return golden
