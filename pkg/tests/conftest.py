import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from logsim import ProviderConfig, apply_masks, build_db, embed_batch, gen_synthetic


@pytest.fixture(scope="session")
def synthetic_corpus():
    """The labeled corpus shared by the slower end-to-end tests:
    50 types, 100 records each, 5% anomalies."""
    return gen_synthetic(50, 100, 0.05, seed=7)


@pytest.fixture(scope="session")
def small_docs():
    """20 embedded documents (dim 16) for retrieval fixtures."""
    records = gen_synthetic(20, 1, 0.0, seed=3)
    db, _ = build_db(apply_masks(records))
    return embed_batch(db, ProviderConfig(dim=16, seed=0))
