import numpy as np
import pytest

from absa.ingest import CorpusRecord, read_corpus
from absa.testkit import SynthSpec, generate


def make_record(review_id="r0", business_id="b0", stars=4, text="good food",
                state="PA", cuisine="Italian", overall_rating=4.0,
                user_id="u0", date="2021-05-01"):
    return CorpusRecord(review_id=review_id, user_id=user_id,
                        business_id=business_id, stars=stars, text=text,
                        date=date, state=state, overall_rating=overall_rating,
                        cuisine=cuisine)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Small synthetic corpus shared across tests (30 businesses x 10 reviews)."""
    out = tmp_path_factory.mktemp("synth")
    generate(SynthSpec(n_businesses=30, reviews_per_business=10, seed=11), out)
    return out


@pytest.fixture(scope="session")
def synth_records(synth_dir):
    from absa.ingest import ParseDiagnostics, parse_corpus
    return list(parse_corpus(synth_dir / "reviews.jsonl",
                             synth_dir / "businesses.jsonl",
                             diagnostics=ParseDiagnostics()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
