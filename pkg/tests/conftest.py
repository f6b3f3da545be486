import datetime

import numpy as np
import pytest

from patsim.corpus import Document
from patsim.embed import EmbeddingStore, HashingTextEmbedder, embed_corpus
from patsim.synthetic import make_corpus


def make_doc(doc_id="P1", kind="patent", title="A title", abstract="An abstract.",
             year=2005, **kwargs):
    defaults = dict(
        pub_date=datetime.date(year, 6, 15),
        lang="en",
    )
    if kind == "patent":
        defaults.update(
            filing_year=year - 1,
            authority="EP",
            family_id="F1",
            application_id="100",
        )
    defaults.update(kwargs)
    return Document(id=doc_id, kind=kind, title=title, abstract=abstract, **defaults)


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(n_families=20, cited_per_family=5, n_decoys=380, seed=7)


@pytest.fixture(scope="session")
def small_store(small_corpus):
    embedder = HashingTextEmbedder(dim=192, seed=11)
    return embed_corpus(small_corpus.documents.values(), embedder, pooling="cls", dim=192)


@pytest.fixture(scope="session")
def small_meta(small_corpus):
    return {d.id: (d.pub_year, d.kind) for d in small_corpus.documents.values()}


def random_unit_store(n, dim, seed, years=None, kinds=None):
    """Store of n random unit vectors plus an aligned meta mapping."""
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(n, dim))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    store = EmbeddingStore(dim=dim)
    meta = {}
    for i in range(n):
        doc_id = f"v{i:06d}"
        store.add(doc_id, vecs[i].astype(np.float32))
        year = 2000 if years is None else years[i]
        kind = "paper" if kinds is None else kinds[i]
        meta[doc_id] = (year, kind)
    return store, meta
