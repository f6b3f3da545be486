"""patsim: cross-corpus patent/publication similarity engine and evaluation bench."""

__version__ = "0.1.0"

from .corpus import CitationLink, Document, PPPRecord  # noqa: F401
from .embed import EmbeddingStore, HashingTextEmbedder  # noqa: F401
from .index import CosineKNNIndex, IndexConfig, Neighbor, SearchFilter  # noqa: F401
