"""Query-independent image search reranking toolkit.

Re-orders text-based image search results by combining binary metadata
features with visual prototypes, a k-means pseudo-relevance score, and
offline-learned linear weights.
"""

__version__ = "0.1.0"
