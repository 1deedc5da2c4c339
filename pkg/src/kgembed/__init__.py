"""Knowledge-graph embedding toolkit: RRF ingest, random walks, SGNS and
Poincaré training, and the evaluation harness."""
from .embeddings import EmbeddingTable
from .errors import KGEmbedError
from .graph import ConceptGraph, build_graph, graph_from_edges

__version__ = "0.1.0"

__all__ = ["ConceptGraph", "EmbeddingTable", "KGEmbedError", "build_graph", "graph_from_edges", "__version__"]
