"""querc: dialect-agnostic SQL workload analytics.

Learns vector representations of queries straight from their text (a
context-prediction embedder and an LSTM autoencoder, both trained from
scratch), then drives workload summarization for index selection, query
labeling for security audits and routing-mismatch detection, and a
streaming labeling service on top of those vectors.
"""

from .workload import IngestResult, LabeledQuery, LineRejection, WorkloadLog, read_log, write_log

__version__ = "0.1.0"

__all__ = [
    "IngestResult",
    "LabeledQuery",
    "LineRejection",
    "WorkloadLog",
    "read_log",
    "write_log",
    "__version__",
]
