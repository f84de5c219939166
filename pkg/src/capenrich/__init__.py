"""Caption enrichment toolkit.

Builds detail-clause training data from grouped reference captions,
tunes continuous prompt vectors on a small frozen autoregressive
decoder, filters decoded details by image similarity, and scores the
results with accuracy, retrieval, and diversity metrics.
"""

__version__ = "0.1.0"

__all__ = [
    "corpus",
    "sgparse",
    "databuild",
    "prompts",
    "tinylm",
    "embed",
    "postproc",
    "evalsuite",
    "cli",
]
