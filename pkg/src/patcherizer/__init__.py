"""Patch representation learning from diffs.

A patch is read as a unified diff, split into added/removed/context token
streams and before/after AST graphs, and encoded by a sequence-intention
transformer plus a graph-intention GCN. The encoder is pre-trained by
masked reconstruction and fine-tuned for description generation,
correctness classification and retrieval.
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
