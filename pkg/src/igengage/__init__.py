"""Interpretable Instagram engagement analytics.

Statistical characterization (Spearman, MANOVA/Pillai), interpretable
decision-tree prediction with guideline extraction, and unsupervised
hot-topic mining over post embeddings, driven as a library or batch CLI.
"""

__version__ = "0.1.0"
