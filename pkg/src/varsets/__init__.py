"""Deterministic corpus engineering for variation-set training curricula.

Builds language-model training datasets with controlled proportions of
variation sets (natural and rule-synthesized), plus batch schedules that
present those sets either concatenated into single sequences or spread
across adjacent batches.
"""

__version__ = "0.1.0"
