"""antkit: action-sequence toolkit for long-term action anticipation.

Ingest segment-annotated activity data, predict future verb-noun action
sequences with local temporal models or an external LLM, repair and score the
predictions, and distill sequence models into compact students.
"""

__version__ = "0.1.0"
