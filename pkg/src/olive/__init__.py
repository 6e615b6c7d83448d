"""olive: a streaming perception/memory/reasoning pipeline server.

Live audio is chunked and segmented by an energy VAD whose voice onsets
barge into playing answers and snapshot the clip memory; transcripts are
gated, grounded in retrieved clips and answered through pluggable model
backends, with deterministic reference implementations throughout so the
whole system is testable offline.
"""

__version__ = "0.1.0"
