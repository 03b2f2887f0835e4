"""Reference neural backend for the eae-harness wire protocol.

Trains tiny transformer models on example files produced by the harness
(template infilling as seq2seq, extractive QA as span scoring) and serves
them over the length-delimited JSON protocol. All template rendering,
parsing, decoding, and scoring stays in the harness: this package only maps
opaque input strings to output strings or start/end distributions.
"""

__version__ = "0.1.0"
