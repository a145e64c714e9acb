"""Multimodal intent detection and slot filling for in-cabin passenger utterances.

A two-level Bi-LSTM tagger/classifier over concatenated token embeddings, with
utterance-level acoustic and visual vectors fused before the intent output.
"""

__version__ = "0.1.0"
