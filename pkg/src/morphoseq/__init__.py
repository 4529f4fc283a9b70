"""Morphological inflection with character-morpheme and character seq2seq models."""

__version__ = "0.1.0"
