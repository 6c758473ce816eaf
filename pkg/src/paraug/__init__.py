"""Slot-preserving paraphrase augmentation for skill grammars."""
__version__ = "0.1.0"
