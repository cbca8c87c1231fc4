"""hfbridge: serves a pretrained encoder-decoder model over the seqattrib
oracle protocol (JSON lines on stdio), plus a Spider-format converter."""

__version__ = "0.1.0"

from .convert import SpiderExample, serialize_instance
from .model import Seq2SeqScorer

__all__ = ["Seq2SeqScorer", "SpiderExample", "serialize_instance"]
