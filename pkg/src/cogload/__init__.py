"""EEG cognitive-load classification with a masked-autoencoder pre-trained transformer.

Stages: filtering (:mod:`.sigproc`), PSD/DE feature tokens
(:mod:`.features`), token sequences and masking (:mod:`.tokenizer`), a
small autograd engine (:mod:`.nn`), the encoder and its heads
(:mod:`.model`), segment voting (:mod:`.aggregate`) and grouped
cross-validation (:mod:`.evalharness`). :mod:`.cli` binds them end to end.
"""
from .errors import CogloadError

__version__ = "0.1.0"

__all__ = ["CogloadError", "__version__"]
