"""Learned matrix representations of finitely presented groups.

Exact label oracles (permutation orders, Jordan-Hoelder multiplicities under
the zig-zag braid action) plus MatrixNet, trained with a small numpy
reverse-mode engine.
"""

from grouprep.words import (
    Family,
    GroupPresentation,
    SignedGen,
    Word,
    free_reduce,
    parse_family,
    parse_word,
    sample_word,
    signed_one_hot,
    standard_relations,
)

__version__ = "0.1.0"

__all__ = [
    "Family",
    "GroupPresentation",
    "SignedGen",
    "Word",
    "free_reduce",
    "parse_family",
    "parse_word",
    "sample_word",
    "signed_one_hot",
    "standard_relations",
]
