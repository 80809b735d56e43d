"""trisym: triple-symmetry graph networks for node-label inpainting.

The library couples a message-passing architecture that is equivariant to
node and label permutations and invariant to feature permutations with the
verification oracles for those claims: equivariant-basis dimension counts,
randomized symmetry suites, finite-difference gradient checks, and a
zero-shot transfer harness across graphs with different node counts, feature
dimensions, and label sets.
"""
from . import baseline, eqlayers, graphdata, ndarr, symmetry, trainer, tsgnn, verify

__version__ = "0.1.0"

__all__ = [
    "baseline",
    "eqlayers",
    "graphdata",
    "ndarr",
    "symmetry",
    "trainer",
    "tsgnn",
    "verify",
]
