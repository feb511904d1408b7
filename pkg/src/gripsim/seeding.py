"""Deterministic seed derivation for parallel trials.

All randomness in a run flows from one 64-bit root seed.  Child streams
are derived by a fixed splitmix64 mix of the root with the child index,
so trials never share a stream and any trial can be reproduced in
isolation from (root, index).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the given 64-bit state."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(root: int, *indices: int) -> int:
    """Mix a root seed with one or more child indices into a new seed."""
    s = splitmix64(root & _MASK)
    for idx in indices:
        s = splitmix64(s ^ ((idx & _MASK) * _GOLDEN & _MASK))
    return s
