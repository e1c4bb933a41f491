"""Reproducible seed derivation.

``mix_seed`` is the splitmix64 finaliser applied to ``seed + (index + 1) *
0x9E3779B97F4A7C15``; retry ``k`` of a run seeded with ``s`` always uses
``mix_seed(s, k)``.  ``derive_seed`` hashes a text label with BLAKE2b so a
sub-result keeps its seed when unrelated settings change.
"""
import hashlib

MASK64 = (1 << 64) - 1


def mix_seed(seed: int, index: int) -> int:
    z = (int(seed) + (int(index) + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, label: str) -> int:
    digest = hashlib.blake2b(f"{int(master)}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")
