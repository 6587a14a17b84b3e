"""Labeled sub-seed derivation.

Every source of randomness in the toolkit draws from a seed obtained by
hashing a master seed together with a textual label (and optional integer
qualifiers).  One master seed therefore pins the phantom data, the network
initialization, the shuffling order, and every latent draw, while keeping
the individual streams statistically independent.
"""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed", "torch_seed"]

_DOMAIN = b"volsynth.v1"

# torch.Generator.manual_seed takes a signed 64-bit value; keep sub-seeds
# in the non-negative half so the same integer works for numpy and torch.
_MASK63 = (1 << 63) - 1


def derive_seed(master: int, *labels: str | int) -> int:
    """Derive a 63-bit sub-seed from a master seed and a label path."""
    h = hashlib.sha256(_DOMAIN)
    h.update(int(master).to_bytes(16, "little", signed=True))
    for label in labels:
        part = str(label).encode("utf-8")
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    return int.from_bytes(h.digest()[:8], "little") & _MASK63


def torch_seed(master: int, *labels: str | int):
    """A fresh ``torch.Generator`` seeded from ``derive_seed``."""
    import torch

    gen = torch.Generator()
    gen.manual_seed(derive_seed(master, *labels))
    return gen
