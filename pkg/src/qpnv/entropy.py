"""Named, splittable entropy streams.

Every random draw in a simulation comes from a generator derived from one
root seed plus a path of names ("cycle/3/box/1", ...). Derivation hashes
the full path, so streams are independent of the order in which sibling
streams are consumed and whole runs replay bit-identically.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


def derive_seed(root: int, *path: str) -> int:
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:16], "big")


@dataclass(frozen=True)
class SeedStream:
    """A position in the seed tree; children are addressed by name."""

    root: int
    path: tuple[str, ...] = ()

    def child(self, *names) -> "SeedStream":
        return SeedStream(self.root, self.path + tuple(str(n) for n in names))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.root, *self.path))

    def key_bytes(self, nbytes: int = 32) -> bytes:
        """Deterministic key material for this stream position."""
        return self.generator().bytes(nbytes)

    @property
    def name(self) -> str:
        return "/".join(self.path) if self.path else "root"
