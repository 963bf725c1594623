"""Seeded, counter-based random streams with labeled substreams."""

from __future__ import annotations

import hashlib

import numpy as np


def _derive_key(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{seed & 0xFFFFFFFFFFFFFFFF}/{label}".encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """A Philox stream keyed by ``(seed, label)``.

    Two instances built from the same seed and label, and driven by the same
    call sequence, produce identical draws. ``child(name)`` derives an
    independent stream whose key depends only on the seed and the joined label,
    never on how many numbers the parent has consumed.
    """

    def __init__(self, seed: int, label: str = "root"):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.label = label
        self.gen = np.random.Generator(np.random.Philox(key=_derive_key(self.seed, label)))

    def child(self, name: str | int) -> Rng:
        return Rng(self.seed, f"{self.label}/{name}")

    # thin pass-throughs, so call sites read like numpy
    def random(self, size=None):
        return self.gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.gen.normal(loc, scale, size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self.gen.choice(a, size=size, replace=replace, p=p)

    def get_state(self) -> dict:
        st = self.gen.bit_generator.state
        return {
            "seed": self.seed,
            "label": self.label,
            "counter": [int(v) for v in st["state"]["counter"]],
            "key": [int(v) for v in st["state"]["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict) -> Rng:
        rng = cls(state["seed"], state["label"])
        rng.gen.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.array(state["counter"], dtype=np.uint64),
                "key": np.array(state["key"], dtype=np.uint64),
            },
            "buffer": np.array(state["buffer"], dtype=np.uint64),
            "buffer_pos": state["buffer_pos"],
            "has_uint32": state["has_uint32"],
            "uinteger": state["uinteger"],
        }
        return rng
