import hashlib
from typing import List

import numpy as np

EVAL_SEED_OFFSET = 1_000_000


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode('utf-8')).hexdigest()
    return int(digest[:8], 16)


class SeedStreams:
    """Named random streams derived from one root seed.

    Each purpose ("search/bslp", "fsda/train", ...) gets its own
    SeedSequence, so adding a consumer never shifts another one's draws.
    """

    def __init__(self, root_seed: int):
        self.root_seed = int(root_seed)

    def sequence(self, name: str) -> np.random.SeedSequence:
        keys = tuple(_name_key(part) for part in name.split('/'))
        return np.random.SeedSequence(self.root_seed, spawn_key=keys)

    def generator(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.sequence(name))


def evaluation_seeds(seeds: List[int]) -> List[int]:
    return [EVAL_SEED_OFFSET + int(s) for s in seeds]


def rng_for(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
