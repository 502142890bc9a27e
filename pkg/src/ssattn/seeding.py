"""Named RNG streams.

Every source of randomness in a run draws from its own child generator,
keyed by (run seed, stream id, optional extra ids). Keeping streams apart
is what makes e.g. a probing-enabled run consume exactly the same dropout
and shuffle randomness as a run without probing, which the degenerate-mode
equality checks rely on.
"""

import numpy as np

INIT = 0
DROPOUT = 1
SHUFFLE = 2
PROBE = 3
SYNTH = 4
GAMMA = 5
AUGMENT = 6


def make_rng(seed: int, stream: int, *extra: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.default_rng([seed, stream, *extra])
