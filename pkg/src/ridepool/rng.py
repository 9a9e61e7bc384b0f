"""Named, counter-based random streams.

Every stream is a Philox generator keyed by (seed, instance, run, purpose), so
policies evaluated on the same (instance, run) see identical arrivals.
"""

from __future__ import annotations

import numpy as np

ARRIVALS = 0
POLICY = 1
OCCUPANCY = 2
COIN = 3
ESTIMATOR = 4
GENERATOR = 5


def stream(seed: int, instance: int = 0, run: int = 0, purpose: int = POLICY) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(instance), int(run), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))
