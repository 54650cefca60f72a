"""Counter-based random streams.

Every sampling routine takes an explicit ``numpy.random.Generator``.  Streams
are derived from a master seed plus an integer key path (replica index,
sub-task index, ...), so results never depend on scheduling order.
"""

import numpy as np


def stream(seed, *key):
    """Return a Philox generator fully determined by ``(seed, *key)``.

    Distinct key paths give statistically independent streams.
    """
    entropy = [int(seed)] + [int(k) for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def substreams(seed, n, *key):
    """n independent generators keyed by ``(seed, *key, i)`` for i < n."""
    return [stream(seed, *key, i) for i in range(n)]
