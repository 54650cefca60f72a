"""Enumerable combinatorial identities behind the conditional resampling.

Two facts are checked numerically: the split of a permutation sum into
interior/exterior bijection sums over boundary subsets, and the Poisson
subset-splitting identity (whose f = 1 specialization is E[2^N] = e^vol).
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CombinatoricsReport:
    permutation_cases: int
    permutation_max_error: float
    mecke_value: float
    mecke_expected: float
    mecke_stderr: float
    passed: bool


def bijection_count(a, b):
    return math.factorial(a) if a == b else 0


def permutation_split_identity(x_size, y_size, weight_fn=None):
    """Compare sum_{sigma in S(X)} f(sigma) against the nested sum over
    boundary subsets Z1 in Y, Z2 in X \\ Y and interior/exterior bijections.

    Returns (lhs, rhs); exhaustive enumeration, so sizes must stay tiny.
    """
    X = tuple(range(x_size))
    Y = X[:y_size]
    rest = X[y_size:]
    if weight_fn is None:
        weight_fn = lambda sigma: 1.0
    lhs = sum(weight_fn(sigma) for sigma in itertools.permutations(X))
    rhs = 0.0
    for z1_size in range(len(Y) + 1):
        for Z1 in itertools.combinations(Y, z1_size):
            for Z2 in itertools.combinations(rest, z1_size):
                int_targets = tuple(Z2) + tuple(y for y in Y if y not in Z1)
                ext_targets = tuple(Z1) + tuple(x for x in rest if x not in Z2)
                if len(int_targets) != len(Y) or len(ext_targets) != len(rest):
                    continue
                for int_perm in itertools.permutations(int_targets):
                    for ext_perm in itertools.permutations(ext_targets):
                        sigma = [None] * x_size
                        for src, dst in zip(Y, int_perm):
                            sigma[src] = dst
                        for src, dst in zip(rest, ext_perm):
                            sigma[src] = dst
                        rhs += weight_fn(tuple(sigma))
    return lhs, rhs


def mecke_doubling_check(volume, n_samples, rng):
    """Monte Carlo check of E[2^N] = e^volume for N ~ Poisson(volume)."""
    counts = rng.poisson(volume, size=n_samples)
    vals = 2.0 ** counts.astype(float)
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(n_samples))
    return mean, math.exp(volume), stderr


def combinatorics_checks(rng, max_x=5, volume=1.0, n_samples=200_000):
    """Run both identity checks and return a report."""
    cases = 0
    max_err = 0.0
    for x_size in range(0, max_x + 1):
        for y_size in range(0, x_size + 1):
            key = hash((x_size, y_size)) & 0xFFFF
            weight = lambda sigma, k=key: math.cos(k + sum(i * s for i, s in enumerate(sigma)))
            lhs, rhs = permutation_split_identity(x_size, y_size, weight)
            max_err = max(max_err, abs(lhs - rhs))
            lhs1, rhs1 = permutation_split_identity(x_size, y_size)
            max_err = max(max_err, abs(lhs1 - rhs1))
            cases += 2
    mean, expected, stderr = mecke_doubling_check(volume, n_samples, rng)
    ok = max_err < 1e-9 and abs(mean - expected) <= 3.0 * stderr
    return CombinatoricsReport(
        permutation_cases=cases,
        permutation_max_error=max_err,
        mecke_value=mean,
        mecke_expected=expected,
        mecke_stderr=stderr,
        passed=ok,
    )
