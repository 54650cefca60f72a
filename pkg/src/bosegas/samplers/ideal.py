"""Exact sampling of the non-interacting (ideal) loop soup.

The reference intensity assigns a length-j loop rooted at x the weight
exp(beta mu j) / j times the closed-bridge mass (2 pi beta j)^(-d/2), with
roots uniform over the window.  Dirichlet boundary conditions thin the soup
to loops whose every node stays inside the window, which is exactly Poisson
thinning, so per-length counts remain Poisson.
"""

import math

import numpy as np

from ..errors import ConfigurationError
from ..representations import FkConfig, RlConfig
from ..trajectories import Loop, TimeGrid, standard_bridge_bank

TAIL_TOLERANCE = 1e-12


def loop_intensity_means(params, j_max):
    """Unconfined per-length Poisson means
    L^d exp(beta mu j) (2 pi beta j)^(-d/2) / j for j = 1..j_max."""
    j = np.arange(1, j_max + 1, dtype=float)
    return (
        params.L**params.d
        * np.exp(params.beta * params.mu * j)
        * (2.0 * math.pi * params.beta * j) ** (-params.d / 2.0)
        / j
    )


def truncation_tail_mass(params, j_max):
    """Upper bound on the mean loop count discarded beyond j_max.

    Needs beta*mu < 0; the tail is dominated by the geometric series of the
    activity factor."""
    a = math.exp(params.beta * params.mu)
    if a >= 1.0:
        return math.inf
    lead = (
        params.L**params.d
        * (2.0 * math.pi * params.beta * (j_max + 1)) ** (-params.d / 2.0)
        / (j_max + 1)
    )
    return lead * a ** (j_max + 1) / (1.0 - a)


def default_j_max(params, tol=TAIL_TOLERANCE):
    if params.beta * params.mu >= 0.0:
        raise ConfigurationError(
            "ideal sampler needs beta*mu < 0 or an explicit length truncation j_max"
        )
    j_max = 1
    while truncation_tail_mass(params, j_max) > tol:
        j_max += 1
        if j_max > 10_000:
            raise ConfigurationError("cannot reach the requested truncation tolerance")
    return j_max


def sample_loop(root, j, beta, steps_per_beta, rng):
    """A Brownian loop of length j rooted at ``root`` (closed bridge + root)."""
    root = np.atleast_1d(np.asarray(root, dtype=float))
    steps = steps_per_beta * j
    noise = standard_bridge_bank(1, beta * j, steps, root.shape[0], rng)[0]
    nodes = root + noise
    nodes[0] = root
    nodes[-1] = root
    return Loop(TimeGrid(beta * j, steps), nodes, j)


def sample_ideal_rl(params, rng, j_max=None):
    """One draw of the confined ideal loop soup.

    Per length j, the emitted count is Poisson with the unconfined mean times
    the window-confinement probability; roots are uniform in the window
    conditioned on confinement (rejection keeps the joint law exact).
    """
    if j_max is None:
        j_max = default_j_max(params)
    means = loop_intensity_means(params, j_max)
    loops = []
    for j in range(1, j_max + 1):
        count = int(rng.poisson(means[j - 1]))
        if count == 0:
            continue
        steps = params.steps * j
        roots = params.L * (rng.random((count, params.d)) - 0.5)
        noise = standard_bridge_bank(count, params.beta * j, steps, params.d, rng)
        nodes = roots[:, None, :] + noise
        nodes[:, 0, :] = roots
        nodes[:, -1, :] = roots
        confined = np.all(
            (nodes >= -params.L / 2.0) & (nodes < params.L / 2.0), axis=(1, 2)
        )
        grid = TimeGrid(params.beta * j, steps)
        for i in np.nonzero(confined)[0]:
            loops.append(Loop(grid, nodes[i], j))
    return RlConfig(loops)


def confinement_probability(params, j, n_samples, rng, batch=4096):
    """Monte Carlo estimate of the probability that a length-j loop with a
    uniform root stays inside the window; returns (estimate, stderr)."""
    hits = 0
    remaining = n_samples
    steps = params.steps * j
    while remaining > 0:
        n = min(batch, remaining)
        roots = params.L * (rng.random((n, params.d)) - 0.5)
        noise = standard_bridge_bank(n, params.beta * j, steps, params.d, rng)
        nodes = roots[:, None, :] + noise
        nodes[:, 0, :] = roots
        nodes[:, -1, :] = roots
        hits += int(np.count_nonzero(np.all(
            (nodes >= -params.L / 2.0) & (nodes < params.L / 2.0), axis=(1, 2)
        )))
        remaining -= n
    p = hits / n_samples
    return p, math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples)


def empirical_shift(config, params, rng):
    """Shift a configuration by a uniform window vector (the empirical field)."""
    v = params.L * (rng.random(params.d) - 0.5)
    if isinstance(config, (FkConfig, RlConfig)):
        return config.translated(v), v
    raise TypeError(f"cannot shift {type(config)!r}")
