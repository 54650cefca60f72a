"""Observables and verification statistics.

All statistical acceptance in this package uses 3-sigma or p > 0.01
thresholds with fixed seeds, so verification runs are deterministic.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .representations import config_cycles, path_inside_box, path_intersects_box
from .trajectories import unit_ball_volume


@dataclass(frozen=True)
class StatRecord:
    """A named observable value with its Monte Carlo standard error."""

    name: str
    value: float
    stderr: float
    n_samples: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0 or self.n_samples < 1:
            raise ValueError("need stderr >= 0 and n_samples >= 1")


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts)
        if np.any(np.diff(edges) <= 0) or np.any(counts < 0):
            raise ValueError("edges must increase strictly and counts be nonnegative")
        if edges.shape[0] != counts.shape[0] + 1:
            raise ValueError("need len(edges) == len(counts) + 1")


def _unit_box(d):
    lo = np.zeros(d)
    hi = np.ones(d)
    return lo, hi


def cycle_lengths(gamma):
    return [len(c) for c in config_cycles(gamma)]


def cycle_length_histogram(gamma, max_length=None):
    """Counts of successor cycles per length, as a unit-width histogram."""
    lengths = cycle_lengths(gamma)
    top = max_length or (max(lengths) if lengths else 1)
    edges = np.arange(0.5, top + 1.5)
    counts = np.zeros(top)
    for length in lengths:
        if length <= top:
            counts[length - 1] += 1
    return Histogram(edges, counts)


# ---------------------------------------------------------------------------
# The example functionals
# ---------------------------------------------------------------------------


def f1(gamma):
    """Total start-to-end displacement of bridges starting in the unit box."""
    total = 0.0
    for b in gamma.bridges:
        if np.all(b.start >= 0.0) and np.all(b.start <= 1.0):
            total += float(np.linalg.norm(b.end - b.start))
    return total


def f2(gamma):
    """Number of successor cycles entirely inside the unit box."""
    box = _unit_box(gamma.dim) if len(gamma) else None
    total = 0.0
    for cyc in config_cycles(gamma):
        if all(path_inside_box(gamma.bridges[i].nodes, box) for i in cyc):
            total += sum(1.0 / len(cyc) for _ in cyc)
    return total


def f3(gamma):
    """Number of bridges meeting the unit box, gated to even counts."""
    if len(gamma) == 0:
        return 0.0
    box = _unit_box(gamma.dim)
    count = sum(1 for b in gamma.bridges if path_intersects_box(b.nodes, box))
    return float(count) if count % 2 == 0 else 0.0


def f4(gamma):
    """Starts in the unit box sitting on cycles of length 1 or 2."""
    if len(gamma) == 0:
        return 0.0
    succ = gamma._succ
    count = 0
    for i, b in enumerate(gamma.bridges):
        if np.all(b.start >= 0.0) and np.all(b.start <= 1.0):
            if succ[int(succ[i])] == i:
                count += 1
    return float(count)


def cycle_count_leq(gamma, box, n):
    """Number of cycles of length <= n whose trajectories meet the box."""
    total = 0
    for cyc in config_cycles(gamma):
        if len(cyc) <= n and any(
            path_intersects_box(gamma.bridges[i].nodes, box) for i in cyc
        ):
            total += 1
    return total


def long_cycle_fraction(gamma, n, variant="literal"):
    """Unit-box starts with no return in [2, n].

    ``literal`` counts starts whose cycle period lies outside [2, n] (a
    period-1 bridge never first-returns there, so 1-cycles count); the
    ``period_gt`` variant counts starts on cycles strictly longer than n.
    """
    if len(gamma) == 0:
        return 0.0
    if variant not in ("literal", "period_gt"):
        raise ValueError(f"unknown variant {variant!r}")
    periods = {}
    for cyc in config_cycles(gamma):
        for i in cyc:
            periods[i] = len(cyc)
    count = 0
    for i, b in enumerate(gamma.bridges):
        if np.all(b.start >= 0.0) and np.all(b.start <= 1.0):
            period = periods[i]
            if variant == "literal":
                if period == 1 or period > n:
                    count += 1
            else:
                if period > n:
                    count += 1
    return float(count)


def threshold(x, m):
    """0 below the threshold m, identity above it."""
    return 0.0 if x <= m else x


# ---------------------------------------------------------------------------
# Relative entropy against the Poisson loop reference
# ---------------------------------------------------------------------------


def relative_entropy_estimate(log_densities, params, log_z, log_z_stderr, mass,
                              seed=0, gate=0.01):
    """Volume-normalized relative entropy of the loop model over its Poisson
    reference, from sampled log densities and an oracle log Z.

    I/L^d = (E[log dens] - log Z - L^d + reference mass) / L^d.  Refuses to
    produce an estimate when the oracle log Z is not known to better than
    ``gate``.
    """
    if log_z_stderr > gate:
        raise ConfigurationError(
            f"oracle log Z stderr {log_z_stderr:.4f} exceeds the {gate} gate"
        )
    vals = np.asarray(log_densities, dtype=float)
    n = vals.shape[0]
    vol = params.L**params.d
    mean = float(np.mean(vals))
    stderr_mean = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    value = (mean - log_z - vol + mass) / vol
    stderr = math.sqrt(stderr_mean**2 + log_z_stderr**2) / vol
    return StatRecord(
        name="relative_entropy_per_volume",
        value=value,
        stderr=stderr,
        n_samples=n,
        seed=seed,
        params={"L": params.L, "beta": params.beta, "mu": params.mu, "d": params.d},
    )


# ---------------------------------------------------------------------------
# Wiener sausage diagnostics
# ---------------------------------------------------------------------------


def cube_chain_exits(nodes, delta):
    """Number of sup-norm delta-exits along a polyline, with segment clipping.

    Walks the path anchoring a cube of half-width delta at the current
    position; whenever the remainder of a segment leaves the cube, the
    crossing point (computed on the segment) re-anchors the cube.  Touching
    the face without continuing outward is not an exit, matching the strict
    exceedance in the exit-time definition.  Returns the chain length
    N = exits + 1.
    """
    anchor = nodes[0].astype(float).copy()
    exits = 0
    i = 0
    a = nodes[0].astype(float).copy()
    while i < nodes.shape[0] - 1:
        b = nodes[i + 1].astype(float)
        if np.all(np.abs(b - anchor) <= delta):
            # convex cube: the whole remaining piece stays inside
            a = b
            i += 1
            continue
        seg = b - a
        lam = 1.0
        for k in range(nodes.shape[1]):
            if seg[k] > 0:
                cand = (anchor[k] + delta - a[k]) / seg[k]
            elif seg[k] < 0:
                cand = (anchor[k] - delta - a[k]) / seg[k]
            else:
                continue
            if 0.0 <= cand < lam:
                lam = cand
        crossing = a + lam * seg
        anchor = crossing.copy()
        exits += 1
        a = crossing
    return exits + 1


def brownian_path(t_total, steps, d, rng):
    """Standard Brownian motion nodes on a uniform grid from the origin."""
    h = t_total / steps
    inc = math.sqrt(h) * rng.standard_normal((steps, d))
    return np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)])


def sausage_interval_volume(nodes, delta):
    """Exact 1-d sausage volume of a connected path: range + 2 delta."""
    return float(nodes.max() - nodes.min() + 2.0 * delta)


@dataclass(frozen=True)
class SausageReport:
    n_paths: int
    violations: int
    moment: float
    moment_stderr: float
    half_ratio: float
    max_volume: float
    passed: bool


def sausage_diagnostics(n_paths, delta, t_total, eps, rng, d=1, steps=256):
    """Pathwise cube-chain bound and exp-moment stability on Brownian paths.

    Checks |S_(delta,T)| <= N_T (4 delta)^d on every discretized path (exact
    interval volumes in one dimension, voxel estimates above) and reports the
    running mean of exp(eps |S|^2) together with the ratio of the two
    half-sample means.
    """
    from .trajectories import SausageSpec, sausage_volume

    voxel_spec = SausageSpec(delta, resolution=delta / 10.0) if d > 1 else None
    violations = 0
    vols = np.empty(n_paths)
    for i in range(n_paths):
        nodes = brownian_path(t_total, steps, d, rng)
        if d == 1:
            vol = sausage_interval_volume(nodes, delta)
        else:
            vol = sausage_volume(nodes, voxel_spec).value
        n_chain = cube_chain_exits(nodes, delta)
        if vol > n_chain * (4.0 * delta) ** d + 1e-12:
            violations += 1
        vols[i] = vol
    moments = np.exp(eps * vols**2)
    mean = float(np.mean(moments))
    stderr = float(np.std(moments, ddof=1) / math.sqrt(n_paths))
    half = n_paths // 2
    ratio = float(np.mean(moments[:half]) / np.mean(moments[half:]))
    return SausageReport(
        n_paths=n_paths,
        violations=violations,
        moment=mean,
        moment_stderr=stderr,
        half_ratio=ratio,
        max_volume=float(np.max(vols)),
        passed=violations == 0 and 0.5 <= ratio <= 2.0,
    )


# ---------------------------------------------------------------------------
# Two-sample Kolmogorov-Smirnov test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    mode: str


def _ks_statistic(xs, ys):
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    data = np.concatenate([xs, ys])
    cdf_x = np.searchsorted(xs, data, side="right") / xs.shape[0]
    cdf_y = np.searchsorted(ys, data, side="right") / ys.shape[0]
    return float(np.max(np.abs(cdf_x - cdf_y)))


def _kolmogorov_sf(t):
    """Asymptotic survival function of the two-sided KS statistic."""
    if t < 1.1e-16:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * t * t)
        total += term
        if abs(term) < 1e-16:
            break
    return max(min(2.0 * total, 1.0), 0.0)


def _ks_exact_pvalue(d, m, n):
    """Exact P(D >= d) under the continuous null by lattice-path counting."""
    # paths from (0,0) to (m,n); those staying strictly inside
    # |i/m - j/n| < d never reach the statistic
    limit = d * m * n - 1e-9
    table = np.zeros((m + 1, n + 1))
    table[0, 0] = 1.0
    for i in range(m + 1):
        for j in range(n + 1):
            if i == 0 and j == 0:
                continue
            if abs(i * n - j * m) >= limit:
                table[i, j] = 0.0
                continue
            acc = 0.0
            if i > 0:
                acc += table[i - 1, j]
            if j > 0:
                acc += table[i, j - 1]
            table[i, j] = acc
    inside = table[m, n] / math.comb(m + n, m)
    return min(max(1.0 - inside, 0.0), 1.0)


def two_sample_test(xs, ys, exact_limit=30):
    """Two-sided two-sample KS test.

    Exact null computation when both samples have at most ``exact_limit``
    points, the asymptotic Kolmogorov law (with the Stephens small-sample
    correction) otherwise.
    """
    m, n = len(xs), len(ys)
    if m == 0 or n == 0:
        raise ValueError("both samples must be nonempty")
    d = _ks_statistic(xs, ys)
    if m <= exact_limit and n <= exact_limit:
        return KsResult(d, _ks_exact_pvalue(d, m, n), "exact")
    en = math.sqrt(m * n / (m + n))
    return KsResult(d, _kolmogorov_sf((en + 0.12 + 0.11 / en) * d), "asymptotic")


def tameness_slack_f1(gamma, delta, sausage_volumes):
    """Slack of the cylinder envelope a f1 <= 1 + sum of sausage volumes over
    unit-box starts, with a the d-1 ball cross-section."""
    a = unit_ball_volume(gamma.dim - 1) * delta ** (gamma.dim - 1)
    bound = 1.0 + float(np.sum(sausage_volumes))
    return bound - a * f1(gamma)


def empirical_mean_record(name, values, seed, params=None):
    vals = np.asarray(values, dtype=float)
    stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return StatRecord(name=name, value=float(np.mean(vals)), stderr=stderr,
                      n_samples=len(vals), seed=seed, params=params or {})
