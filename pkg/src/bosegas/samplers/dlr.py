"""Conditional resampling of the configuration inside a compact box.

Given a bridge configuration, the exterior (every bridge not contained in the
box) is frozen bit-exactly; the interior is redrawn as: a Poisson cloud of new
points in the box, a bijection from {inward boundary + new points} onto
{outward boundary + new points}, and box-confined bridges along the bijection,
weighted by the local Hamiltonian.

Two kernel modes:

* ``rejection`` -- exact independent draws.  The count of new points is
  proposed from the factorial-tilted law P(k') ~ a^k' (b+k')!/k'! with
  a = exp(beta mu) |box| (2 pi beta)^(-d/2), which is normalizable only for
  a < 1; bijections uniform, shapes unconfined, and the acceptance
  prod_i (m_i / m_max) * 1{confined} * exp(-(H_loc - lower_bound)) makes the
  draw exact.  Requires a certified lower bound on the local Hamiltonian
  (0 for the nonnegative built-ins).
* ``mcmc`` -- an interior-only Metropolis chain with point birth/death
  (self-loop insertion and cycle insertion/excision), random transpositions
  of the bijection, and bridge reshapes; works for any activity.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, StructuralError
from ..hamiltonians import LEFT, h_loc
from ..representations import FkConfig, dlr_split
from ..trajectories import Bridge, TimeGrid, bridge_from_noise, log_unnormalized_mass, standard_bridge_bank


@dataclass(frozen=True)
class DlrSpec:
    """Box, kernel mode and its knobs."""

    box: tuple
    mode: str = "rejection"
    lower_bound: float = None
    retry_cap: int = 20_000
    max_outer: int = 200_000
    mcmc_steps: int = 400

    def __post_init__(self):
        if self.mode not in ("rejection", "mcmc"):
            raise ConfigurationError(f"unknown DLR mode {self.mode!r}")
        lo, hi = (np.asarray(b, dtype=float) for b in self.box)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ConfigurationError("box must satisfy lo < hi componentwise")

    @property
    def lo(self):
        return np.asarray(self.box[0], dtype=float)

    @property
    def hi(self):
        return np.asarray(self.box[1], dtype=float)

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))


def _inside(nodes, lo, hi):
    return bool(np.all((nodes >= lo) & (nodes <= hi)))


def confined_bridge(x, y, t, box, steps, rng, retry_cap=20_000):
    """Rejection-sample a bridge x -> y with every node in the closed box.

    Returns (bridge, attempts); pooling successes over total attempts across
    calls estimates the confined-over-free mass ratio.  Raises on retry-cap
    exhaustion with a hint that the box is too tight for the duration.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not (_inside(x[None, :], lo, hi) and _inside(y[None, :], lo, hi)):
        raise ValueError("confined bridge endpoints must lie in the box")
    for attempt in range(1, retry_cap + 1):
        noise = standard_bridge_bank(1, t, steps, x.shape[0], rng)[0]
        nodes = bridge_from_noise(x, y, t, noise)
        if _inside(nodes, lo, hi):
            return Bridge(TimeGrid(t, steps), nodes), attempt
    raise StructuralError(
        f"no confined bridge in {retry_cap} attempts; enlarge the box or lower beta"
    )


def _interior_pairing(gamma, spec):
    split = dlr_split(gamma, (spec.lo, spec.hi))
    if split.inward.shape[0] != split.outward.shape[0]:
        raise StructuralError(
            "degenerate conditional normalization: inward and outward boundary "
            f"sizes differ ({split.inward.shape[0]} vs {split.outward.shape[0]})"
        )
    return split


def dlr_resample(gamma, spec, model, params, rng, quad=LEFT):
    """One draw of the conditional kernel; returns interior union exterior.

    The exterior bridges of the output are the exact same objects as the
    input's.
    """
    if model.pair is None:
        raise ConfigurationError("DLR resampling needs a pair-potential model")
    split = _interior_pairing(gamma, spec)
    sources = list(split.inward)
    sinks = list(split.outward)
    if spec.mode == "rejection":
        interior = _rejection_kernel(split, sources, sinks, spec, model, params, rng, quad)
    else:
        interior = _mcmc_kernel(split, sources, sinks, spec, model, params, rng, quad)
    return FkConfig(interior + list(split.exterior.bridges))


# ---------------------------------------------------------------------------
# Rejection mode
# ---------------------------------------------------------------------------


def _count_law(a, b, cutoff=1e-15):
    """Normalized factorial-tilted counts p(k) ~ a^k (b+k)! / k!."""
    weights = []
    w = float(math.factorial(b))
    k = 0
    while True:
        weights.append(w)
        ratio = a * (b + k + 1) / (k + 1)
        w = w * ratio
        k += 1
        if k > 10 and w < cutoff * max(weights):
            break
        if k > 100_000:
            raise ConfigurationError("count law failed to converge; activity too high")
    weights = np.array(weights)
    return weights / weights.sum()


def _rejection_kernel(split, sources, sinks, spec, model, params, rng, quad):
    lower = spec.lower_bound if spec.lower_bound is not None else model.local_lower_bound
    if lower is None:
        raise ConfigurationError(
            "rejection mode needs a certified lower bound on the local energy; "
            "supply DlrSpec.lower_bound for custom models or use mode='mcmc'"
        )
    m_max = (2.0 * math.pi * params.beta) ** (-params.d / 2.0)
    a = math.exp(params.beta * params.mu) * spec.volume * m_max
    if a >= 1.0:
        raise ConfigurationError(
            f"rejection mode needs exp(beta mu) |box| (2 pi beta)^(-d/2) < 1, got {a:.3f}; "
            "use mode='mcmc'"
        )
    b = len(sources)
    probs = _count_law(a, b)
    lo, hi = spec.lo, spec.hi
    box_side = hi - lo
    for _ in range(spec.max_outer):
        k_new = int(rng.choice(len(probs), p=probs))
        zeta = lo + box_side * rng.random((k_new, params.d))
        src = np.array(sources + [z for z in zeta], dtype=float).reshape(b + k_new, params.d)
        snk = np.array(sinks + [z for z in zeta], dtype=float).reshape(b + k_new, params.d)
        k = b + k_new
        if k == 0:
            interior = []
            h_val = h_loc(split.exterior, (lo, hi), model.pair, params, quad) if len(
                split.exterior
            ) else 0.0
            if math.isinf(h_val):
                continue
            if rng.random() < math.exp(-(h_val - lower)):
                return interior
            continue
        perm = rng.permutation(k)
        log_accept = 0.0
        bridges = []
        confined = True
        for i in range(k):
            x, y = src[i], snk[perm[i]]
            noise = standard_bridge_bank(1, params.beta, params.steps, params.d, rng)[0]
            nodes = bridge_from_noise(x, y, params.beta, noise)
            if not _inside(nodes, lo, hi):
                confined = False
                break
            log_accept += log_unnormalized_mass(x, y, params.beta, params.d) - math.log(m_max)
            bridges.append(Bridge(TimeGrid(params.beta, params.steps), nodes))
        if not confined:
            continue
        union = FkConfig(bridges + list(split.exterior.bridges))
        h_val = h_loc(union, (lo, hi), model.pair, params, quad)
        if math.isinf(h_val):
            continue
        if h_val < lower - 1e-9:
            raise ConfigurationError(
                f"supplied local lower bound {lower} exceeds an observed energy {h_val}"
            )
        if math.log(rng.random()) < log_accept - (h_val - lower):
            return bridges
    raise StructuralError(
        f"rejection kernel failed to accept in {spec.max_outer} proposals; use mode='mcmc'"
    )


# ---------------------------------------------------------------------------
# MCMC mode
# ---------------------------------------------------------------------------


class _InteriorState:
    """Points zeta, assignment sources[i] -> sinks[assign[i]], bridge shapes."""

    def __init__(self, sources, sinks, spec, params):
        self.spec = spec
        self.params = params
        self.n_boundary = len(sources)
        self.sources = list(sources)
        self.sinks = list(sinks)
        self.assign = list(range(len(sources)))
        self.bridges = []

    def k(self):
        return len(self.sources)

    def build_bridges(self, rng):
        self.bridges = []
        for i in range(self.k()):
            b, _ = confined_bridge(self.sources[i], self.sinks[self.assign[i]],
                                   self.params.beta, (self.spec.lo, self.spec.hi),
                                   self.params.steps, rng, self.spec.retry_cap)
            self.bridges.append(b)


def _mcmc_h(state, exterior, pot, params, quad, spec):
    union = FkConfig(list(state.bridges) + list(exterior.bridges))
    if len(union) == 0:
        return 0.0
    return h_loc(union, (spec.lo, spec.hi), pot, params, quad)


def _draw_bridge(x, y, params, rng):
    noise = standard_bridge_bank(1, params.beta, params.steps, params.d, rng)[0]
    nodes = bridge_from_noise(np.asarray(x, float), np.asarray(y, float), params.beta, noise)
    return Bridge(TimeGrid(params.beta, params.steps), nodes)


def _mcmc_kernel(split, sources, sinks, spec, model, params, rng, quad):
    lo, hi = spec.lo, spec.hi
    pot = model.pair
    state = _InteriorState(sources, sinks, spec, params)
    for _ in range(50):
        try:
            state.build_bridges(rng)
        except StructuralError:
            raise
        h_cur = _mcmc_h(state, split.exterior, pot, params, quad, spec)
        if not math.isinf(h_cur):
            break
    else:
        raise StructuralError("could not find a finite-energy initial interior state")

    vol = spec.volume
    act = math.exp(params.beta * params.mu)
    side = hi - lo

    def mass(i, j):
        return log_unnormalized_mass(state.sources[i], state.sinks[j], params.beta, params.d)

    p_moves = {"b1": 0.15, "d1": 0.15, "b2": 0.15, "d2": 0.15, "swap": 0.2, "reshape": 0.2}
    names = sorted(p_moves)
    probs = np.array([p_moves[k] for k in names])
    probs /= probs.sum()

    for _ in range(spec.mcmc_steps):
        kind = names[int(rng.choice(len(names), p=probs))]
        k = state.k()
        n_pts = k - state.n_boundary  # free interior points

        if kind == "b1":
            z = lo + side * rng.random(params.d)
            bridge = _draw_bridge(z, z, params, rng)
            if not _inside(bridge.nodes, lo, hi):
                continue
            cand_bridges = state.bridges + [bridge]
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            if math.isinf(h_new):
                continue
            n_self = _self_loop_count(state) + 1
            log_r = (
                -(h_new - h_cur)
                + math.log(act * vol)
                + mass_of(z, z, params)
                - math.log(n_self)
            )
            if math.log(rng.random()) < log_r:
                state.sources.append(np.asarray(z, float))
                state.sinks.append(np.asarray(z, float))
                state.assign.append(len(state.sinks) - 1)
                state.bridges = cand_bridges
                h_cur = h_new

        elif kind == "d1":
            owners = _self_loop_indices(state)
            if not owners:
                continue
            pick = owners[int(rng.integers(len(owners)))]
            cand_bridges = [b for t, b in enumerate(state.bridges) if t != pick]
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            z = state.sources[pick]
            log_r = (
                -(h_new - h_cur)
                - math.log(act * vol)
                - mass_of(z, z, params)
                + math.log(len(owners))
            )
            if math.log(rng.random()) < log_r:
                _remove_point(state, pick, cand_bridges)
                h_cur = h_new

        elif kind == "b2":
            if k == 0:
                continue
            slot = int(rng.integers(k))
            z = lo + side * rng.random(params.d)
            x = state.sources[slot]
            y = state.sinks[state.assign[slot]]
            b1 = _draw_bridge(x, z, params, rng)
            b2 = _draw_bridge(z, y, params, rng)
            if not (_inside(b1.nodes, lo, hi) and _inside(b2.nodes, lo, hi)):
                continue
            cand_bridges = list(state.bridges)
            cand_bridges[slot] = b1
            cand_bridges.append(b2)
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            if math.isinf(h_new):
                continue
            n_ex = _excisable_count(state) + 1
            log_r = (
                -(h_new - h_cur)
                + math.log(act)
                + mass_of(x, z, params) + mass_of(z, y, params) - mass_of(x, y, params)
                + math.log(k * vol / n_ex)
            )
            if math.log(rng.random()) < log_r:
                state.sources.append(np.asarray(z, float))
                state.sinks.append(np.asarray(z, float))
                new_sink = len(state.sinks) - 1
                old_sink = state.assign[slot]
                state.assign[slot] = new_sink
                state.assign.append(old_sink)
                state.bridges = cand_bridges
                h_cur = h_new

        elif kind == "d2":
            ex = _excisable_indices(state)
            if not ex:
                continue
            pick = ex[int(rng.integers(len(ex)))]
            pred = state.assign.index(_sink_index_of_point(state, pick))
            succ_sink = state.assign[pick]
            x = state.sources[pred]
            z = state.sources[pick]
            y = state.sinks[succ_sink]
            bridge = _draw_bridge(x, y, params, rng)
            if not _inside(bridge.nodes, lo, hi):
                continue
            cand_bridges = [b for t, b in enumerate(state.bridges) if t != pick]
            cand_bridges[pred if pred < pick else pred - 1] = bridge
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            if math.isinf(h_new):
                continue
            k_after = k - 1
            n_ex = len(ex)
            log_r = (
                -(h_new - h_cur)
                - math.log(act)
                + mass_of(x, y, params) - mass_of(x, z, params) - mass_of(z, y, params)
                + math.log(n_ex / (k_after * vol))
            )
            if math.log(rng.random()) < log_r:
                state.assign[pred] = succ_sink
                _remove_point(state, pick, cand_bridges)
                h_cur = h_new

        elif kind == "swap":
            if k < 2:
                continue
            i1, i2 = rng.choice(k, size=2, replace=False)
            i1, i2 = int(i1), int(i2)
            j1, j2 = state.assign[i1], state.assign[i2]
            b1 = _draw_bridge(state.sources[i1], state.sinks[j2], params, rng)
            b2 = _draw_bridge(state.sources[i2], state.sinks[j1], params, rng)
            if not (_inside(b1.nodes, lo, hi) and _inside(b2.nodes, lo, hi)):
                continue
            cand_bridges = list(state.bridges)
            cand_bridges[i1] = b1
            cand_bridges[i2] = b2
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            if math.isinf(h_new):
                continue
            log_r = (
                -(h_new - h_cur)
                + mass(i1, j2) + mass(i2, j1) - mass(i1, j1) - mass(i2, j2)
            )
            if math.log(rng.random()) < log_r:
                state.assign[i1], state.assign[i2] = j2, j1
                state.bridges = cand_bridges
                h_cur = h_new

        elif kind == "reshape":
            if k == 0:
                continue
            slot = int(rng.integers(k))
            b = _draw_bridge(state.sources[slot], state.sinks[state.assign[slot]], params, rng)
            if not _inside(b.nodes, lo, hi):
                continue
            cand_bridges = list(state.bridges)
            cand_bridges[slot] = b
            union = FkConfig(cand_bridges + list(split.exterior.bridges))
            h_new = h_loc(union, (lo, hi), pot, params, quad)
            if math.isinf(h_new):
                continue
            if math.log(rng.random()) < -(h_new - h_cur):
                state.bridges = cand_bridges
                h_cur = h_new

    return list(state.bridges)


def mass_of(x, y, params):
    return log_unnormalized_mass(np.asarray(x, float), np.asarray(y, float),
                                 params.beta, params.d)


def _self_loop_indices(state):
    """Free interior points whose source maps to their own sink."""
    out = []
    for i in range(state.n_boundary, state.k()):
        if state.assign[i] == i:
            out.append(i)
    return out


def _self_loop_count(state):
    return len(_self_loop_indices(state))


def _sink_index_of_point(state, i):
    """Sink slot co-located with interior point i (points add paired slots)."""
    return i


def _excisable_indices(state):
    """Free interior points not assigned to their own sink."""
    out = []
    for i in range(state.n_boundary, state.k()):
        if state.assign[i] != i:
            out.append(i)
    return out


def _excisable_count(state):
    return len(_excisable_indices(state))


def _remove_point(state, pick, cand_bridges):
    """Drop interior point ``pick`` (its source and its co-located sink)."""
    del state.sources[pick]
    sink_gone = pick
    del state.sinks[pick]
    del state.assign[pick]
    for t in range(len(state.assign)):
        if state.assign[t] > sink_gone:
            state.assign[t] -= 1
    state.bridges = cand_bridges
