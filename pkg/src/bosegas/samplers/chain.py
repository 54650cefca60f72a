"""Metropolis-Hastings chain for the interacting rooted-loop model.

The chain targets the density exp(beta mu sum(lengths) - H_rl) against the
Poisson loop reference, truncated at loop length ``j_max`` (and optionally at
a total bridge count).  Birth proposals come from the activity-weighted
truncated intensity, so the Janossy bookkeeping reduces to the interaction
factor exp(-Delta H) times the usual mass-over-count ratios.  Split and merge
exchange one loop of length j1 + j2 against a pair (j1, j2) by discarding the
two closing bridges and redrawing them, so their acceptance carries the 1/j
intensity factors and the closed-form ratio of the four bridge masses.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, StructuralError
from ..hamiltonians import LEFT, h_rl
from ..interactions import in_window
from ..representations import RlConfig, rl_from_dict, rl_to_dict
from ..trajectories import Loop, TimeGrid, log_unnormalized_mass, standard_bridge_bank
from .ideal import loop_intensity_means, sample_loop

CACHE_TOLERANCE = 1e-8


def default_move_weights(split_merge=True):
    w = {"birth": 0.3, "death": 0.3, "translate": 0.15, "reshape": 0.15}
    if split_merge:
        w.update({"split": 0.05, "merge": 0.05})
    return w


@dataclass
class ChainState:
    """Mutable chain state: loops, cached Hamiltonian, move statistics."""

    loops: list
    h: float
    step: int = 0
    stream_key: tuple = ()
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)
    max_cache_drift: float = 0.0
    max_log_density: float = -math.inf

    @property
    def config(self):
        return RlConfig(list(self.loops))

    @property
    def sum_lengths(self):
        return sum(l.length for l in self.loops)

    def log_density(self, params):
        if math.isinf(self.h):
            return -math.inf
        return params.beta * params.mu * self.sum_lengths - self.h

    def to_dict(self, params):
        doc = rl_to_dict(self.config)
        if not self.loops:
            doc["beta"] = params.beta
        return {
            "format": "bosegas-chain-state",
            "version": 1,
            "step": self.step,
            "stream_key": list(self.stream_key),
            "h": self.h,
            "proposed": dict(self.proposed),
            "accepted": dict(self.accepted),
            "config": doc,
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != "bosegas-chain-state":
            raise StructuralError("not a chain-state document")
        rho = rl_from_dict(doc["config"])
        state = cls(loops=list(rho.loops), h=float(doc["h"]), step=int(doc["step"]),
                    stream_key=tuple(doc.get("stream_key", ())))
        state.proposed = {k: int(v) for k, v in doc.get("proposed", {}).items()}
        state.accepted = {k: int(v) for k, v in doc.get("accepted", {}).items()}
        return state


def new_chain_state(params, model, rng=None, initial=None, quad=LEFT):
    """Fresh state, empty by default (always a finite-density point)."""
    loops = list(initial.loops) if initial is not None else []
    rho = RlConfig(loops)
    return ChainState(loops=loops, h=h_rl(rho, model, params, quad))


def _loop_nodes_in_window(loop, L):
    return bool(np.all(in_window(loop.nodes, L)))


class _MoveContext:
    def __init__(self, model, params, quad, j_max, n_total_max):
        self.model = model
        self.params = params
        self.quad = quad
        self.j_max = j_max
        self.n_total_max = n_total_max
        means = loop_intensity_means(params, j_max)
        self.means = means
        self.mass = float(np.sum(means))
        self.cum = np.cumsum(means / self.mass)

    def h_of(self, loops):
        return h_rl(RlConfig(loops), self.model, self.params, self.quad)


def _closing_bridge_ratio(a1, x1, a2, x2, beta, d):
    """log of m(a1,x2) m(a2,x1) / (m(a1,x1) m(a2,x2)) for a merge."""
    return (
        log_unnormalized_mass(a1, x2, beta, d)
        + log_unnormalized_mass(a2, x1, beta, d)
        - log_unnormalized_mass(a1, x1, beta, d)
        - log_unnormalized_mass(a2, x2, beta, d)
    )


def _merge_loops(l1, l2, rng):
    """Concatenate l2 onto l1's root, redrawing the two closing bridges.

    Returns (merged_loop, log_mass_ratio) where the ratio is the closed-form
    part of the acceptance; shape-proposal densities cancel exactly.
    """
    beta = l1.beta
    m = l1.steps_per_beta
    d = l1.dim
    x1, x2 = l1.root, l2.root
    a1 = l1.nodes[(l1.length - 1) * m]
    a2 = l2.nodes[(l2.length - 1) * m]
    n1 = standard_bridge_bank(1, beta, m, d, rng)[0]
    n2 = standard_bridge_bank(1, beta, m, d, rng)[0]
    frac = (np.arange(m + 1) / m)[:, None]
    new1 = a1 + frac * (x2 - a1) + n1
    new1[0], new1[-1] = a1, x2
    new2 = a2 + frac * (x1 - a2) + n2
    new2[0], new2[-1] = a2, x1
    j = l1.length + l2.length
    pieces = [l1.nodes[: (l1.length - 1) * m + 1], new1[1:]]
    if l2.length > 1:
        pieces.append(l2.nodes[1 : (l2.length - 1) * m + 1])
    pieces.append(new2[1:])
    nodes = np.concatenate(pieces, axis=0)
    merged = Loop(TimeGrid(beta * j, m * j), nodes, j)
    log_ratio = _closing_bridge_ratio(a1, x1, a2, x2, beta, d)
    return merged, log_ratio


def _split_loop(loop, j1, rng):
    """Cut a loop at bridge boundary j1, redrawing the two closing bridges."""
    beta = loop.beta
    m = loop.steps_per_beta
    d = loop.dim
    j = loop.length
    j2 = j - j1
    x1 = loop.root
    x2 = loop.nodes[j1 * m]
    a1 = loop.nodes[(j1 - 1) * m]
    a2 = loop.nodes[(j - 1) * m]
    n1 = standard_bridge_bank(1, beta, m, d, rng)[0]
    n2 = standard_bridge_bank(1, beta, m, d, rng)[0]
    frac = (np.arange(m + 1) / m)[:, None]
    close1 = a1 + frac * (x1 - a1) + n1
    close1[0], close1[-1] = a1, x1
    close2 = a2 + frac * (x2 - a2) + n2
    close2[0], close2[-1] = a2, x2
    nodes1 = np.concatenate([loop.nodes[: (j1 - 1) * m + 1], close1[1:]], axis=0)
    nodes2 = np.concatenate([loop.nodes[j1 * m : (j - 1) * m + 1], close2[1:]], axis=0)
    loop1 = Loop(TimeGrid(beta * j1, m * j1), nodes1, j1)
    loop2 = Loop(TimeGrid(beta * j2, m * j2), nodes2, j2)
    # reverse of the merge ratio, evaluated at the post-split geometry
    log_ratio = -_closing_bridge_ratio(a1, x1, a2, x2, beta, d)
    return loop1, loop2, log_ratio


def mh_rl_chain(state, model, params, n_steps, rng, j_max=None, n_total_max=None,
                move_weights=None, quad=LEFT, translate_step=None, check_every=1000):
    """Advance the chain ``n_steps`` steps in place and return it.

    Infinite-energy proposals (escaping loops, hard-core overlaps) are simply
    rejected.  The cached Hamiltonian is re-derived every ``check_every`` steps
    and the worst drift recorded on the state.
    """
    if j_max is None:
        raise ConfigurationError("mh_rl_chain needs an explicit j_max truncation")
    ctx = _MoveContext(model, params, quad, j_max, n_total_max)
    weights = move_weights or default_move_weights()
    names = sorted(weights)
    probs = np.array([weights[k] for k in names], dtype=float)
    probs = probs / probs.sum()
    pmap = dict(zip(names, probs))
    if translate_step is None:
        translate_step = 0.25 * min(params.L, math.sqrt(params.beta))
    p_split = pmap.get("split", 0.0)
    p_merge = pmap.get("merge", 0.0)

    for _ in range(n_steps):
        state.step += 1
        kind = names[int(rng.choice(len(names), p=probs))]
        state.proposed[kind] = state.proposed.get(kind, 0) + 1
        n = len(state.loops)
        accept = False

        if kind == "birth":
            if ctx.n_total_max is None or state.sum_lengths < ctx.n_total_max:
                j = int(np.searchsorted(ctx.cum, rng.random())) + 1
                if ctx.n_total_max is None or state.sum_lengths + j <= ctx.n_total_max:
                    root = params.L * (rng.random(params.d) - 0.5)
                    loop = sample_loop(root, j, params.beta, params.steps, rng)
                    if _loop_nodes_in_window(loop, params.L):
                        cand = state.loops + [loop]
                        h_new = ctx.h_of(cand)
                        if not math.isinf(h_new):
                            log_r = -(h_new - state.h) + math.log(ctx.mass / (n + 1))
                            if math.log(rng.random()) < log_r:
                                state.loops = cand
                                state.h = h_new
                                accept = True

        elif kind == "death":
            if n > 0:
                idx = int(rng.integers(n))
                cand = state.loops[:idx] + state.loops[idx + 1 :]
                h_new = ctx.h_of(cand)
                log_r = -(h_new - state.h) + math.log(n / ctx.mass)
                if math.log(rng.random()) < log_r:
                    state.loops = cand
                    state.h = h_new
                    accept = True

        elif kind == "translate":
            if n > 0:
                idx = int(rng.integers(n))
                v = translate_step * rng.standard_normal(params.d)
                moved = state.loops[idx].translated(v)
                if _loop_nodes_in_window(moved, params.L):
                    cand = list(state.loops)
                    cand[idx] = moved
                    h_new = ctx.h_of(cand)
                    if not math.isinf(h_new):
                        if math.log(rng.random()) < -(h_new - state.h):
                            state.loops = cand
                            state.h = h_new
                            accept = True

        elif kind == "reshape":
            if n > 0:
                idx = int(rng.integers(n))
                old = state.loops[idx]
                fresh = sample_loop(old.root, old.length, params.beta, params.steps, rng)
                if _loop_nodes_in_window(fresh, params.L):
                    cand = list(state.loops)
                    cand[idx] = fresh
                    h_new = ctx.h_of(cand)
                    if not math.isinf(h_new):
                        if math.log(rng.random()) < -(h_new - state.h):
                            state.loops = cand
                            state.h = h_new
                            accept = True

        elif kind == "merge":
            if n >= 2 and p_split > 0.0:
                i1, i2 = rng.choice(n, size=2, replace=False)
                l1, l2 = state.loops[int(i1)], state.loops[int(i2)]
                j = l1.length + l2.length
                if j <= ctx.j_max:
                    merged, log_mass = _merge_loops(l1, l2, rng)
                    if _loop_nodes_in_window(merged, params.L):
                        cand = [state.loops[k] for k in range(n) if k not in (int(i1), int(i2))]
                        cand.append(merged)
                        h_new = ctx.h_of(cand)
                        if not math.isinf(h_new):
                            log_r = (
                                -(h_new - state.h)
                                + math.log(l1.length * l2.length / j)
                                + math.log(p_split / p_merge)
                                + math.log(n / (j - 1))
                                + log_mass
                            )
                            if math.log(rng.random()) < log_r:
                                state.loops = cand
                                state.h = h_new
                                accept = True

        elif kind == "split":
            if n > 0 and p_merge > 0.0:
                idx = int(rng.integers(n))
                loop = state.loops[idx]
                j = loop.length
                if j >= 2:
                    j1 = int(rng.integers(1, j))
                    l1, l2, log_mass = _split_loop(loop, j1, rng)
                    if _loop_nodes_in_window(l1, params.L) and _loop_nodes_in_window(l2, params.L):
                        cand = state.loops[:idx] + state.loops[idx + 1 :] + [l1, l2]
                        h_new = ctx.h_of(cand)
                        if not math.isinf(h_new):
                            log_r = (
                                -(h_new - state.h)
                                + math.log(j / (l1.length * l2.length))
                                + math.log(p_merge / p_split)
                                + math.log((j - 1) / (n + 1))
                                + log_mass
                            )
                            if math.log(rng.random()) < log_r:
                                state.loops = cand
                                state.h = h_new
                                accept = True

        else:
            raise ConfigurationError(f"unknown move {kind!r}")

        if accept:
            state.accepted[kind] = state.accepted.get(kind, 0) + 1
        state.max_log_density = max(state.max_log_density, state.log_density(params))
        if state.step % check_every == 0:
            exact = ctx.h_of(state.loops)
            drift = 0.0 if (math.isinf(exact) and math.isinf(state.h)) else abs(exact - state.h)
            state.max_cache_drift = max(state.max_cache_drift, drift)
            if drift > CACHE_TOLERANCE:
                raise StructuralError(f"log-density cache drifted by {drift:.3e}")
            state.h = exact
    return state


def split_chain_diagnostic(values, n_batches=20):
    """Convergence check: z-score between the two half-chain means.

    Batch means absorb autocorrelation; |z| well above 3 flags an unconverged
    chain.  Returns (z, first_half_mean, second_half_mean).
    """
    vals = np.asarray(values, dtype=float)
    half = len(vals) // 2
    if half < n_batches:
        return math.nan, math.nan, math.nan

    def batch_stats(chunk):
        usable = (len(chunk) // n_batches) * n_batches
        batches = chunk[:usable].reshape(n_batches, -1).mean(axis=1)
        return float(batches.mean()), float(batches.std(ddof=1) / math.sqrt(n_batches))

    m1, s1 = batch_stats(vals[:half])
    m2, s2 = batch_stats(vals[half:])
    denom = math.sqrt(s1**2 + s2**2)
    z = (m1 - m2) / denom if denom > 0 else 0.0
    return z, m1, m2


def save_chain_state(state, params, path):
    """Serialize a chain checkpoint to a JSON file."""
    import json

    with open(path, "w") as fh:
        json.dump(state.to_dict(params), fh)


def load_chain_state(path):
    import json

    with open(path) as fh:
        return ChainState.from_dict(json.load(fh))


def run_chain(model, params, rng, n_steps, burn_in=10_000, thin=10, j_max=None,
              n_total_max=None, move_weights=None, quad=LEFT, collect=None):
    """Run a fresh chain and collect thinned samples after burn-in.

    ``collect`` maps an RlConfig to an observable record; defaults to the
    configuration itself.
    """
    state = new_chain_state(params, model, quad=quad)
    mh_rl_chain(state, model, params, burn_in, rng, j_max=j_max,
                n_total_max=n_total_max, move_weights=move_weights, quad=quad)
    out = []
    fn = collect if collect is not None else (lambda rho: rho)
    remaining = n_steps
    while remaining > 0:
        block = min(thin, remaining)
        mh_rl_chain(state, model, params, block, rng, j_max=j_max,
                    n_total_max=n_total_max, move_weights=move_weights, quad=quad)
        remaining -= block
        out.append(fn(state.config))
    return state, out
