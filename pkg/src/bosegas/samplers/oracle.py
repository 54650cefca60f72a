"""Brute-force enumeration oracle for tiny systems.

The grand-canonical normalization and observable expectations are computed by
deterministic tensor quadrature over particle positions, an exact sum over
permutations, and Monte Carlo only over bridge shapes.  Three routes expand
the same quantity independently and serve as cross-checks:

* ``fk``     -- plain sum over all permutations, weight 1/N!;
* ``cycle``  -- one representative permutation per cycle type, weighted by
                the class size over N! (product of 1/(delta_j! j^delta_j));
* ``mp``     -- marked-point integral: lattice offsets drawn from the
                Gaussian cell masses, selectors uniform, targets decoded
                lexicographically, weighted by cell-count over cell-mass.

Routes share the position grid (so quadrature bias cancels in comparisons)
but use independent bridge noise.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from ..errors import BudgetError, ConfigurationError

DEFAULT_OBSERVABLES = ("n_bridges", "f1")


@dataclass(frozen=True)
class OracleSpec:
    """Budgeted enumeration settings: N cap, nodes per axis, shapes per term."""

    n_max: int
    position_nodes: int = 16
    bridge_samples: int = 100_000
    budget: float = 5e7
    kappa: float = 0.5
    chunk_tuples: int = 32

    def __post_init__(self):
        if not 0 <= self.n_max <= 6:
            raise ConfigurationError("oracle supports n_max <= 6 only")
        if self.position_nodes < 2 or self.bridge_samples < 8:
            raise ConfigurationError("need >= 2 position nodes and >= 8 bridge samples")

    def cost(self, d):
        return math.factorial(self.n_max) * float(self.position_nodes) ** (d * self.n_max)


@dataclass
class RouteEstimate:
    z: float
    z_stderr: float
    observables: dict
    log_z: float = field(init=False)
    log_z_stderr: float = field(init=False)

    def __post_init__(self):
        self.log_z = math.log(self.z)
        self.log_z_stderr = self.z_stderr / self.z


@dataclass
class OracleResult:
    routes: dict
    spec: OracleSpec

    def route(self, name="fk"):
        return self.routes[name]


def observable_n_bridges(xs, sigma):
    return float(xs.shape[0])


def observable_f1(xs, sigma):
    in_cube = np.all((xs >= 0.0) & (xs <= 1.0), axis=1)
    hops = np.sqrt(np.sum((xs[sigma] - xs) ** 2, axis=1))
    return float(np.sum(hops[in_cube]))


_BUILTIN_OBSERVABLES = {"n_bridges": observable_n_bridges, "f1": observable_f1}


def cycle_types(n):
    """Integer partitions of n as sorted tuples of cycle lengths."""
    if n == 0:
        return [()]
    out = []

    def rec(remaining, smallest, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for j in range(smallest, remaining + 1):
            rec(remaining - j, j, acc + [j])

    rec(n, 1, [])
    return out


def representative_permutation(lengths):
    """Permutation with consecutive-block cycles of the given lengths."""
    perm = []
    start = 0
    for j in lengths:
        perm.extend(list(range(start + 1, start + j)) + [start])
        start += j
    return tuple(perm)


def cycle_type_weight(lengths):
    """Class size over N!: product over j of 1 / (delta_j! j^delta_j)."""
    counts = {}
    for j in lengths:
        counts[j] = counts.get(j, 0) + 1
    w = 1.0
    for j, c in counts.items():
        w /= math.factorial(c) * float(j) ** c
    return w


def _spatial_grid(params, nodes_per_axis):
    """Tensor Gauss-Legendre nodes and weights over the window."""
    x, w = np.polynomial.legendre.leggauss(nodes_per_axis)
    x = 0.5 * params.L * x
    w = 0.5 * params.L * w
    grids = np.meshgrid(*([x] * params.d), indexing="ij")
    weights = np.meshgrid(*([w] * params.d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in weights], axis=1), axis=1)
    return pts, wts


def _standard_banks(n_samples, n_particles, params, rng):
    """(S, N, M+1, d) standard bridges over [0, beta]."""
    from ..trajectories import standard_bridge_bank

    flat = standard_bridge_bank(n_samples * n_particles, params.beta, params.steps,
                                params.d, rng)
    return flat.reshape(n_samples, n_particles, params.steps + 1, params.d)


def _energy_tensor(xs, perms, bank, model, params):
    """g[b, p, s] = 1{window} * exp(-H_interaction) for every tuple, permutation
    and noise sample; left-rule quadrature on the shared grid.

    Directed paths (particle i heading at target a) are built and
    window-checked once and shared by every permutation sending i to a.
    """
    B, N, d = xs.shape
    S = bank.shape[0]
    M = params.steps
    h = params.beta / M
    g = np.empty((B, len(perms), S))
    if N == 0:
        g[:] = math.exp(-params.beta * model.energy(np.zeros((0, d))))
        return g
    frac = (np.arange(M + 1) / M)[None, None, :, None]
    half = params.L / 2.0
    slices = np.empty((N, N, B, S, M, d))
    wins = np.empty((N, N, B, S), dtype=bool)
    for i in range(N):
        base = xs[:, None, i, None, :] + bank[None, :, i, :, :]  # (B, S, M+1, d)
        for a in range(N):
            disp = (xs[:, a, :] - xs[:, i, :])[:, None, None, :]
            path = base + frac * disp
            wins[i, a] = np.all((path >= -half) & (path < half), axis=(2, 3))
            slices[i, a] = path[:, :, :M, :]
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    use_pair = model.pair is not None
    for p_idx, perm in enumerate(perms):
        win = wins[0, perm[0]].copy()
        for i in range(1, N):
            win &= wins[i, perm[i]]
        if pairs and use_pair:
            ham = np.zeros((B, S))
            for i, j in pairs:
                diff = slices[i, perm[i]] - slices[j, perm[j]]
                vals = model.pair(diff.reshape(-1, d)).reshape(B, S, M)
                ham += np.sum(vals, axis=2)
            ham *= h
        elif pairs:
            ham = np.empty((B, S))
            for b in range(B):
                for s in range(S):
                    tot = 0.0
                    for k in range(M):
                        pts = np.stack([slices[i, perm[i]][b, s, k] for i in range(N)])
                        tot += model.energy(pts)
                    ham[b, s] = tot * h
        else:
            ham = np.full((B, S), params.beta * model.energy(np.zeros((0, d))))
        with np.errstate(over="ignore", invalid="ignore"):
            g[:, p_idx, :] = np.where(win, np.exp(-np.nan_to_num(ham, posinf=np.inf)), 0.0)
        g[:, p_idx, :][~np.isfinite(g[:, p_idx, :])] = 0.0
    return g


def _log_mass_products(xs, perms, beta):
    """log prod_i m(x_i, x_perm(i)) per tuple and permutation."""
    B, N, d = xs.shape
    out = np.empty((B, len(perms)))
    for p_idx, perm in enumerate(perms):
        sq = np.sum((xs[:, list(perm), :] - xs) ** 2, axis=(1, 2))
        out[:, p_idx] = -0.5 * N * d * math.log(2.0 * math.pi * beta) - sq / (2.0 * beta)
    return out


def _nu_array(p, r, beta, kappa):
    """Vectorized Gaussian cell masses (product of per-axis CDF differences)."""
    sigma = math.sqrt(beta / (r * r * (1.0 - kappa)))
    q = np.abs(p)  # even in p, exactly
    hi = ndtr((q + 0.5) / sigma)
    lo = ndtr((q - 0.5) / sigma)
    return np.prod(hi - lo, axis=-1)


def _lex_ranks(xs):
    """Ranks of the N points of each tuple in lexicographic order."""
    B, N, _ = xs.shape
    ranks = np.empty((B, N), dtype=np.int64)
    for b in range(B):
        order = sorted(range(N), key=lambda i: tuple(xs[b, i]))
        for pos, i in enumerate(order):
            ranks[b, i] = pos
    return ranks


def _decode_batch(xs, p_marks, u_marks, r):
    """Vectorized marked-point decode.

    Returns (sigma, counts, valid) with sigma[b, s, i] the decoded target index,
    counts the target-cell occupancies, and valid flagging authorized *and*
    bijective samples.
    """
    B, S, N, d = p_marks.shape
    centers = xs[:, None, :, :] + r * p_marks
    lo = centers[:, :, :, None, :] - r / 2.0
    hi = centers[:, :, :, None, :] + r / 2.0
    pts = xs[:, None, None, :, :]
    member = np.all((pts >= lo) & (pts < hi), axis=4)  # (B, S, i, j)
    counts = member.sum(axis=3)
    authorized = np.all(counts >= 1, axis=2)
    k = np.ceil(counts * u_marks)
    k = np.clip(k, 1, np.maximum(counts, 1)).astype(np.int64)
    ranks = _lex_ranks(xs)
    score = np.where(member, ranks[:, None, None, :], N + 1)
    order = np.argsort(score, axis=3, kind="stable")
    sigma = np.take_along_axis(order, (k - 1)[:, :, :, None], axis=3)[:, :, :, 0]
    sorted_sigma = np.sort(sigma, axis=2)
    bijective = np.all(sorted_sigma == np.arange(N)[None, None, :], axis=2)
    return sigma, counts, authorized & bijective


def enumeration_oracle(spec, model, params, rng, observables=DEFAULT_OBSERVABLES,
                       routes=("fk", "cycle", "mp"), r_cell=None):
    """Estimate Z and E[f] for the N-truncated finite-volume model.

    Raises :class:`BudgetError` when the enumeration cost
    n_max! * nodes^(d n_max) exceeds the configured budget.
    """
    cost = spec.cost(params.d)
    if cost > spec.budget:
        raise BudgetError(
            f"enumeration cost {cost:.3e} exceeds budget {spec.budget:.3e}",
            cost=cost, budget=spec.budget,
        )
    if r_cell is None:
        r_cell = model.constants.r if model.constants is not None else 1.0
    obs_fns = {}
    for name in observables:
        obs_fns[name] = _BUILTIN_OBSERVABLES[name] if isinstance(name, str) else name

    spatial, spatial_w = _spatial_grid(params, spec.position_nodes)
    n_spatial = spatial.shape[0]

    empty_energy = params.beta * model.energy(np.zeros((0, params.d)))
    acc = {
        route: {
            "z": math.exp(-empty_energy),
            "var_z": 0.0,
            "num": {name: 0.0 for name in obs_fns},
            "var_num": {name: 0.0 for name in obs_fns},
            "cov": {name: 0.0 for name in obs_fns},
        }
        for route in routes
    }

    for n in range(1, spec.n_max + 1):
        all_perms = list(itertools.permutations(range(n)))
        perm_lookup = {perm: i for i, perm in enumerate(all_perms)}
        types = cycle_types(n)
        reps = [representative_permutation(t) for t in types]
        type_w = [cycle_type_weight(t) for t in types]
        act = math.exp(params.beta * params.mu * n)
        total_tuples = n_spatial**n
        n_chunks = math.ceil(total_tuples / spec.chunk_tuples)
        s_per_chunk = max(4, int(round(spec.bridge_samples / n_chunks)))

        for start in range(0, total_tuples, spec.chunk_tuples):
            idx = np.arange(start, min(start + spec.chunk_tuples, total_tuples))
            multi = np.stack(np.unravel_index(idx, (n_spatial,) * n), axis=1)
            xs = spatial[multi]  # (B, n, d)
            logw = np.sum(np.log(spatial_w[multi]), axis=1)
            tuple_w = np.exp(logw)
            log_mass = _log_mass_products(xs, all_perms, params.beta)
            f_vals = {
                name: np.array([[fn(xs[b], np.array(perm)) for perm in all_perms]
                                for b in range(xs.shape[0])])
                for name, fn in obs_fns.items()
            }

            if "fk" in routes:
                bank = _standard_banks(s_per_chunk, n, params, rng)
                g = _energy_tensor(xs, all_perms, bank, model, params)
                pw = np.full(len(all_perms), 1.0 / math.factorial(n))
                _accumulate(acc["fk"], act, tuple_w, log_mass, g, pw,
                            np.arange(len(all_perms)), f_vals)
            if "cycle" in routes:
                bank_c = _standard_banks(s_per_chunk, n, params, rng)
                rep_idx = np.array([perm_lookup[p] for p in reps])
                g_c = _energy_tensor(xs, reps, bank_c, model, params)
                _accumulate_direct(acc["cycle"], act, tuple_w,
                                   log_mass[:, rep_idx], g_c,
                                   np.array(type_w), f_vals, rep_idx)

            if "mp" in routes:
                bank_m = _standard_banks(s_per_chunk, n, params, rng)
                g_m = _energy_tensor(xs, all_perms, bank_m, model, params)
                B = xs.shape[0]
                sigma_scale = math.sqrt(params.beta / (r_cell**2 * (1.0 - spec.kappa)))
                y = sigma_scale * rng.standard_normal((B, s_per_chunk, n, params.d))
                p_marks = np.floor(y + 0.5).astype(np.int64)
                u_marks = rng.random((B, s_per_chunk, n))
                sigma, counts, valid = _decode_batch(xs, p_marks, u_marks, r_cell)
                nus = _nu_array(p_marks.astype(float), r_cell, params.beta, spec.kappa)
                perm_idx = _perm_index(sigma, perm_lookup)
                _accumulate_mp(acc["mp"], act, tuple_w, xs, params, g_m, sigma,
                               counts, nus, valid, perm_idx, f_vals)

    result = {}
    denom = math.exp(-params.L**params.d)
    for route in routes:
        a = acc[route]
        z = a["z"] * denom
        z_err = math.sqrt(a["var_z"]) * denom
        obs = {}
        for name in obs_fns:
            mean = a["num"][name] / a["z"]
            var = (a["var_num"][name] - 2.0 * mean * a["cov"][name]
                   + mean**2 * a["var_z"]) / a["z"] ** 2
            obs[name] = (mean, math.sqrt(max(var, 0.0)))
        result[route] = RouteEstimate(z=z, z_stderr=z_err, observables=obs)
    return OracleResult(routes=result, spec=spec)


def _accumulate(slot, act, tuple_w, log_mass, g, perm_weights, perm_indices, f_vals):
    """Fold one chunk into a route accumulator using per-sample totals."""
    _accumulate_direct(slot, act, tuple_w, log_mass[:, perm_indices],
                       g[:, perm_indices, :], perm_weights, f_vals, perm_indices)


def _accumulate_direct(slot, act, tuple_w, log_mass_sel, g_sel, perm_weights,
                       f_vals, perm_indices):
    base = tuple_w[:, None] * np.exp(log_mass_sel) * perm_weights[None, :] * act
    v_z = np.einsum("bp,bps->s", base, g_sel)
    s = v_z.shape[0]
    slot["z"] += float(np.mean(v_z))
    slot["var_z"] += float(np.var(v_z)) / s
    for name, vals in f_vals.items():
        v_f = np.einsum("bp,bps->s", base * vals[:, perm_indices], g_sel)
        slot["num"][name] += float(np.mean(v_f))
        slot["var_num"][name] += float(np.var(v_f)) / s
        slot["cov"][name] += float(np.mean((v_z - v_z.mean()) * (v_f - v_f.mean()))) / s


def _perm_index(sigma, perm_lookup):
    """Map decoded target maps to permutation indices via base-N+1 keys."""
    B, S, N = sigma.shape
    pows = (N + 1) ** np.arange(N, dtype=np.int64)
    table = np.full((N + 1) ** N, -1, dtype=np.int64)
    for perm, idx in perm_lookup.items():
        table[int(np.dot(np.array(perm, dtype=np.int64), pows))] = idx
    keys = sigma.astype(np.int64) @ pows
    return table[np.clip(keys, 0, table.shape[0] - 1)]


def _accumulate_mp(slot, act, tuple_w, xs, params, g, sigma, counts, nus, valid,
                   perm_idx, f_vals):
    B, S, N = sigma.shape
    targets = xs[np.arange(B)[:, None, None], sigma, :]  # (B, S, N, d)
    sq = np.sum((targets - xs[:, None, :, :]) ** 2, axis=(2, 3))
    log_mass = -0.5 * N * params.d * math.log(2.0 * math.pi * params.beta) - sq / (
        2.0 * params.beta
    )
    with np.errstate(divide="ignore"):
        log_sel = np.sum(np.log(counts) - np.log(nus), axis=2)
    weight = np.where(valid & (perm_idx >= 0), np.exp(log_mass + log_sel), 0.0)
    # g has axes (B, P, S): pick g[b, perm_idx[b, s], s]
    g_val = g[np.arange(B)[:, None], np.maximum(perm_idx, 0), np.arange(S)[None, :]]
    contrib = tuple_w[:, None] * act / math.factorial(N) * weight * g_val
    v_z = np.sum(contrib, axis=0)
    slot["z"] += float(np.mean(v_z))
    slot["var_z"] += float(np.var(v_z)) / S
    for name, vals in f_vals.items():
        f_per = vals[np.arange(B)[:, None], np.maximum(perm_idx, 0)]
        v_f = np.sum(contrib * f_per, axis=0)
        slot["num"][name] += float(np.mean(v_f))
        slot["var_num"][name] += float(np.var(v_f)) / S
        slot["cov"][name] += float(np.mean((v_z - v_z.mean()) * (v_f - v_f.mean()))) / S
