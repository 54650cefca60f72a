"""Energy functionals on configurations and the closed-form constants.

All functionals discretize the time integral of the slice energies on the
shared bridge grid.  The default rule is left-endpoint Riemann; the midpoint
rule is selectable and is the one under which time reversal permutes the
quadrature nodes exactly.  The Dirichlet window is enforced on every stored
node (a single escaping node already makes the energy +inf), while the
interaction itself is integrated over the quadrature slices.
"""

import math
from dataclasses import dataclass

import numpy as np

from .interactions import in_window
from .representations import FkConfig, decode_mp_to_fk, mp_cell_count, mp_is_permutation_wise

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class QuadratureSpec:
    """Riemann rule on the shared grid: "left" (default) or "midpoint"."""

    rule: str = "left"

    def __post_init__(self):
        if self.rule not in ("left", "midpoint"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, chemical potential, window side and dimension."""

    beta: float
    mu: float
    L: float
    d: int
    steps: int = 64

    def __post_init__(self):
        if not (self.beta > 0 and self.L > 0 and self.d >= 1 and self.steps >= 2):
            raise ValueError("need beta > 0, L > 0, d >= 1, steps >= 2")


LEFT = QuadratureSpec("left")
MIDPOINT = QuadratureSpec("midpoint")


# ---------------------------------------------------------------------------
# Slice machinery
# ---------------------------------------------------------------------------


def fk_slices(gamma, quad=LEFT):
    """Point sets at the quadrature times, shape (M, n, d)."""
    m = gamma.bridges[0].grid.steps
    stack = np.stack([b.nodes for b in gamma.bridges], axis=1)  # (M+1, n, d)
    if quad.rule == "left":
        return stack[:m]
    return 0.5 * (stack[:-1] + stack[1:])


def rl_slices(rho, quad=LEFT):
    """Per-slice point sets of a loop configuration, shape (m, n_total, d)."""
    m = rho.loops[0].steps_per_beta
    cols = []
    for loop in rho.loops:
        for j in range(loop.length):
            cols.append(loop.nodes[j * m : (j + 1) * m + 1])
    stack = np.stack(cols, axis=1)
    if quad.rule == "left":
        return stack[:m]
    return 0.5 * (stack[:-1] + stack[1:])


def interaction_series(stack, model):
    """Energy of every slice in a (T, n, d) stack; vectorized for pair models."""
    t, n, d = stack.shape
    if n == 0:
        empty = model.energy(np.zeros((0, d)))
        return np.full(t, empty)
    if model.pair is not None:
        diff = stack[:, :, None, :] - stack[:, None, :, :]
        vals = model.pair(diff.reshape(t * n * n, d)).reshape(t, n, n)
        idx = np.arange(n)
        vals[:, idx, idx] = 0.0
        return 0.5 * np.sum(vals, axis=(1, 2))
    return np.array([model.energy(stack[k]) for k in range(t)])


def _all_nodes(config):
    if isinstance(config, FkConfig):
        return np.concatenate([b.nodes for b in config.bridges], axis=0)
    return np.concatenate([l.nodes for l in config.loops], axis=0)


def window_ok(config, L):
    """Every stored node inside the half-open window."""
    if len(config) == 0:
        return True
    return bool(np.all(in_window(_all_nodes(config), L)))


def h_fk(gamma, model, params, quad=LEFT):
    """Time integral of the windowed interaction over the bridge slices."""
    if len(gamma) == 0:
        return params.beta * model.energy(np.zeros((0, params.d)))
    if not window_ok(gamma, params.L):
        return math.inf
    series = interaction_series(fk_slices(gamma, quad), model)
    if np.any(np.isinf(series)):
        return math.inf
    return float(np.sum(series)) * gamma.bridges[0].grid.spacing


def h_rl(rho, model, params, quad=LEFT):
    """Same functional on a rooted-loop configuration (identical slice sets)."""
    if len(rho) == 0:
        return params.beta * model.energy(np.zeros((0, params.d)))
    if not window_ok(rho, params.L):
        return math.inf
    series = interaction_series(rl_slices(rho, quad), model)
    if np.any(np.isinf(series)):
        return math.inf
    return float(np.sum(series)) * (rho.beta / rho.loops[0].steps_per_beta)


def local_energy_series(stack, box, pot):
    """Vectorized per-slice local energy for a finite-range pair potential."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    t, n, d = stack.shape
    if n == 0:
        return np.zeros(t)
    inside = np.all((stack >= lo) & (stack <= hi), axis=2)
    halo = (
        np.all((stack >= lo - pot.range_) & (stack <= hi + pot.range_), axis=2) & ~inside
    )
    diff = stack[:, :, None, :] - stack[:, None, :, :]
    vals = pot(diff.reshape(t * n * n, d)).reshape(t, n, n)
    idx = np.arange(n)
    vals[:, idx, idx] = 0.0
    core_pair = inside[:, :, None] & inside[:, None, :]
    cross_pair = inside[:, :, None] & halo[:, None, :]
    with np.errstate(invalid="ignore"):
        core = 0.5 * np.sum(np.where(core_pair, vals, 0.0), axis=(1, 2))
        cross = np.sum(np.where(cross_pair, vals, 0.0), axis=(1, 2))
    return core + cross


def _spacing(config):
    if isinstance(config, FkConfig):
        return config.bridges[0].grid.spacing
    return config.beta / config.loops[0].steps_per_beta


def h_loc(config, box, pot, params, quad=LEFT):
    """Local Hamiltonian: integral of the in-box interaction felt from the
    range-R halo; no Dirichlet window."""
    if len(config) == 0:
        return 0.0
    stack = fk_slices(config, quad) if isinstance(config, FkConfig) else rl_slices(config, quad)
    series = local_energy_series(stack, box, pot)
    if np.any(np.isinf(series)):
        return math.inf
    return float(np.sum(series)) * _spacing(config)


def h_ext(gamma, box, model, params, quad=LEFT):
    """Exterior Hamiltonian: integral of the windowed interaction of the
    slice points lying outside the (closed) box."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    if len(gamma) == 0:
        return params.beta * model.energy(np.zeros((0, params.d)))
    stack = fk_slices(gamma, quad) if isinstance(gamma, FkConfig) else rl_slices(gamma, quad)
    outside = ~np.all((stack >= lo) & (stack <= hi), axis=2)
    total = 0.0
    for k in range(stack.shape[0]):
        pts = stack[k][outside[k]]
        if pts.shape[0] and not np.all(in_window(pts, params.L)):
            return math.inf
        val = model.energy(pts)
        if math.isinf(val):
            return math.inf
        total += val
    return total * _spacing(gamma)


def log_density_rl(rho, model, params, quad=LEFT):
    """Unnormalized log density beta*mu*sum(lengths) - H_rl against the
    Poisson loop reference; -inf on escaping or hard-core overlaps."""
    ham = h_rl(rho, model, params, quad)
    if math.isinf(ham):
        return -math.inf
    return params.beta * params.mu * sum(l.length for l in rho.loops) - ham


# ---------------------------------------------------------------------------
# Closed-form constants
# ---------------------------------------------------------------------------


def zeta_series(s, tol=1e-12):
    """Riemann zeta for s > 1 by direct series with an integral tail correction.

    Sums j^-s up to J and adds the midpoint tail (J + 1/2)^(1-s) / (s - 1),
    doubling J until the correction stabilizes below ``tol``.
    """
    if s <= 1.0:
        raise ValueError("series diverges for s <= 1")
    J = 64
    prev = None
    while True:
        j = np.arange(1, J + 1, dtype=float)
        val = float(np.sum(j**-s)) + (J + 0.5) ** (1.0 - s) / (s - 1.0)
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        J *= 2
        if J > 2**26:
            return val


def loop_measure_mass(params):
    """Total mass L^d (2 pi beta)^(-d/2) zeta(d/2 + 1) of the loop reference."""
    return (
        params.L**params.d
        * (2.0 * math.pi * params.beta) ** (-params.d / 2.0)
        * zeta_series(params.d / 2.0 + 1.0)
    )


def entropy_bound_constant(params, constants):
    """Volume-normalized relative-entropy bound
    (2 pi beta)^(-d/2) zeta(d/2+1) + beta (1/r + 1)^d (A + mu)^2 / (4B)."""
    first = (2.0 * math.pi * params.beta) ** (-params.d / 2.0) * zeta_series(params.d / 2.0 + 1.0)
    second = (
        params.beta
        * (1.0 / constants.r + 1.0) ** params.d
        * (constants.A + params.mu) ** 2
        / (4.0 * constants.B)
    )
    return first + second


def log_density_bound(params, constants):
    """Finite-volume bound on the rl log density (cells counted in the window)."""
    return (
        params.beta
        * (params.L / constants.r + 1.0) ** params.d
        * (constants.A + params.mu) ** 2
        / (4.0 * constants.B)
    )


def _std_normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def gaussian_cell_mass(p, r, beta, kappa=0.5):
    """Probability nu(p) that a centered Gaussian of per-axis variance
    beta / (r^2 (1 - kappa)) lands in the unit cell p + [-1/2, 1/2)^d.

    Factorizes across axes as differences of normal CDFs; sums to 1 over Z^d.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    sigma = math.sqrt(beta / (r * r * (1.0 - kappa)))
    out = 1.0
    for pk in np.atleast_1d(np.asarray(p)):
        pk = abs(pk)  # the cell mass is even in p; make that exact
        out *= _std_normal_cdf((pk + 0.5) / sigma) - _std_normal_cdf((pk - 0.5) / sigma)
    return out


def sample_cell_offset(rng, d, r, beta, kappa=0.5):
    """Exact draw p ~ nu: round a Gaussian to its containing unit cell."""
    sigma = math.sqrt(beta / (r * r * (1.0 - kappa)))
    y = sigma * rng.standard_normal(d)
    return np.floor(y + 0.5).astype(np.int64)


def nu_truncation_window(r, beta, kappa=0.5):
    """Half-width for normalization checks; Gaussian tail below 1e-8."""
    return int(math.ceil(8.0 * math.sqrt(beta / (r * r * (1.0 - kappa))) + 2.0))


# ---------------------------------------------------------------------------
# Marked-point Hamiltonian
# ---------------------------------------------------------------------------


def h_mp(gamma_mp, model, params, quad=LEFT, kappa=0.5):
    """Marked-point Hamiltonian: per-point Gaussian/selection terms plus the
    interaction integral of the decoded bridges; +inf when the marks fail to
    define a bijection."""
    if len(gamma_mp) == 0:
        return params.beta * model.energy(np.zeros((0, params.d)))
    if not mp_is_permutation_wise(gamma_mp):
        return math.inf
    gamma = decode_mp_to_fk(gamma_mp, params.beta)
    per_point = 0.0
    for pt, bridge in zip(gamma_mp.points, gamma.bridges):
        target = bridge.end
        nu = gaussian_cell_mass(pt.mark.p, gamma_mp.r, params.beta, kappa)
        n_cell = mp_cell_count(gamma_mp, pt.x + gamma_mp.r * pt.mark.p)
        per_point += (
            0.5 * params.d * math.log(2.0 * math.pi * params.beta)
            + float(np.sum((target - pt.x) ** 2)) / (2.0 * params.beta)
            + math.log(nu)
            - math.log(n_cell)
        )
    interaction = h_fk(gamma, model, params, quad)
    return per_point + interaction
