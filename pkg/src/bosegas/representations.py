"""The three configuration encodings and the maps between them.

A bridge-set configuration induces a successor map by matching each bridge's
end point to the unique bridge starting there.  Matching uses bit-exact
equality of stored coordinates: every construction in this package produces
shared endpoint values, so no geometric tolerance is needed, and externally
loaded configurations are rejected if endpoints only match approximately.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPermutationWiseError, StructuralError
from .trajectories import Bridge, Loop, MarkTriple, TimeGrid, standardize, unfold

FORMAT_VERSION = 1


def _key(point):
    return np.ascontiguousarray(point, dtype=np.float64).tobytes()


def _close(a, b):
    # duration metadata may differ by float noise (beta*j/j round trips)
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


class FkConfig:
    """A finite set of duration-beta bridges sharing one grid.

    The successor table is built eagerly at construction; ``is_permutation_wise``
    and ``successor`` read it without locking.
    """

    def __init__(self, bridges):
        bridges = tuple(bridges)
        if bridges:
            g = bridges[0].grid
            d = bridges[0].dim
            for b in bridges:
                if b.grid.steps != g.steps or not _close(b.grid.duration, g.duration) \
                        or b.dim != d:
                    raise ValueError("all bridges must share one grid and dimension")
        self.bridges = bridges
        self._succ, self._pred, self._perm_failure = self._build_links()

    def _build_links(self):
        starts = {}
        for i, b in enumerate(self.bridges):
            k = _key(b.start)
            if k in starts:
                return None, None, "duplicate start point"
            starts[k] = i
        succ = np.empty(len(self.bridges), dtype=np.int64)
        pred = np.full(len(self.bridges), -1, dtype=np.int64)
        for i, b in enumerate(self.bridges):
            j = starts.get(_key(b.end))
            if j is None:
                return None, None, "a bridge end matches no start"
            succ[i] = j
            if pred[j] != -1:
                return None, None, "two bridges share one successor"
            pred[j] = i
        if np.any(pred == -1):
            return None, None, "a bridge start matches no end"
        return succ, pred, None

    def __len__(self):
        return len(self.bridges)

    def __iter__(self):
        return iter(self.bridges)

    @property
    def beta(self):
        return self.bridges[0].duration if self.bridges else None

    @property
    def dim(self):
        return self.bridges[0].dim if self.bridges else None

    def starts(self):
        if not self.bridges:
            return np.zeros((0, 1))
        return np.stack([b.start for b in self.bridges])

    def subset(self, indices):
        return FkConfig([self.bridges[i] for i in indices])

    def translated(self, v):
        v = np.asarray(v, dtype=float)
        return FkConfig([Bridge(b.grid, b.nodes + v) for b in self.bridges])


def is_permutation_wise(gamma):
    """Every bridge has exactly one successor and one predecessor."""
    return gamma._perm_failure is None


def successor(gamma, bridge):
    """The unique bridge of gamma starting where ``bridge`` ends."""
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    idx = gamma.bridges.index(bridge)
    return gamma.bridges[gamma._succ[idx]]


def successor_indices(gamma):
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    return gamma._succ


def time_reverse_config(gamma):
    """Replace every bridge sigma by s -> sigma(beta - s)."""
    return FkConfig([b.reversed() for b in gamma.bridges])


class RlConfig:
    """A finite set of rooted loops sharing beta and per-beta resolution."""

    def __init__(self, loops):
        loops = tuple(loops)
        if loops:
            b = loops[0].beta
            m = loops[0].steps_per_beta
            d = loops[0].dim
            for l in loops:
                if not (_close(l.beta, b) and l.steps_per_beta == m and l.dim == d):
                    raise ValueError("all loops must share beta, resolution and dimension")
        self.loops = loops

    def __len__(self):
        return len(self.loops)

    def __iter__(self):
        return iter(self.loops)

    @property
    def beta(self):
        return self.loops[0].beta if self.loops else None

    @property
    def dim(self):
        return self.loops[0].dim if self.loops else None

    def total_length(self):
        return sum(l.length for l in self.loops)

    def translated(self, v):
        return RlConfig([l.translated(v) for l in self.loops])


@dataclass(frozen=True, eq=False)
class MarkedPoint:
    x: np.ndarray
    mark: MarkTriple

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        if x.shape != (self.mark.dim,):
            raise ValueError("point and mark dimensions differ")


class MpConfig:
    """Marked points (x, p, u, omega) with the lattice scale r attached."""

    def __init__(self, points, r):
        self.points = tuple(points)
        if r <= 0:
            raise ValueError("lattice scale r must be positive")
        self.r = float(r)
        keys = set()
        self._simple = True
        for pt in self.points:
            k = _key(pt.x)
            if k in keys:
                self._simple = False
            keys.add(k)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def dim(self):
        return self.points[0].x.shape[0] if self.points else None

    def spatial(self):
        if not self.points:
            return np.zeros((0, 1))
        return np.stack([pt.x for pt in self.points])

    def is_simple(self):
        return self._simple

    def translated(self, v):
        v = np.asarray(v, dtype=float)
        return MpConfig([MarkedPoint(pt.x + v, pt.mark) for pt in self.points], self.r)


# ---------------------------------------------------------------------------
# Rooted loops <-> bridge sets
# ---------------------------------------------------------------------------


def cut_rl_to_fk(rho):
    """Cut each length-j loop into the j bridges s -> ell(beta*j' + s)."""
    bridges = []
    grid = TimeGrid(rho.beta, rho.loops[0].steps_per_beta) if len(rho) else None
    for loop in rho.loops:
        m = loop.steps_per_beta
        for j in range(loop.length):
            nodes = loop.nodes[j * m : (j + 1) * m + 1]
            bridges.append(Bridge(grid, nodes.copy()))
    return FkConfig(bridges)


def assemble_fk_to_rl(gamma):
    """Assemble successor cycles into loops rooted at the lexicographically
    smallest start point of each cycle; inverse of :func:`cut_rl_to_fk` up to
    canonical rooting."""
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    succ = gamma._succ
    n = len(gamma)
    seen = np.zeros(n, dtype=bool)
    loops = []
    for i0 in range(n):
        if seen[i0]:
            continue
        cycle = [i0]
        seen[i0] = True
        j = int(succ[i0])
        while j != i0:
            if seen[j] or len(cycle) > n:
                raise StructuralError("successor walk does not close: corrupt configuration")
            seen[j] = True
            cycle.append(j)
            j = int(succ[j])
        root_pos = min(range(len(cycle)),
                       key=lambda k: tuple(gamma.bridges[cycle[k]].start))
        cycle = cycle[root_pos:] + cycle[:root_pos]
        pieces = [gamma.bridges[k].nodes for k in cycle]
        nodes = np.concatenate([pieces[0]] + [p[1:] for p in pieces[1:]], axis=0)
        m = gamma.bridges[0].grid.steps
        loops.append(Loop(TimeGrid(gamma.beta * len(cycle), m * len(cycle)), nodes, len(cycle)))
    return RlConfig(loops)


# ---------------------------------------------------------------------------
# Marked points <-> bridge sets
# ---------------------------------------------------------------------------


def _lex_sorted(points):
    order = sorted(range(len(points)), key=lambda i: tuple(points[i]))
    return order


def mp_cell_count(gamma_mp, z):
    """Number of spatial points in the half-open cell z + [-r/2, r/2)^d."""
    r = gamma_mp.r
    z = np.asarray(z, dtype=float)
    pts = gamma_mp.spatial()
    if pts.shape[0] == 0:
        return 0
    return int(np.count_nonzero(np.all((pts >= z - r / 2.0) & (pts < z + r / 2.0), axis=1)))


def is_authorized(gamma_mp):
    """Simple spatial part and every mark points at a nonempty cell."""
    if not gamma_mp.is_simple():
        return False
    for pt in gamma_mp.points:
        if mp_cell_count(gamma_mp, pt.x + gamma_mp.r * pt.mark.p) < 1:
            return False
    return True


def mp_targets(gamma_mp):
    """Decoded target sigma(x) for every marked point, or None on failure.

    The target is the max(1, ceil(n u))'th point of the target cell in
    lexicographic order (coordinates compared left to right, exact floats).
    """
    r = gamma_mp.r
    pts = gamma_mp.spatial()
    targets = []
    for pt in gamma_mp.points:
        center = pt.x + r * pt.mark.p
        mask = np.all((pts >= center - r / 2.0) & (pts < center + r / 2.0), axis=1)
        cell = pts[mask]
        n = cell.shape[0]
        if n == 0:
            return None
        order = _lex_sorted(cell)
        idx = max(1, math.ceil(n * pt.mark.u))
        idx = min(idx, n)
        targets.append(cell[order[idx - 1]])
    return targets


def mp_is_permutation_wise(gamma_mp):
    """Authorized, and the decoded target map is a bijection of the points."""
    if not is_authorized(gamma_mp):
        return False
    targets = mp_targets(gamma_mp)
    if targets is None:
        return False
    keys = {_key(t) for t in targets}
    return len(keys) == len(gamma_mp.points)


def decode_mp_to_fk(gamma_mp, beta):
    """Unfold every mark along the straight line to its decoded target."""
    if not is_authorized(gamma_mp):
        raise StructuralError("marked configuration is not authorized (empty target cell)")
    targets = mp_targets(gamma_mp)
    keys = {_key(t) for t in targets}
    if len(keys) != len(gamma_mp.points):
        raise NotPermutationWiseError("decoded target map is not a bijection")
    bridges = [unfold(pt.x, tgt, pt.mark, beta) for pt, tgt in zip(gamma_mp.points, targets)]
    gamma = FkConfig(bridges)
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    return gamma


def encode_fk_to_mp(gamma, r):
    """Inverse protocol: per bridge x -> y, p is the lattice cell offset of y,
    u = (k - 0.5)/n places the selector strictly inside the k'th decode
    interval, and omega is the standardized shape."""
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    starts = gamma.starts()
    keys = {_key(s) for s in starts}
    if len(keys) != len(gamma):
        raise StructuralError("start points are not simple")
    points = []
    for b in gamma.bridges:
        x, y = b.start, b.end
        p = np.floor((y - x) / r + 0.5).astype(np.int64)
        center = x + r * p
        mask = np.all((starts >= center - r / 2.0) & (starts < center + r / 2.0), axis=1)
        cell = starts[mask]
        order = _lex_sorted(cell)
        target_key = _key(y)
        k = next(
            pos + 1 for pos, idx in enumerate(order) if _key(cell[idx]) == target_key
        )
        n = cell.shape[0]
        u = (k - 0.5) / n
        omega = standardize(b)
        points.append(MarkedPoint(x, MarkTriple(p, u, omega)))
    return MpConfig(points, r)


# ---------------------------------------------------------------------------
# Projections, cycles, DLR split
# ---------------------------------------------------------------------------


def segment_intersects_box(a, b, lo, hi):
    """Closed-box intersection test for the segment a -> b (slab clipping)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t0, t1 = 0.0, 1.0
    for k in range(a.shape[0]):
        p = b[k] - a[k]
        if p == 0.0:
            if a[k] < lo[k] or a[k] > hi[k]:
                return False
            continue
        ta = (lo[k] - a[k]) / p
        tb = (hi[k] - a[k]) / p
        t0 = max(t0, min(ta, tb))
        t1 = min(t1, max(ta, tb))
        if t0 > t1:
            return False
    return True


def path_intersects_box(nodes, box):
    """Polyline-vs-closed-box test; the grid-level meaning of sigma cap Delta."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    inside = np.all((nodes >= lo) & (nodes <= hi), axis=1)
    if np.any(inside):
        return True
    return any(
        segment_intersects_box(nodes[i], nodes[i + 1], lo, hi)
        for i in range(nodes.shape[0] - 1)
    )


def path_inside_box(nodes, box):
    """Whole path in the closed box; exact for convex boxes at node level."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    return bool(np.all((nodes >= lo) & (nodes <= hi)))


def proj_in(gamma, box):
    """Bridges whose start point lies in the closed box."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    keep = [i for i, b in enumerate(gamma.bridges)
            if np.all(b.start >= lo) and np.all(b.start <= hi)]
    return gamma.subset(keep)


def proj_cap(gamma, box):
    """Bridges whose trajectory intersects the box."""
    keep = [i for i, b in enumerate(gamma.bridges) if path_intersects_box(b.nodes, box)]
    return gamma.subset(keep)


def proj_capn(gamma, box, n):
    """Bridges with some successor iterate in [-n, n] intersecting the box."""
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    succ = gamma._succ
    pred = gamma._pred
    hits = np.array([path_intersects_box(b.nodes, box) for b in gamma.bridges], dtype=bool)
    keep = hits.copy()
    fwd = np.arange(len(gamma))
    bwd = np.arange(len(gamma))
    for _ in range(n):
        fwd = succ[fwd]
        bwd = pred[bwd]
        keep |= hits[fwd]
        keep |= hits[bwd]
    return gamma.subset(np.nonzero(keep)[0])


def config_cycles(gamma):
    """Disjoint successor cycles as lists of bridge indices."""
    if not is_permutation_wise(gamma):
        raise NotPermutationWiseError(gamma._perm_failure)
    succ = gamma._succ
    seen = np.zeros(len(gamma), dtype=bool)
    out = []
    for i0 in range(len(gamma)):
        if seen[i0]:
            continue
        cyc = [i0]
        seen[i0] = True
        j = int(succ[i0])
        while j != i0:
            seen[j] = True
            cyc.append(j)
            j = int(succ[j])
        out.append(cyc)
    return out


def cycles(gamma, box, n):
    """Cycles of length at most n with some bridge intersecting the box."""
    out = []
    for cyc in config_cycles(gamma):
        if len(cyc) > n:
            continue
        if any(path_intersects_box(gamma.bridges[i].nodes, box) for i in cyc):
            out.append([gamma.bridges[i] for i in cyc])
    return out


@dataclass(frozen=True)
class BoundarySets:
    inward: np.ndarray
    outward: np.ndarray
    exterior: FkConfig
    interior: FkConfig


def dlr_split(gamma, box):
    """Interior/exterior decomposition with the inward and outward boundaries.

    Exterior bridges are those not contained in the box.  Inward points are
    box points where an exterior bridge ends but none starts; outward points
    are box points where one starts but none ends.
    """
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    ext_set = {i for i, b in enumerate(gamma.bridges)
               if not path_inside_box(b.nodes, (lo, hi))}
    exterior = gamma.subset(sorted(ext_set))
    interior = gamma.subset([i for i in range(len(gamma)) if i not in ext_set])
    end_keys = {_key(b.end) for b in exterior.bridges}
    start_keys = {_key(b.start) for b in exterior.bridges}
    inward = [b.end for b in exterior.bridges
              if path_inside_box(b.end[None, :], (lo, hi)) and _key(b.end) not in start_keys]
    outward = [b.start for b in exterior.bridges
               if path_inside_box(b.start[None, :], (lo, hi)) and _key(b.start) not in end_keys]
    d = gamma.dim or lo.shape[0]
    inward = np.array(inward, dtype=float).reshape(-1, d)
    outward = np.array(outward, dtype=float).reshape(-1, d)
    return BoundarySets(inward=inward, outward=outward, exterior=exterior, interior=interior)


# ---------------------------------------------------------------------------
# Serialization (versioned structured text)
# ---------------------------------------------------------------------------


def _nodes_to_list(nodes):
    return [[float(v) for v in row] for row in nodes]


def fk_to_dict(gamma):
    return {
        "format": "bosegas-config",
        "version": FORMAT_VERSION,
        "kind": "fk",
        "beta": gamma.beta,
        "bridges": [
            {"start": list(map(float, b.start)), "end": list(map(float, b.end)),
             "nodes": _nodes_to_list(b.nodes)}
            for b in gamma.bridges
        ],
    }


def rl_to_dict(rho):
    return {
        "format": "bosegas-config",
        "version": FORMAT_VERSION,
        "kind": "rl",
        "beta": rho.beta,
        "loops": [
            {"length": l.length, "nodes": _nodes_to_list(l.nodes)} for l in rho.loops
        ],
    }


def mp_to_dict(gamma_mp):
    return {
        "format": "bosegas-config",
        "version": FORMAT_VERSION,
        "kind": "mp",
        "r": gamma_mp.r,
        "points": [
            {
                "x": list(map(float, pt.x)),
                "p": [int(v) for v in pt.mark.p],
                "u": float(pt.mark.u),
                "omega": _nodes_to_list(pt.mark.omega),
            }
            for pt in gamma_mp.points
        ],
    }


def _check_header(doc, kind):
    if doc.get("format") != "bosegas-config" or doc.get("kind") != kind:
        raise StructuralError(f"not a bosegas {kind} configuration document")
    if doc.get("version") != FORMAT_VERSION:
        raise StructuralError(f"unsupported format version {doc.get('version')}")


def fk_from_dict(doc, require_permutation_wise=False):
    _check_header(doc, "fk")
    bridges = []
    for rec in doc["bridges"]:
        nodes = np.array(rec["nodes"], dtype=float)
        if not (np.array_equal(nodes[0], np.array(rec["start"]))
                and np.array_equal(nodes[-1], np.array(rec["end"]))):
            raise StructuralError("declared endpoints disagree with stored nodes")
        bridges.append(Bridge(TimeGrid(doc["beta"], nodes.shape[0] - 1), nodes))
    gamma = FkConfig(bridges)
    if require_permutation_wise and not is_permutation_wise(gamma):
        _reject_near_matches(gamma)
        raise NotPermutationWiseError(gamma._perm_failure)
    return gamma


def _reject_near_matches(gamma, tol=1e-9):
    """Diagnose approximately-matching endpoints in an externally loaded config."""
    starts = gamma.starts()
    for b in gamma.bridges:
        if starts.shape[0] == 0:
            break
        dist = np.sqrt(np.sum((starts - b.end) ** 2, axis=1))
        near = np.min(dist)
        if 0.0 < near <= tol:
            raise StructuralError(
                "endpoints match only approximately (distance "
                f"{near:.3e}); exact shared coordinates are required"
            )


def rl_from_dict(doc):
    _check_header(doc, "rl")
    loops = []
    for rec in doc["loops"]:
        nodes = np.array(rec["nodes"], dtype=float)
        j = int(rec["length"])
        loops.append(Loop(TimeGrid(doc["beta"] * j, nodes.shape[0] - 1), nodes, j))
    return RlConfig(loops)


def mp_from_dict(doc):
    _check_header(doc, "mp")
    points = []
    for rec in doc["points"]:
        mark = MarkTriple(np.array(rec["p"], dtype=np.int64), float(rec["u"]),
                          np.array(rec["omega"], dtype=float))
        points.append(MarkedPoint(np.array(rec["x"], dtype=float), mark))
    return MpConfig(points, float(doc["r"]))


def save_config(obj, path):
    if isinstance(obj, FkConfig):
        doc = fk_to_dict(obj)
    elif isinstance(obj, RlConfig):
        doc = rl_to_dict(obj)
    elif isinstance(obj, MpConfig):
        doc = mp_to_dict(obj)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_config(path, require_permutation_wise=False):
    with open(path) as fh:
        doc = json.load(fh)
    kind = doc.get("kind")
    if kind == "fk":
        return fk_from_dict(doc, require_permutation_wise)
    if kind == "rl":
        return rl_from_dict(doc)
    if kind == "mp":
        return mp_from_dict(doc)
    raise StructuralError(f"unknown configuration kind {kind!r}")
