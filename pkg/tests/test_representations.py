import numpy as np
import pytest

from bosegas.errors import NotPermutationWiseError, StructuralError
from bosegas.hamiltonians import ModelParams
from bosegas.representations import (
    FkConfig,
    MarkedPoint,
    MpConfig,
    RlConfig,
    assemble_fk_to_rl,
    config_cycles,
    cut_rl_to_fk,
    cycles,
    decode_mp_to_fk,
    dlr_split,
    encode_fk_to_mp,
    fk_from_dict,
    fk_to_dict,
    is_authorized,
    is_permutation_wise,
    load_config,
    mp_cell_count,
    mp_is_permutation_wise,
    mp_targets,
    proj_cap,
    proj_capn,
    proj_in,
    save_config,
    successor,
    time_reverse_config,
)
from bosegas.samplers.ideal import sample_ideal_rl, sample_loop
from bosegas.streams import stream
from bosegas.trajectories import Bridge, MarkTriple, TimeGrid, sample_bridge, standardize


def straight_bridge(x, y, beta=1.0, m=8):
    frac = np.linspace(0.0, 1.0, m + 1)[:, None]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nodes = x + frac * (y - x)
    nodes[0] = x
    nodes[-1] = y
    return Bridge(TimeGrid(beta, m), nodes)


def test_successor_fixed_point_and_two_cycle():
    self_loop = straight_bridge([0.0], [0.0])
    gamma = FkConfig([self_loop])
    assert is_permutation_wise(gamma)
    assert successor(gamma, self_loop) is self_loop

    b1 = straight_bridge([0.0], [1.0])
    b2 = straight_bridge([1.0], [0.0])
    gamma2 = FkConfig([b1, b2])
    assert is_permutation_wise(gamma2)
    assert successor(gamma2, b1) is b2
    assert successor(gamma2, b2) is b1


def test_permutation_wise_detection():
    assert is_permutation_wise(FkConfig([]))
    open_bridge = straight_bridge([0.0], [1.0])
    gamma = FkConfig([open_bridge])
    assert not is_permutation_wise(gamma)
    with pytest.raises(NotPermutationWiseError):
        successor(gamma, open_bridge)


def test_cut_counts_and_cycles():
    rng = stream(30)
    loops = [sample_loop(rng.normal(size=1), j, 0.5, 8, rng) for j in (1, 3, 2)]
    rho = RlConfig(loops)
    gamma = cut_rl_to_fk(rho)
    assert len(gamma) == 6
    assert is_permutation_wise(gamma)
    lengths = sorted(len(c) for c in config_cycles(gamma))
    assert lengths == [1, 2, 3]


def test_assemble_roundtrip_canonical_rooting():
    rng = stream(31)
    for _ in range(20):
        loops = [sample_loop(rng.normal(size=2), int(j), 0.5, 6, rng)
                 for j in rng.integers(1, 4, size=3)]
        rho = RlConfig(loops)
        gamma = cut_rl_to_fk(rho)
        back = assemble_fk_to_rl(gamma)
        assert sorted(l.length for l in back.loops) == sorted(l.length for l in rho.loops)
        # cutting again reproduces the same bridge set
        gamma2 = cut_rl_to_fk(back)
        k1 = sorted(b.nodes.tobytes() for b in gamma.bridges)
        k2 = sorted(b.nodes.tobytes() for b in gamma2.bridges)
        assert k1 == k2


def test_assemble_single_self_bridge():
    rng = stream(32)
    loop = sample_loop(np.array([0.2]), 1, 1.0, 8, rng)
    gamma = cut_rl_to_fk(RlConfig([loop]))
    back = assemble_fk_to_rl(gamma)
    assert len(back.loops) == 1 and back.loops[0].length == 1


def test_decode_selector_intervals():
    # three points in the target cell of x0: selection follows ceil(n u)
    beta = 1.0
    m = 8
    xs = [np.array([0.0]), np.array([1.0]), np.array([1.2]), np.array([0.8])]
    omega = np.zeros((m + 1, 1))

    def mp_with_u(u):
        # x0 points at the cell around 1.0 (r = 1), others are self-loops
        pts = [MarkedPoint(xs[0], MarkTriple(np.array([1]), u, omega))]
        for x in xs[1:]:
            pts.append(MarkedPoint(x, MarkTriple(np.array([0]), 0.0, omega)))
        return MpConfig(pts, r=1.0)

    # cell center 1.0 contains {1.0, 1.2, 0.8}; lexicographic order: 0.8, 1.0, 1.2
    assert mp_cell_count(mp_with_u(0.5), np.array([1.0])) == 3
    targets = mp_targets(mp_with_u(0.5))
    assert targets[0][0] == 1.0  # ceil(1.5) = 2nd point
    assert mp_targets(mp_with_u(0.0))[0][0] == 0.8  # u = 0 -> first
    assert mp_targets(mp_with_u(1.0))[0][0] == 1.2  # u = 1 -> third
    assert mp_targets(mp_with_u(1.0 / 3.0))[0][0] == 0.8  # u = 1/n -> first
    assert mp_targets(mp_with_u(0.34))[0][0] == 1.0  # just past the break


def test_decode_requires_authorization():
    omega = np.zeros((9, 1))
    pt = MarkedPoint(np.array([0.0]), MarkTriple(np.array([5]), 0.5, omega))
    gamma = MpConfig([pt], r=1.0)
    assert not is_authorized(gamma)
    with pytest.raises(StructuralError):
        decode_mp_to_fk(gamma, 1.0)


def test_encode_decode_roundtrip_random_configs():
    rng = stream(33)
    params = ModelParams(beta=1.0, mu=-1.0, L=4.0, d=1, steps=8)
    done = 0
    while done < 200:
        rho = sample_ideal_rl(params, rng)
        gamma = cut_rl_to_fk(rho)
        if len(gamma) == 0:
            continue
        done += 1
        mp = encode_fk_to_mp(gamma, r=1.0)
        assert is_authorized(mp)
        assert mp_is_permutation_wise(mp)
        back = decode_mp_to_fk(mp, params.beta)
        orig = {b.start.tobytes(): b.end.tobytes() for b in gamma.bridges}
        new = {b.start.tobytes(): b.end.tobytes() for b in back.bridges}
        assert orig == new  # positions and decoded targets bit-equal
        for b0, b1 in zip(sorted(gamma.bridges, key=lambda b: tuple(b.start)),
                          sorted(back.bridges, key=lambda b: tuple(b.start))):
            np.testing.assert_allclose(b1.nodes, b0.nodes, atol=1e-12)


def test_encode_self_bridge_and_half_open_cells():
    rng = stream(34)
    b = sample_bridge(np.array([0.2]), np.array([0.2]), 1.0, 8, rng)
    gamma = FkConfig([b])
    mp = encode_fk_to_mp(gamma, r=1.0)
    assert tuple(mp.points[0].mark.p) == (0,)
    # a target exactly at the upper face belongs to the next cell
    b1 = sample_bridge(np.array([0.0]), np.array([0.5]), 1.0, 8, rng)
    b2 = sample_bridge(np.array([0.5]), np.array([0.0]), 1.0, 8, rng)
    gamma2 = FkConfig([b1, b2])
    mp2 = encode_fk_to_mp(gamma2, r=1.0)
    assert tuple(mp2.points[0].mark.p) == (1,)
    back = decode_mp_to_fk(mp2, 1.0)
    assert is_permutation_wise(back)


def test_projections_nesting():
    rng = stream(35)
    params = ModelParams(beta=1.0, mu=-0.7, L=6.0, d=1, steps=8)
    box = (np.array([-0.5]), np.array([0.5]))
    done = 0
    while done < 30:
        gamma = cut_rl_to_fk(sample_ideal_rl(params, rng))
        if len(gamma) == 0:
            continue
        done += 1
        p_in = set(map(id, proj_in(gamma, box).bridges))
        p_cap = set(map(id, proj_cap(gamma, box).bridges))
        p_cap0 = set(map(id, proj_capn(gamma, box, 0).bridges))
        p_cap1 = set(map(id, proj_capn(gamma, box, 1).bridges))
        p_cap2 = set(map(id, proj_capn(gamma, box, 2).bridges))
        assert p_cap0 == p_cap
        assert p_in <= p_cap <= p_cap1 <= p_cap2
        big = (np.array([-100.0]), np.array([100.0]))
        assert len(proj_in(gamma, big)) == len(gamma)


def test_proj_capn_needs_permutation_wise():
    gamma = FkConfig([straight_bridge([0.0], [1.0])])
    with pytest.raises(NotPermutationWiseError):
        proj_capn(gamma, (np.array([-1.0]), np.array([1.0])), 1)


def test_cycles_length_cap_and_containment():
    rng = stream(36)
    loops = [sample_loop(np.array([0.0]), 1, 0.5, 8, rng),
             sample_loop(np.array([0.1]), 3, 0.5, 8, rng)]
    gamma = cut_rl_to_fk(RlConfig(loops))
    box = (np.array([-5.0]), np.array([5.0]))
    only_short = cycles(gamma, box, 2)
    assert len(only_short) == 1 and len(only_short[0]) == 1
    all_cycles = cycles(gamma, box, 3)
    assert sorted(len(c) for c in all_cycles) == [1, 3]
    capn = set(map(id, proj_capn(gamma, box, 3).bridges))
    for cyc in all_cycles:
        for b in cyc:
            assert id(b) in capn


def test_dlr_split_cases():
    rng = stream(37)
    box = (np.array([-1.0]), np.array([1.0]))
    inside = sample_bridge(np.array([0.0]), np.array([0.0]), 0.05, 8, rng)
    split = dlr_split(FkConfig([inside]), box)
    assert len(split.exterior) == 0
    assert split.inward.shape[0] == 0 and split.outward.shape[0] == 0

    entering = straight_bridge([3.0], [0.5])
    split2 = dlr_split(FkConfig([entering]), box)
    assert split2.inward.ravel().tolist() == [0.5]
    assert split2.outward.shape[0] == 0


def test_dlr_split_boundary_counts_match_on_permutation_wise():
    rng = stream(38)
    params = ModelParams(beta=1.0, mu=-0.7, L=6.0, d=1, steps=8)
    box = (np.array([-0.8]), np.array([0.8]))
    checked = 0
    while checked < 40:
        gamma = cut_rl_to_fk(sample_ideal_rl(params, rng))
        if len(gamma) == 0:
            continue
        checked += 1
        split = dlr_split(gamma, box)
        assert split.inward.shape[0] == split.outward.shape[0]
        assert len(split.exterior) + len(split.interior) == len(gamma)


def test_translation_commutes_with_projections():
    rng = stream(39)
    params = ModelParams(beta=1.0, mu=-0.7, L=6.0, d=1, steps=8)
    box = (np.array([-0.5]), np.array([0.5]))
    gamma = None
    while gamma is None or len(gamma) == 0:
        gamma = cut_rl_to_fk(sample_ideal_rl(params, rng))
    v = np.array([0.37])
    moved = gamma.translated(v)
    box_moved = (box[0] + v, box[1] + v)
    a = sorted(b.start.tobytes() for b in proj_cap(moved, box_moved).bridges)
    b_ = sorted((bb.start + v).tobytes() for bb in proj_cap(gamma, box).bridges)
    assert a == b_


def test_time_reverse_config_swaps_roles():
    rng = stream(40)
    loop = sample_loop(np.array([0.3]), 2, 1.0, 8, rng)
    gamma = cut_rl_to_fk(RlConfig([loop]))
    rev = time_reverse_config(gamma)
    assert is_permutation_wise(rev)
    starts = sorted(b.start.tobytes() for b in gamma.bridges)
    rev_ends = sorted(b.end.tobytes() for b in rev.bridges)
    assert starts == rev_ends
    rr = time_reverse_config(rev)
    k1 = sorted(b.nodes.tobytes() for b in gamma.bridges)
    k2 = sorted(b.nodes.tobytes() for b in rr.bridges)
    assert k1 == k2


def test_serialization_roundtrip(tmp_path):
    rng = stream(41)
    params = ModelParams(beta=1.0, mu=-1.0, L=4.0, d=1, steps=8)
    gamma = None
    while gamma is None or len(gamma) == 0:
        rho = sample_ideal_rl(params, rng)
        gamma = cut_rl_to_fk(rho)
    path = tmp_path / "config.json"
    save_config(gamma, path)
    loaded = load_config(path, require_permutation_wise=True)
    assert sorted(b.nodes.tobytes() for b in loaded.bridges) == \
        sorted(b.nodes.tobytes() for b in gamma.bridges)

    save_config(rho, tmp_path / "rl.json")
    rho2 = load_config(tmp_path / "rl.json")
    assert sorted(l.length for l in rho2.loops) == sorted(l.length for l in rho.loops)

    mp = encode_fk_to_mp(gamma, r=1.0)
    save_config(mp, tmp_path / "mp.json")
    mp2 = load_config(tmp_path / "mp.json")
    assert len(mp2) == len(mp) and mp2.r == mp.r


def test_load_rejects_approximate_endpoint_matches():
    b1 = straight_bridge([0.0], [1.0])
    b2 = straight_bridge([1.0 + 1e-12], [0.0])  # off by one part in 10^12
    doc = fk_to_dict(FkConfig([b1, b2]))
    with pytest.raises(StructuralError):
        fk_from_dict(doc, require_permutation_wise=True)
