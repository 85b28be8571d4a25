import itertools
import math

import numpy as np
import pytest

from jianpu_scribe.charsim import (
    SKELETON_FLOOR,
    EmbeddingTable,
    ZeroEnergyError,
    align_scale,
    embedding_cosine,
    fuse,
    load_embedding_table,
    minmax_iou,
    normalized_correlation,
    phase_correlate,
    save_embedding_table,
    skeleton_match,
)
from jianpu_scribe.imaging import GrayImage, _resize_array


def rand_patch(seed, shape=(32, 32)):
    rng = np.random.default_rng(seed)
    p = np.zeros(shape)
    for _ in range(6):
        y, x = rng.integers(4, shape[0] - 4), rng.integers(4, shape[1] - 4)
        p[y - 2 : y + 3, x - 2 : x + 3] = rng.random()
    return p


# --- phase correlation -------------------------------------------------------

def test_phase_identity():
    p = rand_patch(0)
    res = phase_correlate(p, p)
    assert (res.t_x, res.t_y) == (0, 0)
    assert res.peak == pytest.approx(1.0, abs=1e-9)


def test_phase_recovers_circular_shifts():
    rng = np.random.default_rng(1)
    for seed in range(50):
        p = rand_patch(seed + 10)
        dy, dx = int(rng.integers(-10, 11)), int(rng.integers(-10, 11))
        q = np.roll(p, (dy, dx), axis=(0, 1))
        res = phase_correlate(p, q)
        assert (res.t_x, res.t_y) == (dx, dy), f"seed {seed}"


def test_phase_antisymmetric():
    h, w = 32, 32
    for seed in range(10):
        p = rand_patch(seed)
        q = np.roll(p, (5, 3), axis=(0, 1))
        ab = phase_correlate(p, q)
        ba = phase_correlate(q, p)
        assert (ab.t_x + ba.t_x) % w == 0
        assert (ab.t_y + ba.t_y) % h == 0


def test_phase_zero_energy_error():
    with pytest.raises(ZeroEnergyError):
        phase_correlate(np.zeros((8, 8)), rand_patch(2))


# --- scale alignment ---------------------------------------------------------

def test_align_scale_identity():
    p = rand_patch(3)
    s, _, _ = align_scale(p, p, tol=0.004)
    assert s == pytest.approx(1.0, abs=0.01)


def test_align_scale_recovers_shrink():
    p = rand_patch(4, (48, 48))
    shrunk = _resize_array(p, (46, 46))  # ~1/1.05 of 48
    s, _, _ = align_scale(p, shrunk)
    assert s == pytest.approx(48 / 46, abs=0.01)


def test_align_scale_peak_beats_endpoints():
    p = rand_patch(5, (48, 48))
    q = _resize_array(p, (46, 46))

    def peak_at(scale):
        hs = max(1, round(q.shape[0] * scale))
        return phase_correlate(p, _resize_array(q, (hs, hs))).peak

    s, _, _ = align_scale(p, q)
    assert peak_at(s) >= peak_at(0.9) - 1e-9
    assert peak_at(s) >= peak_at(1.1) - 1e-9


# --- normalized correlation / IoU ---------------------------------------------

def test_ncc_identity_and_scale_invariance():
    p = rand_patch(6)
    assert normalized_correlation(p, p) == pytest.approx(1.0, abs=1e-12)
    assert normalized_correlation(p, 0.5 * p) == pytest.approx(1.0, abs=1e-12)


def test_ncc_disjoint_supports():
    a = np.zeros((16, 16))
    b = np.zeros((16, 16))
    a[:8] = 1.0
    b[8:] = 1.0
    assert normalized_correlation(a, b) == 0.0


def test_ncc_cauchy_schwarz_bound():
    rng = np.random.default_rng(7)
    for _ in range(500):
        a = rng.random((12, 12))
        b = rng.random((12, 12))
        assert abs(normalized_correlation(a, b)) <= 1.0 + 1e-9


def test_iou_values():
    p = rand_patch(8)
    assert minmax_iou(p, p) == 1.0
    assert minmax_iou(p, 0.5 * p) == pytest.approx(0.5, abs=1e-12)
    a = np.zeros((8, 8))
    b = np.zeros((8, 8))
    a[0, 0] = 1.0
    b[7, 7] = 1.0
    assert minmax_iou(a, b) == 0.0
    assert minmax_iou(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0


def test_iou_symmetric_and_monotone():
    a, b = rand_patch(9), rand_patch(10)
    assert minmax_iou(a, b) == pytest.approx(minmax_iou(b, a), abs=1e-12)
    bump = 0.2 * np.ones_like(a)
    base = minmax_iou(a, b)
    raised = minmax_iou(np.clip(a + bump, 0, 1), np.clip(b + bump, 0, 1))
    assert raised >= base


# --- skeleton matching -------------------------------------------------------

def brute_force_assignment(cost):
    n = cost.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        best = min(best, total)
    return best


def test_skeleton_identical_sets():
    pts = np.array([[0, 0], [3, 4], [10, 2]], dtype=float)
    prob = skeleton_match(pts, pts, lam=12.0)
    assert prob.j_star == pytest.approx(0.0, abs=1e-12)
    assert prob.s == pytest.approx(1.0, abs=1e-12)


def test_skeleton_two_lambda_apart():
    lam = 7.0
    a = np.array([[0.0, 0.0]])
    b = np.array([[2 * lam, 0.0]])
    prob = skeleton_match(a, b, lam=lam)
    # hand enumeration: matching costs (2 lam)^2 = 4 lam^2; both-unmatched
    # costs lam^2, so the optimum leaves both out
    assert prob.j_star == pytest.approx(lam * lam, abs=1e-9)
    assert prob.s == pytest.approx(1 / math.e, abs=1e-12)


def test_skeleton_lambda_tie_exact():
    lam = 12.0
    a = np.array([[0.0, 0.0]])
    b = np.array([[lam, 0.0]])
    prob = skeleton_match(a, b, lam=lam)
    matched_total = float(np.hypot(lam, 0.0) ** 2)
    unmatched_total = lam * lam
    assert matched_total == unmatched_total
    assert prob.j_star == pytest.approx(lam * lam, abs=1e-9)
    assert prob.s == pytest.approx(1 / math.e, abs=1e-12)


def test_skeleton_worst_case_all_unmatched():
    lam = 5.0
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1000.0, 1000.0], [2000.0, -500.0], [1500.0, 0.0]])
    prob = skeleton_match(a, b, lam=lam)
    assert prob.j_star == pytest.approx(prob.j_max, rel=1e-12)
    assert prob.s == pytest.approx(1 / math.e, abs=1e-12)


def test_skeleton_matches_exhaustive_enumeration():
    rng = np.random.default_rng(11)
    for trial in range(200):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        if n + m > 7:
            continue
        a = rng.uniform(0, 30, (n, 2))
        b = rng.uniform(0, 30, (m, 2))
        lam = float(rng.uniform(2, 15))
        prob = skeleton_match(a, b, lam=lam)
        ref = brute_force_assignment(prob.cost_matrix)
        assert prob.j_star == pytest.approx(ref, rel=1e-9), f"trial {trial}"
        assert SKELETON_FLOOR - 1e-12 <= prob.s <= 1.0 + 1e-12


def test_skeleton_bounds_on_random_inputs():
    rng = np.random.default_rng(12)
    for _ in range(50):
        a = rng.uniform(0, 50, (int(rng.integers(1, 40)), 2))
        b = rng.uniform(0, 50, (int(rng.integers(1, 40)), 2))
        prob = skeleton_match(a, b, lam=float(rng.uniform(1, 20)))
        assert 0.0 <= prob.j_star <= prob.j_max + 1e-9
        assert SKELETON_FLOOR - 1e-12 <= prob.s <= 1.0 + 1e-12


def test_skeleton_subsampling_cap():
    rng = np.random.default_rng(13)
    a = rng.uniform(0, 100, (400, 2))
    prob = skeleton_match(a, a, lam=12.0, max_points=120)
    assert len(prob.a) <= 120 and len(prob.b) <= 120


def test_skeleton_rejects_empty():
    with pytest.raises(ValueError):
        skeleton_match(np.zeros((0, 2)), np.array([[1.0, 1.0]]))


# --- embedding cosine --------------------------------------------------------

def test_embedding_cosine_values():
    assert embedding_cosine([1, 1], [1, 1]) == pytest.approx(1.0)
    assert embedding_cosine([1, 0], [0, 1]) == pytest.approx(0.0)
    assert embedding_cosine([1, 1], [1, 0]) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ZeroEnergyError):
        embedding_cosine([0, 0], [1, 0])


# --- fusion ------------------------------------------------------------------

def test_fuse_all_ones():
    assert fuse(1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_fuse_one_hot_iou():
    w = {"phase": 0.0, "iou": 1.0, "skeleton": 0.0, "embedding": 0.0}
    assert fuse(0.2, 0.37, 0.5, 0.1, weights=w) == pytest.approx(0.37, abs=1e-12)


def test_fuse_quarter_weights():
    # scores rescaled to (1, 1, 1, 0): fused = 0.75
    w = {"phase": 0.25, "iou": 0.25, "skeleton": 0.25, "embedding": 0.25}
    out = fuse(1.0, 1.0, 1.0, -1.0, weights=w)
    assert out == pytest.approx(0.75, abs=1e-12)


def test_fuse_missing_embedding_redistributes():
    w = {"phase": 0.3, "iou": 0.25, "skeleton": 0.3, "embedding": 0.15}
    with_e = fuse(0.5, 0.5, 0.8, None, weights=w)
    manual = (0.3 * 0.75 + 0.25 * 0.5 + 0.3 * ((0.8 - SKELETON_FLOOR) / (1 - SKELETON_FLOOR))) / 0.85
    assert with_e == pytest.approx(manual, abs=1e-12)


def test_fuse_monotone_in_each_metric():
    rng = np.random.default_rng(14)
    for _ in range(100):
        s = [float(rng.uniform(-1, 1)), float(rng.uniform(0, 1)),
             float(rng.uniform(SKELETON_FLOOR, 1)), float(rng.uniform(-1, 1))]
        base = fuse(*s)
        bumped = [min(hi, v + 0.05) for v, hi in zip(s, (1, 1, 1, 1))]
        for k in range(4):
            s2 = list(s)
            s2[k] = bumped[k]
            assert fuse(*s2) >= base - 1e-12


def test_fuse_rejects_zero_weights():
    with pytest.raises(ValueError):
        fuse(0.5, 0.5, 0.5, weights={"phase": 0.0, "iou": 0.0, "skeleton": 0.0})


# --- embedding table format ---------------------------------------------------

def test_embedding_table_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    vecs = {}
    for i in range(10):
        v = rng.normal(size=16)
        vecs[f"ch{i}"] = (v / np.linalg.norm(v)).astype("<f4")
    table = EmbeddingTable(vecs)
    path = tmp_path / "t.emb"
    save_embedding_table(table, path)
    loaded = load_embedding_table(path)
    assert len(loaded) == 10 and loaded.dim == 16
    for k, v in vecs.items():
        assert np.allclose(loaded.get(k), v, atol=1e-7)
    raw = path.read_bytes()
    assert raw[:4] == b"EMB1"
    import struct

    count, dim = struct.unpack("<II", raw[4:12])
    assert (count, dim) == (10, 16)


def test_embedding_table_rejects_non_unit(tmp_path):
    table = EmbeddingTable({"x": np.array([0.5, 0.5], dtype="<f4")})
    path = tmp_path / "bad.emb"
    save_embedding_table(table, path)
    with pytest.raises(ValueError):
        load_embedding_table(path)


def test_embedding_table_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.emb"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        load_embedding_table(path)
