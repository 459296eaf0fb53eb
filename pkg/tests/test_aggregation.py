"""Aggregation rules against hand cases and the brute-force oracles."""

import logging

import numpy as np
import pytest

from fedsim import aggregation, attacks, data, nn
from fedsim.errors import InfeasibilityError

from oracles import oracle_bulyan, oracle_krum_select


class _FakeArch:
    """Stand-in architecture so aggregation tests can use arbitrary dims."""

    def __init__(self, dim):
        self.param_count = dim
        self.arch_id = f"test-dim-{dim}"


def pv(values, arch=None):
    values = np.asarray(values, dtype=np.float32)
    arch = arch or _FakeArch(len(values))
    out = object.__new__(nn.ParamVector)
    out.values = values
    out.arch = arch
    return out


def pv_list(matrix):
    arch = _FakeArch(len(matrix[0]))
    return [pv(row, arch) for row in matrix]


def random_instance(rng, n_max=6, dim_max=4, discrete=False):
    n = int(rng.integers(2, n_max + 1))
    dim = int(rng.integers(1, dim_max + 1))
    if discrete:
        mat = rng.integers(-2, 3, size=(n, dim)).astype(np.float64)
    else:
        mat = rng.uniform(-5, 5, size=(n, dim))
    # round through float32 so the oracle sees the same reals the
    # float32 ParamVectors carry (exact midpoint ties are knife-edge)
    return mat.astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# fedavg
# ---------------------------------------------------------------------------

def test_fedavg_single_and_mean():
    u = pv_list([[1.0, 2.0]])
    assert np.array_equal(aggregation.fedavg(u).values, [1.0, 2.0])
    u = pv_list([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(aggregation.fedavg(u).values, [1.0, 1.0])


def test_fedavg_idempotent_on_copies():
    base = [0.25, -1.5, 3.0]
    u = pv_list([base] * 5)
    assert np.array_equal(aggregation.fedavg(u).values, np.float32(base))


# ---------------------------------------------------------------------------
# coordinate median
# ---------------------------------------------------------------------------

def test_median_outlier_immunity_and_even_rule():
    assert aggregation.coordinate_median(pv_list([[1.0], [2.0], [100.0]])).values[0] == 2.0
    assert aggregation.coordinate_median(pv_list([[1.0], [3.0]])).values[0] == 2.0


def test_median_permutation_invariant():
    rng = np.random.default_rng(0)
    mat = rng.uniform(-3, 3, size=(5, 7))
    out = aggregation.coordinate_median(pv_list(mat)).values
    for seed in range(4):
        perm = np.random.default_rng(seed).permutation(5)
        out2 = aggregation.coordinate_median(pv_list(mat[perm])).values
        assert np.array_equal(out, out2)


def test_median_nan_ordered_as_inf():
    mat = np.array([[1.0], [np.nan], [2.0]])
    out = aggregation.coordinate_median(pv_list(mat)).values
    assert out[0] == 2.0  # nan sorts above everything


def test_median_and_bulyan_within_input_range():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mat = random_instance(rng)
        lo, hi = mat.min(axis=0) - 1e-6, mat.max(axis=0) + 1e-6
        out = aggregation.coordinate_median(pv_list(mat)).values
        assert np.all(out >= lo) and np.all(out <= hi)
        if len(mat) >= 3:
            f = int(rng.integers(0, len(mat)))
            out = aggregation.bulyan(pv_list(mat), f).values
            assert np.all(out >= lo) and np.all(out <= hi)


# ---------------------------------------------------------------------------
# krum selection
# ---------------------------------------------------------------------------

def test_krum_prefers_cluster_over_outlier():
    mat = [[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [50.0, 50.0]]
    picked = aggregation.krum_select(pv_list(mat), f=1, m=1)
    assert picked[0] in (0, 1, 2)
    assert picked == oracle_krum_select(mat, 1, 1)


def test_krum_identical_updates_tie_break():
    mat = [[1.0, 1.0]] * 4
    assert aggregation.krum_select(pv_list(mat), f=1, m=1) == [0]


def test_krum_select_all_in_score_order():
    rng = np.random.default_rng(2)
    mat = rng.uniform(-1, 1, size=(5, 3))
    got = aggregation.krum_select(pv_list(mat), f=0, m=5)
    assert got == oracle_krum_select(mat.tolist(), 0, 5)
    assert sorted(got) == [0, 1, 2, 3, 4]


def test_krum_precondition():
    mat = [[0.0], [1.0], [2.0]]
    with pytest.raises(InfeasibilityError):
        aggregation.krum_select(pv_list(mat), f=1, m=1)  # 3 - 1 - 2 = 0


def test_krum_matches_oracle_on_random_instances():
    rng = np.random.default_rng(10)
    for trial in range(80):
        mat = random_instance(rng, discrete=bool(trial % 3 == 0))
        n = len(mat)
        f = int(rng.integers(0, max(1, n - 2)))
        if n - f - 2 < 1:
            continue
        m = int(rng.integers(1, n + 1))
        assert aggregation.krum_select(pv_list(mat), f, m) == oracle_krum_select(mat.tolist(), f, m)


# ---------------------------------------------------------------------------
# bulyan
# ---------------------------------------------------------------------------

def test_bulyan_f0_equals_fedavg():
    rng = np.random.default_rng(1)
    for _ in range(10):
        mat = random_instance(rng, n_max=6, dim_max=4)
        if len(mat) < 3:
            continue
        b = aggregation.bulyan(pv_list(mat), f=0).values
        a = aggregation.fedavg(pv_list(mat)).values
        np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-7)


def test_bulyan_excludes_outlier_coordinate():
    mat = [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.1, 0.1], [0.0, 100.0]]
    out = aggregation.bulyan(pv_list(mat), f=1).values
    assert abs(out[1]) < 1.0  # the 100.0 never reaches the averaged set


def test_bulyan_fixed_point_on_identical_updates():
    mat = [[1.5, -2.0, 0.25]] * 5
    out = aggregation.bulyan(pv_list(mat), f=1).values
    assert np.array_equal(out, np.float32([1.5, -2.0, 0.25]))


def test_bulyan_high_f_fallback_still_returns():
    rng = np.random.default_rng(3)
    mat = rng.uniform(-1, 1, size=(10, 3))
    out, selected = aggregation.bulyan_detail(pv_list(mat), f=9)  # 90% byzantine
    assert len(selected) == 1  # s = n - f
    assert out.values.shape == (3,)


def test_bulyan_matches_oracle_on_random_instances():
    rng = np.random.default_rng(20)
    for trial in range(80):
        mat = random_instance(rng, discrete=bool(trial % 4 == 0))
        n = len(mat)
        if n < 3:
            continue
        f = int(rng.integers(0, n))
        got, got_sel = aggregation.bulyan_detail(pv_list(mat), f)
        want, want_sel = oracle_bulyan(mat.tolist(), f)
        assert got_sel == want_sel
        np.testing.assert_allclose(got.values, np.float32(want), rtol=1e-6, atol=1e-7)


# ---------------------------------------------------------------------------
# lfr
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def lfr_setup():
    ds = data.synth_dataset(3, 12, (1, 5, 5), rng_seed=0)
    arch = nn.mlp_arch((1, 5, 5), (), 3)
    good = [nn.train_local(nn.init_model(arch, s), ds, 12, 8, 0.3, rng_seed=s)
            for s in range(3)]
    return ds, arch, good


def test_lfr_f0_is_fedavg(lfr_setup):
    ds, arch, good = lfr_setup
    out = aggregation.lfr(good, good[0], ds, f=0).values
    assert np.array_equal(out, aggregation.fedavg(good).values)


def test_lfr_excludes_random_params_model(lfr_setup):
    ds, arch, good = lfr_setup
    junk = attacks.random_params(good[0], -1, 1, rng_seed=5)
    updates = [good[0], junk, good[1], good[2]]
    _, kept = aggregation.lfr_detail(updates, good[0], ds, f=1)
    assert kept == [0, 2, 3]


def test_lfr_single_survivor(lfr_setup):
    ds, arch, good = lfr_setup
    junk = attacks.random_params(good[0], -1, 1, rng_seed=5)
    updates = [junk, good[1]]
    out, kept = aggregation.lfr_detail(updates, good[0], ds, f=1)
    assert kept == [1]
    assert np.array_equal(out.values, good[1].values)


# ---------------------------------------------------------------------------
# fltrust
# ---------------------------------------------------------------------------

def test_fltrust_single_aligned_client_reproduces_server():
    g = pv([0.0, 0.0, 0.0])
    server = pv([1.0, 2.0, -1.0], g.arch)
    out = aggregation.fltrust([server], server, g)
    assert np.array_equal(out.values, server.values)


def test_fltrust_opposed_client_ignored():
    g = pv([0.0, 0.0])
    server = pv([1.0, 0.0], g.arch)
    client = pv([-1.0, 0.0], g.arch)
    out, trusted = aggregation.fltrust_detail([client], server, g)
    assert trusted == []
    assert np.array_equal(out.values, g.values)


def test_fltrust_orthogonal_vs_parallel_hand_case():
    # global 0; server delta [1, 0]; client A delta [0, 1] (cos 0),
    # client B delta [2, 0] (cos 1, rescaled to norm 1) -> result [1, 0]
    g = pv([0.0, 0.0])
    server = pv([1.0, 0.0], g.arch)
    a = pv([0.0, 1.0], g.arch)
    b = pv([2.0, 0.0], g.arch)
    out, trusted = aggregation.fltrust_detail([a, b], server, g)
    assert trusted == [1]
    np.testing.assert_allclose(out.values, [1.0, 0.0], atol=1e-7)


def test_fltrust_zero_server_delta_warns_and_keeps_global(caplog):
    g = pv([1.0, 2.0])
    server = pv([1.0, 2.0], g.arch)
    client = pv([5.0, 5.0], g.arch)
    with caplog.at_level(logging.WARNING):
        out, trusted = aggregation.fltrust_detail([client], server, g)
    assert np.array_equal(out.values, g.values)
    assert trusted == []
    assert any("fltrust" in rec.message for rec in caplog.records)


def test_fltrust_nan_update_gets_zero_trust():
    g = pv([0.0, 0.0])
    server = pv([1.0, 1.0], g.arch)
    bad = pv([np.nan, 1.0], g.arch)
    ok = pv([1.0, 1.0], g.arch)
    out, trusted = aggregation.fltrust_detail([bad, ok], server, g)
    assert trusted == [1]
    assert np.all(np.isfinite(out.values))


# ---------------------------------------------------------------------------
# cross-cutting properties
# ---------------------------------------------------------------------------

def test_aggregators_preserve_length():
    rng = np.random.default_rng(30)
    mat = rng.uniform(-1, 1, size=(6, 5))
    u = pv_list(mat)
    assert len(aggregation.fedavg(u)) == 5
    assert len(aggregation.coordinate_median(u)) == 5
    assert len(aggregation.bulyan(u, 1)) == 5


def test_aggregators_total_under_nan_updates():
    mat = np.array([[1.0, 2.0], [np.nan, np.nan], [1.5, 2.5], [0.5, 1.5]])
    u = pv_list(mat)
    aggregation.coordinate_median(u)
    aggregation.bulyan(u, 1)
    aggregation.krum_select(u, 1, 2)  # must not crash


def test_permutation_invariance_outputs():
    rng = np.random.default_rng(31)
    mat = rng.uniform(-2, 2, size=(6, 4))
    u = pv_list(mat)
    med = aggregation.coordinate_median(u).values
    bul = aggregation.bulyan(u, 1).values
    for seed in range(3):
        perm = np.random.default_rng(100 + seed).permutation(6)
        up = pv_list(mat[perm])
        assert np.array_equal(aggregation.coordinate_median(up).values, med)
        assert np.array_equal(aggregation.bulyan(up, 1).values, bul)
