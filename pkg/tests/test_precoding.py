import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from pia.channel import ChannelSet, ScenarioConfig, channel_tensor, sample_drops
from pia.geometry import GridSpec, make_reference_grid
from pia.precoding import (InsufficientAntennasError, bd_batch, bd_precoders,
                           null_space_basis, sum_rate, sum_rate_batch, user_rate, waterfill)


def cgauss(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_null_space_coordinate():
    basis = null_space_basis(np.array([[1.0, 0.0, 0.0]]))
    assert basis.shape == (3, 2)
    np.testing.assert_allclose(np.array([[1, 0, 0]]) @ basis, 0, atol=1e-15)
    np.testing.assert_allclose(basis.conj().T @ basis, np.eye(2), atol=1e-14)


def test_null_space_zero_matrix():
    basis = null_space_basis(np.zeros((2, 4)))
    assert basis.shape == (4, 4)
    np.testing.assert_allclose(basis.conj().T @ basis, np.eye(4), atol=1e-14)


def test_null_space_random(rng):
    h = cgauss(rng, 4, 8)
    basis = null_space_basis(h)
    assert basis.shape == (8, 4)
    assert np.linalg.norm(h @ basis) <= 1e-10 * np.linalg.norm(h)


def test_null_space_empty_raises(rng):
    with pytest.raises(InsufficientAntennasError):
        null_space_basis(cgauss(rng, 4, 4))


def test_waterfill_examples():
    np.testing.assert_allclose(waterfill([1, 1], 2).powers, [1, 1])
    wf = waterfill([1, 0.25], 1)
    np.testing.assert_allclose(wf.powers, [1, 0])
    assert wf.level == pytest.approx(2.0)
    wf = waterfill([1, 0.25], 10)
    np.testing.assert_allclose(wf.powers, [6.5, 3.5])
    assert wf.level == pytest.approx(7.5)


def test_waterfill_zero_gains():
    wf = waterfill([0.0, 0.0], 3.0)
    np.testing.assert_array_equal(wf.powers, [0, 0])
    assert np.isnan(wf.level)
    np.testing.assert_allclose(waterfill([0.0, 2.0], 3.0).powers, [0, 3])


def test_waterfill_batched_matches_rows(rng):
    g = rng.exponential(size=(5, 7))
    g[1, :3] = 0
    batch = waterfill(g, 4.0).powers
    for row, p in zip(g, batch):
        np.testing.assert_array_equal(waterfill(row, 4.0).powers, p)


@settings(max_examples=100, deadline=None)
@given(g=st.lists(st.floats(0.0, 1e3), min_size=1, max_size=12), p=st.floats(1e-3, 1e3))
def test_waterfill_kkt_and_budget(g, p):
    g = np.array(g)
    wf = waterfill(g, p)
    if not np.any(g > 0):
        assert np.all(wf.powers == 0)
        return
    assert abs(wf.powers.sum() - p) <= 1e-10 * p
    active = wf.powers > 0
    inactive = (~active) & (g > 0)
    with np.errstate(over="ignore"):  # 1/g is inf for subnormal gains
        inv = 1 / g[active]
        np.testing.assert_allclose(wf.powers[active] + inv, wf.level, rtol=1e-9)
        assert np.all(wf.level <= 1 / g[inactive] * (1 + 1e-9))


def test_waterfill_beats_random_allocations(rng):
    g = rng.exponential(size=6)
    p = 3.0
    best = np.log2(1 + g * waterfill(g, p).powers).sum()
    alt = rng.dirichlet(np.ones(6), size=10_000) * p
    assert np.all(np.log2(1 + g * alt).sum(axis=1) <= best + 1e-12)


def test_user_rate_diagonal():
    sigma2 = 0.3
    h = np.eye(2, 4, dtype=complex)
    w = np.zeros((4, 2), dtype=complex)
    w[:2, :2] = np.sqrt(4 * sigma2) * np.eye(2)
    assert user_rate(h, w, sigma2) == pytest.approx(2 * np.log2(5), rel=1e-12)
    assert user_rate(h, np.zeros((4, 2)), sigma2) == 0.0


def test_user_rate_rejects_nonfinite():
    with pytest.raises(ValueError):
        user_rate(np.array([[np.nan, 1.0]]), np.ones((2, 1)), 1.0)


def test_orthogonal_users_decouple():
    n = 2
    h1 = np.hstack([np.eye(n), np.zeros((n, n))]).astype(complex)
    h2 = np.hstack([np.zeros((n, n)), 2 * np.eye(n)]).astype(complex)
    sigma2, p = 0.5, 3.0
    pre = bd_precoders(ChannelSet(np.stack([h1, h2])), sigma2, p)
    assert np.allclose(pre.w[0][n:], 0, atol=1e-14)
    assert np.allclose(pre.w[1][:n], 0, atol=1e-14)
    total, rates = sum_rate(np.stack([h1, h2]), sigma2, p)
    d = pre.powers
    expected = [np.sum(np.log2(1 + d[0] * 1 / sigma2)), np.sum(np.log2(1 + d[1] * 4 / sigma2))]
    np.testing.assert_allclose(rates, expected, rtol=1e-12)
    assert total == pytest.approx(sum(expected), rel=1e-12)


def test_single_user_is_eigenmode_capacity(rng):
    h = cgauss(rng, 2, 5)
    sigma2, p = 0.1, 2.0
    s = np.linalg.svd(h, compute_uv=False)
    d = oracle.waterfill_bisect(s ** 2 / sigma2, p)
    cap = np.sum(np.log2(1 + d * s ** 2 / sigma2))
    total, _ = sum_rate(h[None], sigma2, p)
    assert total == pytest.approx(cap, rel=1e-10)


def test_bd_matches_oracle_random(rng):
    sigma2, p = 0.2, 5.0
    for _ in range(5):
        h = cgauss(rng, 3, 2, 8)
        got, _ = sum_rate(h, sigma2, p)
        assert got == pytest.approx(oracle.bd_sum_rate(list(h), sigma2, p), rel=1e-8)


def test_bd_rejects_too_few_antennas(rng):
    with pytest.raises(InsufficientAntennasError):
        bd_precoders(cgauss(rng, 3, 2, 5), 1.0, 1.0)


def test_zero_channels_give_zero_rate():
    pre = bd_precoders(np.zeros((2, 1, 4), dtype=complex), 1.0, 1.0)
    assert np.all(pre.w == 0)
    assert sum_rate(np.zeros((2, 1, 4), dtype=complex), 1.0, 1.0)[0] == 0.0


def _los_instance(seed, scenario, m_side=4):
    _, regions = make_reference_grid(GridSpec(m_side, m_side, scenario.wavelength))
    r = np.random.default_rng(seed)
    lo = np.array([reg.lower for reg in regions])
    hi = np.array([reg.upper for reg in regions])
    pos = lo + (hi - lo) * r.random(lo.shape)
    return channel_tensor(pos, sample_drops(scenario, r), scenario)


@pytest.mark.parametrize("seed", range(5))
def test_bd_invariants_los(seed):
    sc = ScenarioConfig()
    h = _los_instance(seed, sc)
    pre = bd_precoders(h, sc.noise_power, sc.p_max)
    for i in range(sc.k):
        for j in range(sc.k):
            if i != j:
                leak = np.linalg.norm(h[i] @ pre.w[j])
                assert leak <= 1e-9 * np.linalg.norm(h[i]) * np.linalg.norm(pre.w[j]) + 1e-300
        wi = pre.user(i)
        d = pre.powers[i, : wi.shape[1]]
        cols = wi[:, d > 0] / np.sqrt(d[d > 0])
        np.testing.assert_allclose(cols.conj().T @ cols, np.eye(cols.shape[1]), atol=1e-10)
        closed = np.sum(np.log2(1 + pre.powers[i] * pre.gains[i] ** 2 / sc.noise_power))
        assert user_rate(h[i], wi, sc.noise_power) == pytest.approx(closed, rel=1e-9)
    total_power = sum(np.trace(w.conj().T @ w).real for w in pre.w)
    assert total_power == pytest.approx(sc.p_max, rel=1e-8)


def test_snr_scaling_invariance():
    sc = ScenarioConfig()
    h = _los_instance(7, sc)
    a = sum_rate_batch(h, sc.noise_power, sc.p_max)
    b = sum_rate_batch(h, 10 * sc.noise_power, 10 * sc.p_max)
    assert b == pytest.approx(a, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), f=st.floats(1.01, 100.0))
def test_monotone_in_power_and_noise(seed, f):
    sc = ScenarioConfig()
    h = _los_instance(seed, sc)
    base = sum_rate_batch(h, sc.noise_power, sc.p_max)
    assert sum_rate_batch(h, sc.noise_power, f * sc.p_max) >= base - 1e-9
    assert sum_rate_batch(h, f * sc.noise_power, sc.p_max) <= base + 1e-9


def test_batch_matches_single():
    sc = ScenarioConfig()
    hs = np.stack([_los_instance(s, sc) for s in range(3)])
    batch = bd_batch(hs, sc.noise_power, sc.p_max)
    for s in range(3):
        single = bd_precoders(hs[s], sc.noise_power, sc.p_max)
        np.testing.assert_allclose(batch.powers[s], single.powers, rtol=1e-12)
        assert sum_rate_batch(hs, sc.noise_power, sc.p_max)[s] == pytest.approx(
            sum_rate(hs[s], sc.noise_power, sc.p_max)[0], rel=1e-12)
