import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuemax import multiscale as ms
from cuemax.field import (
    EigenangleSample,
    compute_traces,
    eval_truncated_field,
    traces_from_verblunsky,
)
from cuemax.montecarlo import derive_stream
from cuemax.sampler import sample_haar_cmv, sample_haar_qr


def _traces(n, seed, J=None):
    s = sample_haar_qr(n, np.random.default_rng(seed))
    return compute_traces(s, J or n)


# ---- index ranges ---------------------------------------------------------

def test_w_ranges_partition():
    assert ms.w_range(1) == (1, 2)
    assert ms.w_range(2) == (3, 7)
    prev = 0
    for ell in range(1, 25):
        lo, hi = ms.w_range(ell)
        assert lo == prev + 1
        prev = hi
    with pytest.raises(ValueError):
        ms.w_range(0)


@given(st.integers(2, 10 ** 7), st.integers(3, 12))
@settings(max_examples=200, deadline=None)
def test_y_ranges_partition_1_to_N(N, K):
    prev = 0
    for m in range(1, K + 1):
        lo, hi = ms.y_range(m, K, N)
        assert lo == prev + 1 or hi < lo
        prev = max(prev, hi)
    assert prev == N


def test_floor_power_exact():
    # 4096^(2/8) = 8 and 4096^(3/8) = 2^4.5 = 22.627..; 2^20 at 1/4 is exactly 32
    assert ms.y_range(3, 8, 4096) == (9, 22)
    assert ms.y_range(2, 4, 2 ** 20)[1] == 1024
    assert ms.y_range(1, 4, 2 ** 20) == (1, 32)
    with pytest.raises(ValueError):
        ms.y_range(9, 8, 4096)


# ---- decomposition --------------------------------------------------------

def test_decompose_errors():
    tr = _traces(16, 0)
    with pytest.raises(ValueError):
        ms.decompose(tr, 2, 16)
    with pytest.raises(ValueError):
        ms.decompose(_traces(16, 0, J=15), 4, 16)


@pytest.mark.parametrize("n,K,m", [(16, 3, 16), (256, 8, 512), (1000, 5, 1000)])
def test_coarse_reassembly(n, K, m):
    tr = _traces(n, n)
    dec = ms.decompose(tr, K, m)
    ref = eval_truncated_field(tr, n, m).values
    assert np.max(np.abs(dec.Y.sum(axis=0) - ref)) < 1e-9


@pytest.mark.parametrize("delta", [0.0, 0.3, 0.5])
def test_fine_reassembly(delta):
    n = 512
    tr = _traces(n, 3)
    dec = ms.decompose(tr, 8, 256, delta=delta)
    J = dec.meta["w_truncation"]
    assert dec.W.shape[0] == ms.fine_scale_count(n, delta)
    assert np.max(np.abs(dec.partial_sums[-1] - eval_truncated_field(tr, J, 256).values)) < 1e-9


def test_sigma2_exact_and_telescoping():
    # sigma2 does not depend on the sample: use a cheap trace vector of the right size
    s = EigenangleSample.from_angles(np.linspace(0, 2 * math.pi, 4096, endpoint=False))
    dec = ms.decompose(compute_traces(s, 4096), 8, 64)
    for k, (lo, hi) in enumerate(dec.meta["y_ranges"]):
        assert dec.sigma2[k] == ms.half_harmonic(lo, hi)
        assert dec.sigma2[k] == pytest.approx(0.5 * sum(1.0 / j for j in range(lo, hi + 1)), rel=1e-14)
    assert dec.sigma2.sum() == pytest.approx(0.5 * sum(1.0 / j for j in range(1, 4097)), rel=1e-14)
    # the deviation from (1/2) log N / K is of order N^{-(m-1)/K}
    for m in range(2, 9):
        assert abs(dec.sigma2[m - 1] - 0.5 * math.log(4096) / 8) <= 4096 ** (-(m - 1) / 8)


@pytest.mark.xfail(strict=True, reason="integer flooring moves sigma_3^2 by 0.033 at N = 4096; see README, known deviations")
def test_sigma2_m3_within_001():
    assert abs(ms.half_harmonic(*ms.y_range(3, 8, 4096)) - 0.5 * math.log(4096) / 8) < 0.01


def test_w1_by_hand_n2():
    s = EigenangleSample.from_angles([0.0, math.pi])
    dec = ms.decompose(compute_traces(s, 2), 3, 32)
    h = 2 * math.pi * np.arange(32) / 32
    assert np.allclose(dec.W[0], -np.cos(2 * h), atol=1e-14)


def test_increment_at_matches_grid():
    tr = _traces(64, 5)
    dec = ms.decompose(tr, 4, 128)
    h = 2 * math.pi * np.arange(128) / 128
    lo, hi = dec.meta["y_ranges"][2]
    assert np.allclose(ms.increment_at(tr, lo, hi, h), dec.Y[2], atol=1e-12)


def test_decomposition_csv(tmp_path):
    dec = ms.decompose(_traces(64, 6), 4, 64)
    p = tmp_path / "dec.csv"
    ms.write_decomposition_csv(dec, p)
    rows = p.read_text().splitlines()
    assert rows[0] == "scale,range_lo,range_hi,sigma2"
    assert rows[1].startswith("W1,1,2,")
    assert len(rows) == 1 + dec.W.shape[0] + 4
    assert float(rows[-1].split(",")[3]) == dec.sigma2[-1]


# ---- exact covariances ----------------------------------------------------

def test_cos_harmonic_em_matches_direct():
    for a, b, d in [(1, 300_000, 1e-3), (64, 1_000_000, 0.02), (5, 2 ** 18, 0.0), (100, 400_000, 0.9)]:
        em = ms.cos_harmonic(a, b, d)
        direct = ms._direct_sum(a, b, d)
        assert em == pytest.approx(direct, abs=1e-12)


def test_cov_w_at_zero_near_half():
    for ell in range(2, 21):
        v = ms.exact_cov_W(ell, 0.0)
        assert 0.4 <= v <= 0.6
        lo, hi = ms.w_range(ell)
        assert v == ms.half_harmonic(lo, hi)


def test_cov_w_symmetry_and_distance():
    assert ms.exact_cov_W(5, 0.3) == ms.exact_cov_W(5, -0.3)
    assert ms.exact_cov_W(5, 2 * math.pi - 0.3) == pytest.approx(ms.exact_cov_W(5, 0.3), abs=1e-14)


def test_cov_w_correlated_regime():
    for ell in range(1, 21):
        for t in range(ell, 21):
            d = math.exp(-t)
            assert abs(ms.exact_cov_W(ell, d) - ms.exact_cov_W(ell, 0.0)) <= math.e * math.exp(ell) * d


def test_cov_w_decorrelated_first_power():
    for ell in range(1, 21):
        for t in range(1, ell):
            assert ms.w_regime_check(ell, t, C=10, decay_power=1)["ok"]


@pytest.mark.xfail(strict=True, reason="the W covariance decays like e^{-(l-t)}, not its square; see README, known deviations")
def test_cov_w_decorrelated_squared_example():
    # l - t = 5, i.e. e^l * delta = e^5
    for ell in (6, 10, 20):
        assert abs(ms.exact_cov_W(ell, math.exp(5 - ell))) <= 10 * math.exp(-10)


def test_cov_y_examples():
    N, K = 4096, 8
    for m in range(1, K + 1):
        assert ms.exact_cov_Y(m, K, N, 0.0) == ms.half_harmonic(*ms.y_range(m, K, N))
    for N in (1024, 4096, 2 ** 20):
        for K in (4, 8):
            for m in range(1, K + 1):
                for t in np.linspace(0.5, 20, 40):
                    r = ms.y_regime_check(m, K, N, t)
                    assert r is None or r["ok"], r


def test_mc_covariance_matches_exact():
    N, ell, M = 256, 4, 20_000
    lo, hi = ms.w_range(ell)
    deltas = [0.0, 2 ** -4, 2 ** -2]
    vals = np.empty((M, 3))
    for i in range(M):
        tr = traces_from_verblunsky(sample_haar_cmv(N, derive_stream(41, i)), hi)
        vals[i] = ms.increment_at(tr, lo, hi, deltas)
    for k, d in enumerate(deltas):
        prod = vals[:, 0] * vals[:, k]
        se = prod.std(ddof=1) / math.sqrt(M)
        assert abs(prod.mean() - ms.exact_cov_W(ell, d)) < 4 * se


# ---- exceedances ----------------------------------------------------------

def test_level():
    assert ms.level(1024, 8, 2.0) == 0.0
    assert ms.level(1024, 8, 0.4) == pytest.approx(0.8 * math.log(1024) / 8)


def test_exceedance_grid_mismatch():
    dec = ms.decompose(_traces(64, 7), 4, 128)
    with pytest.raises(ms.GridMismatchError):
        ms.count_exceedances(dec, 0.4)


def test_exceedance_definition_and_json():
    dec = ms.decompose(_traces(256, 8), 8, 256)
    ex = ms.count_exceedances(dec, 2.0)
    assert ex.x == 0.0
    manual = np.all(dec.Y[1:7] >= 0, axis=0)
    assert np.array_equal(ex.per_point_pass, manual)
    assert ex.z_count == int(np.unpackbits(np.frombuffer(ex.bitmask, np.uint8)).sum())
    assert 0 <= ex.z_count <= 256
    assert json.loads(ex.to_json()) == {"K": 8, "epsilon": 2.0, "x": 0.0, "Z": ex.z_count}


def test_second_moment_ratio_examples():
    assert ms.second_moment_ratio([3, 3, 3]) == 1.0
    z = [0, 1, 1, 0, 1]
    assert ms.second_moment_ratio(z) == pytest.approx(0.6)
    assert ms.second_moment_ratio([2, 4]) == pytest.approx(9 / 10)
    with pytest.raises(ValueError):
        ms.second_moment_ratio([1])
    with pytest.raises(ZeroDivisionError):
        ms.second_moment_ratio([0, 0, 0])


@given(st.lists(st.integers(0, 50), min_size=2, max_size=40).filter(any))
def test_paley_zygmund_on_empirical_measure(z):
    assert ms.second_moment_ratio(z) <= np.mean(np.array(z) >= 1) + 1e-12


@pytest.fixture(scope="module")
def z_counts_1024():
    out = {0.4: [], 1.5: [], 2.0: []}
    for i in range(400):
        tr = traces_from_verblunsky(sample_haar_cmv(1024, derive_stream(2027, i)), 1024)
        dec = ms.decompose(tr, 8, 1024)
        for eps in out:
            out[eps].append(ms.count_exceedances(dec, eps).z_count)
    return {k: np.array(v) for k, v in out.items()}


def test_exceedance_zero_level_usually_positive(z_counts_1024):
    assert np.mean(z_counts_1024[2.0] >= 1) > 0.9


@pytest.mark.xfail(strict=True, reason="E Z is about 0.01 at N = 1024, eps = 0.4; see README, known deviations")
def test_exceedance_probability_eps04(z_counts_1024):
    assert np.mean(z_counts_1024[0.4][:200] >= 1) >= 0.5


@pytest.mark.xfail(strict=True, reason="E Z is about 0.01 at N = 1024, eps = 0.4; see README, known deviations")
def test_second_moment_ratio_eps04(z_counts_1024):
    assert ms.second_moment_ratio(z_counts_1024[0.4]) >= 0.2


def test_exceedance_calibrated_eps15(z_counts_1024):
    z = z_counts_1024[1.5]
    assert np.mean(z[:200] >= 1) >= 0.5
    assert ms.second_moment_ratio(z) >= 0.2
