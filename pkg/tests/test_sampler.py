import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuemax import field, sampler
from cuemax.montecarlo import derive_stream, ks_statistic
from cuemax.sampler import (
    EigenangleSample,
    InvalidDimension,
    VerblunskyCoeffs,
    charpoly_eval,
    charpoly_log_abs,
    cmv_eigenangles,
    cmv_matrix,
    sample_haar_cmv,
    sample_haar_qr,
)

TWO_PI = 2 * math.pi


def circ_err(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b))
    return np.minimum(d, TWO_PI - d)


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_invalid_dimension(bad):
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidDimension):
        sample_haar_qr(bad, rng)
    with pytest.raises(InvalidDimension):
        sample_haar_cmv(bad, rng)


def test_qr_sample_shape_and_determinism():
    a = sample_haar_qr(20, derive_stream(5, 3))
    b = sample_haar_qr(20, derive_stream(5, 3))
    assert a.n == 20 and a.angles.shape == (20,)
    assert np.all(np.diff(a.angles) >= 0) and a.angles.min() >= 0 and a.angles.max() < TWO_PI
    assert np.array_equal(a.angles, b.angles)


def test_haar_unitary_is_unitary():
    u = sampler.haar_unitary(12, np.random.default_rng(1))
    assert np.allclose(u.conj().T @ u, np.eye(12), atol=1e-12)


def test_single_angle_mean_phase_vanishes():
    rng = np.random.default_rng(2)
    z = np.array([np.exp(1j * sample_haar_qr(1, rng).angles[0]) for _ in range(10_000)])
    assert abs(z.mean()) < 0.05


@pytest.mark.slow
def test_trace_second_moment_n64():
    rng = np.random.default_rng(3)
    p1 = np.array([np.exp(1j * sample_haar_qr(64, rng).angles).sum() for _ in range(10_000)])
    assert abs(np.mean(np.abs(p1) ** 2) - 1.0) < 0.1


def _second_moment_band(n, M):
    # Selberg oracle at alpha = 1: E|P(1)|^2 = n + 1
    expected = math.prod(math.gamma(k) * math.gamma(k + 2) / math.gamma(k + 1) ** 2 for k in range(1, n + 1))
    assert expected == pytest.approx(n + 1)
    return expected, expected * 5 * n / math.sqrt(12 * M)


def test_qr_selberg_second_moment():
    M = 5000
    expected, band = _second_moment_band(16, M)
    rng = np.random.default_rng(4)
    vals = [np.prod(np.abs(1 - np.exp(1j * sample_haar_qr(16, rng).angles))) ** 2 for _ in range(M)]
    assert abs(np.mean(vals) - expected) < band


def test_cmv_selberg_second_moment():
    M = 5000
    expected, band = _second_moment_band(16, M)
    rng = np.random.default_rng(5)
    vals = [abs(charpoly_eval(sample_haar_cmv(16, rng), 1.0)) ** 2 for _ in range(M)]
    assert abs(np.mean(vals) - expected) < band


def test_cmv_moduli_constraints():
    c = sample_haar_cmv(50, np.random.default_rng(6))
    mod = np.abs(c.alpha)
    assert np.all(mod[:-1] < 1) and abs(mod[-1] - 1) < 1e-15
    with pytest.raises(ValueError):
        VerblunskyCoeffs(2, np.array([1.0, 1.0]))


def test_cmv_n1_single_uniform_root():
    rng = np.random.default_rng(7)
    roots = []
    for _ in range(2000):
        c = sample_haar_cmv(1, rng)
        assert abs(abs(c.alpha[0]) - 1) < 1e-15
        z = 0.3 + 0.2j
        assert charpoly_eval(c, z) == pytest.approx(z - np.conj(c.alpha[0]))
        roots.append(cmv_eigenangles(c).angles[0])
    assert ks_statistic(np.array(roots) / TWO_PI, np.linspace(0, 1, 4001)) < 0.05


def test_cmv_vs_qr_log_abs_at_one():
    rng_q, rng_c = np.random.default_rng(8), np.random.default_rng(9)
    q = [field.real_field_at(sample_haar_qr(16, rng_q), 0.0)[0] for _ in range(5000)]
    c = [charpoly_log_abs(sample_haar_cmv(16, rng_c), 1.0) for _ in range(5000)]
    assert ks_statistic(q, c) < 0.05


def _largest_gap(angles):
    a = np.sort(angles)
    return np.max(np.diff(np.concatenate([a, [a[0] + TWO_PI]])))


@pytest.mark.parametrize("n", [8, 16])
def test_cmv_vs_qr_largest_gap(n):
    rng_q, rng_c = np.random.default_rng(10 + n), np.random.default_rng(20 + n)
    q = [_largest_gap(sample_haar_qr(n, rng_q).angles) for _ in range(5000)]
    c = [_largest_gap(cmv_eigenangles(sample_haar_cmv(n, rng_c)).angles) for _ in range(5000)]
    assert ks_statistic(q, c) < 0.05


def test_charpoly_eval_hand_value():
    c = VerblunskyCoeffs(1, np.array([-1.0 + 0j]))
    assert charpoly_eval(c, 1.0) == pytest.approx(2.0)


def test_charpoly_matches_dense_eigensolve():
    rng = np.random.default_rng(11)
    for _ in range(20):
        c = sample_haar_cmv(4, rng)
        lam = np.linalg.eigvals(cmv_matrix(c))
        assert np.allclose(np.abs(lam), 1, atol=1e-12)
        z = np.exp(1j * rng.uniform(0, TWO_PI, 10))
        direct = np.array([np.prod(np.abs(zi - lam)) for zi in z])
        assert np.allclose(np.abs(charpoly_eval(c, z)), direct, atol=1e-8, rtol=0)


@pytest.mark.parametrize("n", [1, 2, 7, 33, 200])
def test_phi_at_zero_has_unit_modulus(n):
    c = sample_haar_cmv(n, np.random.default_rng(n))
    assert abs(abs(charpoly_eval(c, 0.0)) - 1) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 5, 12, 40, 100])
def test_cmv_eigenangles_match_dense(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(10):
        c = sample_haar_cmv(n, rng)
        dense = np.sort(np.mod(np.angle(np.linalg.eigvals(cmv_matrix(c))), TWO_PI))
        fast = cmv_eigenangles(c).angles
        assert np.max(circ_err(np.sort(dense), fast)) < 1e-10


def test_cmv_eigenangles_are_roots_large_n():
    c = sample_haar_cmv(1500, np.random.default_rng(12))
    s = cmv_eigenangles(c)
    assert s.n == 1500 and np.all(np.diff(s.angles) > 0)
    # off the circle, |Phi_n(2)| overflows a double; compare logs with the root product
    lhs = charpoly_log_abs(c, 2.0 + 0j)
    rhs = np.sum(np.log(np.abs(2.0 - np.exp(1j * s.angles))))
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert np.isfinite(lhs) and lhs > 709  # beyond exp overflow


def test_rotation_covariance():
    s = sample_haar_qr(32, np.random.default_rng(13))
    r = s.rotated(0.731)
    m = 1024
    for a, b in [(s, r)]:
        ta, tb = field.compute_traces(a, 40), field.compute_traces(b, 40)
        assert np.allclose(np.abs(ta.p), np.abs(tb.p), atol=1e-10)
    shift = 37
    r2 = s.rotated(TWO_PI * shift / m)
    fa, fb = field.eval_full_field(s, m), field.eval_full_field(r2, m)
    assert abs(fa.values.max() - fb.values.max()) < 1e-10


def test_trace_modulus_bound():
    s = sample_haar_qr(10, np.random.default_rng(14))
    assert np.all(np.abs(field.compute_traces(s, 500).p) <= 10 + 1e-12)


def test_angles_csv_roundtrip(tmp_path):
    s = sample_haar_qr(9, np.random.default_rng(15))
    path = tmp_path / "angles.csv"
    sampler.write_angles_csv(s, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,theta" and len(lines) == 10
    assert np.array_equal(sampler.read_angles_csv(path).angles, s.angles)


@given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30))
@settings(max_examples=60, deadline=None)
def test_from_angles_invariants(raw):
    s = EigenangleSample.from_angles(raw)
    assert s.n == len(raw)
    assert np.all(s.angles >= 0) and np.all(s.angles < TWO_PI)
    assert np.all(np.diff(s.angles) >= 0)


def test_sample_eigenangles_dispatch():
    a = sampler.sample_eigenangles(6, derive_stream(1, 0), "qr")
    b = sampler.sample_eigenangles(6, derive_stream(1, 0), "cmv")
    assert a.n == b.n == 6
    with pytest.raises(ValueError):
        sampler.sample_eigenangles(6, derive_stream(1, 0), "gue")
