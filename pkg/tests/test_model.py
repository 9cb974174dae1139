import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codesign import model
from codesign.errors import RankDeficient, Singular, UnequalSigmas
from codesign.model import AllocationSet, NoiseSpec

from conftest import balanced_vector, equal_noise, intercept_only, random_covariates


def dense_precision(cov, alloc, noise):
    """Third path: invert V directly, no Woodbury."""
    x = model.design_matrix(cov, alloc)
    v = model.response_covariance(noise, cov.n)
    info = x.T @ np.linalg.inv(v) @ x
    k = alloc.k
    return np.linalg.inv(np.linalg.inv(info)[:k, :k])


def close_entrywise(a, b, rel):
    # structurally zero entries (e.g. tau = 0 off-diagonals) get an absolute floor
    floor = 1e-12 * np.max(np.abs(b))
    return np.all(np.abs(a - b) <= rel * np.abs(b) + floor)


# -- projection ---------------------------------------------------------------

def test_projector_centering():
    cov = intercept_only(2)
    np.testing.assert_allclose(cov.projector, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_projector_full_column_space():
    cov = model.projection_complement(np.eye(3), require_intercept=False)
    np.testing.assert_allclose(cov.projector, np.zeros((3, 3)), atol=1e-14)


def test_projector_properties(rng):
    cov = random_covariates(rng, 8, 3)
    p = cov.projector
    assert np.max(np.abs(p @ cov.z)) < 1e-10
    assert np.max(np.abs(p @ p - p)) < 1e-10
    assert np.max(np.abs(p - p.T)) == 0.0


def test_projector_rank_deficient():
    z = np.column_stack([np.ones(5), np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(RankDeficient):
        model.projection_complement(z)


def test_projector_requires_intercept():
    with pytest.raises(ValueError):
        model.projection_complement(np.arange(6.0).reshape(3, 2))


# -- constants ----------------------------------------------------------------

def test_constants_no_random_effect():
    consts = model.model_constants(NoiseSpec(0.0, (1.0, 4.0)))
    assert consts.c == 1.0
    np.testing.assert_allclose(consts.q, [1.0, 0.25])
    np.testing.assert_array_equal(consts.r, 0.0)


def test_constants_k2():
    consts = model.model_constants(NoiseSpec(1.0, (1.0, 1.0)))
    assert consts.c == 3.0
    np.testing.assert_allclose(consts.q, [2.0, 2.0])
    assert consts.r[0, 1] == -1.0 and consts.r[0, 0] == 0.0


def test_constants_k4():
    consts = model.model_constants(NoiseSpec(4.0, (1.0,) * 4))
    assert consts.c == 17.0
    np.testing.assert_allclose(consts.q, 13.0)
    off = consts.r[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, -4.0)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseSpec(-1.0, (1.0,))
    with pytest.raises(ValueError):
        NoiseSpec(1.0, (0.0,))
    assert NoiseSpec.from_sd(2.0, 1.0, 3).sigma_sq == (1.0, 1.0, 1.0)
    assert NoiseSpec.from_sd(0.5, [1.0, 2.0]).tau_sq == 0.25
    with pytest.raises(UnequalSigmas):
        NoiseSpec(1.0, (1.0, 2.0)).b


def test_allocation_validation():
    with pytest.raises(ValueError):
        AllocationSet(np.array([[1, 0], [1, -1]]))
    assert AllocationSet(np.array([1, -1])).x.shape == (2, 1)


# -- precision ----------------------------------------------------------------

def test_precision_scalar_case():
    cov = intercept_only(2)
    prec = model.precision_matrix(cov, AllocationSet(np.array([[1], [-1]])), NoiseSpec(0.0, (1.0,)))
    np.testing.assert_allclose(prec, [[2.0]])


ORTHO = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]])


def test_precision_orthogonal_balanced():
    cov = intercept_only(4)
    noise = NoiseSpec(1.0, (1.0, 1.0))
    alloc = AllocationSet(ORTHO)
    # c = 3, Q = 2, x'Px = 4, cross terms 0 -> 8/3 I
    np.testing.assert_allclose(model.precision_matrix(cov, alloc, noise), np.eye(2) * 8 / 3,
                               atol=1e-14)
    np.testing.assert_allclose(model.precision_oracle(cov, alloc, noise), np.eye(2) * 8 / 3,
                               rtol=1e-8, atol=1e-12)


def test_oracle_tau_zero_is_block_diagonal(rng):
    cov = random_covariates(rng, 10, 3)
    noise = NoiseSpec(0.0, (1.0, 2.5, 0.5))
    alloc = AllocationSet(2 * rng.integers(0, 2, (10, 3)) - 1)
    prec = model.precision_oracle(cov, alloc, noise)
    x = alloc.x.astype(float)
    expected = np.diag([x[:, j] @ cov.projector @ x[:, j] / noise.sigma_sq[j] for j in range(3)])
    np.testing.assert_allclose(prec, expected, rtol=1e-8, atol=1e-10)


def random_instance(rng, tau_sq):
    while True:
        n = int(rng.integers(4, 13))
        k = int(rng.integers(1, 4))
        p = int(rng.integers(1, 4))
        cov = random_covariates(rng, n, p)
        noise = NoiseSpec(tau_sq, tuple(rng.uniform(0.3, 3.0, k)))
        alloc = AllocationSet(2 * rng.integers(0, 2, (n, k)) - 1)
        prec = model.precision_matrix(cov, alloc, noise)
        if np.linalg.eigvalsh(prec).min() > 1e-6 * np.abs(prec).max():
            return cov, alloc, noise


@pytest.mark.parametrize("tau_sq", [0.0, 0.25, 4.0])
def test_oracle_equivalence_random(tau_sq):
    rng = np.random.default_rng(int(tau_sq * 100) + 7)
    for _ in range(20):
        cov, alloc, noise = random_instance(rng, tau_sq)
        closed = model.precision_matrix(cov, alloc, noise)
        oracle = model.precision_oracle(cov, alloc, noise)
        assert close_entrywise(closed, oracle, 1e-8)
        assert close_entrywise(closed, dense_precision(cov, alloc, noise), 1e-7)


def test_oracle_singular_design():
    cov = intercept_only(4)
    with pytest.raises(Singular):
        model.precision_oracle(cov, AllocationSet(np.ones((4, 1), dtype=int)), NoiseSpec(1.0, (1.0,)))


def test_inverse_covariance_matches_dense():
    noise = NoiseSpec(0.7, (1.0, 2.0, 0.5))
    v = model.response_covariance(noise, 3)
    np.testing.assert_allclose(model.inverse_covariance(noise, 3) @ v, np.eye(9), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.25, 4.0]))
def test_precision_is_psd(seed, tau_sq):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(3, 12)), int(rng.integers(1, 4))
    cov = random_covariates(rng, n, int(rng.integers(1, min(3, n - 1) + 1)))
    noise = NoiseSpec(tau_sq, tuple(rng.uniform(0.2, 3.0, k)))
    alloc = AllocationSet(2 * rng.integers(0, 2, (n, k)) - 1)
    prec = model.precision_matrix(cov, alloc, noise)
    assert np.max(np.abs(prec - prec.T)) <= 1e-10
    assert np.linalg.eigvalsh(prec).min() >= -1e-8 * max(np.abs(prec).max(), 1e-300)
    assert model.d_efficiency(prec) <= model.hadamard_upper_bound(cov, noise) + 1e-8


# -- objective and variances --------------------------------------------------

def test_d_efficiency_examples():
    assert model.d_efficiency(np.eye(2) * 8 / 3) == pytest.approx(8 / 3, rel=1e-14)
    assert model.d_efficiency(np.ones((2, 2))) == 0.0


def test_d_efficiency_worst_case_matrix():
    # N=4, b=1, K=2: N/(sigma^2 (1+bK)) * [[1+b(K-1), -b], [-b, 1+b(K-1)]]
    prec = 4 / 3 * np.array([[2.0, -1.0], [-1.0, 2.0]])
    assert model.d_efficiency(prec) == pytest.approx(4 * (1 / 3) ** 0.5, rel=1e-12)


def test_treatment_variances_examples():
    np.testing.assert_allclose(model.treatment_variances(np.eye(2) * 8 / 3), [3 / 8, 3 / 8])
    with pytest.raises(Singular):
        model.treatment_variances(np.ones((2, 2)))


@pytest.mark.parametrize("k", [1, 2, 4, 8])
def test_worst_case_variance(k):
    b, n = 4.0, 96
    prec = n / (1 + b * k) * ((1 + b * k) * np.eye(k) - b * np.ones((k, k)))
    np.testing.assert_allclose(model.treatment_variances(prec), 5 / 96, rtol=1e-12)


def test_best_case_variance():
    b, n, k = 4.0, 96, 4
    prec = n * (1 + b * (k - 1)) / (1 + b * k) * np.eye(k)
    np.testing.assert_allclose(model.treatment_variances(prec), 17 / 13 / 96, rtol=1e-12)
    assert 17 / 13 / 96 == pytest.approx(0.013622, abs=5e-7)


# -- benchmarks and bounds ----------------------------------------------------

def test_benchmarks_hadamard_value():
    bench = model.closed_form_benchmarks(96, 4, 0.0625, 1.0)
    assert bench.hadamard_upper == pytest.approx(91.2, rel=1e-14)
    assert bench.d_eff_worst <= bench.d_eff_best <= bench.hadamard_upper
    assert bench.var_best <= bench.var_worst


def test_benchmarks_no_random_effect():
    bench = model.closed_form_benchmarks(96, 4, 0.0, 2.0)
    assert bench.d_eff_worst == bench.d_eff_best == bench.d_eff_independent == 48.0
    assert bench.var_worst == bench.var_best == 2.0 / 96
    assert bench.ostrowski_floor == 1.0


def enumerate_best_d_eff(cov, noise):
    best = 0.0
    for bits in itertools.product([-1, 1], repeat=cov.n * noise.k):
        alloc = AllocationSet(np.array(bits).reshape(cov.n, noise.k))
        try:
            prec = model.precision_oracle(cov, alloc, noise)
        except Singular:
            continue
        best = max(best, np.linalg.det(prec) ** (1 / noise.k))
    return best


def test_benchmarks_best_matches_enumeration():
    cov = intercept_only(4)
    noise = NoiseSpec(1.0, (1.0, 1.0))
    best = enumerate_best_d_eff(cov, noise)
    assert best == pytest.approx(8 / 3, rel=1e-9)
    assert model.closed_form_benchmarks(4, 2, 1.0, 1.0).d_eff_best == pytest.approx(best, rel=1e-9)


@pytest.mark.parametrize("tau,k,expected", [(0.25, 4, 91.2), (2.0, 8, 96 * 29 / 33)])
def test_hadamard_upper_bound(tau, k, expected):
    assert model.hadamard_upper_bound(96, NoiseSpec.from_sd(tau, 1.0, k)) == pytest.approx(expected)


def test_hadamard_no_random_effect_geometric_mean():
    noise = NoiseSpec(0.0, (1.0, 4.0))
    assert model.hadamard_upper_bound(10, noise) == pytest.approx(10 / 2.0)


def test_hadamard_independent_of_covariates(rng):
    noise = NoiseSpec.from_sd(2.0, 1.0, 4)
    a = model.hadamard_upper_bound(random_covariates(rng, 20, 5), noise)
    assert a == model.hadamard_upper_bound(intercept_only(20), noise)


def test_ostrowski_floor_values():
    assert model.ostrowski_floor(equal_noise(1.0, 2), 4) == pytest.approx(1 / 3)
    assert model.ostrowski_floor(equal_noise(0.0, 3), 4) == 1.0
    with pytest.raises(UnequalSigmas):
        model.ostrowski_floor(NoiseSpec(1.0, (1.0, 2.0)), 4)


def det_factor(cov, alloc, noise):
    prec = model.precision_matrix(cov, alloc, noise)
    sig = noise.sigma_sq[0]
    return np.linalg.det(prec) * (sig / cov.n) ** noise.k


def test_ostrowski_attained_by_identical_allocation():
    cov = intercept_only(4)
    x = np.array([1, 1, -1, -1])
    alloc = AllocationSet(np.column_stack([x, x]))
    assert det_factor(cov, alloc, equal_noise(1.0, 2)) == pytest.approx(1 / 3, abs=1e-12)


@pytest.mark.parametrize("b,k", [(1.0, 2), (4.0, 4), (0.25, 3)])
def test_ostrowski_property(b, k, rng):
    n = 16
    cov = intercept_only(n)
    noise = equal_noise(b, k, sigma_sq=2.0)
    floor = model.ostrowski_floor(noise, n)
    for _ in range(200):
        alloc = AllocationSet(np.column_stack([balanced_vector(rng, n) for _ in range(k)]))
        assert det_factor(cov, alloc, noise) >= floor - 1e-10


@pytest.mark.parametrize("b,k", [(0.0625, 4), (1.0, 3), (4.0, 8)])
def test_worst_and_best_attainment(b, k, rng):
    n = 16
    cov = intercept_only(n)
    noise = equal_noise(b, k)
    bench = model.closed_form_benchmarks(n, k, b, 1.0)
    x = balanced_vector(rng, n)
    same = AllocationSet(np.column_stack([x] * k))
    assert model.d_efficiency(model.precision_matrix(cov, same, noise)) == pytest.approx(
        bench.d_eff_worst, rel=1e-10)
    from codesign.designs import sylvester_hadamard
    ortho = AllocationSet(sylvester_hadamard(16)[:, 1:k + 1])
    assert model.d_efficiency(model.precision_matrix(cov, ortho, noise)) == pytest.approx(
        bench.d_eff_best, rel=1e-10)


def test_variance_floor_requires_equal_sigmas():
    with pytest.raises(UnequalSigmas):
        model.variance_floor(NoiseSpec(1.0, (1.0, 2.0)), 10)
