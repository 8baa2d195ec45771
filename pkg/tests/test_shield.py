import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from toposhield import (
    alpha_critical,
    build_constraint_system,
    consensus_point,
    default_x0,
    epsilon_scale,
    inference_deviation,
    krylov_dimension,
    ols_estimate,
    random_topology,
    simulate,
    snapshot_split,
    solvability_check,
    spectral_profile,
    state_error_series,
    synth_laplacian,
    synth_rank1,
    synth_sparse_kernel,
    verify_preservation,
)
from toposhield.errors import (
    CombinationDegenerateError,
    ConsensusValueZeroError,
    DegenerateInitialStateError,
    DegenerateInputError,
    InfeasibleError,
    InvalidK0Error,
    InvalidParameterError,
)
from toposhield.shield import (
    ConstraintSystem,
    combine_kernel,
    critical_gain,
    free_support,
    laplacian_gain,
    sparsity_violations,
)
from toposhield.spectral_graph import SupportPattern

ALPHAS = (0.14, 0.28, 0.42, 0.56, 0.7)


def max_matching_gap(a, b):
    cost = np.abs(np.asarray(a)[:, None] - np.asarray(b)[None, :])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].max())


def exact_constraint_rank(W_rational, support):
    """Rank of the stacked K1 = 0, w'K = 0 equations over the rationals.

    Built entry by entry, independent of the Kronecker construction.
    """
    n = W_rational.shape[0]
    null = (W_rational.T - sympy.eye(n)).nullspace()
    assert len(null) == 1
    w = null[0] / sum(null[0])
    cols = sorted(support, key=lambda ij: (ij[1], ij[0]))
    rows = []
    for r in range(n):  # (K 1)_r = sum_j K[r, j]
        rows.append([1 if i == r else 0 for i, j in cols])
    for c in range(n):  # (w'K)_c = sum_i w_i K[i, c]
        rows.append([w[i] if j == c else 0 for i, j in cols])
    return sympy.Matrix(rows).rank()


def rational_dense_topology(n, seed):
    rng = np.random.default_rng(seed)
    ints = rng.integers(1, 9, size=(n, n))
    W = sympy.Matrix(n, n, lambda i, j: sympy.Rational(int(ints[i, j]), int(ints[i].sum())))
    return W, np.array(W.tolist(), dtype=float)


def cycle_with_self_loops(n):
    W = np.zeros((n, n))
    for i in range(n):
        W[i, (i + 1) % n] = 0.5
    for i in range(1, n):
        W[i, i] = 0.5
    W[0, 1] = 1.0
    return W


class TestVerifyPreservation:
    def test_zero_gain(self, W6):
        cert = verify_preservation(W6, np.zeros((6, 6)))
        assert cert.pass_
        assert cert.res_right == 0 and cert.res_left == 0
        assert cert.mu2_modulus == pytest.approx(spectral_profile(W6).r_max, abs=1e-12)

    def test_small_laplacian(self, W6):
        K = -0.14 * (np.eye(6) - W6.entries)
        assert verify_preservation(W6, K).pass_
        mu = np.linalg.eigvals(W6.entries + K)
        mu = mu[np.argsort(-np.abs(mu))]
        assert abs(mu[0] - 1) < 1e-12 and np.abs(mu[1:]).max() < 1

    def test_outer_product_fails(self, W6):
        v = np.arange(1.0, 7.0)
        cert = verify_preservation(W6, np.outer(np.ones(6), v))
        assert cert.res_right == pytest.approx(v.sum())
        assert not cert.pass_
        assert "K1" in cert.explain()


class TestAlphaCritical:
    def test_benchmark(self, W6):
        assert alpha_critical(W6) == pytest.approx(0.7437, abs=1e-3)

    def test_projector(self):
        assert alpha_critical(np.full((4, 4), 0.25)) == pytest.approx(1.0)

    def test_closed_form(self):
        assert critical_gain(0.5) == pytest.approx(1 / 3)


class TestLaplacian:
    def test_small_gain_limit(self, W6):
        K = synth_laplacian(W6, 1e-12).K
        assert np.abs(K).max() < 1e-11

    def test_spectral_map(self, W6):
        lam = np.linalg.eigvals(W6.entries)
        mu = np.linalg.eigvals(W6.entries + synth_laplacian(W6, 0.7).K)
        assert max_matching_gap(mu, 1.7 * lam - 0.7) <= 1e-10

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_sweep_gains_certified(self, W6, alpha):
        fb = synth_laplacian(W6, alpha)
        assert fb.certificate.pass_
        assert fb.method == "laplacian" and fb.params == {"alpha": alpha}
        assert sparsity_violations(W6, fb.K) == ()

    @pytest.mark.parametrize("alpha", [0.0, -0.3])
    def test_nonpositive(self, W6, alpha):
        with pytest.raises(InvalidParameterError):
            synth_laplacian(W6, alpha)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 5000), frac=st.floats(0.01, 0.99))
    def test_spectral_map_property(self, seed, frac):
        W = random_topology(3 + seed % 6, 0.5, seed)
        alpha = frac * alpha_critical(W)
        lam = np.linalg.eigvals(W.entries)
        mu = np.linalg.eigvals(W.entries + synth_laplacian(W, alpha).K)
        assert max_matching_gap(mu, (1 + alpha) * lam - alpha) <= 1e-9
        assert verify_preservation(W, laplacian_gain(W, alpha)).pass_


class TestRank1:
    def test_consensual_x0(self, W6):
        with pytest.raises(DegenerateInitialStateError):
            synth_rank1(W6, np.full(6, 0.4))

    def test_beta_is_one_and_trajectory_frozen(self, W6):
        x0 = default_x0(6, 2)
        fb = synth_rank1(W6, x0)
        assert fb.params["beta"] == pytest.approx(1.0, abs=1e-10)
        Wt = W6.entries + fb.K
        np.testing.assert_allclose(Wt @ x0, x0, atol=1e-14)
        traj = simulate(Wt, x0, 6)
        np.testing.assert_allclose(traj.states, np.tile(x0, (7, 1)), atol=1e-12)
        res = ols_estimate(snapshot_split(traj))
        assert not res.unique and res.rank_Xa == 1
        assert krylov_dimension(Wt, x0) == 1

    def test_flagged_nonconforming(self, W6):
        fb = synth_rank1(W6, default_x0(6, 2))
        assert not fb.certificate.pass_
        assert not fb.certificate.perron_simple
        assert fb.certificate.res_right <= 1e-12 and fb.certificate.res_left <= 1e-12

    def test_sparsity_report(self):
        W = random_topology(6, 0.4, 3)
        fb = synth_rank1(W, default_x0(6, 3))
        assert fb.sparsity_violations == sparsity_violations(W, fb.K)
        assert len(fb.sparsity_violations) > 0

    def test_zero_consensus_value(self):
        W = np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        with pytest.raises(ConsensusValueZeroError):
            synth_rank1(W, np.array([0.0, 1.0, 2.0]))

    def test_custom_q(self, W6):
        x0 = default_x0(6, 5)
        q = np.array([1.0, -1.0, 0.0, 0.0, 0.0, 0.0])
        fb = synth_rank1(W6, x0, q)
        assert fb.params["q_strategy"] == "custom"
        np.testing.assert_allclose((W6.entries + fb.K) @ x0, x0, atol=1e-12)
        with pytest.raises(InvalidParameterError):
            synth_rank1(W6, x0, np.ones(6))


class TestConstraintSystem:
    def test_benchmark(self, W6):
        cs = build_constraint_system(W6)
        assert (cs.z, cs.rank, cs.kernel_dimension) == (36, 11, 25)
        assert cs.M_tilde.shape == (12, 36)

    def test_two_nodes_exact(self):
        Wr, W = rational_dense_topology(2, 0)
        cs = build_constraint_system(W)
        assert exact_constraint_rank(Wr, cs.free_support.pairs) == 3
        assert (cs.z, cs.rank, cs.kernel_dimension) == (4, 3, 1)

    @pytest.mark.parametrize("n", range(2, 9))
    def test_dense_rank(self, n):
        Wr, W = rational_dense_topology(n, n)
        cs = build_constraint_system(W)
        expected = exact_constraint_rank(Wr, cs.free_support.pairs)
        assert expected == 2 * n - 1
        assert cs.rank == expected

    def test_vectorisation_is_column_stacking(self, W6, rng):
        cs = build_constraint_system(W6)
        w = spectral_profile(W6).left_perron
        K = rng.normal(size=(6, 6))
        theta = np.array([K[i, j] for i, j in cs.column_map])
        lhs = cs.M_tilde @ theta
        np.testing.assert_allclose(lhs[:6], K @ np.ones(6), atol=1e-12)
        np.testing.assert_allclose(lhs[6:], w @ K, atol=1e-12)

    def test_kernel_orthonormal(self, W6):
        B = build_constraint_system(W6).kernel_basis
        np.testing.assert_allclose(B @ B.T, np.eye(B.shape[0]), atol=1e-12)

    def test_diagonal_free_by_default(self):
        W = cycle_with_self_loops(4)
        assert (0, 0) in free_support(W).pairs
        assert (0, 0) not in free_support(W, strict_support=True).pairs

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_strict_support_infeasible(self, n):
        W = cycle_with_self_loops(n)
        cs = build_constraint_system(W, strict_support=True)
        assert cs.z == 2 * n - 1 and cs.rank == cs.z
        with pytest.raises(InfeasibleError):
            synth_sparse_kernel(W, strict_support=True)
        assert build_constraint_system(W).kernel_dimension >= 1

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 5000), density=st.sampled_from([0.3, 0.5, 1.0]))
    def test_kernel_vectors_are_feasible(self, seed, density):
        W = random_topology(3 + seed % 6, density, seed)
        cs = build_constraint_system(W)
        w = spectral_profile(W).left_perron
        assert cs.rank + cs.kernel_dimension == cs.z
        for v in cs.kernel_basis:
            np.testing.assert_allclose(cs.M_tilde @ v, 0, atol=1e-10)
            Kv = cs.assemble(v)
            assert np.abs(Kv.sum(axis=1)).max() <= 1e-9
            assert np.abs(w @ Kv).max() <= 1e-9
            assert set(zip(*np.nonzero(Kv))) <= cs.free_support.pairs


class TestSparseKernel:
    def test_benchmark_pipeline(self, W6):
        fb = synth_sparse_kernel(W6, "random", seed=1, safety=0.9)
        K = fb.K
        w = spectral_profile(W6).left_perron
        assert np.abs(K).max() > 0
        assert np.abs(K @ np.ones(6)).max() <= 1e-8
        assert np.abs(w @ K).max() <= 1e-8
        assert fb.certificate.pass_
        assert fb.sparsity_violations == ()

        x0 = default_x0(6, 0)
        Wt = W6.entries + K
        res = ols_estimate(snapshot_split(simulate(Wt, x0, 50)))
        assert res.unique
        assert np.linalg.norm(res.W_hat - Wt) <= 1e-8
        assert inference_deviation(res.W_hat, W6) == pytest.approx(np.linalg.norm(K, 2), abs=1e-8)
        assert inference_deviation(res.W_hat, W6) > 0.1

    def test_deterministic(self, W6):
        a = synth_sparse_kernel(W6, seed=4).K
        b = synth_sparse_kernel(W6, seed=4).K
        assert np.array_equal(a, b)

    def test_max_support(self, W6):
        cs = build_constraint_system(W6)
        K0 = combine_kernel(cs, "max_support")
        nnz = lambda M: int(np.sum(np.abs(M) > 1e-12))  # noqa: E731
        assert all(nnz(K0) >= nnz(cs.assemble(v)) for v in cs.kernel_basis)
        assert synth_sparse_kernel(W6, "max_support").certificate.pass_

    def test_respects_sparse_topology(self):
        W = random_topology(7, 0.35, 21)
        fb = synth_sparse_kernel(W, seed=3)
        assert fb.sparsity_violations == ()
        off = ~np.eye(7, dtype=bool)
        assert np.all(fb.K[off & (W.entries == 0)] == 0)

    def test_strict_support_keeps_zero_diagonal(self):
        W = random_topology(5, 1.0, 2).entries.copy()
        W[0, 0] = 0.0
        W[0] /= W[0].sum()
        fb = synth_sparse_kernel(W, strict_support=True)
        assert fb.K[0, 0] == 0.0 and fb.certificate.pass_

    def test_degenerate_combination(self, W6):
        cs = build_constraint_system(W6)
        empty = ConstraintSystem(cs.M_tilde, cs.free_support, cs.column_map, cs.rank,
                                 np.zeros((1, cs.z)))
        with pytest.raises(CombinationDegenerateError):
            combine_kernel(empty, "random")
        trivial = ConstraintSystem(cs.M_tilde, SupportPattern(6, frozenset()), (), 0,
                                   np.zeros((0, 0)))
        with pytest.raises(InfeasibleError):
            combine_kernel(trivial)


class TestEpsilonScale:
    def test_laplacian_direction(self, W6):
        K0 = laplacian_gain(W6, 1.0)
        eps, cert = epsilon_scale(W6, K0, 0.9)
        assert cert.pass_
        # stable region contains (0, alpha_crit); the search brackets its edge within 5%
        assert eps / 0.9 * 1.05 >= alpha_critical(W6)
        eps2, cert2 = epsilon_scale(W6, K0, min(0.9, 0.7437 * 0.9 / eps))
        assert eps2 <= 0.7437 and cert2.pass_

    def test_bauer_fike_safe_start(self, W6):
        prof = spectral_profile(W6)
        cs = build_constraint_system(W6)
        K0 = combine_kernel(cs, "random", 7)
        delta = 1 - prof.r_max
        eps_bf = delta / (2 * prof.kappa_V * np.linalg.norm(K0, 2))
        cert = verify_preservation(W6, eps_bf * K0)
        assert cert.pass_
        assert cert.mu2_modulus <= 1 - delta / 2

    @pytest.mark.parametrize("seed", range(10))
    def test_any_valid_direction_passes(self, W6, seed):
        K0 = combine_kernel(build_constraint_system(W6), "random", seed)
        eps, cert = epsilon_scale(W6, K0, 0.9)
        assert eps > 0 and cert.pass_

    def test_errors(self, W6):
        with pytest.raises(DegenerateInputError):
            epsilon_scale(W6, np.zeros((6, 6)))
        with pytest.raises(InvalidK0Error):
            epsilon_scale(W6, np.eye(6))
        with pytest.raises(InvalidParameterError):
            epsilon_scale(W6, laplacian_gain(W6, 1.0), safety=1.0)


@pytest.mark.parametrize("seed", range(20))
def test_certified_gains_converge(seed):
    # a passing certificate fixes the limit, not the rate; run long enough
    # that the slowest mode has decayed by 1e-12
    W = random_topology(3 + seed % 6, 0.5, seed)
    x0 = default_x0(W.n, seed)
    _, x_star = consensus_point(W, x0)
    for fb in (synth_sparse_kernel(W, seed=seed), synth_laplacian(W, 0.8 * alpha_critical(W))):
        assert fb.certificate.pass_
        horizon = max(500, int(np.ceil(np.log(1e-12) / np.log(fb.certificate.mu2_modulus))))
        e1 = state_error_series(simulate(W.entries + fb.K, x0, horizon), x_star)
        assert e1[-1] <= 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_noiseless_attacker_identity(seed):
    W = random_topology(3 + seed % 6, 1.0, seed)
    K = synth_sparse_kernel(W, seed=seed).K
    x0 = default_x0(W.n, seed + 1)
    Wt = W.entries + K
    if solvability_check(Wt, x0):
        res = ols_estimate(snapshot_split(simulate(Wt, x0, W.n)))
        assert np.linalg.norm(res.W_hat - Wt) <= 1e-8
        assert inference_deviation(res.W_hat, W) == pytest.approx(np.linalg.norm(K, 2), abs=1e-8)


def test_rank1_beta_property():
    for seed in range(30):
        W = random_topology(3 + seed % 6, 0.5, seed)
        fb = synth_rank1(W, default_x0(W.n, seed))
        assert abs(fb.params["beta"] - 1.0) <= 1e-10
