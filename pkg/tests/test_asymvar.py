import numpy as np
import pytest

from ojainfer import (
    DegenerateGapError,
    MomentEstimates,
    SeedSpec,
    build_r0_v,
    build_rn,
    eigendecompose,
    empirical_hajek_covariance,
    estimate_mtilde,
    hajek_projection,
    learning_rate,
)
from ojainfer.asymvar import ck_diagnostic, contraction_factors, with_rn
from ojainfer.synth import vector_sampler


def constant_matrix_sampler(sigma):
    d = sigma.shape[0]

    def draw(rng, m):
        return np.broadcast_to(sigma, (m, d, d)).copy()

    return draw


def closed_form_mtilde(sigma, root, eigen):
    """Fourth-moment formula for X = root @ Z with Z i.i.d. uniform, unit
    variance: E[A M A] = R(2N + tr(N) I + (mu4 - 3) diag(N)) R for N = R M R,
    with mu4 = 9/5 for the uniform law on (-sqrt(3), sqrt(3))."""
    v1 = eigen.leading
    lam1 = eigen.eigenvalues[0]
    w = root @ v1
    n_mat = np.outer(w, w)
    mu4 = 9.0 / 5.0
    inner = 2.0 * n_mat + np.trace(n_mat) * np.eye(len(w)) + (mu4 - 3.0) * np.diag(np.diag(n_mat))
    e_ava = root @ inner @ root
    vp = eigen.tail_basis
    return vp.T @ (e_ava - lam1**2 * np.outer(v1, v1)) @ vp


class TestEstimateMtilde:
    def test_degenerate_sampler_gives_zero(self, synth3):
        spec, sigma, eigen, root = synth3
        mom = estimate_mtilde(constant_matrix_sampler(sigma), eigen, 200, SeedSpec(1))
        np.testing.assert_allclose(mom.mtilde, np.zeros((2, 2)), atol=1e-12)
        np.testing.assert_allclose(mom.mc_stderr, np.zeros((2, 2)), atol=1e-12)
        assert mom.m2 <= 1e-10 and mom.m4 <= 1e-10 and mom.vstat <= 1e-12

    def test_degenerate_gap_rejected(self):
        eigen = eigendecompose(np.eye(2))
        with pytest.raises(DegenerateGapError):
            estimate_mtilde(constant_matrix_sampler(np.eye(2)), eigen, 200, SeedSpec(2))

    def test_sample_count_floor(self, synth3):
        spec, sigma, eigen, root = synth3
        with pytest.raises(ValueError):
            estimate_mtilde(vector_sampler(spec, root), eigen, 50, SeedSpec(3))

    def test_matches_closed_form_fourth_moment(self, synth3, moments3):
        spec, sigma, eigen, root = synth3
        oracle = closed_form_mtilde(sigma, root, eigen)
        assert np.all(np.abs(moments3.mtilde - oracle) <= 5.0 * np.maximum(moments3.mc_stderr, 1e-12))

    def test_split_sample_agreement(self, synth3, moments3):
        spec, sigma, eigen, root = synth3
        other = estimate_mtilde(vector_sampler(spec, root), eigen, 10**6, SeedSpec(111))
        combined = np.sqrt(moments3.mc_stderr**2 + other.mc_stderr**2)
        assert np.all(np.abs(moments3.mtilde - other.mtilde) <= 4.0 * combined)

    def test_moment_ordering(self, moments3):
        assert np.sqrt(moments3.vstat) <= moments3.m2 * (1.0 + 1e-9)
        assert moments3.m2 <= moments3.m4

    def test_type_invariants_enforced(self):
        with pytest.raises(ValueError):
            MomentEstimates(m2=2.0, m4=1.0, vstat=1.0, mtilde=np.eye(2),
                            mc_samples=100, mc_stderr=np.zeros((2, 2)))
        with pytest.raises(ValueError):
            MomentEstimates(m2=1.0, m4=2.0, vstat=1.0,
                            mtilde=np.array([[1.0, 0.5], [0.2, 1.0]]),
                            mc_samples=100, mc_stderr=np.zeros((2, 2)))


def make_moments(mtilde):
    p = mtilde.shape[0]
    return MomentEstimates(m2=1.0, m4=2.0, vstat=1.0, mtilde=mtilde,
                           mc_samples=1000, mc_stderr=np.zeros((p, p)))


class TestBuildR0V:
    def test_two_dimensional_algebra(self):
        eigen = eigendecompose(np.diag([3.0, 1.0]))
        mtilde = np.array([[0.8]])
        asym = build_r0_v(make_moments(mtilde), eigen)
        # Single entry: R0 = mtilde / (2*(l1 - l2)); V in the eigenbasis has
        # the one nonzero entry R0 / (l1 - l2).
        assert asym.r0[0, 0] == pytest.approx(0.8 / 4.0, rel=1e-14)
        v_eig = eigen.eigenvectors.T @ asym.v @ eigen.eigenvectors
        assert v_eig[1, 1] == pytest.approx(0.8 / (2.0 * (3.0 - 1.0) ** 2), rel=1e-12)
        assert abs(v_eig[0, 0]) <= 1e-14

    def test_zero_moment_gives_zero(self, synth3):
        spec, sigma, eigen, root = synth3
        asym = build_r0_v(make_moments(np.zeros((2, 2))), eigen)
        np.testing.assert_array_equal(asym.v, np.zeros((3, 3)))

    def test_leading_direction_annihilated(self):
        rng = SeedSpec(7).rng()
        a = rng.standard_normal((4, 4))
        eigen = eigendecompose(a @ a.T + np.diag([4.0, 0, 0, 0]))
        raw = rng.standard_normal((3, 3))
        asym = build_r0_v(make_moments(raw @ raw.T), eigen)
        assert np.max(np.abs(asym.v @ eigen.leading)) <= 1e-10
        assert np.all(np.diag(asym.v) >= -1e-12)

    def test_degenerate_gap_rejected(self):
        eigen = eigendecompose(np.eye(3))
        with pytest.raises(DegenerateGapError):
            build_r0_v(make_moments(np.eye(2)), eigen)

    def test_trace_chain(self, synth5, asym5):
        spec, sigma, eigen, root = synth5
        moments, asym = asym5
        lam = eigen.eigenvalues
        direct = np.sum(np.diag(moments.mtilde) / (2.0 * (lam[0] - lam[1:])))
        assert np.trace(asym.r0) == pytest.approx(direct, abs=1e-10)
        assert np.trace(asym.r0) <= np.trace(moments.mtilde) / (2.0 * eigen.gap) + 1e-10

    def test_psd_with_jitter(self, asym5):
        moments, asym = asym5
        np.linalg.cholesky(asym.v + 1e-10 * np.eye(asym.v.shape[0]))


class TestBuildRn:
    def test_single_step(self, synth3, moments3):
        spec, sigma, eigen, root = synth3
        eta = 0.001
        rn = build_rn(moments3, eigen, 1, eta)
        expected = moments3.mtilde / (1.0 + eta * eigen.eigenvalues[0]) ** 2
        np.testing.assert_allclose(rn, expected, rtol=1e-12)

    def test_zero_moment(self, synth3):
        spec, sigma, eigen, root = synth3
        rn = build_rn(make_moments(np.zeros((2, 2))), eigen, 50, 0.001)
        np.testing.assert_array_equal(rn, np.zeros((2, 2)))

    def test_eta_bound_enforced(self, synth3, moments3):
        spec, sigma, eigen, root = synth3
        with pytest.raises(ValueError):
            build_rn(moments3, eigen, 10, 1.0 / eigen.eigenvalues[0])

    def test_scaled_block_approaches_limit(self, synth3, moments3):
        # Frobenius deviation of eta * Rn from R0 obeys the first-order
        # bound (eta * l1 / gap) * ||mtilde||_F / 2 once the transient died.
        spec, sigma, eigen, root = synth3
        asym = build_r0_v(moments3, eigen)
        gap = eigen.gap
        lam1 = eigen.eigenvalues[0]
        n = 30_000  # eta*n*gap = 2 ln n > 20
        eta = learning_rate(n, gap, 2.0)
        dev = np.linalg.norm(eta * build_rn(moments3, eigen, n, eta) - asym.r0, "fro")
        bound = 5.0 * (eta * lam1 / gap) * np.linalg.norm(moments3.mtilde, "fro") / 2.0
        assert dev <= bound

    def test_contraction_factors_in_unit_interval(self, synth5):
        spec, sigma, eigen, root = synth5
        dk = contraction_factors(eigen, 0.001)
        assert np.all(dk > 0.0) and np.all(dk < 1.0)

    def test_with_rn_attaches_block(self, synth3, moments3):
        spec, sigma, eigen, root = synth3
        asym = build_r0_v(moments3, eigen)
        full = with_rn(asym, moments3, eigen, 100, 0.001)
        assert full.rn is not None and full.n == 100
        payload = full.to_dict()
        assert payload["rn"] is not None


class TestEmpiricalHajekCovariance:
    def test_degenerate_sampler(self, synth3):
        spec, sigma, eigen, root = synth3
        emp = empirical_hajek_covariance(constant_matrix_sampler(sigma), eigen, 10, 0.01,
                                         trials=5, seed=SeedSpec(13))
        np.testing.assert_allclose(emp.matrix, np.zeros((3, 3)), atol=1e-14)

    def test_single_trial_is_one_outer_product(self):
        # Diagonal instance: the eigendecomposition is exact, so the mean of
        # one trial must equal the single outer product bit for bit.
        sigma = np.diag([3.0, 1.0, 0.5])
        eigen = eigendecompose(sigma)
        n, eta = 7, 0.01
        rng = SeedSpec(14).rng()
        fixed = rng.standard_normal((n, 3, 3))
        fixed = (fixed + fixed.transpose(0, 2, 1)) / 2.0

        def sampler(rng_, m):
            return fixed

        emp = empirical_hajek_covariance(sampler, eigen, n, eta, trials=1, seed=SeedSpec(14))
        psi = hajek_projection(fixed, sigma, eigen, eta, eigen.leading)
        np.testing.assert_array_equal(emp.matrix, np.outer(psi, psi))
        np.testing.assert_array_equal(emp.stderr, np.zeros((3, 3)))

    def test_vector_path_matches_matrix_path(self, synth3):
        spec, sigma, eigen, root = synth3
        n, eta = 9, 0.002
        x = vector_sampler(spec, root)(SeedSpec(15).child(0).rng(), n)

        def fixed_vec(rng, m):
            return x

        def fixed_mat(rng, m):
            return x[:, :, None] * x[:, None, :]

        a = empirical_hajek_covariance(fixed_vec, eigen, n, eta, 1, SeedSpec(16))
        b = empirical_hajek_covariance(fixed_mat, eigen, n, eta, 1, SeedSpec(16))
        np.testing.assert_allclose(a.matrix, b.matrix, rtol=1e-10, atol=1e-18)


class TestCkDiagnostic:
    def test_formula(self):
        vals = np.array([0.4, 0.9])
        out = ck_diagnostic(vals, eta=0.1, gap=2.0, m2=4.0)
        np.testing.assert_allclose(out, np.sqrt(vals / 0.1 * 2.0 / 16.0))

    def test_positivity_guards(self):
        with pytest.raises(ValueError):
            ck_diagnostic(np.array([1.0]), eta=0.0, gap=1.0, m2=1.0)
