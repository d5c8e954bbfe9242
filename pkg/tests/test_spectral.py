import math

import numpy as np
import pytest

from maxvne.spectral import (
    DensityMatrix,
    DomainError,
    EpsilonFloor,
    FGenerator,
    FloorViolation,
    IndefiniteMatrix,
    InvalidAlpha,
    SymMatrix,
    bregman_divergence,
    f_loss,
    log_loss,
    matrix_function,
    purity,
    quantum_relative_entropy,
    random_density,
    renyi2,
    renyi_entropy,
    trace_entropy,
    vne,
)

LOG2 = math.log(2.0)


def diag_state(*vals):
    return DensityMatrix(np.diag(np.array(vals, dtype=float)))


def rotated(rho_diag, seed=0):
    rng = np.random.default_rng(seed)
    q = np.linalg.qr(rng.normal(size=rho_diag.shape))[0]
    return DensityMatrix(q @ rho_diag @ q.T)


class TestSymMatrix:
    def test_symmetrized_on_construction(self):
        m = SymMatrix([[1.0, 2.0], [0.0, 3.0]])
        assert m.mat[0, 1] == m.mat[1, 0] == 1.0

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(ValueError):
            SymMatrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            SymMatrix([[np.nan, 0.0], [0.0, 1.0]])

    def test_immutable(self):
        m = SymMatrix(np.eye(2))
        with pytest.raises(ValueError):
            m.mat[0, 0] = 5.0


class TestDensityMatrix:
    def test_trace_checked(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.eye(3))

    def test_indefinite_rejected(self):
        mat = np.diag([1.0 + 1e-6, -1e-6])
        with pytest.raises(IndefiniteMatrix):
            DensityMatrix(mat).eigenvalues

    def test_small_negative_drift_clamped(self):
        mat = np.diag([1.0 + 5e-11, -5e-11])
        w = DensityMatrix(mat).eigenvalues
        assert w[0] == 0.0
        assert abs(w.sum() - 1.0) < 1e-15

    def test_eigenvalues_probability_vector(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            rho = random_density(5, rng)
            w = rho.eigenvalues
            assert np.all(w >= 0.0)
            assert abs(w.sum() - 1.0) < 1e-12


class TestVne:
    def test_maximally_mixed(self):
        assert vne(DensityMatrix(np.eye(4) / 4)) == pytest.approx(math.log(4), abs=1e-12)

    def test_pure_state(self):
        assert vne(diag_state(1, 0, 0)) == pytest.approx(0.0, abs=1e-12)
        assert vne(rotated(np.diag([1.0, 0.0, 0.0]))) == pytest.approx(0.0, abs=1e-12)

    def test_direct_scalar_value(self):
        assert vne(diag_state(0.5, 0.25, 0.25)) == pytest.approx(1.5 * LOG2, abs=1e-12)

    def test_bounds_on_random_states(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            s = vne(random_density(n, rng))
            assert -1e-12 <= s <= math.log(n) + 1e-12

    def test_unitary_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            rho = random_density(4, rng)
            q = np.linalg.qr(rng.normal(size=(4, 4)))[0]
            rho_u = DensityMatrix(q @ rho.mat @ q.T)
            assert abs(vne(rho_u) - vne(rho)) < 1e-10

    def test_concavity_spot_check(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = random_density(4, rng), random_density(4, rng)
            for t in (0.25, 0.5, 0.75):
                mix = DensityMatrix(t * a.mat + (1 - t) * b.mat)
                assert vne(mix) >= t * vne(a) + (1 - t) * vne(b) - 1e-10


class TestRenyi:
    def test_uniform_state_any_order(self):
        rho = DensityMatrix(np.eye(5) / 5)
        for alpha in (0.3, 0.5, 2.0, 7.0):
            assert renyi_entropy(rho, alpha) == pytest.approx(math.log(5), abs=1e-12)

    def test_order_two_direct(self):
        assert renyi_entropy(diag_state(0.5, 0.5, 0.0), 2.0) == pytest.approx(LOG2, abs=1e-12)

    def test_pure_state_zero_for_all_orders(self):
        rho = diag_state(1.0, 0.0)
        assert renyi_entropy(rho, 0.5) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, -1.0, 1.0])
    def test_invalid_alpha(self, alpha):
        with pytest.raises(InvalidAlpha):
            renyi_entropy(diag_state(1.0, 0.0), alpha)

    def test_nonincreasing_in_alpha(self):
        rng = np.random.default_rng(4)
        orders = (0.5, 0.9, 1.1, 2.0, 5.0)
        for _ in range(200):
            rho = random_density(int(rng.integers(2, 6)), rng)
            values = [renyi_entropy(rho, a) for a in orders]
            assert all(values[i] >= values[i + 1] - 1e-10 for i in range(len(values) - 1))

    def test_alpha_to_one_limit_is_vne(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            rho = random_density(4, rng, floor=1e-3)
            s = vne(rho)
            assert abs(renyi_entropy(rho, 1.0 + 1e-4) - s) <= 1e-2
            assert abs(renyi_entropy(rho, 1.0 - 1e-4) - s) <= 1e-2


class TestRenyi2:
    def test_uniform(self):
        assert renyi2(DensityMatrix(np.eye(8) / 8)) == pytest.approx(math.log(8), abs=1e-12)

    def test_rank_one_projector(self):
        assert renyi2(rotated(np.diag([1.0, 0.0, 0.0]))) == pytest.approx(0.0, abs=1e-10)

    def test_scalar_purity(self):
        assert renyi2(diag_state(0.7, 0.3)) == pytest.approx(-math.log(0.58), abs=1e-12)

    def test_matches_renyi_entropy_order_two(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            rho = random_density(5, rng)
            assert abs(renyi2(rho) - renyi_entropy(rho, 2.0)) < 1e-12


class TestQuantumRelativeEntropy:
    def test_zero_on_equal_states(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            rho = random_density(4, rng)
            assert abs(quantum_relative_entropy(rho, rho)) < 1e-10

    def test_classical_kl_case(self):
        d = quantum_relative_entropy(diag_state(1.0, 0.0), diag_state(0.5, 0.5))
        assert d == pytest.approx(LOG2, abs=1e-12)

    def test_support_violation_is_infinite(self):
        d = quantum_relative_entropy(diag_state(0.5, 0.5), diag_state(1.0, 0.0))
        assert math.isinf(d)

    def test_klein_inequality(self):
        rng = np.random.default_rng(8)
        for _ in range(500):
            n = int(rng.integers(2, 6))
            rho = random_density(n, rng, floor=1e-3)
            sigma = random_density(n, rng, floor=1e-3)
            d = quantum_relative_entropy(rho, sigma)
            assert d >= -1e-10
            # equality only when the states coincide
            if d <= 1e-10:
                assert np.linalg.norm(rho.mat - sigma.mat) <= 1e-7


class TestLogLoss:
    def test_self_loss_is_entropy(self):
        rng = np.random.default_rng(9)
        eps = EpsilonFloor(1e-3)
        for _ in range(20):
            rho = random_density(4, rng, floor=1e-3)
            assert log_loss(rho, rho, eps) == pytest.approx(vne(rho), abs=1e-12)

    def test_direct_value(self):
        val = log_loss(diag_state(1.0, 0.0), diag_state(0.5, 0.5), EpsilonFloor(0.1))
        assert val == pytest.approx(LOG2, abs=1e-12)

    def test_uniform_pair(self):
        rho = DensityMatrix(np.eye(3) / 3)
        assert log_loss(rho, rho, EpsilonFloor(0.1)) == pytest.approx(math.log(3), abs=1e-12)

    def test_floor_violation(self):
        with pytest.raises(FloorViolation):
            log_loss(diag_state(0.5, 0.5), diag_state(0.999, 0.001), EpsilonFloor(0.01))

    def test_entropy_plus_divergence_decomposition(self):
        rng = np.random.default_rng(10)
        eps = EpsilonFloor(1e-4)
        for _ in range(500):
            n = int(rng.integers(2, 6))
            rho = random_density(n, rng, floor=1e-3)
            sigma = random_density(n, rng, floor=1e-3)
            lhs = log_loss(rho, sigma, eps)
            rhs = vne(rho) + quantum_relative_entropy(rho, sigma)
            assert abs(lhs - rhs) <= 1e-9


class TestFGenerator:
    def test_power_validation(self):
        with pytest.raises(ValueError):
            FGenerator.power(1.0)
        with pytest.raises(ValueError):
            FGenerator.power(-2.0)

    def test_xlogx_zero_limit(self):
        f = FGenerator.xlogx()
        assert f.f(np.array([0.0, 1.0])).tolist() == [0.0, 0.0]

    def test_fprime_domain(self):
        with pytest.raises(DomainError):
            FGenerator.xlogx().fprime(np.array([0.0, 1.0]))
        with pytest.raises(DomainError):
            FGenerator.power(0.5).fprime(np.array([0.0]))
        FGenerator.square().fprime(np.array([0.0]))  # fine

    def test_sub_one_power_is_convex(self):
        # the sign convention must keep the Bregman divergence nonnegative
        f = FGenerator.power(0.5)
        rng = np.random.default_rng(11)
        for _ in range(50):
            rho = random_density(3, rng, floor=1e-2)
            sigma = random_density(3, rng, floor=1e-2)
            assert bregman_divergence(rho, sigma, f) >= -1e-10


class TestTraceEntropy:
    def test_xlogx_equals_vne(self):
        rng = np.random.default_rng(12)
        f = FGenerator.xlogx()
        assert trace_entropy(DensityMatrix(np.eye(2) / 2), f) == pytest.approx(LOG2, abs=1e-12)
        for _ in range(20):
            rho = random_density(4, rng)
            assert abs(trace_entropy(rho, f) - vne(rho)) < 1e-12

    def test_square_is_negative_purity(self):
        rho = DensityMatrix(np.eye(4) / 4)
        assert trace_entropy(rho, FGenerator.square()) == pytest.approx(-0.25, abs=1e-12)
        rng = np.random.default_rng(13)
        for _ in range(20):
            rho = random_density(3, rng)
            assert trace_entropy(rho, FGenerator.square()) == pytest.approx(-purity(rho), abs=1e-12)

    def test_power_three(self):
        val = trace_entropy(diag_state(0.5, 0.5), FGenerator.power(3.0))
        assert val == pytest.approx(-0.25, abs=1e-12)


class TestBregman:
    def test_zero_at_equal_arguments(self):
        rng = np.random.default_rng(14)
        for f in (FGenerator.xlogx(), FGenerator.square(), FGenerator.power(3.0)):
            rho = random_density(4, rng, floor=1e-2)
            assert abs(bregman_divergence(rho, rho, f)) < 1e-10

    def test_square_is_frobenius_distance(self):
        d = bregman_divergence(diag_state(1.0, 0.0), diag_state(0.5, 0.5), FGenerator.square())
        assert d == pytest.approx(0.5, abs=1e-12)
        rng = np.random.default_rng(15)
        for _ in range(20):
            rho, sigma = random_density(4, rng), random_density(4, rng)
            frob = float(np.sum((rho.mat - sigma.mat) ** 2))
            assert bregman_divergence(rho, sigma, FGenerator.square()) == pytest.approx(frob, abs=1e-12)

    def test_xlogx_recovers_relative_entropy(self):
        rng = np.random.default_rng(16)
        f = FGenerator.xlogx()
        for _ in range(50):
            rho = random_density(4, rng, floor=1e-3)
            sigma = random_density(4, rng, floor=1e-3)
            assert abs(bregman_divergence(rho, sigma, f)
                       - quantum_relative_entropy(rho, sigma)) <= 1e-9

    def test_nonnegative(self):
        rng = np.random.default_rng(17)
        for f in (FGenerator.xlogx(), FGenerator.square(), FGenerator.power(3.0)):
            for _ in range(50):
                rho = random_density(3, rng, floor=1e-3)
                sigma = random_density(3, rng, floor=1e-3)
                assert bregman_divergence(rho, sigma, f) >= -1e-10


class TestFLoss:
    def test_minimized_at_rho(self):
        rng = np.random.default_rng(18)
        for f in (FGenerator.xlogx(), FGenerator.square(), FGenerator.power(3.0)):
            rho = random_density(4, rng, floor=1e-2)
            assert f_loss(rho, rho, f) == pytest.approx(trace_entropy(rho, f), abs=1e-12)

    def test_square_direct_evaluation(self):
        rho, sigma = diag_state(1.0, 0.0), diag_state(0.5, 0.5)
        f = FGenerator.square()
        # direct: -Tr(f(sigma) + f'(sigma)(rho - sigma)) = -(0.5 + 0.5) + 0.5
        assert f_loss(rho, sigma, f) == pytest.approx(-0.5, abs=1e-12)
        assert trace_entropy(rho, f) == pytest.approx(-1.0, abs=1e-12)
        assert bregman_divergence(rho, sigma, f) == pytest.approx(0.5, abs=1e-12)

    def test_uniform_xlogx(self):
        rho = DensityMatrix(np.eye(2) / 2)
        assert f_loss(rho, rho, FGenerator.xlogx()) == pytest.approx(LOG2, abs=1e-12)

    def test_entropy_bregman_decomposition(self):
        rng = np.random.default_rng(19)
        for f in (FGenerator.xlogx(), FGenerator.square(), FGenerator.power(3.0)):
            for _ in range(100):
                n = int(rng.integers(2, 5))
                rho = random_density(n, rng, floor=1e-3)
                sigma = random_density(n, rng, floor=1e-3)
                lhs = f_loss(rho, sigma, f)
                rhs = trace_entropy(rho, f) + bregman_divergence(rho, sigma, f)
                assert abs(lhs - rhs) <= 1e-9


class TestMatrixFunction:
    def test_exp_log_inverse_pair(self):
        rng = np.random.default_rng(20)
        sigma = random_density(4, rng, floor=1e-2)
        back = matrix_function(matrix_function(sigma.sym, np.log), np.exp)
        assert np.max(np.abs(back.mat - sigma.mat)) < 1e-8

    def test_log_identity_is_zero(self):
        out = matrix_function(SymMatrix(np.eye(3)), np.log)
        assert np.max(np.abs(out.mat)) < 1e-14

    def test_square_of_diagonal(self):
        out = matrix_function(SymMatrix(np.diag([2.0, 3.0])), lambda w: w**2)
        assert np.allclose(np.diagonal(out.mat), [4.0, 9.0])

    def test_identity_function_roundtrip(self):
        rng = np.random.default_rng(21)
        m = SymMatrix(rng.normal(size=(5, 5)))
        out = matrix_function(m, lambda w: w)
        assert np.linalg.norm(out.mat - m.mat) < 1e-10

    def test_domain_error_on_nonfinite(self):
        with pytest.raises(DomainError):
            matrix_function(SymMatrix(np.diag([1.0, -1.0])), np.log)


class TestEpsilonFloor:
    def test_range_validation(self):
        with pytest.raises(ValueError):
            EpsilonFloor(0.0)
        with pytest.raises(ValueError):
            EpsilonFloor(1.0)

    def test_dimension_feasibility(self):
        EpsilonFloor(0.2).check_dim(4)
        with pytest.raises(ValueError):
            EpsilonFloor(0.3).check_dim(4)
