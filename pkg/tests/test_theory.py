import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtgrad.quadprob import SpectrumSpec, attach_random_minimizer, diagonal_problem, generate_spectrum
from qtgrad.solver import SolverConfig, random_start, run_algorithm1, run_fixed_rule
from qtgrad.stepsize import PsiSpec
from qtgrad.theory import (
    SpectralWeights,
    check_family_stepsize_limit,
    check_property_b,
    check_tilde_limit,
    eigencomponent_snapshot,
    envelope_constants,
    h_weights,
    iterate_T,
    iterate_T_until,
    phi_ratio_deviation,
    rlinear_envelope,
    transform_T,
    zigzag_report,
)


def linear_spectrum_problem(n, seed=0):
    return generate_spectrum(SpectrumSpec(1, float(n), n, seed=seed))


def long_run(problem, rule, iters, psi=PsiSpec(), **kw):
    cfg = SolverConfig(epsilon=1e-300, max_iter=iters, psi=psi, **kw)
    return run_fixed_rule(problem, np.ones(problem.dim), rule, cfg)


class TestWeights:
    @settings(max_examples=200, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(1.0001, 1e6))
    def test_h_sum(self, lo, ratio):
        h1, h2 = h_weights(lo, lo * ratio)
        assert abs(h1 + h2 - 1) <= 1e-14
        assert 0.5 < h1 < 0.75 and 0.25 < h2 < 0.5

    def test_one_step(self):
        tp = transform_T(SpectralWeights(np.array([0.5, 0.5]), np.array([1.0, 3.0])))
        np.testing.assert_allclose(tp.p, [0.723607, 0.276393], atol=5e-7)
        g = math.sqrt(5)
        ref = np.array([(1 - g) ** 2, (3 - g) ** 2]) / ((1 - g) ** 2 + (3 - g) ** 2)
        np.testing.assert_allclose(tp.p, ref, rtol=1e-14)

    def test_two_point_limit(self):
        w = iterate_T(SpectralWeights(np.array([0.5, 0.5]), np.array([1.0, 3.0])), 200)
        np.testing.assert_allclose(w.p, [0.625, 0.375], atol=1e-8)

    def test_interior_vanishes(self):
        w0 = SpectralWeights(np.array([0.3, 0.4, 0.3]), np.array([1.0, 2.0, 4.0]))
        w, k = iterate_T_until(w0, tol=1e-8)
        assert w.p[1] <= 1e-8 and k < 10**4
        np.testing.assert_allclose(w.p, w0.limit, atol=1e-8)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 20), st.integers(0, 2**32 - 1))
    def test_simplex_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        lam = np.sort(rng.uniform(1, 100, n))
        p = rng.uniform(0.01, 1, n)
        w = transform_T(SpectralWeights(p / p.sum(), lam))
        assert np.all(w.p >= 0)
        assert abs(w.p.sum() - 1) <= 1e-12

    def test_all_mass_at_gamma(self):
        with pytest.raises(ValueError):
            transform_T(SpectralWeights(np.array([0.0, 1.0, 0.0]), np.array([1.0, 2.0, 3.0])))

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            SpectralWeights(np.array([0.5, 0.6]), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            SpectralWeights(np.array([0.5, 0.5]), np.array([2.0, 1.0]))


class TestZigzag:
    def test_snapshot_eigenvector(self):
        p = diagonal_problem([1.0, 2.0, 5.0])
        np.testing.assert_array_equal(eigencomponent_snapshot(p, [-3.0, 0, 0]), [-1, 0, 0])

    def test_snapshot_zero(self):
        with pytest.raises(ValueError):
            eigencomponent_snapshot(diagonal_problem([1.0, 2.0]), [0.0, 0.0])

    def test_snapshot_dense_rejected(self):
        from qtgrad.quadprob import dense_problem
        with pytest.raises(ValueError):
            eigencomponent_snapshot(dense_problem(np.eye(2)), [1.0, 0.0])

    def test_dai_yang_limit(self):
        p = linear_spectrum_problem(10)
        tr = long_run(p, "dai_yang", 400, record_gradients=True)
        rep = zigzag_report(tr, p)
        assert abs(rep.h1 + rep.h2 - 1) <= 1e-14
        snaps = np.array([eigencomponent_snapshot(p, g) for g in tr.gradients[300::2]])
        np.testing.assert_allclose(np.abs(snaps[:, 0]), math.sqrt(rep.h1), atol=1e-3)
        np.testing.assert_allclose(np.abs(snaps[:, -1]), math.sqrt(rep.h2), atol=1e-3)
        assert np.max(np.abs(snaps[:, 1:-1])) <= 1e-3
        assert rep.deviation[-1] <= 1e-3
        assert rep.last_component_alternates
        assert rep.first_component_constant

    @pytest.mark.parametrize("psi", [PsiSpec.identity(), PsiSpec.monomial(1)])
    def test_psi_family_limit(self, psi):
        p = linear_spectrum_problem(10, seed=1)
        tr = long_run(p, "psi", 600, psi=psi, record_gradients=True)
        rep = zigzag_report(tr, p, psi)
        assert rep.deviation[-1] <= 1e-3
        assert rep.last_component_alternates and rep.first_component_constant

    def test_needs_gradients(self):
        p = linear_spectrum_problem(10)
        with pytest.raises(ValueError):
            zigzag_report(long_run(p, "mg", 5), p)


class TestStepLimits:
    def test_dai_yang_limit(self):
        p = linear_spectrum_problem(100)
        dev = check_family_stepsize_limit(long_run(p, "dai_yang", 500), p)
        assert dev.size == 500 and dev[-1] < 1e-3

    def test_two_dim_zigzag(self):
        p = diagonal_problem([1.0, 3.0])
        dev = check_family_stepsize_limit(long_run(p, "dai_yang", 200), p)
        assert dev[-1] <= 1e-10  # alpha -> 2 / (1 + 3) = 0.5

    def test_eigenvector_start_constant(self):
        p = diagonal_problem([1.0, 4.0, 9.0])
        tr = run_fixed_rule(p, [0.0, 1.0, 0.0], "dai_yang", SolverConfig(epsilon=1e-12))
        np.testing.assert_array_equal(tr.alphas, [0.25])

    @pytest.mark.parametrize("rule", ["mg", "dai_yang"])
    def test_tilde_limit_long_run(self, rule):
        p = linear_spectrum_problem(1000)
        dev = check_tilde_limit(long_run(p, rule, 100, observe_tilde=True), p)
        assert dev.size == 101 and dev[100] < 1e-3
        assert dev[100] < dev[0]

    @pytest.mark.parametrize("psi", [PsiSpec.identity(), PsiSpec.monomial(1), PsiSpec.monomial(2)])
    def test_tilde_limit_family(self, psi):
        p = linear_spectrum_problem(200, seed=2)
        tr = long_run(p, "psi", 300, psi=psi, observe_tilde=True, observer_psi=psi)
        dev = check_tilde_limit(tr, p) * p.known_extremes[1]
        finite = dev[np.isfinite(dev)]
        assert finite[-1] < 1e-3

    def test_tilde_two_dim_exact(self):
        p = diagonal_problem([1.0, 6.0])
        tr = run_fixed_rule(p, [1.0, 1.0], "dai_yang",
                            SolverConfig(epsilon=1e-300, max_iter=5, observe_tilde=True))
        np.testing.assert_allclose(tr.alpha_tilde, 1 / 6, rtol=1e-10)

    def test_tilde_needs_observer(self):
        p = linear_spectrum_problem(10)
        with pytest.raises(ValueError):
            check_tilde_limit(long_run(p, "mg", 3), p)

    def test_phi_ratios(self):
        p = linear_spectrum_problem(50, seed=3)
        tr = long_run(p, "dai_yang", 400, record_gradients=True)
        dev = phi_ratio_deviation(tr, p)
        assert dev.shape == (401, 2)
        assert np.all(dev[-1] < 1e-2)


class TestEnvelope:
    def test_theta(self):
        p = diagonal_problem(np.linspace(1, 10, 5))
        theta, sigma, C = envelope_constants(np.ones((5, 5)), p.matrix, 3)
        assert theta == pytest.approx(0.9)
        np.testing.assert_allclose(sigma, np.maximum(p.matrix - 1, 1 - p.matrix / 10))
        assert C[0] == 1.0

    def test_first_component_rate(self):
        # |g^(1)| shrinks by at least theta per step when 1/l_n <= alpha <= 1/l_1.
        p = attach_random_minimizer(generate_spectrum(SpectrumSpec(1, 20, 30, seed=0)), 0)
        tr = run_algorithm1(p, random_start(p, 0), SolverConfig(epsilon=1e-10, record_gradients=True))
        theta = 1 - 1 / 20
        g1 = np.abs(tr.gradients[:, 0])
        assert np.all(g1[1:] <= theta * g1[:-1] * (1 + 1e-12) + 1e-300)

    @pytest.mark.parametrize("seed", range(4))
    def test_algorithm1_envelope(self, seed):
        p = generate_spectrum(SpectrumSpec(1, 100, 50, seed=seed), random_minimizer=True)
        tr = run_algorithm1(p, random_start(p, seed), SolverConfig(epsilon=1e-8, record_gradients=True))
        rep = rlinear_envelope(tr, p, 5)
        assert rep.holds
        assert rep.C[0] == abs(tr.gradients[0, 0])

    def test_violation_detected(self):
        p = diagonal_problem([1.0, 2.0, 4.0])
        tr = run_fixed_rule(p, np.ones(3), "sd", SolverConfig(max_iter=5, record_gradients=True))
        grads = tr.gradients.copy()
        grads[4, 0] = 10.0  # breaks the first-component bound
        tr.gradients = grads
        assert not rlinear_envelope(tr, p, 2).holds


class TestPropertyB:
    def test_bb1(self):
        p = attach_random_minimizer(generate_spectrum(SpectrumSpec(1, 100, 40, seed=1)), 1)
        tr = run_fixed_rule(p, random_start(p, 1), "bb1", SolverConfig(epsilon=1e-8, record_gradients=True))
        rep = check_property_b(tr, p, m=2, psis=(PsiSpec.identity(),))
        assert rep.holds
        # BB1 equals the previous SD step, so v(k) = k - 1 is a witness.
        assert all(w[0] in (k, k - 1) for k, w in enumerate(rep.witness) if k > 0)

    def test_sd_equality(self):
        p = linear_spectrum_problem(20)
        tr = long_run(p, "sd", 30, record_gradients=True)
        rep = check_property_b(tr, p, m=1, psis=(PsiSpec.identity(),), tol=1e-12)
        assert rep.holds and all(w == (k, 0) for k, w in enumerate(rep.witness))

    def test_algorithm1(self):
        p = attach_random_minimizer(generate_spectrum(SpectrumSpec(1, 100, 50, seed=2)), 2)
        tr = run_algorithm1(p, random_start(p, 2), SolverConfig(epsilon=1e-8, record_gradients=True))
        assert check_property_b(tr, p, m=6).holds

    def test_long_step_fails(self):
        p = diagonal_problem([1.0, 10.0])
        tr = run_fixed_rule(p, [1.0, 1.0], lambda ctx: 0.99, SolverConfig(max_iter=3, record_gradients=True))
        rep = check_property_b(tr, p, m=1, psis=(PsiSpec.identity(),))
        assert not rep.holds
