import numpy as np
import pytest

from argap.arcore import ArFilter
from argap.errors import InvalidInputError
from argap.switching import (
    PosteriorWeights,
    SwitchingArModel,
    brute_force_posteriors,
    design_matrix,
    e_step,
    fit_em,
    init_split,
    m_step,
    observed_mspe,
    simulate,
)


def two_state_model(p=0.95, separation=1.0):
    filters = [
        ArFilter(np.array([-0.6]), intercept=-separation, noise_variance=1.0),
        ArFilter(np.array([0.4]), intercept=separation, noise_variance=0.5),
    ]
    T = np.array([[p, 1 - p], [1 - p, p]])
    return SwitchingArModel(filters, T, np.array([0.5, 0.5]))


def three_state_model():
    filters = [
        ArFilter(np.array([-0.9, 0.2]), intercept=0.0, noise_variance=1.0),
        ArFilter(np.array([0.5, 0.1]), intercept=-2.0, noise_variance=0.3),
        ArFilter(np.array([-0.1, -0.4]), intercept=2.0, noise_variance=2.0),
    ]
    T = np.array([[0.9, 0.05, 0.05], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]])
    return SwitchingArModel(filters, T, np.array([1 / 3, 1 / 3, 1 / 3]))


class TestModel:
    def test_validation(self):
        f = ArFilter(np.array([-0.5]))
        with pytest.raises(InvalidInputError):
            SwitchingArModel([f, f], np.array([[0.9, 0.2], [0.5, 0.5]]), np.array([0.5, 0.5]))
        with pytest.raises(InvalidInputError):
            SwitchingArModel([f, f], np.eye(2), np.array([0.9, 0.2]))
        with pytest.raises(InvalidInputError):
            SwitchingArModel([f, ArFilter(np.array([-0.5, 0.1]))], np.eye(2), np.array([0.5, 0.5]))

    def test_roundtrip(self, tmp_path):
        model = two_state_model()
        path = tmp_path / "model.json"
        model.save(path)
        back = SwitchingArModel.load(path)
        assert np.array_equal(back.gamma_matrix(), model.gamma_matrix())
        assert np.array_equal(back.transition, model.transition)
        assert np.array_equal(back.variances, model.variances)

    def test_gamma_matrix(self):
        g = two_state_model().gamma_matrix()
        assert g.shape == (2, 2)
        assert g[0, 0] == -1.0 and g[0, 1] == -0.6


class TestDesignMatrix:
    def test_lagged_rows(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        X = design_matrix(x, 2, warmup=np.array([-1.0, -2.0]))
        # row n is [1, x(n-1), x(n-2)]; warmup supplies x(-1), x(0)
        assert np.array_equal(X[0], [1.0, -2.0, -1.0])
        assert np.array_equal(X[1], [1.0, 1.0, -2.0])
        assert np.array_equal(X[3], [1.0, 3.0, 2.0])

    def test_zero_warmup_default(self):
        X = design_matrix(np.array([5.0, 6.0]), 1)
        assert np.array_equal(X, [[1.0, 0.0], [1.0, 5.0]])

    def test_bad_warmup(self):
        with pytest.raises(InvalidInputError):
            design_matrix(np.arange(4.0), 2, warmup=np.zeros(3))


class TestSimulate:
    def test_shapes_and_determinism(self):
        model = two_state_model()
        x1, s1 = simulate(model, 500, seed=3)
        x2, s2 = simulate(model, 500, seed=3)
        assert x1.shape == (500,) and s1.shape == (500,)
        assert np.array_equal(x1, x2) and np.array_equal(s1, s2)
        assert not np.array_equal(x1, simulate(model, 500, seed=4)[0])

    def test_dwell_time(self):
        # diagonal 0.98 means a mean sojourn of 1/0.02 = 50 steps
        model = two_state_model(p=0.98)
        _, states = simulate(model, 200000, seed=5)
        runs = np.diff(np.flatnonzero(np.diff(states) != 0))
        assert abs(np.mean(runs) - 50.0) / 50.0 < 0.05

    def test_single_state_is_plain_ar(self):
        f = ArFilter(np.array([-0.7]), intercept=0.5, noise_variance=1.0)
        model = SwitchingArModel([f], np.array([[1.0]]), np.array([1.0]))
        x, states = simulate(model, 2000, seed=6)
        assert np.all(states == 0)
        # residuals recovered from the known filter are standard normal
        X = design_matrix(x, 1)
        eps = x + X @ np.array([0.5, -0.7])
        assert abs(eps.mean()) < 0.1 and abs(eps.var() - 1.0) < 0.1

    def test_warmup_enters_first_samples(self):
        model = two_state_model()
        xa, _ = simulate(model, 10, warmup=np.zeros(1), seed=7)
        xb, _ = simulate(model, 10, warmup=np.array([3.0]), seed=7)
        assert xa[0] != xb[0]


class TestEStep:
    @pytest.mark.parametrize("M,N", [(2, 6), (3, 7)])
    def test_matches_brute_force(self, M, N):
        model = two_state_model() if M == 2 else three_state_model()
        x, _ = simulate(model, N, seed=M)
        weights, ll = e_step(model, x)
        bf_weights, bf_ll = brute_force_posteriors(model, x)
        assert ll == pytest.approx(bf_ll, abs=1e-10)
        assert np.max(np.abs(weights.w - bf_weights.w)) < 1e-10
        assert np.max(np.abs(weights.g - bf_weights.g)) < 1e-10

    def test_normalization_invariants(self):
        model = three_state_model()
        x, _ = simulate(model, 40, seed=9)
        weights, _ = e_step(model, x)
        assert np.allclose(weights.w.sum(axis=(1, 2)), 1.0, atol=1e-12)
        assert np.allclose(weights.g.sum(axis=1), 1.0, atol=1e-12)
        # pairwise coherence: column sums of w[n] equal g[n]
        assert np.allclose(weights.w.sum(axis=1), weights.g, atol=1e-12)

    def test_single_state_loglik_is_gaussian(self):
        f = ArFilter(np.array([-0.5]), intercept=0.2, noise_variance=1.3)
        model = SwitchingArModel([f], np.array([[1.0]]), np.array([1.0]))
        x, _ = simulate(model, 50, seed=10)
        _, ll = e_step(model, x)
        X = design_matrix(x, 1)
        resid = x + X @ np.array([0.2, -0.5])
        direct = -0.5 * np.sum(np.log(2 * np.pi * 1.3) + resid**2 / 1.3)
        assert ll == pytest.approx(direct, abs=1e-10)

    def test_short_series_rejected(self):
        model = three_state_model()
        with pytest.raises(InvalidInputError):
            e_step(model, np.array([1.0, 2.0]))


class TestMStep:
    def test_hard_weights_reduce_to_ols(self):
        # all posterior mass on one state: the update is plain least squares
        model = two_state_model()
        x, _ = simulate(model, 300, seed=11)
        N = x.size
        g = np.zeros((N, 2))
        g[:, 0] = 1.0
        w = np.zeros((N, 2, 2))
        w[:, 0, 0] = 1.0
        w[0] = np.full((2, 1), 0.5) * g[0][None, :]
        new, ridge = m_step(PosteriorWeights(w=w, g=g), x, 1)
        assert ridge  # the empty second state needs the ridge fallback
        X = design_matrix(x, 1)
        gamma, *_ = np.linalg.lstsq(X, -x, rcond=None)
        assert np.allclose(new.gamma_matrix()[0], gamma, atol=1e-9)
        resid = x + X @ gamma
        assert new.variances[0] == pytest.approx(float(resid @ resid) / N, abs=1e-12)
        assert np.allclose(new.transition[0], [1.0, 0.0])

    def test_hand_built_binary_weights(self):
        # two regimes split by hand: each state fits its own segment
        x = np.array([1.0, 1.1, 0.9, 1.0, 5.0, 5.1, 4.9, 5.0])
        N = x.size
        g = np.zeros((N, 2))
        g[:4, 0] = 1.0
        g[4:, 1] = 1.0
        w = np.zeros((N, 2, 2))
        for n in range(1, N):
            w[n, np.argmax(g[n - 1]), np.argmax(g[n])] = 1.0
        w[0] = np.full((2, 1), 0.5) * g[0][None, :]
        new, _ = m_step(PosteriorWeights(w=w, g=g), x, 1)
        X = design_matrix(x, 1)
        for m, rows in enumerate((slice(0, 4), slice(4, 8))):
            gamma, *_ = np.linalg.lstsq(X[rows], -x[rows], rcond=None)
            assert np.allclose(new.gamma_matrix()[m], gamma, atol=1e-9)
        # transitions: 3 stays in 0, one 0->1 jump, 3 stays in 1
        assert np.allclose(new.transition, [[0.75, 0.25], [0.0, 1.0]])
        assert np.allclose(new.initial, [1.0, 0.0])

    def test_qfunction_optimality(self):
        # the M-step maximizes the EM surrogate: perturbations cannot beat it
        model = two_state_model()
        x, _ = simulate(model, 200, seed=12)
        weights, _ = e_step(model, x)
        new, _ = m_step(weights, x, 1)
        X = design_matrix(x, 1)

        def q_regression(gam, var):
            resid = x[:, None] + X @ gam.T
            return float(
                np.sum(weights.g * (-0.5 * (np.log(2 * np.pi * var)[None, :] + resid**2 / var[None, :])))
            )

        base = q_regression(new.gamma_matrix(), new.variances)
        rng = np.random.default_rng(0)
        for _ in range(20):
            gp = new.gamma_matrix() + 1e-3 * rng.standard_normal((2, 2))
            vp = new.variances * np.exp(1e-3 * rng.standard_normal(2))
            assert q_regression(gp, vp) <= base + 1e-12

    def test_em_monotone_loglik(self):
        model = two_state_model()
        x, _ = simulate(model, 400, seed=13)
        start = two_state_model(p=0.7, separation=0.3)
        lls = []
        cur = start
        for _ in range(25):
            weights, ll = e_step(cur, x)
            lls.append(ll)
            cur, _ = m_step(weights, x, 1)
        assert np.all(np.diff(lls) > -1e-8)


class TestFitEm:
    def test_recovers_two_state_model(self):
        model = two_state_model(p=0.97, separation=2.0)
        x, _ = simulate(model, 4000, seed=14)
        inits = init_split(x, 1, 2, seed=0)
        fit = fit_em(x, 2, 1, inits[1])
        assert fit.converged
        got = fit.model.gamma_matrix()
        want = model.gamma_matrix()
        # align states by intercept sign
        order = np.argsort(got[:, 0])
        assert np.allclose(got[order], want, atol=0.15)
        assert np.allclose(np.sort(fit.model.variances), [0.5, 1.0], atol=0.15)
        assert fit.model.transition[order[0], order[0]] > 0.9

    def test_loglik_trace_monotone(self):
        model = two_state_model()
        x, _ = simulate(model, 800, seed=15)
        fit = fit_em(x, 2, 1, init_split(x, 1, 2, seed=0)[1])
        assert np.all(np.diff(fit.loglik_trace) > -1e-6 * np.abs(fit.loglik_trace[0]))
        assert fit.n_iter == len(fit.loglik_trace)

    def test_state_permutation_equivariance(self):
        model = two_state_model()
        x, _ = simulate(model, 600, seed=16)
        init = init_split(x, 1, 2, seed=0)[1]
        perm = SwitchingArModel(
            [init.filters[1], init.filters[0]],
            init.transition[::-1, ::-1].copy(),
            init.initial[::-1].copy(),
        )
        fa = fit_em(x, 2, 1, init)
        fb = fit_em(x, 2, 1, perm)
        assert fa.loglik == pytest.approx(fb.loglik, rel=1e-8)
        assert np.allclose(
            np.sort(fa.model.gamma_matrix(), axis=0),
            np.sort(fb.model.gamma_matrix(), axis=0),
            atol=1e-6,
        )

    def test_too_short_rejected(self):
        with pytest.raises(InvalidInputError):
            fit_em(np.ones(5), 2, 1, two_state_model())

    def test_shape_mismatch_rejected(self):
        x, _ = simulate(two_state_model(), 100, seed=17)
        with pytest.raises(InvalidInputError):
            fit_em(x, 3, 1, two_state_model())


class TestObservedMspe:
    def test_true_model_approaches_mean_variance(self):
        # with sharp posteriors the MSPE estimates E[sigma^2_y(n)]
        model = two_state_model(p=0.98, separation=3.0)
        x, states = simulate(model, 20000, seed=18)
        weights, _ = e_step(model, x)
        fit_like = fit_em(x, 2, 1, init_split(x, 1, 2, seed=0)[1])
        expected = np.mean(model.variances[states])
        assert abs(fit_like.mspe - expected) / expected < 0.1

    def test_recompute_matches_cached(self):
        model = two_state_model()
        x, _ = simulate(model, 500, seed=19)
        fit = fit_em(x, 2, 1, init_split(x, 1, 2, seed=0)[1])
        fresh = observed_mspe(FitResult_like(fit), x)
        assert fresh == pytest.approx(fit.mspe, rel=1e-12)


def FitResult_like(fit):
    """Copy of a fit with the cached posteriors dropped."""
    import copy

    out = copy.copy(fit)
    out.weights = None
    return out


class TestInitSplit:
    def test_sizes_and_defaults(self):
        x, _ = simulate(three_state_model(), 800, seed=20)
        models = init_split(x, 2, 4, seed=1)
        assert len(models) == 4
        for M, model in enumerate(models, start=1):
            assert model.n_states == M and model.order == 2
            assert np.allclose(model.transition, 1.0 / M)

    def test_m1_is_global_ls(self):
        x, _ = simulate(two_state_model(), 400, seed=21)
        model = init_split(x, 1, 1, seed=0)[0]
        X = design_matrix(x, 1)
        gamma, *_ = np.linalg.lstsq(X, -x, rcond=None)
        assert np.allclose(model.gamma_matrix()[0], gamma, atol=1e-9)

    def test_incremental_nesting(self):
        x, _ = simulate(three_state_model(), 1000, seed=22)
        models = init_split(x, 2, 3, seed=2)
        g2 = models[1].gamma_matrix()
        g3 = models[2].gamma_matrix()
        # the M-state init keeps the (M-1)-state filters
        assert np.allclose(g3[:2], g2, atol=1e-12)

    def test_separated_regimes_found(self):
        model = two_state_model(p=0.99, separation=3.0)
        x, _ = simulate(model, 3000, seed=23)
        init = init_split(x, 1, 2, seed=3)[1]
        # the added filter should sit well away from the global fit
        g = init.gamma_matrix()
        assert np.linalg.norm(g[1] - g[0]) > 1.0

    def test_bad_window(self):
        x, _ = simulate(two_state_model(), 100, seed=24)
        with pytest.raises(InvalidInputError):
            init_split(x, 1, 2, N0=5)
        with pytest.raises(InvalidInputError):
            init_split(x, 1, 2, N0=200)
