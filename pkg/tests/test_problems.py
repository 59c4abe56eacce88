import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgdstop.problems import BcnConstants, LinearRegression, ParetoTail, Rademacher, Scenario, SineWell, make_problem

DRAWS = 10**6


def roster():
    return [
        LinearRegression(dimension=3, cov=[1.0, 2.0, 0.5], theta_star=[1.0, -1.0, 0.5], noise_std=0.3),
        LinearRegression(dimension=2, noise_std=0.0),
        SineWell(dimension=4, amplitude=2.0, noise_std=0.2),
        ParetoTail(dimension=2, tail_index=0.5, v_max=100.0),
    ]


def random_thetas(problem, count, seed):
    rng = np.random.default_rng(seed)
    return [rng.normal(0.0, 1.0, problem.dimension) for _ in range(count)]


class TestSampling:
    def test_rademacher_support(self):
        x = Rademacher().sample_batch(np.random.default_rng(0), 1000)
        assert set(np.unique(x)) == {-1.0, 1.0}

    def test_regression_noise_free_response(self):
        p = LinearRegression(dimension=2, theta_star=[0.3, -2.0])
        x = p.sample_batch(np.random.default_rng(1), 100)
        assert np.array_equal(x[:, -1], x[:, :-1] @ p.theta_star)

    def test_pareto_support(self):
        v = ParetoTail(tail_index=0.5, v_max=100).sample_batch(np.random.default_rng(2), DRAWS)
        assert v.min() >= 1.0 and v.max() <= 100.0

    def test_same_seed_same_draws(self):
        for p in roster():
            a = p.sample_batch(np.random.default_rng(5), 10)
            b = p.sample_batch(np.random.default_rng(5), 10)
            assert np.array_equal(a, b)


class TestGradients:
    def test_rademacher_gradient_is_payload(self):
        assert Rademacher().stochastic_gradient(0.3, [1.0]) == pytest.approx([1.0])

    def test_regression_zero_at_interpolating_point(self):
        p = LinearRegression(dimension=3, theta_star=[1.0, 2.0, 3.0])
        xs = p.sample_batch(np.random.default_rng(0), 50)
        assert np.all(p.stochastic_gradients(p.theta_star, xs) == 0.0)

    def test_regression_oracle_example(self):
        p = LinearRegression(dimension=2, cov=[1.0, 4.0])
        theta = p.theta_star + np.array([1.0, 1.0])
        assert np.allclose(p.oracle_gradient(theta), [1.0, 4.0])
        grads = p.stochastic_gradients(theta, p.sample_batch(np.random.default_rng(3), DRAWS))
        se = grads.std(axis=0, ddof=1) / np.sqrt(DRAWS)
        assert np.all(np.abs(grads.mean(axis=0) - [1.0, 4.0]) <= 4 * se)

    def test_sine_well_oracle_example(self):
        assert np.array_equal(SineWell(dimension=3, amplitude=2.0).oracle_gradient(np.zeros(3)), [2.0, 2.0, 2.0])

    def test_sine_well_noise_is_additive(self):
        p = SineWell(dimension=3, amplitude=1.5, noise_std=0.4)
        theta = np.array([0.2, -1.0, 3.0])
        xi = p.sample_batch(np.random.default_rng(4), 5)
        assert np.allclose(p.stochastic_gradients(theta, xi), p.oracle_gradient(theta) + xi, rtol=0, atol=1e-15)

    def test_sine_well_finite_differences(self):
        p = SineWell(dimension=5, amplitude=2.0)
        h = 1e-5
        for theta in random_thetas(p, 10, 6):
            fd = np.array([
                (p.oracle_objective(theta + h * e) - p.oracle_objective(theta - h * e)) / (2 * h)
                for e in np.eye(p.dimension)
            ])
            assert np.allclose(fd, p.oracle_gradient(theta), rtol=1e-6, atol=1e-9)

    def test_rademacher_oracle_vanishes(self):
        p = Rademacher()
        assert all(p.oracle_gradient_norm(t) == 0.0 for t in (-5.0, 0.0, 0.3, 1e6))

    @given(theta=st.floats(-1e6, 1e6), sign=st.sampled_from([-1.0, 1.0]))
    def test_rademacher_identity(self, theta, sign):
        assert np.linalg.norm(Rademacher().stochastic_gradient(theta, [sign])) == 1.0

    def test_stochastic_gradient_matches_objective_derivative(self):
        h = 1e-6
        rng = np.random.default_rng(7)
        for p in roster():
            theta = rng.normal(size=p.dimension)
            x = p.sample(rng)
            g = p.stochastic_gradient(theta, x)
            fd = [(p.stochastic_objective(theta + h * e, x) - p.stochastic_objective(theta - h * e, x)) / (2 * h) for e in np.eye(p.dimension)]
            assert np.allclose(fd, g, rtol=1e-5, atol=1e-6)

    def test_shape_errors(self):
        p = LinearRegression(dimension=2)
        with pytest.raises(ValueError):
            p.stochastic_gradient(np.zeros(3), np.zeros(3))
        with pytest.raises(ValueError):
            p.stochastic_gradient(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            p.oracle_gradient([np.nan, 0.0])


@pytest.mark.slow
@pytest.mark.parametrize("idx", range(4))
def test_unbiased(idx):
    p = roster()[idx]
    rng = np.random.default_rng(100 + idx)
    for theta in random_thetas(p, 5, 200 + idx):
        grads = p.stochastic_gradients(theta, p.sample_batch(rng, DRAWS))
        se = grads.std(axis=0, ddof=1) / np.sqrt(DRAWS)
        assert np.all(np.abs(grads.mean(axis=0) - p.oracle_gradient(theta)) <= 4 * se + 1e-15)


@pytest.mark.slow
@pytest.mark.parametrize("idx", range(4))
def test_noise_model(idx):
    p = roster()[idx]
    rng = np.random.default_rng(300 + idx)
    for theta in random_thetas(p, 5, 400 + idx):
        g = p.oracle_gradient(theta)
        sq = np.sum((p.stochastic_gradients(theta, p.sample_batch(rng, DRAWS)) - g) ** 2, axis=1)
        se = sq.std(ddof=1) / np.sqrt(DRAWS)
        bound = p.bcn.noise_C1 + p.bcn.noise_C2 * float(g @ g)
        assert sq.mean() <= bound + 4 * se + 1e-12
        assert sq.mean() == pytest.approx(p.noise_second_moment(theta), abs=4 * se + 1e-12)


@pytest.mark.parametrize("tail_index", [0.3, 0.5, 0.8])
def test_pareto_tail_condition(tail_index):
    p = ParetoTail(dimension=2, tail_index=tail_index, v_max=100.0)
    pi1, pi2, pi3 = p.bcn.pareto_pi1, p.bcn.pareto_pi2, p.bcn.pareto_pi3
    rng = np.random.default_rng(11)
    for norm in (pi1, 0.1, 1e-3):
        theta = p.point_with_gradient_norm(norm)
        g = p.oracle_gradient_norm(theta)
        gnorms = np.linalg.norm(p.stochastic_gradients(theta, p.sample_batch(rng, DRAWS)), axis=1)
        for t in pi3 * g * np.geomspace(1.0, 200.0, 25):
            s = float(np.mean(gnorms >= t))
            se = np.sqrt(max(s * (1 - s), 1.0 / DRAWS) / DRAWS)
            assert s <= (pi3 * g / t) ** pi2 + 4 * se


def test_pareto_survival_matches_sampler():
    p = ParetoTail(tail_index=0.5)
    v = p.sample_batch(np.random.default_rng(12), DRAWS)[:, 0]
    for t in (1.0, 2.0, 10.0, 50.0, 99.0):
        s = p.survival(t)
        assert np.mean(v >= t) == pytest.approx(s, abs=4 * np.sqrt(s * (1 - s) / DRAWS) + 1e-12)
    assert p.moment(1) == pytest.approx(v.mean(), rel=5e-3)


class TestPointWithGradientNorm:
    @given(norm=st.floats(0, 0.5), seed=st.integers(0, 2**32 - 1))
    def test_regression_and_pareto(self, norm, seed):
        for p in (LinearRegression(dimension=3, cov=[1.0, 3.0, 0.2], noise_std=0.1), ParetoTail(dimension=3)):
            theta = p.point_with_gradient_norm(norm, np.random.default_rng(seed))
            assert p.oracle_gradient_norm(theta) == pytest.approx(norm, rel=1e-9, abs=1e-14)

    @given(norm=st.floats(0, 1.0), seed=st.integers(0, 2**32 - 1))
    def test_sine_well(self, norm, seed):
        p = SineWell(dimension=4, amplitude=2.0)
        theta = p.point_with_gradient_norm(norm, np.random.default_rng(seed))
        assert p.oracle_gradient_norm(theta) == pytest.approx(norm, rel=1e-9, abs=1e-12)

    def test_rademacher_only_zero(self):
        assert Rademacher().point_with_gradient_norm(0.0) == pytest.approx([0.0])
        with pytest.raises(ValueError):
            Rademacher().point_with_gradient_norm(0.1)


class TestBcnConstants:
    def test_scenarios(self):
        assert LinearRegression(noise_std=0.1).bcn.scenario is Scenario.A
        assert LinearRegression(noise_std=0.0).bcn.scenario is Scenario.B
        assert ParetoTail().bcn.scenario is Scenario.C
        assert SineWell(noise_std=0.1).bcn.noise_C2 == 0.0

    def test_regression_constants(self):
        p = LinearRegression(dimension=2, cov=[1.0, 4.0], noise_std=0.5)
        assert p.bcn.noise_C1 == pytest.approx(0.25 * 5)
        assert p.bcn.noise_C2 == pytest.approx(6.0)
        assert p.bcn.lipschitz_C == pytest.approx(4.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            BcnConstants(0.0, -1.0, 0.0, 0.0, "A")
        with pytest.raises(ValueError):
            BcnConstants(0.0, 1.0, 0.5, 0.0, "B")
        with pytest.raises(ValueError):
            BcnConstants(0.0, 1.0, 0.0, 0.0, "C")
        with pytest.raises(ValueError):
            BcnConstants(0.0, 1.0, 0.0, 0.0, "C", 0.5, 0.5, 0.5)
        assert BcnConstants(0.0, 1.0, 0.0, 0.0, "C", 0.5, 0.5, 1.0).to_dict()["scenario"] == "C"

    def test_make_problem(self):
        assert isinstance(make_problem("sine_well", dimension=2), SineWell)
        with pytest.raises(ValueError, match="unknown problem"):
            make_problem("nope")
        with pytest.raises(ValueError):
            make_problem("pareto_tail", tail_index=1.5)
