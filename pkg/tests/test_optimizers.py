import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aces.optimizers import BoxBounds, CmaesConfig, cmaes_minimize, direct_maximize, local_refine

BOX = BoxBounds([-5.0, -5.0], [5.0, 5.0])


def counted(f):
    def wrapper(x):
        wrapper.calls += 1
        return f(x)
    wrapper.calls = 0
    return wrapper


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def rastrigin(x):
    x = np.asarray(x)
    return float(10 * x.size + np.sum(x ** 2 - 10 * np.cos(2 * np.pi * x)))


def two_bumps(x):
    x = np.asarray(x)
    return float(np.exp(-np.sum((x - [0.3, 0.7]) ** 2) / 0.02)
                 + 0.8 * np.exp(-np.sum((x - [0.75, 0.25]) ** 2) / 0.05))


def grid_argmax(f, bounds, n=500):
    xs = np.linspace(bounds.lower[0], bounds.upper[0], n)
    ys = np.linspace(bounds.lower[1], bounds.upper[1], n)
    best, arg = -np.inf, None
    for x in xs:
        for y in ys:
            v = f([x, y])
            if v > best:
                best, arg = v, np.array([x, y])
    return arg


def test_box_bounds_validation_and_helpers(rng):
    with pytest.raises(ValueError):
        BoxBounds([1.0], [1.0])
    b = BoxBounds([0.0, -1.0], [2.0, 1.0])
    np.testing.assert_array_equal(b.center, [1.0, 0.0])
    np.testing.assert_array_equal(b.clip([3.0, -3.0]), [2.0, -1.0])
    assert all(b.contains(p) for p in b.sample(rng, 50))
    assert BoxBounds.concat(b, b).dim == 4


@pytest.mark.parametrize("seed", range(5))
def test_cmaes_sphere(seed):
    f = counted(sphere)
    x, fx = cmaes_minimize(f, BOX, CmaesConfig(max_evaluations=2000, seed=seed))
    assert fx < 1e-8
    assert f.calls <= 2000
    assert fx == pytest.approx(sphere(x))


def test_cmaes_boundary_optimum():
    c = np.array([5.0, -2.0])
    x, _ = cmaes_minimize(lambda x: float(np.sum((x - c) ** 2)), BOX,
                          CmaesConfig(max_evaluations=2000, seed=1))
    assert np.linalg.norm(x - c) < 1e-3
    assert BOX.contains(x)


def test_cmaes_rastrigin_with_restarts():
    x, fx = cmaes_minimize(rastrigin, BOX, CmaesConfig(max_evaluations=4000, restarts=10,
                                                       seed=3))
    xs = np.linspace(-5, 5, 200)
    grid_best = min(rastrigin([a, b]) for a in xs for b in xs)
    assert fx < 1.0
    assert fx <= grid_best + 1.0


def test_cmaes_reproducible():
    cfg = CmaesConfig(max_evaluations=300, seed=42, restarts=2)
    a = cmaes_minimize(rastrigin, BOX, cfg)
    b = cmaes_minimize(rastrigin, BOX, cfg)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_cmaes_non_finite_values_are_worst():
    def f(x):
        return np.nan if x[0] < 0 else sphere(x - [1.0, 0.0])
    x, fx = cmaes_minimize(f, BOX, CmaesConfig(max_evaluations=1000, seed=0))
    assert np.isfinite(fx)
    assert x[0] >= 0


def test_cmaes_config_validation():
    with pytest.raises(ValueError):
        CmaesConfig(population_size=2)
    with pytest.raises(ValueError):
        CmaesConfig(initial_sigma=0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), budget=st.integers(1, 300))
def test_cmaes_stays_in_bounds_and_budget(seed, budget):
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-8, 8, size=2)
    seen = []

    def f(x):
        assert BOX.contains(x)
        seen.append(sphere(x - shift))
        return seen[-1]
    x, fx = cmaes_minimize(f, BOX, CmaesConfig(max_evaluations=budget, seed=seed))
    assert len(seen) <= budget
    assert BOX.contains(x)
    assert fx == min(seen)


def test_direct_linear_reaches_corner():
    b = BoxBounds([0.0, 0.0], [2.0, 1.0])
    x = direct_maximize(lambda x: x[0] + 2 * x[1], b, 500)
    assert np.linalg.norm(x - b.upper) < 0.05 * np.linalg.norm(b.width)


def test_direct_constant_returns_center():
    b = BoxBounds([0.0, -1.0], [2.0, 3.0])
    np.testing.assert_allclose(direct_maximize(lambda x: 1.0, b, 200), b.center)


def test_direct_tiny_budget_evaluates_center_only():
    f = counted(lambda x: -sphere(x))
    x = direct_maximize(f, BOX, 2)
    assert f.calls == 1
    np.testing.assert_array_equal(x, BOX.center)


def test_direct_two_bumps_matches_grid():
    b = BoxBounds([0.0, 0.0], [1.0, 1.0])
    x = direct_maximize(two_bumps, b, 1000)
    ref = grid_argmax(two_bumps, b)
    assert np.linalg.norm(x - ref) < 0.02 * np.sqrt(2)


@pytest.mark.parametrize("budget", [3, 10, 57, 300])
def test_direct_evaluation_count(budget):
    f = counted(lambda x: two_bumps(x[:2]) + np.sin(5 * x[2]))
    direct_maximize(f, BoxBounds([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), budget)
    assert f.calls <= budget + 2 * 3


def test_direct_is_deterministic():
    b = BoxBounds([0.0, 0.0], [1.0, 1.0])
    np.testing.assert_array_equal(direct_maximize(two_bumps, b, 300),
                                  direct_maximize(two_bumps, b, 300))


def test_local_refine_quadratic_interior():
    b = BoxBounds([-1.0, -1.0], [1.0, 1.0])
    peak = np.array([0.2, -0.4])

    def f(x):
        return -float((x[0] - peak[0]) ** 2 + 3 * (x[1] - peak[1]) ** 2)
    x = local_refine(f, [0.25, -0.3], b)
    grad = np.array([-2 * (x[0] - peak[0]), -6 * (x[1] - peak[1])])
    assert np.linalg.norm(grad) < 1e-4


def test_local_refine_fixed_point():
    x = local_refine(lambda x: -sphere(x), [0.0, 0.0], BOX)
    np.testing.assert_allclose(x, [0.0, 0.0], atol=1e-6)


def test_local_refine_pushes_to_face():
    b = BoxBounds([0.0, 0.0], [1.0, 1.0])
    f = lambda x: x[0] - (x[1] - 0.5) ** 2  # noqa: E731
    x0 = np.array([0.5, 0.5])
    x = local_refine(f, x0, b)
    assert x[0] == pytest.approx(1.0)
    assert f(x) > f(x0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_local_refine_never_worse(seed):
    rng = np.random.default_rng(seed)
    x0 = BOX.sample(rng)
    f = lambda x: -rastrigin(x)  # noqa: E731
    x = local_refine(f, x0, BOX)
    assert BOX.contains(x)
    assert f(x) >= f(x0)
