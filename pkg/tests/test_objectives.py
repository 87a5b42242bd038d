import math

import numpy as np
import pytest

from lamcts.core import ConfigError, DomainError
from lamcts.objectives import (
    ackley,
    default_bounds,
    levy,
    make_objective,
    objective_names,
    rastrigin,
    rosenbrock,
)


def levy_oracle(x):
    """Straight-line transcription of the Levy formula, scalar loops only."""
    w = [1 + (xi - 1) / 4 for xi in x]
    total = math.sin(math.pi * w[0]) ** 2
    for i in range(len(x) - 1):
        total += (w[i] - 1) ** 2 * (1 + 10 * math.sin(math.pi * w[i] + 1) ** 2)
    total += (w[-1] - 1) ** 2 * (1 + math.sin(2 * math.pi * w[-1]) ** 2)
    return total


class TestAckley:
    def test_global_optimum(self):
        for d in (1, 2, 20):
            assert abs(ackley(np.zeros(d))) < 1e-12

    def test_hand_value_1d(self):
        # cosine term cancels against +e at x=1
        assert ackley(np.array([1.0])) == pytest.approx(20.0 * (1.0 - math.exp(-0.2)), abs=1e-12)

    def test_permutation_symmetry(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-5, 10, size=6)
        assert ackley(x) == pytest.approx(ackley(x[::-1].copy()), rel=1e-12)


class TestRosenbrock:
    def test_values(self):
        assert rosenbrock(np.ones(5)) == 0.0
        assert rosenbrock(np.zeros(2)) == 1.0
        assert rosenbrock(np.array([-1.0, 1.0])) == 4.0

    def test_dim_guard(self):
        with pytest.raises(DomainError):
            rosenbrock(np.array([1.0]))


class TestRastrigin:
    def test_values(self):
        assert rastrigin(np.zeros(3)) == 0.0
        assert rastrigin(np.array([1.0])) == pytest.approx(1.0, abs=1e-9)

    def test_non_negative_on_box(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            x = rng.uniform(-5.12, 5.12, size=4)
            assert rastrigin(x) >= 0.0


class TestLevy:
    def test_global_optimum(self):
        assert levy(np.ones(4)) < 1e-12
        assert levy(np.array([1.0])) < 1e-12

    def test_matches_hand_oracle(self):
        assert levy(np.zeros(2)) == pytest.approx(levy_oracle([0.0, 0.0]), rel=1e-12)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = rng.uniform(-10, 10, size=3)
            assert levy(x) == pytest.approx(levy_oracle(list(x)), rel=1e-10)


class TestRegistry:
    def test_names(self):
        assert objective_names() == ["ackley", "levy", "rastrigin", "rosenbrock"]

    @pytest.mark.parametrize(
        "name,lo,hi",
        [("ackley", -5, 10), ("rosenbrock", -10, 10), ("rastrigin", -5.12, 5.12), ("levy", -10, 10)],
    )
    def test_default_bounds(self, name, lo, hi):
        b = default_bounds(name, 3)
        assert (b.lower == lo).all() and (b.upper == hi).all()

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="ackley"):
            make_objective("sphere", 3)

    def test_finite_on_box(self):
        rng = np.random.default_rng(3)
        for name in objective_names():
            obj = make_objective(name, 6)
            for _ in range(100):
                x = obj.bounds.sample_uniform(rng, 1)[0]
                assert np.isfinite(obj(x))

    def test_objective_is_minimize(self):
        obj = make_objective("ackley", 2)
        assert obj.mode == "minimize"
        assert obj.reward_of(3.5) == -3.5
