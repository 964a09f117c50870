import math

import numpy as np
import pytest

from sturm_heat.config import (
    ConfigError,
    RunConfig,
    parse_config,
    parse_expression,
    parse_source,
    serialize,
)
from sturm_heat.regularization import DeltaAt, DerivativeOfL2, Smooth, SpecSum

MINIMAL = """
q: "0"
a: "1"
u0: "sin(pi*x)"
experiment: solve
"""


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.numerics.spatial_points == 2001 and cfg.numerics.n_max == 40
    assert cfg.T == 1.0 and cfg.f is None
    assert cfg.output_times() == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert len(cfg.regularization.epsilon_net) == 8
    assert cfg.regularization.epsilon_net[0] == 2**-3


@pytest.mark.parametrize("text, match", [
    (MINIMAL + "numerics:\n  spatial_points: 10\n", "spatial_points=10"),
    (MINIMAL.replace("solve", "uniqueness"), "two regularization choices"),
    (MINIMAL + "numerics:\n  foo: 1\n  bar: 2\n", "unknown keys: numerics.bar, numerics.foo|unknown keys: numerics.foo, numerics.bar"),
    (MINIMAL.replace('"0"', '"delta(1.2)"'), r"outside the admissible interval \(0, 1\)"),
    ("q: '0'\na: '1'\n", "missing required keys: u0, experiment"),
    (MINIMAL.replace("solve", "wander"), "experiment must be one of"),
    (MINIMAL + "zzz: 1\n", "unknown keys: zzz"),
    (MINIMAL + "T: -1\n", "T must be positive"),
    (MINIMAL.replace("sin(pi*x)", "__import__('os')"), "expression"),
    ("[1, 2", "malformed YAML"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_uniqueness_with_two_kernels():
    cfg = parse_config(MINIMAL.replace("solve", "uniqueness")
                       + "regularization:\n  kernels: [bump, gaussian]\n  epsilon_net: {k_first: 3, k_last: 7}\n")
    kinds = [m.kind for m in cfg.mollifiers()]
    assert kinds == ["bump", "gaussian"]
    assert cfg.regularization.epsilon_net == tuple(2.0**-k for k in range(3, 8))


def test_round_trip():
    text = MINIMAL + "f: exp(-t)*sin(pi*x)\nT: 0.5\nnumerics:\n  n_max: 12\noutput:\n  format: json\n"
    cfg = parse_config(text)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_is_dataclass():
    assert isinstance(parse_config(MINIMAL), RunConfig)


class TestExpressions:
    x = np.linspace(0, 1, 11)

    def test_smooth(self):
        spec = parse_expression("1 + x**2 - 3*cos(2*pi*x)/2")
        assert isinstance(spec, Smooth)
        assert np.allclose(spec.evaluate(self.x), 1 + self.x**2 - 1.5 * np.cos(2 * math.pi * self.x))

    def test_constant_broadcasts(self):
        assert np.array_equal(parse_expression("2").evaluate(self.x), np.full(11, 2.0))

    def test_delta_with_mass_and_scale(self):
        spec = parse_expression("3*delta(0.25, 2)")
        assert spec == DeltaAt(0.25, 6.0)

    def test_sum_of_parts(self):
        spec = parse_expression("x - delta(0.5) + dL2(step(0.3))")
        assert isinstance(spec, SpecSum) and len(spec.parts) == 3
        smooth, delta, dl2 = spec.parts
        assert delta == DeltaAt(0.5, -1.0)
        assert isinstance(dl2, DerivativeOfL2) and dl2.breakpoints == (0.3,)
        assert np.array_equal(dl2.evaluate_nu(np.array([0.2, 0.4])), [0.0, 1.0])

    def test_step_breakpoint(self):
        spec = parse_expression("1 + step(0.5)")
        assert spec.breakpoints == (0.5,)
        assert np.array_equal(spec.evaluate(np.array([0.25, 0.75])), [1.0, 2.0])

    def test_time_variable_closed_domain(self):
        spec = parse_expression("1 + t/2 + delta(1)", variable="t", domain=(0, 1), closed=True)
        assert spec.parts[1] == DeltaAt(1.0, 1.0)

    @pytest.mark.parametrize("bad", ["x.real", "y + 1", "sqrt(x)", "delta(x)", "lambda: 1", "", "delta(0.5)*x"])
    def test_bad(self, bad):
        with pytest.raises(ConfigError):
            parse_expression(bad)

    def test_source(self):
        f = parse_source("exp(-t)*sin(pi*x)")
        assert np.allclose(f(0.5, self.x), math.exp(-0.5) * np.sin(math.pi * self.x))
        assert parse_source("1")(0.0, self.x).shape == (11,)
