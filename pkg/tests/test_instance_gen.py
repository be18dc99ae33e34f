import numpy as np
import pytest

from acuc.case_io import Bus, Generator, PowerNetwork, instance_to_dict
from acuc.instance_gen import (draw_economics, generate, hourly_factors, initial_dispatch,
                               rng_for)

from .conftest import micro_network


def test_hourly_factors():
    f = hourly_factors()
    assert len(f) == 24 and f.max() == 1.0
    assert (f[0], f[16], f[23]) == (0.6843, 1.0, 0.7641)
    assert np.all((f > 0) & (f <= 1))


def test_same_seed_same_instance(case9):
    a, b = generate(case9, 7, 6), generate(case9, 7, 6)
    assert instance_to_dict(a) == instance_to_dict(b)
    assert instance_to_dict(generate(case9, 8, 6)) != instance_to_dict(a)


def test_ranges_and_formulas(case57):
    inst = generate(case57, 3, 30)
    f = hourly_factors()
    expected = np.outer(case57.base_demand(), f[np.arange(30) % 24])
    assert np.array_equal(inst.demand, expected)
    for gen, e, init in zip(case57.generators, inst.economics, inst.initial):
        assert 0 <= e.alpha < 1 and 0 <= e.beta < 10 and 0 <= e.gamma < 100
        assert 0 <= e.gamma_down < 30 and 0 <= e.gamma_up < 50
        assert e.ramp == e.startup_ramp == max(gen.p_max / 4, gen.p_min)
        assert e.min_up >= 1 and e.min_down >= 1 and init.t0 >= 0
        assert init.x0 in (0, 1) and (init.x0 == 1 or init.p0 == 0.0)


def test_poisson_mean_of_many_draws():
    gens = [Generator(1, 0.0, 1.0, -1.0, 1.0)] * 10_000
    net = PowerNetwork(100.0, [Bus(1, 0j, 0.9, 1.1, 0j)], [], gens)
    econ, _ = draw_economics(net, rng_for(2024))
    up = np.array([e.min_up for e in econ])
    assert up.min() >= 1
    assert 3.8 <= (up - 1).mean() <= 4.2


def test_single_generator_is_committed():
    net = micro_network()
    econ, _ = draw_economics(net, rng_for(0))
    x0, p0 = initial_dispatch(net, econ, net.base_demand())
    assert x0.tolist() == [1]
    assert p0[0] >= 0.6 - 1e-6


def test_zero_demand_commits_nothing():
    net = micro_network(load=0j)
    econ, _ = draw_economics(net, rng_for(0))
    x0, p0 = initial_dispatch(net, econ, net.base_demand())
    assert x0.tolist() == [0] and p0.tolist() == [0.0]


def test_case9_dispatch_covers_demand(case9):
    inst = generate(case9, 1, 1)
    served = sum(s.p0 for s in inst.initial)
    assert served >= 0.6843 * case9.base_demand().real.sum() - 1e-6


def test_horizon_must_be_positive(case9):
    with pytest.raises(ValueError, match="horizon"):
        generate(case9, 0, 0)
