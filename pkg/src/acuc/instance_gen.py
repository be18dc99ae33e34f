"""Randomized day-ahead instances on a MATPOWER network.

Random draws use numpy's ``Philox`` counter-based bit generator seeded with
the instance seed, consumed in this fixed order (each a vector over the
generators, in case-file order):

    alpha ~ U[0, 1), beta ~ U[0, 10), gamma ~ U[0, 100),
    gamma_down ~ U[0, 30), gamma_up ~ U[0, 50),
    min_up - 1 ~ Poisson(4), min_down - 1 ~ Poisson(4), t0 ~ Poisson(4)

``Generator(Philox(seed))`` with these calls reproduces every instance.
"""

from __future__ import annotations

import numpy as np

from .case_io import InitialState, PowerNetwork, UcEconomics, UcInstance

# demand factor per hour, 12:00 AM through 11:00 PM
HOURLY_FACTORS = (
    0.6843, 0.6451, 0.6198, 0.6044, 0.6057, 0.6269,
    0.6773, 0.6937, 0.7297, 0.8084, 0.8930, 0.9223,
    0.9460, 0.9516, 0.9721, 0.9992, 1.0000, 0.9638,
    0.9608, 0.9271, 0.9270, 0.9089, 0.7654, 0.7641,
)

POISSON_MEAN = 4.0
# a unit whose single-period dispatch carries more active power than this is committed
COMMIT_POWER_TOL = 1e-6


class InstanceGenerationError(RuntimeError):
    pass


def hourly_factors() -> np.ndarray:
    return np.array(HOURLY_FACTORS)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def demand_trajectory(net: PowerNetwork, horizon: int) -> np.ndarray:
    f = hourly_factors()
    return np.outer(net.base_demand(), f[np.arange(horizon) % 24])


def draw_economics(net: PowerNetwork, rng: np.random.Generator) -> tuple[list[UcEconomics], np.ndarray]:
    G = net.n_gen
    alpha = rng.uniform(0.0, 1.0, G)
    beta = rng.uniform(0.0, 10.0, G)
    gamma = rng.uniform(0.0, 100.0, G)
    gamma_down = rng.uniform(0.0, 30.0, G)
    gamma_up = rng.uniform(0.0, 50.0, G)
    min_up = 1 + rng.poisson(POISSON_MEAN, G)
    min_down = 1 + rng.poisson(POISSON_MEAN, G)
    t0 = rng.poisson(POISSON_MEAN, G)
    econ = []
    for k, gen in enumerate(net.generators):
        ramp = max(gen.p_max / 4, gen.p_min)
        econ.append(UcEconomics(
            alpha=float(alpha[k]), beta=float(beta[k]), gamma=float(gamma[k]),
            gamma_up=float(gamma_up[k]), gamma_down=float(gamma_down[k]),
            ramp=ramp, startup_ramp=ramp,
            min_up=int(min_up[k]), min_down=int(min_down[k]),
        ))
    return econ, t0


def initial_dispatch(net: PowerNetwork, economics: list[UcEconomics],
                     demand: np.ndarray, backend: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Commitment and active dispatch ``(x0, p0)`` from a single-period relaxed dispatch.

    Solves the unpenalized edge relaxation for one period without history and
    commits every unit that is dispatched, or whose relaxed commitment
    reaches 1/2.
    """
    from .network import build_matrices
    from .relax import solve_relaxation

    one = UcInstance(network=net, horizon=1, demand=np.asarray(demand, complex).reshape(-1, 1),
                     economics=economics, initial=None)
    mats = build_matrices(net)
    sol, res = solve_relaxation(one, mats, None, None, 0.0, backend=backend)
    if sol is None:
        raise InstanceGenerationError(f"single-period dispatch failed: {res.status}")
    x = sol.x[:, 0]
    p = sol.p[:, 0]
    committed = (x >= 0.5) | (p > COMMIT_POWER_TOL)
    x0 = committed.astype(int)
    p0 = np.where(committed, np.maximum(p, 0.0), 0.0)
    return x0, p0


def generate(net: PowerNetwork, seed: int, horizon: int = 24,
             backend: str = "auto") -> UcInstance:
    if horizon < 1:
        raise ValueError("horizon must be at least one period")
    rng = rng_for(seed)
    econ, t0 = draw_economics(net, rng)
    demand = demand_trajectory(net, horizon)
    x0, p0 = initial_dispatch(net, econ, demand[:, 0], backend=backend)
    initial = [InitialState(x0=int(x0[k]), p0=float(p0[k]), t0=int(t0[k]))
               for k in range(net.n_gen)]
    inst = UcInstance(network=net, horizon=horizon, demand=demand, economics=econ,
                      initial=initial, seed=seed, name=net.name)
    inst.validate()
    return inst
