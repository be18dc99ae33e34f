import numpy as np
import pytest

from acuc.case_io import (Branch, Bus, Generator, InitialState, PowerNetwork, UcEconomics,
                          UcInstance, load_case)

# acceptance outcomes, printed at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")


def micro_network(r=0.01, x=0.1, b=0.0, tap=1.0, shift=0.0, rate=0.0, load=0.6 + 0.2j):
    """Two buses joined by one line, one unit at bus 1, load at bus 2."""
    buses = [Bus(1, 0j, 0.9, 1.1, 0j), Bus(2, 0j, 0.9, 1.1, load)]
    branches = [Branch(1, 2, r, x, b, tap, shift, rate, rate == 0)]
    gens = [Generator(1, 0.0, 2.0, -1.0, 1.0)]
    net = PowerNetwork(100.0, buses, branches, gens, "micro")
    net.validate()
    return net


def micro_instance(T=2, initial=True, load=0.6 + 0.2j, **kw):
    net = micro_network(load=load, **kw)
    econ = [UcEconomics(alpha=0.5, beta=2.0, gamma=40.0, gamma_up=20.0, gamma_down=10.0,
                        ramp=1.0, startup_ramp=1.0, min_up=1, min_down=1)]
    init = [InitialState(1, 0.6, 3)] if initial else None
    demand = np.outer(net.base_demand(), np.linspace(1.0, 0.8, T))
    inst = UcInstance(net, T, demand, econ, init, seed=0, name="micro")
    inst.validate()
    return inst


@pytest.fixture
def micro():
    return micro_instance()


@pytest.fixture(scope="session")
def case9():
    return load_case("case9")


@pytest.fixture(scope="session")
def case57():
    return load_case("case57")


TOY_ECON = UcEconomics(alpha=0.5, beta=0.02, gamma=40.0, gamma_up=20.0, gamma_down=10.0,
                       ramp=1.0, startup_ramp=1.0, min_up=1, min_down=1)


def toy_instance(demand=(0.5 + 0.1j, 0j, 0.6 + 0.1j), shunt=0j, econ=TOY_ECON,
                 initial=(1, 0.5, 3)):
    """One bus, one unit, no lines, T = len(demand); returns the instance and the
    arguments of the brute-force oracle."""
    bus = Bus(1, shunt, 0.95, 1.05, 0j)
    gen = Generator(1, 0.0, 1.0, -0.5, 0.5)
    net = PowerNetwork(100.0, [bus], [], [gen], "toy")
    inst = UcInstance(net, len(demand), np.array([demand], dtype=complex), [econ],
                      [InitialState(*initial)], seed=0, name="toy")
    inst.validate()
    oracle_args = (np.array(demand), (gen.p_min, gen.p_max), (gen.q_min, gen.q_max),
                   (bus.v_min, bus.v_max), shunt,
                   (econ.alpha, econ.beta, econ.gamma, econ.gamma_up, econ.gamma_down,
                    econ.ramp, econ.startup_ramp, econ.min_up, econ.min_down), initial)
    return inst, oracle_args
