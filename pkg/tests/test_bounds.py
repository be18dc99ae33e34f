import pytest
from hypothesis import given, strategies as st

from acuc.bounds import gap_percent, lower_bound
from acuc.driver import RunOptions, run
from acuc.instance_gen import generate

from .conftest import micro_instance, toy_instance
from .oracles import brute_force_single_bus


def test_gap_examples():
    assert gap_percent(100, 95) == 5.0
    assert gap_percent(100, 100) == 0.0


@pytest.mark.parametrize("cost", [0.0, -3.0])
def test_gap_needs_positive_cost(cost):
    with pytest.raises(ValueError):
        gap_percent(cost, 1.0)


@given(a=st.floats(1e-3, 1e9), frac=st.floats(-1, 1), lam=st.floats(1e-3, 1e3))
def test_gap_scale_invariant(a, frac, lam):
    b = a * frac
    assert gap_percent(lam * a, lam * b) == pytest.approx(gap_percent(a, b), abs=1e-9)


def test_micro_sandwich():
    inst = micro_instance(T=3)
    res = run(inst, RunOptions(rounds=10))
    socp = lower_bound(inst, "edge-socp")
    sdp = lower_bound(inst, "full-sdp")
    assert not sdp.weaker and sdp.tag == "full-sdp"
    assert sdp.value >= socp.value * (1 - 1e-6)
    assert sdp.value <= res.best_report.cost * (1 + 1e-6)


def test_case9_sdp_at_least_socp(case9):
    inst = generate(case9, 4, 3)
    assert (lower_bound(inst, "full-sdp").value
            >= lower_bound(inst, "edge-socp").value * (1 - 1e-6))


def test_large_case_falls_back(case9):
    inst = generate(case9, 1, 1)
    b = lower_bound(inst, "full-sdp", max_sdp_bus=5)
    assert b.mode == "edge-socp" and b.weaker and "weaker" in b.tag


@pytest.mark.parametrize("variant", ["forced", "switching"])
def test_toy_bound_below_enumerated_optimum(variant):
    if variant == "forced":
        inst, args = toy_instance(demand=(0.5 + 0.1j, 0.3 + 0.05j, 0.6 + 0.1j),
                                  shunt=0.05 + 0.1j)
    else:
        inst, args = toy_instance()
    opt, _ = brute_force_single_bus(*args, n_grid=2001)
    for mode in ("edge-socp", "full-sdp"):
        assert lower_bound(inst, mode).value <= opt * (1 + 1e-6)
    res = run(inst, RunOptions())
    assert res.status == "ok"
    assert res.best_report.cost >= opt * (1 - 1e-6)


def test_unknown_mode(micro):
    with pytest.raises(ValueError):
        lower_bound(micro, "dense")
