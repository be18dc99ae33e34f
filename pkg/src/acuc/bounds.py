"""Lower bounds from the unpenalized relaxation and the optimality gap."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .case_io import UcInstance
from .network import build_matrices
from .relax import MODES, solve_relaxation

log = logging.getLogger(__name__)

# largest bus count for which the full SDP bound is attempted by default
FULL_SDP_MAX_BUS = 120


class BoundError(RuntimeError):
    pass


@dataclass
class BoundResult:
    value: float  # dollars
    mode: str  # mode actually solved
    requested: str
    status: str
    seconds: float
    backend: str

    @property
    def weaker(self) -> bool:
        """True when the requested full SDP bound was replaced by the edge bound."""
        return self.mode != self.requested

    @property
    def tag(self) -> str:
        return f"{self.mode} (weaker bound)" if self.weaker else self.mode


def lower_bound(inst: UcInstance, mode: str = "full-sdp", backend: str = "auto",
                max_sdp_bus: int | None = FULL_SDP_MAX_BUS, **solver_kw) -> BoundResult:
    """Total cost of the unpenalized relaxation, a lower bound on any feasible schedule.

    Networks with more than ``max_sdp_bus`` buses get the edge relaxation
    instead of the full SDP; the result is then tagged as a weaker bound.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    used = mode
    if mode == "full-sdp" and max_sdp_bus is not None and inst.network.n_bus > max_sdp_bus:
        log.warning("%d buses exceed the full SDP limit of %d; using the edge relaxation",
                    inst.network.n_bus, max_sdp_bus)
        used = "edge-socp"
    mats = build_matrices(inst.network)
    sol, res = solve_relaxation(inst, mats, None, None, 0.0, used, backend=backend,
                                **solver_kw)
    if sol is None:
        raise BoundError(f"{used} relaxation failed: {res.status} ({res.raw_status}); "
                         f"residuals {res.residuals}")
    return BoundResult(value=sol.objective_cost, mode=used, requested=mode,
                       status=res.status, seconds=res.seconds, backend=res.backend)


def gap_percent(feasible_cost: float, bound: float) -> float:
    """``100 (feasible_cost - bound) / feasible_cost``."""
    if not feasible_cost > 0:
        raise ValueError(f"feasible cost must be positive, got {feasible_cost}")
    return 100.0 * (feasible_cost - bound) / feasible_cost
