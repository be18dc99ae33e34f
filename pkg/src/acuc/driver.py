"""Sequential penalized relaxation and the feasibility check of candidate schedules."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .case_io import Schedule, UcInstance
from .network import NetworkMatrices, build_matrices, build_penalty_matrix
from .relax import Anchor, RelaxationSolution, solve_relaxation

log = logging.getLogger(__name__)

FAMILIES = ("power_balance", "flow_limit", "voltage_bounds", "integrality", "capacity",
            "ramp", "min_up_down", "cost_identity")

# (mu, alpha) per bundled case
PRESETS = {"case57": (1.0, 1.0), "case118": (1.0, 10.0), "case300": (10.0, 10.0)}
DEFAULT_PRESET = (1.0, 1.0)


@dataclass
class RoundLog:
    round: int
    objective_cost: float
    penalty_value: float
    max_violation: float
    integrality_gap: float
    solver_status: str
    wall_seconds: float
    w_mismatch: float = float("nan")

    CSV_HEADER = ("round,objective_cost,penalty_value,max_violation,integrality_gap,"
                  "solver_status,wall_seconds")

    def csv_row(self) -> str:
        return (f"{self.round},{self.objective_cost!r},{self.penalty_value!r},"
                f"{self.max_violation!r},{self.integrality_gap!r},{self.solver_status},"
                f"{self.wall_seconds:.3f}")


@dataclass
class ViolationReport:
    power_balance: float = 0.0
    flow_limit: float = 0.0
    voltage_bounds: float = 0.0
    integrality: float = 0.0
    capacity: float = 0.0
    ramp: float = 0.0
    min_up_down: float = 0.0
    cost_identity: float = 0.0
    max_violation: float = 0.0
    feasible: bool = True
    cost: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunOptions:
    mu: float = 1.0
    alpha: float = 1.0
    eta: float = 0.5
    rounds: int = 50
    tol_feas: float = 1e-6
    tol_int: float = 1e-6
    mode: str = "edge-socp"
    stop_rel_change: float = 1e-5
    stop_patience: int = 3
    backend: str = "auto"
    solver_tol: float | None = None
    cost_scale: float | None = None  # None: squared base power


@dataclass
class RunResult:
    best: Schedule | None
    best_report: ViolationReport | None
    logs: list[RoundLog]
    anchors: list[Anchor] = field(default_factory=list)
    status: str = "ok"
    message: str = ""
    seconds: float = 0.0

    tol_feas: float = 1e-6

    @property
    def k_f(self) -> int | None:
        return first_feasible_round(self.logs, self.tol_feas)


def first_feasible_round(logs: list[RoundLog], tol: float = 1e-6) -> int | None:
    for lg in logs:
        if lg.max_violation < tol:
            return lg.round
    return None


def flows(mats: NetworkMatrices, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Line flows ``diag(C_from v v^* Y_from^*)`` and the to-end analogue, per column of v."""
    sf = (mats.C_from @ v) * np.conj(mats.Y_from @ v)
    st = (mats.C_to @ v) * np.conj(mats.Y_to @ v)
    return sf, st


def default_anchor(inst: UcInstance, mats: NetworkMatrices | None = None) -> Anchor:
    """Flat voltages, recorded initial commitments, minimum active outputs."""
    net = inst.network
    mats = mats or build_matrices(net)
    T = inst.horizon
    v0 = np.ones((net.n_bus, T), dtype=complex)
    if inst.initial is None:
        x0 = np.zeros((net.n_gen, T))
    else:
        x0 = np.repeat(np.array([[s.x0] for s in inst.initial], dtype=float), T, axis=1)
    pmin = np.array([g.p_min for g in net.generators], dtype=float)
    s0 = np.repeat(pmin[:, None], T, axis=1).astype(complex)
    sf0, st0 = flows(mats, v0)
    return Anchor(v0=v0, x0=x0, s0=s0, sf0=sf0, st0=st0)


def schedule_cost(inst: UcInstance, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Per (g, t) production cost of a schedule in dollars, with the recorded history
    standing in for the period before the first."""
    B = inst.network.base_power
    al, be, ga = inst.econ_array("alpha"), inst.econ_array("beta"), inst.econ_array("gamma")
    gu, gd = inst.econ_array("gamma_up"), inst.econ_array("gamma_down")
    if inst.initial is None:
        xprev0 = x[:, :1]
    else:
        xprev0 = np.array([[s.x0] for s in inst.initial], dtype=float)
    xprev = np.concatenate([xprev0, x[:, :-1]], axis=1)
    P = B * p
    return (al[:, None] * P + be[:, None] * P * P + ga[:, None] * x
            + gu[:, None] * (1 - xprev) * x + gd[:, None] * xprev * (1 - x))


def full_load_cost(inst: UcInstance) -> np.ndarray:
    """Hourly cost of each unit at maximum output including both transition costs
    (at least $1)."""
    B = inst.network.base_power
    pm = B * np.array([g.p_max for g in inst.network.generators])
    c = (inst.econ_array("alpha") * pm + inst.econ_array("beta") * pm**2
         + inst.econ_array("gamma") + inst.econ_array("gamma_up")
         + inst.econ_array("gamma_down"))
    return np.maximum(c, 1.0)


def check(inst: UcInstance, cand: Schedule, mats: NetworkMatrices | None = None,
          tol_feas: float = 1e-6) -> ViolationReport:
    """Evaluate every original constraint family at a candidate schedule.

    Commitments are rounded to the nearest binary first; the rounding distance
    is the integrality family. Magnitudes are per unit except
    ``cost_identity``, which is the cost mismatch as a fraction of the unit's
    full-load hourly cost.
    """
    net = inst.network
    mats = mats or build_matrices(net)
    v, p, q = cand.v, cand.p, cand.q
    xr = np.clip(np.round(cand.x), 0, 1)
    rep = ViolationReport()
    rep.integrality = float(np.abs(cand.x - xr).max(initial=0.0))

    # nodal balance: d + diag(v v^* Y^*) - C^T (p + i q)
    inj = v * np.conj(mats.Y @ v)
    res = inst.demand + inj - mats.C.T @ (p + 1j * q)
    rep.power_balance = float(max(np.abs(res.real).max(initial=0.0),
                                  np.abs(res.imag).max(initial=0.0)))
    sf, st = flows(mats, v)
    lim = np.array([not br.unlimited for br in net.branches], dtype=bool)
    if lim.any():
        fmax = np.array([br.f_max for br in net.branches])[lim][:, None]
        over = np.maximum(np.abs(sf[lim]) - fmax, np.abs(st[lim]) - fmax)
        rep.flow_limit = float(max(0.0, over.max()))
    vm = np.abs(v)
    vmin = np.array([b.v_min for b in net.buses])[:, None]
    vmax = np.array([b.v_max for b in net.buses])[:, None]
    rep.voltage_bounds = float(max(0.0, (vmin - vm).max(initial=0.0),
                                   (vm - vmax).max(initial=0.0)))

    gens = net.generators
    pmin = np.array([g.p_min for g in gens])[:, None]
    pmax = np.array([g.p_max for g in gens])[:, None]
    qmin = np.array([g.q_min for g in gens])[:, None]
    qmax = np.array([g.q_max for g in gens])[:, None]
    cap = np.maximum.reduce([pmin * xr - p, p - pmax * xr, qmin * xr - q, q - qmax * xr])
    rep.capacity = float(max(0.0, cap.max(initial=0.0)))

    ramp = inst.econ_array("ramp")[:, None]
    sramp = inst.econ_array("startup_ramp")[:, None]
    if inst.initial is not None:
        xh = np.array([[s.x0] for s in inst.initial], dtype=float)
        ph = np.array([[s.p0] for s in inst.initial], dtype=float)
        xx = np.concatenate([xh, xr], axis=1)
        pp = np.concatenate([ph, p], axis=1)
    else:
        xx, pp = xr, p
    if xx.shape[1] > 1:
        dp = pp[:, 1:] - pp[:, :-1]
        up = dp - (ramp * xx[:, :-1] + sramp * (1 - xx[:, :-1]))
        dn = -dp - (ramp * xx[:, 1:] + sramp * (1 - xx[:, 1:]))
        rep.ramp = float(max(0.0, up.max(initial=0.0), dn.max(initial=0.0)))

    rep.min_up_down = _min_up_down_violation(inst, xr)

    cost = schedule_cost(inst, xr, p)
    rep.cost = float(cost.sum())
    if cand.c is not None:
        rel = np.abs(cand.c - cost) / full_load_cost(inst)[:, None]
        rep.cost_identity = float(rel.max(initial=0.0))

    rep.max_violation = max(getattr(rep, f) for f in FAMILIES)
    rep.feasible = rep.max_violation <= tol_feas
    return rep


def _history(inst: UcInstance, g: int, tau: int) -> float | None:
    """Recorded status of unit g at 1-based period tau <= 0."""
    if inst.initial is None:
        return None
    s = inst.initial[g]
    return float(s.x0) if tau >= -s.t0 else float(1 - s.x0)


def _min_up_down_violation(inst: UcInstance, xr: np.ndarray) -> float:
    T = inst.horizon
    worst = 0.0
    for g, e in enumerate(inst.economics):
        def x_at(tau):  # 1-based period
            return xr[g, tau - 1] if tau >= 1 else _history(inst, g, tau)
        for t in range(1, T + 1):
            for m, up in ((e.min_up, True), (e.min_down, False)):
                for tau in range(t - m + 1, t + 1):
                    a, b = x_at(tau), x_at(tau - 1)
                    if a is None or b is None:
                        continue
                    if up:
                        viol = a - b - xr[g, t - 1]
                    else:
                        viol = b - a - (1 - xr[g, t - 1])
                    worst = max(worst, viol)
    return float(worst)


def candidate_from(sol: RelaxationSolution) -> Schedule:
    return Schedule(v=sol.v.copy(), x=sol.x.copy(), p=sol.p.copy(), q=sol.q.copy(),
                    c=sol.c.copy())


def run(inst: UcInstance, options: RunOptions | None = None, anchor: Anchor | None = None,
        callback=None) -> RunResult:
    """Iterate the penalized relaxation, re-anchoring at each solution.

    Stops after ``options.rounds`` rounds, or once the iterate is feasible and
    the cost has changed by less than ``stop_rel_change`` (relative) for
    ``stop_patience`` consecutive rounds. Returns the cheapest feasible
    candidate seen (the last iterate when none was feasible).
    """
    opt = options or RunOptions()
    if opt.rounds < 1:
        raise ValueError("at least one round is required")
    t_start = time.perf_counter()
    net = inst.network
    mats = build_matrices(net)
    pen = build_penalty_matrix(net, opt.eta, opt.alpha, cover_isolated=True)
    anchor = (anchor or default_anchor(inst, mats)).copy()
    logs: list[RoundLog] = []
    anchors = [anchor]
    best, best_rep, last = None, None, None
    calm = 0
    prev_cost = None
    for k in range(1, opt.rounds + 1):
        t0 = time.perf_counter()
        kw = {} if opt.solver_tol is None else {"tol": opt.solver_tol}
        sol, res = solve_relaxation(inst, mats, pen, anchor, opt.mu, opt.mode,
                                    backend=opt.backend, cost_scale=opt.cost_scale, **kw)
        secs = time.perf_counter() - t0
        if sol is None:
            logs.append(RoundLog(k, float("nan"), float("nan"), float("nan"), float("nan"),
                                 res.status, secs))
            msg = f"round {k}: relaxation {res.status} ({res.raw_status})"
            log.warning(msg)
            status = "infeasible" if res.status == "infeasible" else "solver-failure"
            return RunResult(best or last, best_rep, logs, anchors, status, msg,
                             time.perf_counter() - t_start)
        cand = candidate_from(sol)
        rep = check(inst, cand, mats, opt.tol_feas)
        intgap = float(np.abs(sol.x - np.round(sol.x)).max(initial=0.0))
        lg = RoundLog(k, sol.objective_cost, sol.penalty_value, rep.max_violation, intgap,
                      res.status, secs, sol.w_mismatch())
        logs.append(lg)
        log.info("round %d cost %.6g penalty %.3g viol %.2e W mismatch %.2e (%.1fs)", k,
                 lg.objective_cost, lg.penalty_value, lg.max_violation, lg.w_mismatch, secs)
        if callback is not None:
            callback(lg)
        cand.meta = {"round": k, "cost": rep.cost, "max_violation": rep.max_violation,
                     "feasible": rep.feasible}
        last = cand
        if rep.feasible and (best_rep is None or rep.cost < best_rep.cost):
            best, best_rep = cand, rep
        anchor = sol.anchor()
        anchors.append(anchor)
        if prev_cost is not None and rep.feasible:
            change = abs(sol.objective_cost - prev_cost) / max(1.0, abs(prev_cost))
            calm = calm + 1 if change < opt.stop_rel_change else 0
        else:
            calm = 0
        prev_cost = sol.objective_cost
        if calm >= opt.stop_patience:
            break
    if best is None:
        best_rep = check(inst, last, mats, opt.tol_feas)
        return RunResult(last, best_rep, logs, anchors, "no-feasible",
                         "no round met the feasibility tolerance",
                         time.perf_counter() - t_start)
    return RunResult(best, best_rep, logs, anchors, "ok", "", time.perf_counter() - t_start)


def k_f(logs: list[RoundLog], tol_feas: float = 1e-6) -> int | None:
    """First round whose candidate violates no constraint by ``tol_feas`` or more."""
    return first_feasible_round(logs, tol_feas)
