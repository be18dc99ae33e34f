"""Lifted conic relaxation of AC unit commitment with the anchor-based loss penalty.

Variables (all real; complex quantities are split into real and imaginary
parts) are laid out in named blocks, see :func:`_layout`. Every monomial of
the original problem is replaced by an auxiliary variable:

    z ~ x^2, o ~ p^2, r ~ q^2, u ~ x_{t-1} x_t, b ~ x p,
    W ~ v v^*, ff/ft ~ |s|^2 of the from/to line flows,

and the auxiliaries are tied to the originals by small conic blocks. Two
realizations of the voltage coupling are available:

``edge-socp``
    per line a 3x3 Hermitian block ``[[1, v_i^*, v_j^*], [v_i, W_ii, W_ij],
    [v_j, W_ji, W_jj]] >= 0`` plus ``|v_i|^2 <= W_ii`` per bus. W only has
    diagonal and line entries.
``full-sdp``
    per period the whole-network Hermitian block ``[[1, v^*], [v, W]] >= 0``.
    It is imposed through one block per clique of a chordal extension of the
    network graph (exact by PSD completion, see :func:`sdp_structure`), or
    as a single dense block with ``dense_sdp=True``.

Hermitian blocks enter as their real embedding ``[[Re H, -Im H], [Im H, Re H]]``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from networkx.algorithms.approximation import treewidth_min_fill_in

from .case_io import UcInstance
from .conic import ConeBuilder, ConicProgram, RowBuilder, SolveResult, solve as solve_program
from .conic import triu_order
from .network import NetworkMatrices, PenaltyMatrix, bus_pairs

MODES = ("edge-socp", "full-sdp")
GEN_FIELDS = ("x", "p", "q", "c", "z", "o", "r", "u", "b")


@dataclass
class Anchor:
    v0: np.ndarray  # |V| x T complex
    x0: np.ndarray  # |G| x T
    s0: np.ndarray  # |G| x T complex, p + iq
    sf0: np.ndarray  # |E| x T complex
    st0: np.ndarray

    def check(self, inst: UcInstance) -> None:
        net, T = inst.network, inst.horizon
        want = {"v0": (net.n_bus, T), "x0": (net.n_gen, T), "s0": (net.n_gen, T),
                "sf0": (net.n_branch, T), "st0": (net.n_branch, T)}
        for name, shape in want.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"anchor {name} has shape {got}, expected {shape}")

    def copy(self) -> "Anchor":
        return Anchor(*(np.array(a) for a in (self.v0, self.x0, self.s0, self.sf0, self.st0)))


@dataclass
class RelaxationSolution:
    x: np.ndarray
    p: np.ndarray
    q: np.ndarray
    c: np.ndarray
    z: np.ndarray
    o: np.ndarray
    r: np.ndarray
    u: np.ndarray
    b: np.ndarray
    v: np.ndarray
    w_diag: np.ndarray  # |V| x T
    w_pairs: np.ndarray  # |P| x T complex, W[i, j] for pairs[k] = (i, j)
    pairs: np.ndarray
    sf: np.ndarray
    st: np.ndarray
    ff: np.ndarray
    ft: np.ndarray
    objective_cost: float
    penalty_value: float
    objective: float
    solver_status: str
    mode: str = "edge-socp"
    info: dict = field(default_factory=dict)

    def W(self, t: int) -> np.ndarray:
        """Dense W of period ``t`` (entries outside the stored pattern are zero)."""
        n = self.v.shape[0]
        W = np.diag(self.w_diag[:, t].astype(complex))
        if len(self.pairs):
            i, j = self.pairs.T
            W[i, j] = self.w_pairs[:, t]
            W[j, i] = np.conj(self.w_pairs[:, t])
        return W

    def anchor(self) -> Anchor:
        return Anchor(v0=self.v.copy(), x0=self.x.copy(), s0=self.p + 1j * self.q,
                      sf0=self.sf.copy(), st0=self.st.copy())

    def w_mismatch(self, pairs: np.ndarray | None = None) -> float:
        """Largest ``|W_ii - |v_i|^2|`` or ``|W_ij - v_i v_j^*|`` over stored entries."""
        d = np.abs(self.w_diag - np.abs(self.v) ** 2).max(initial=0.0)
        if len(self.pairs):
            i, j = self.pairs.T
            d = max(d, np.abs(self.w_pairs - self.v[i] * np.conj(self.v[j])).max())
        return float(d)


# ---------------------------------------------------------------------------
# assembly

def _layout(V: int, E: int, G: int, T: int, P: int) -> tuple[dict[str, np.ndarray], int]:
    blocks = [(name, G) for name in GEN_FIELDS]
    blocks += [("vr", V), ("vi", V), ("wd", V), ("wr", P), ("wi", P),
               ("sfr", E), ("sfi", E), ("str", E), ("sti", E), ("ff", E), ("ft", E)]
    idx, n = {}, 0
    for name, rows in blocks:
        idx[name] = np.arange(n, n + rows * T).reshape(rows, T)
        n += rows * T
    return idx, n


def count_formula(V: int, E: int, G: int, T: int, P: int, mode: str = "edge-socp",
                  n_limited: int | None = None, n_cliques: int = 1) -> dict[str, int]:
    """Closed-form variable and cone counts of :func:`assemble` (history present).

    ``P`` is the number of stored W pairs; in full-sdp mode ``n_cliques`` is
    the number of clique blocks per period.
    """
    n_limited = E if n_limited is None else n_limited
    out = {"variables": T * (9 * G + 3 * V + 2 * P + 6 * E)}
    out["psd"] = G * T + G * (T - 1) + (P * T if mode == "edge-socp" else 0)
    out["psd_full"] = T * n_cliques if mode == "full-sdp" else 0
    out["rsoc"] = G * T + 2 * E * T + (V * T if mode == "edge-socp" else 0)
    out["nonneg"] = 0
    # equalities: z=x, cost, u at t=1, balance (2 per bus), flows (4 per line)
    out["equalities"] = 2 * G * T + G + T * (2 * V + 4 * E)
    return out


def all_pairs(V: int) -> np.ndarray:
    i, j = np.triu_indices(V, 1)
    return np.c_[i, j]


def sdp_structure(V: int, mats: NetworkMatrices,
                  dense: bool = False) -> tuple[np.ndarray, list[list[int]]]:
    """Stored W pairs and the bus cliques of the full SDP coupling.

    A matrix whose entries are given on a chordal pattern has a PSD completion
    iff every maximal-clique submatrix is PSD, so one ``[[1, v^*], [v, W]]``
    block per clique of a chordal extension of the network graph is exactly
    the whole-network block with free fill entries. ``dense`` keeps the single
    block over all buses instead.
    """
    if dense:
        return all_pairs(V), [list(range(V))]
    graph = nx.Graph()
    graph.add_nodes_from(range(V))
    graph.add_edges_from(map(tuple, bus_pairs(mats).tolist()))
    _, decomp = treewidth_min_fill_in(graph)
    chordal = nx.Graph()
    chordal.add_nodes_from(range(V))
    for bag in decomp.nodes:
        chordal.add_edges_from(itertools.combinations(sorted(bag), 2))
    cliques = sorted(sorted(c) for c in nx.chordal_graph_cliques(chordal))
    pairs = sorted((min(i, j), max(i, j)) for i, j in chordal.edges)
    return np.array(pairs, dtype=int).reshape(-1, 2), cliques


Expr = tuple  # (list of (cols, coefs), const)
ZERO: Expr = ([], 0.0)


def _neg(e: Expr) -> Expr:
    return ([(c, -np.asarray(v, dtype=float)) for c, v in e[0]], -np.asarray(e[1], dtype=float))


def _hermitian_rows(re: dict, im: dict, d: int) -> list[Expr]:
    """Rows (upper triangle, column-major) of the real embedding of a d x d Hermitian
    expression matrix given by its upper-triangular real parts ``re[(i, j)]`` and
    strictly upper imaginary parts ``im[(i, j)]``."""
    rows = []
    for a, b in triu_order(2 * d):
        if b < d:
            rows.append(re[(a, b)])
        elif a >= d:
            rows.append(re[(a - d, b - d)])
        else:
            i, j = a, b - d
            if i == j:
                rows.append(ZERO)
            elif i < j:
                rows.append(_neg(im[(i, j)]))
            else:
                rows.append(im[(j, i)])
    return rows


def default_cost_scale(inst: UcInstance) -> float:
    return float(inst.network.base_power) ** 2


def assemble(inst: UcInstance, mats: NetworkMatrices, pen: PenaltyMatrix | None,
             anchor: Anchor | None, mu: float, mode: str = "edge-socp",
             cost_scale: float | None = None, dense_sdp: bool = False) -> ConicProgram:
    """Build the penalized relaxation ``sum(c) / cost_scale + mu * kappa`` over the
    lifted feasible set.

    Costs are in dollars while kappa is a sum of squared per-unit quantities;
    ``cost_scale`` (default: the squared base power, so quadratic cost
    coefficients act on squared per-unit power) puts the cost on the same
    footing so that ``mu`` weighs comparable magnitudes.

    ``inst.initial`` may be ``None`` (single-period dispatch without history):
    start-up/shut-down costs, ramp rows and minimum up/down rows that would
    reach before the first period are then omitted.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mu < 0:
        raise ValueError("penalty weight must be nonnegative")
    cost_scale = default_cost_scale(inst) if cost_scale is None else float(cost_scale)
    if not cost_scale > 0:
        raise ValueError("cost scale must be positive")
    if mu > 0 and (anchor is None or pen is None):
        raise ValueError("a positive penalty weight needs an anchor and a penalty matrix")
    net = inst.network
    V, E, G, T = net.n_bus, net.n_branch, net.n_gen, inst.horizon
    if inst.demand.shape != (V, T):
        raise ValueError("demand dimensions do not match the network and horizon")
    if mats.Y.shape != (V, V) or mats.C.shape != (G, V):
        raise ValueError("network matrices do not match the instance")
    if anchor is not None:
        anchor.check(inst)
    cliques = None
    if mode == "edge-socp":
        pairs = bus_pairs(mats)
    else:
        pairs, cliques = sdp_structure(V, mats, dense_sdp)
    P = len(pairs)
    pair_of = {(int(i), int(j)): k for k, (i, j) in enumerate(pairs)}
    idx, n = _layout(V, E, G, T, P)
    eq, le, cones = RowBuilder(n), RowBuilder(n), ConeBuilder(n)

    _unit_rows(inst, idx, eq, le, cones, cost_scale)
    _network_rows(inst, mats, idx, pairs, pair_of, mode, eq, le, cones, cliques)

    cvec = np.zeros(n)
    cvec[idx["c"]] = 1.0
    c0 = 0.0
    if mu > 0:
        c0 = _penalty_objective(cvec, idx, pen, anchor, pair_of, mu)

    A_eq, b_eq = eq.matrix()
    A_in, b_in = le.matrix()
    F, g = cones.matrix()
    prog = ConicProgram(n=n, c=cvec, c0=c0, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
                        F=F, g=g, cones=cones.cones, index=idx,
                        meta={"pairs": pairs, "mode": mode, "mu": mu, "horizon": T,
                              "cost_scale": cost_scale,
                              "anchor": anchor, "penalty": pen})
    prog.validate()
    return prog


def _unit_rows(inst, idx, eq, le, cones, cost_scale: float = 1.0) -> None:
    net = inst.network
    G, T = net.n_gen, inst.horizon
    B = net.base_power
    X, Pv, Q, Cc, Z, O, R, U, Bx = (idx[k] for k in GEN_FIELDS)
    al, be, ga = inst.econ_array("alpha"), inst.econ_array("beta"), inst.econ_array("gamma")
    gu, gd = inst.econ_array("gamma_up"), inst.econ_array("gamma_down")
    ramp, sramp = inst.econ_array("ramp"), inst.econ_array("startup_ramp")
    pmin = np.array([g.p_min for g in net.generators])
    pmax = np.array([g.p_max for g in net.generators])
    qmin = np.array([g.q_min for g in net.generators])
    qmax = np.array([g.q_max for g in net.generators])
    hist = inst.initial is not None
    if hist:
        xh = np.array([s.x0 for s in inst.initial], dtype=float)
        ph = np.array([s.p0 for s in inst.initial], dtype=float)
        th = np.array([s.t0 for s in inst.initial], dtype=int)

    # z = x
    eq.add([(Z.ravel(), 1.0), (X.ravel(), -1.0)], 0.0)
    # cost identity; powers converted to MW and the c variables hold dollars / cost_scale,
    # which keeps these rows well scaled
    al, be, ga, gu, gd = (a / cost_scale for a in (al, be, ga, gu, gd))
    if T > 1:
        s = np.s_[:, 1:]
        eq.add([(Cc[s].ravel(), 1.0),
                (Pv[s].ravel(), np.repeat(-al * B, T - 1)),
                (O[s].ravel(), np.repeat(-be * B * B, T - 1)),
                (X[s].ravel(), np.repeat(-(ga + gu), T - 1)),
                (U[s].ravel(), np.repeat(gu + gd, T - 1)),
                (X[:, :-1].ravel(), np.repeat(-gd, T - 1))], 0.0)
    if hist:
        # x_{t-1} is the recorded initial status; u_1 = x_0 x_1 exactly for binary x_0
        eq.add([(Cc[:, 0], 1.0), (Pv[:, 0], -al * B), (O[:, 0], -be * B * B),
                (X[:, 0], -(ga + gu)), (U[:, 0], gu + gd)], gd * xh)
        eq.add([(U[:, 0], 1.0), (X[:, 0], -xh)], 0.0)
    else:
        eq.add([(Cc[:, 0], 1.0), (Pv[:, 0], -al * B), (O[:, 0], -be * B * B),
                (X[:, 0], -ga)], 0.0)
        eq.add([(U[:, 0], 1.0)], 0.0)

    # minimum up / down windows
    rows_c, rows_v, rows_r = [], [], []

    def row(terms, rhs):
        rows_c.append([c for c, _ in terms])
        rows_v.append([v for _, v in terms])
        rows_r.append(rhs)

    mup, mdn = inst.econ_array("min_up").astype(int), inst.econ_array("min_down").astype(int)
    for g in range(G):
        for t in range(T):  # 0-based; period t+1
            for m, up in ((mup[g], True), (mdn[g], False)):
                sgn = 1.0 if up else -1.0
                # up:   x_tau - x_{tau-1} - x_t <= 0
                # down: x_{tau-1} - x_tau + x_t <= 1
                rhs = 0.0 if up else 1.0
                for tau in range(t - m + 1, t):
                    if tau >= 1:
                        row([(X[g, tau], sgn), (X[g, tau - 1], -sgn), (X[g, t], -sgn)], rhs)
                    elif tau == 0:
                        if hist:
                            row([(X[g, 0], sgn), (X[g, t], -sgn)], rhs + sgn * xh[g])
                    elif hist and tau == -1 - th[g]:
                        # recorded switch into the initial status
                        jump = 2 * xh[g] - 1
                        if sgn * jump > 0:
                            row([(X[g, t], -sgn)], rhs - sgn * jump)
    if rows_r:
        rc = np.zeros((len(rows_r), 3), dtype=np.int64)
        rv = np.zeros((len(rows_r), 3))
        for k, (cs, vs) in enumerate(zip(rows_c, rows_v)):
            rc[k, :len(cs)] = cs
            rv[k, :len(vs)] = vs
        r = le.alloc(np.array(rows_r))
        le.put(r[:, None], rc, rv)

    # capacity
    for var, lo, hi in ((Pv, pmin, pmax), (Q, qmin, qmax)):
        le.add([(X.ravel(), np.repeat(lo, T)), (var.ravel(), -1.0)], 0.0)
        le.add([(var.ravel(), 1.0), (X.ravel(), np.repeat(-hi, T))], 0.0)
    # ramping: r x + s (1 - x) = s + (r - s) x
    if T > 1:
        rs = np.repeat(ramp - sramp, T - 1)
        ss = np.repeat(sramp, T - 1)
        le.add([(Pv[:, 1:].ravel(), 1.0), (Pv[:, :-1].ravel(), -1.0), (X[:, :-1].ravel(), -rs)], ss)
        le.add([(Pv[:, :-1].ravel(), 1.0), (Pv[:, 1:].ravel(), -1.0), (X[:, 1:].ravel(), -rs)], ss)
    if hist:
        le.add([(Pv[:, 0], 1.0)], ph + sramp + (ramp - sramp) * xh)
        le.add([(Pv[:, 0], -1.0), (X[:, 0], -(ramp - sramp))], sramp - ph)
    # 0 <= x <= 1
    le.add([(X.ravel(), -1.0)], 0.0)
    le.add([(X.ravel(), 1.0)], 1.0)

    one = ([], 1.0)
    v = lambda a: ([(a, 1.0)], 0.0)  # noqa: E731
    # [[1, x_{t-1}, x_t], [., z_{t-1}, u_t], [., ., z_t]] >= 0
    cones.add("psd", 3, [one, v(X[:, :-1].ravel()), v(Z[:, :-1].ravel()),
                         v(X[:, 1:].ravel()), v(U[:, 1:].ravel()), v(Z[:, 1:].ravel())])
    # [[1, x, p], [., z, b], [., ., o]] >= 0
    cones.add("psd", 3, [one, v(X.ravel()), v(Z.ravel()), v(Pv.ravel()), v(Bx.ravel()),
                         v(O.ravel())])
    # r >= q^2
    cones.add("rsoc", 3, [v(R.ravel()), ([], 0.5), v(Q.ravel())])


def _wentry(idx, pair_of, a, b):
    """Columns and signs expressing W[a, b] = wr + i * sgn * wi for index arrays a != b."""
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    k = np.array([pair_of[(int(i), int(j))] for i, j in zip(lo, hi)], dtype=int)
    sgn = np.where(a < b, 1.0, -1.0)
    return k, sgn


def _network_rows(inst, mats, idx, pairs, pair_of, mode, eq, le, cones,
                  cliques=None) -> None:
    net = inst.network
    V, E, T = net.n_bus, net.n_branch, inst.horizon
    Wd, Wr, Wi = idx["wd"], idx["wr"], idx["wi"]
    Vr, Vi = idx["vr"], idx["vi"]

    # nodal balance: d + diag(W Y^*) = C^T (p + i q), split into real/imag rows per (k, t)
    d = inst.demand
    re_rows = eq.alloc(-d.real.ravel()).reshape(V, T)
    im_rows = eq.alloc(-d.imag.ravel()).reshape(V, T)
    Y = mats.Y.tocoo()
    dg = Y.row == Y.col
    Gd = np.zeros(V)
    Bd = np.zeros(V)
    np.add.at(Gd, Y.row[dg], Y.data[dg].real)
    np.add.at(Bd, Y.row[dg], Y.data[dg].imag)
    eq.put(re_rows, Wd, Gd[:, None])
    eq.put(im_rows, Wd, -Bd[:, None])
    a, b, y = Y.row[~dg], Y.col[~dg], Y.data[~dg]
    if len(a):
        k, sgn = _wentry(idx, pair_of, a, b)
        G_, B_ = y.real[:, None], y.imag[:, None]
        s_ = sgn[:, None]
        # W_ab conj(Y_ab) = (wr + i s wi)(G - i B)
        eq.put(re_rows[a], Wr[k], G_)
        eq.put(re_rows[a], Wi[k], s_ * B_)
        eq.put(im_rows[a], Wi[k], s_ * G_)
        eq.put(im_rows[a], Wr[k], -B_)
    gb = mats.gen_bus
    eq.put(re_rows[gb], idx["p"], -1.0)
    eq.put(im_rows[gb], idx["q"], -1.0)

    # line flows
    if E:
        f, t = mats.f, mats.t
        if np.any(f == t):
            raise ValueError("self-loop branches are not supported")
        for (sr, si), own, other, y_own, y_oth in (
            (("sfr", "sfi"), f, t, mats.yff, mats.yft),
            (("str", "sti"), t, f, mats.ytt, mats.ytf),
        ):
            rr = eq.alloc(np.zeros(E * T)).reshape(E, T)
            ri = eq.alloc(np.zeros(E * T)).reshape(E, T)
            k, sgn = _wentry(idx, pair_of, own, other)
            s_ = sgn[:, None]
            eq.put(rr, idx[sr], 1.0)
            eq.put(ri, idx[si], 1.0)
            eq.put(rr, Wd[own], -y_own.real[:, None])
            eq.put(ri, Wd[own], y_own.imag[:, None])
            eq.put(rr, Wr[k], -y_oth.real[:, None])
            eq.put(rr, Wi[k], -s_ * y_oth.imag[:, None])
            eq.put(ri, Wi[k], -s_ * y_oth.real[:, None])
            eq.put(ri, Wr[k], y_oth.imag[:, None])

    # voltage magnitude bounds on diag(W)
    vmin = np.array([bb.v_min for bb in net.buses])
    vmax = np.array([bb.v_max for bb in net.buses])
    le.add([(Wd.ravel(), -1.0)], -np.repeat(vmin**2, T))
    le.add([(Wd.ravel(), 1.0)], np.repeat(vmax**2, T))

    # |s|^2 <= f <= f_max^2
    if E:
        for fv, sr, si in (("ff", "sfr", "sfi"), ("ft", "str", "sti")):
            cones.add("rsoc", 4, [([(idx[fv].ravel(), 1.0)], 0.0), ([], 0.5),
                                  ([(idx[sr].ravel(), 1.0)], 0.0),
                                  ([(idx[si].ravel(), 1.0)], 0.0)])
            lim = np.array([not br.unlimited for br in net.branches])
            if lim.any():
                fmax2 = np.array([br.f_max**2 for br in net.branches])[lim]
                le.add([(idx[fv][lim].ravel(), 1.0)], np.repeat(fmax2, T))

    ex = lambda cols, coef=1.0: ([(cols, coef)], 0.0)  # noqa: E731
    if mode == "edge-socp":
        if len(pairs):
            i, j = pairs[:, 0], pairs[:, 1]
            kk = np.arange(len(pairs))
            re = {(0, 0): ([], 1.0), (0, 1): ex(Vr[i].ravel()), (0, 2): ex(Vr[j].ravel()),
                  (1, 1): ex(Wd[i].ravel()), (1, 2): ex(Wr[kk].ravel()),
                  (2, 2): ex(Wd[j].ravel())}
            im = {(0, 1): ex(Vi[i].ravel(), -1.0), (0, 2): ex(Vi[j].ravel(), -1.0),
                  (1, 2): ex(Wi[kk].ravel())}
            cones.add("psd", 6, _hermitian_rows(re, im, 3))
        cones.add("rsoc", 4, [ex(Wd.ravel()), ([], 0.5), ex(Vr.ravel()), ex(Vi.ravel())])
    else:
        # one block [[1, v_K^*], [v_K, W_KK]] per clique K; with a single clique
        # holding every bus this is the whole-network block
        by_size: dict[int, list] = {}
        for K in cliques:
            by_size.setdefault(len(K), []).append(sorted(K))
        for size, group in sorted(by_size.items()):
            K = np.array(group, dtype=int)  # cliques x size
            col = lambda block, rows: block[rows].ravel()  # noqa: E731
            re = {(0, 0): ([], 1.0)}
            im = {}
            for a_ in range(size):
                re[(0, a_ + 1)] = ex(col(Vr, K[:, a_]))
                im[(0, a_ + 1)] = ex(col(Vi, K[:, a_]), -1.0)
                re[(a_ + 1, a_ + 1)] = ex(col(Wd, K[:, a_]))
                for b_ in range(a_ + 1, size):
                    k_ = np.array([pair_of[(int(i), int(j))]
                                   for i, j in zip(K[:, a_], K[:, b_])], dtype=int)
                    re[(a_ + 1, b_ + 1)] = ex(col(Wr, k_))
                    im[(a_ + 1, b_ + 1)] = ex(col(Wi, k_))
            cones.add("psd_full", 2 * (size + 1), _hermitian_rows(re, im, size + 1))


def _penalty_objective(cvec, idx, pen: PenaltyMatrix, anchor: Anchor, pair_of, mu) -> float:
    """Add ``mu * kappa`` to ``cvec``; return the constant part ``mu * kappa(0)``."""
    T = anchor.v0.shape[1]
    cvec[idx["wd"]] += mu * pen.diag[:, None]
    if len(pen.pairs):
        k = np.array([pair_of[(int(i), int(j))] for i, j in pen.pairs], dtype=int)
        cvec[idx["wr"][k]] += mu * 2 * pen.offdiag.real[:, None]
        cvec[idx["wi"][k]] += mu * 2 * pen.offdiag.imag[:, None]
    Mv0 = np.column_stack([pen.matvec(anchor.v0[:, t]) for t in range(T)])
    cvec[idx["vr"]] += -2 * mu * Mv0.real
    cvec[idx["vi"]] += -2 * mu * Mv0.imag
    const = float(np.sum((np.conj(anchor.v0) * Mv0).real))
    cvec[idx["z"]] += mu
    cvec[idx["x"]] += -2 * mu * anchor.x0
    const += float(np.sum(anchor.x0**2))
    cvec[idx["o"]] += mu
    cvec[idx["p"]] += -2 * mu * anchor.s0.real
    cvec[idx["r"]] += mu
    cvec[idx["q"]] += -2 * mu * anchor.s0.imag
    const += float(np.sum(np.abs(anchor.s0) ** 2))
    for fv, sr, si, s0 in (("ff", "sfr", "sfi", anchor.sf0), ("ft", "str", "sti", anchor.st0)):
        cvec[idx[fv]] += mu
        cvec[idx[sr]] += -2 * mu * s0.real
        cvec[idx[si]] += -2 * mu * s0.imag
        const += float(np.sum(np.abs(s0) ** 2))
    return mu * const


# ---------------------------------------------------------------------------
# evaluation and extraction

def _pairs_onto(src_pairs: np.ndarray, src_vals: np.ndarray, dst_pairs: np.ndarray) -> np.ndarray:
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(src_pairs)}
    out = np.zeros((len(dst_pairs),) + src_vals.shape[1:], dtype=complex)
    for k, (i, j) in enumerate(dst_pairs):
        s = lookup.get((int(i), int(j)))
        if s is not None:
            out[k] = src_vals[s]
    return out


def penalty_value(sol: RelaxationSolution, anchor: Anchor, pen: PenaltyMatrix) -> float:
    """Evaluate the penalty term (summed over periods) at a lifted point."""
    T = sol.v.shape[1]
    wM = _pairs_onto(sol.pairs, sol.w_pairs, pen.pairs)
    total = 0.0
    for t in range(T):
        Mv0 = pen.matvec(anchor.v0[:, t])
        total += pen.trace_with(sol.w_diag[:, t], wM[:, t])
        total += -2 * np.vdot(Mv0, sol.v[:, t]).real + np.vdot(anchor.v0[:, t], Mv0).real
    x0, p0, q0 = anchor.x0, anchor.s0.real, anchor.s0.imag
    total += np.sum(sol.z) - 2 * np.sum(sol.x * x0) + np.sum(x0 * x0)
    total += np.sum(sol.o) - 2 * np.sum(sol.p * p0) + np.sum(p0 * p0)
    total += np.sum(sol.r) - 2 * np.sum(sol.q * q0) + np.sum(q0 * q0)
    for f, s, s0 in ((sol.ff, sol.sf, anchor.sf0), (sol.ft, sol.st, anchor.st0)):
        total += np.sum(f) - 2 * np.sum((np.conj(s0) * s).real) + np.sum(np.abs(s0) ** 2)
    return float(total)


def extract(prog: ConicProgram, x: np.ndarray, inst: UcInstance,
            status: str = "optimal") -> RelaxationSolution:
    """Map a raw primal vector of :func:`assemble`'s program back to named fields."""
    idx = prog.index
    if x.shape != (prog.n,):
        raise RuntimeError("primal vector does not match program size")
    get = {k: x[v] for k, v in idx.items()}
    sol = RelaxationSolution(
        **{k: get[k] for k in GEN_FIELDS if k != "c"},
        c=get["c"] * prog.meta["cost_scale"],
        v=get["vr"] + 1j * get["vi"],
        w_diag=get["wd"],
        w_pairs=get["wr"] + 1j * get["wi"],
        pairs=prog.meta["pairs"],
        sf=get["sfr"] + 1j * get["sfi"],
        st=get["str"] + 1j * get["sti"],
        ff=get["ff"], ft=get["ft"],
        objective_cost=float(get["c"].sum() * prog.meta["cost_scale"]),
        penalty_value=0.0,
        objective=prog.objective(x),
        solver_status=status,
        mode=prog.meta["mode"],
    )
    mu = prog.meta["mu"]
    if mu > 0:
        sol.penalty_value = penalty_value(sol, prog.meta["anchor"], prog.meta["penalty"])
    recomputed = sol.objective_cost / prog.meta["cost_scale"] + mu * sol.penalty_value
    scale = max(1.0, abs(sol.objective))
    if abs(recomputed - sol.objective) > 1e-6 * scale:
        raise RuntimeError(
            f"objective bookkeeping mismatch: fields give {recomputed!r}, "
            f"program gives {sol.objective!r}"
        )
    return sol


def solve(prog: ConicProgram, backend: str = "auto", **kw) -> SolveResult:
    return solve_program(prog, backend=backend, **kw)


def solve_relaxation(inst, mats, pen, anchor, mu, mode="edge-socp", backend="auto",
                     cost_scale=None, dense_sdp=False,
                     **kw) -> tuple[RelaxationSolution | None, SolveResult]:
    prog = assemble(inst, mats, pen, anchor, mu, mode, cost_scale, dense_sdp)
    res = solve_program(prog, backend=backend, **kw)
    if not res.ok:
        return None, res
    sol = extract(prog, res.x, inst, res.status)
    sol.info = {"seconds": res.seconds, "iterations": res.iterations,
                "backend": res.backend, "residuals": res.residuals}
    return sol, res
