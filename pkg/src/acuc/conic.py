"""A small real conic-program container and adapters to interior-point/first-order backends.

Program form::

    minimize    c @ x + c0
    subject to  A_eq @ x == b_eq
                A_in @ x <= b_in
                F @ x + g  in  K_1 x ... x K_r

Cone kinds and the layout of their rows in ``F``:

``nonneg``  (dim k)      k rows, each >= 0.
``rsoc``    (dim k)      rows (u, w, z_1..z_{k-2}) with 2 u w >= |z|^2, u, w >= 0.
``psd``     (dim d)      d(d+1)/2 rows holding the upper triangle of a symmetric
                         d x d matrix, column by column: (0,0), (0,1), (1,1), (0,2), ...
``psd_full``             same layout; marks a whole-network block rather than a
                         small local one.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

CONE_KINDS = ("nonneg", "rsoc", "psd", "psd_full")
STATUSES = ("optimal", "near-optimal", "infeasible", "unbounded", "numerical-failure")


def cone_rows(kind: str, dim: int) -> int:
    if kind in ("psd", "psd_full"):
        return dim * (dim + 1) // 2
    return dim


def triu_order(d: int) -> list[tuple[int, int]]:
    """Row order of a PSD block: upper triangle, column-major."""
    return [(i, j) for j in range(d) for i in range(j + 1)]


@dataclass
class ConicProgram:
    n: int
    c: np.ndarray
    c0: float
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    F: sp.csr_matrix
    g: np.ndarray
    cones: list[tuple[str, int]]
    index: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        m = sum(cone_rows(k, d) for k, d in self.cones)
        if self.F.shape != (m, self.n) or self.g.shape != (m,):
            raise ValueError("cone rows do not match cone list")
        if self.A_eq.shape[1] != self.n or self.A_in.shape[1] != self.n:
            raise ValueError("constraint width does not match variable count")
        for kind, _ in self.cones:
            if kind not in CONE_KINDS:
                raise ValueError(f"unknown cone kind {kind!r}")

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def counts(self) -> dict[str, int]:
        out = {"variables": self.n, "equalities": self.A_eq.shape[0],
               "inequalities": self.A_in.shape[0]}
        for kind in CONE_KINDS:
            out[kind] = sum(1 for k, _ in self.cones if k == kind)
        return out

    def residuals(self, x: np.ndarray) -> dict[str, float]:
        """Largest violation of each constraint group at ``x``."""
        out = {
            "eq": float(np.abs(self.A_eq @ x - self.b_eq).max(initial=0.0)),
            "in": float(np.maximum(self.A_in @ x - self.b_in, 0).max(initial=0.0)),
        }
        s = self.F @ x + self.g
        worst = {"nonneg": 0.0, "rsoc": 0.0, "psd": 0.0}
        pos = 0
        for kind, dim in self.cones:
            m = cone_rows(kind, dim)
            blk = s[pos:pos + m]
            pos += m
            if kind == "nonneg":
                v = max(0.0, -blk.min(initial=0.0))
            elif kind == "rsoc":
                u, w, z = blk[0], blk[1], blk[2:]
                # distance-like measure: how far the hyperbolic inequality is off
                v = max(0.0, -u, -w, float(z @ z) - 2 * u * w)
            else:
                v = max(0.0, -np.linalg.eigvalsh(unvec_triu(blk, dim)).min())
                kind = "psd"
            worst[kind] = max(worst[kind], v)
        out.update(worst)
        return out

    def dump(self, path) -> None:
        """Write a plain sparse listing of the program (one entry per line)."""
        with open(path, "w") as fh:
            fh.write(f"n {self.n}\nobjective_constant {self.c0!r}\n")
            for j in np.flatnonzero(self.c):
                fh.write(f"c {j} {self.c[j]!r}\n")
            for tag, A, b in (("eq", self.A_eq, self.b_eq), ("le", self.A_in, self.b_in)):
                A = A.tocsr()
                for r in range(A.shape[0]):
                    lo, hi = A.indptr[r], A.indptr[r + 1]
                    terms = " ".join(f"{j}:{v!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
                    fh.write(f"{tag} {r} rhs={b[r]!r} {terms}\n")
            F = self.F.tocsr()
            pos = 0
            for k, (kind, dim) in enumerate(self.cones):
                fh.write(f"cone {k} {kind} {dim}\n")
                for r in range(pos, pos + cone_rows(kind, dim)):
                    lo, hi = F.indptr[r], F.indptr[r + 1]
                    terms = " ".join(f"{j}:{v!r}" for j, v in zip(F.indices[lo:hi], F.data[lo:hi]))
                    fh.write(f"  row {r} const={self.g[r]!r} {terms}\n")
                pos += cone_rows(kind, dim)


def unvec_triu(vals: np.ndarray, d: int) -> np.ndarray:
    S = np.zeros((d, d))
    iu = np.array(triu_order(d)).T
    S[iu[0], iu[1]] = vals
    S[iu[1], iu[0]] = vals
    return S


# ---------------------------------------------------------------------------
# Assembly helper

def _batch(arrays) -> int:
    """Common length of the non-scalar arrays (1 when all are scalars)."""
    for a in arrays:
        a = np.asarray(a)
        if a.ndim:
            return a.shape[0]
    return 1


class RowBuilder:
    """Accumulates sparse affine rows in COO form.

    Each call to :meth:`add` appends ``k`` rows that share the same term
    structure; ``terms`` is a list of ``(columns, coefficients)`` pairs,
    each broadcastable to shape ``(k,)``.
    """

    def __init__(self, n: int):
        self.n = n
        self.nrows = 0
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []

    def add(self, terms, rhs) -> np.ndarray:
        k = _batch([rhs] + [a for term in terms for a in term])
        rhs = np.asarray(rhs, dtype=float)
        rows = np.arange(self.nrows, self.nrows + k)
        self.nrows += k
        self._rhs.append(np.array(np.broadcast_to(rhs, (k,))))
        for cols, coef in terms:
            cols = np.broadcast_to(np.asarray(cols, dtype=np.int64), (k,))
            coef = np.broadcast_to(np.asarray(coef, dtype=float), (k,))
            keep = coef != 0
            self._r.append(rows[keep])
            self._c.append(cols[keep])
            self._v.append(coef[keep])
        return rows

    def alloc(self, rhs) -> np.ndarray:
        """Open empty rows with the given right-hand sides; fill them with :meth:`put`."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        rows = np.arange(self.nrows, self.nrows + rhs.shape[0])
        self.nrows += rhs.shape[0]
        self._rhs.append(np.array(rhs))
        return rows

    def put(self, rows, cols, coefs) -> None:
        rows, cols, coefs = np.broadcast_arrays(np.asarray(rows, dtype=np.int64),
                                                np.asarray(cols, dtype=np.int64),
                                                np.asarray(coefs, dtype=float))
        keep = coefs != 0
        self._r.append(rows[keep].ravel())
        self._c.append(cols[keep].ravel())
        self._v.append(coefs[keep].ravel())

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self._r:
            r, c, v = (np.concatenate(a) for a in (self._r, self._c, self._v))
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        A = sp.csr_matrix((v, (r, c)), shape=(self.nrows, self.n))
        A.sum_duplicates()
        b = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        return A, b


class ConeBuilder:
    """Accumulates cone blocks; blocks of one call are laid out contiguously."""

    def __init__(self, n: int):
        self.n = n
        self.nrows = 0
        self.cones: list[tuple[str, int]] = []
        self._r: list[np.ndarray] = []
        self._c: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._g: list[tuple[np.ndarray, np.ndarray]] = []

    def add(self, kind: str, dim: int, entries: list) -> None:
        """Append ``k`` cones of one kind.

        ``entries[e]`` is the affine expression of row ``e`` within each cone,
        given as ``(terms, const)`` with ``terms`` as in :meth:`RowBuilder.add`
        and everything broadcastable to ``(k,)``.
        """
        m = cone_rows(kind, dim)
        if len(entries) != m:
            raise ValueError(f"{kind} cone of dim {dim} needs {m} rows, got {len(entries)}")
        k = _batch([a for terms, const in entries
                    for a in [const] + [x for term in terms for x in term]])
        base = self.nrows + m * np.arange(k)
        for e, (terms, const) in enumerate(entries):
            rows = base + e
            self._g.append((rows, np.broadcast_to(np.asarray(const, dtype=float), (k,))))
            for cols, coef in terms:
                cols = np.broadcast_to(np.asarray(cols, dtype=np.int64), (k,))
                coef = np.broadcast_to(np.asarray(coef, dtype=float), (k,))
                keep = coef != 0
                self._r.append(rows[keep])
                self._c.append(cols[keep])
                self._v.append(coef[keep])
        self.nrows += m * k
        self.cones.extend([(kind, dim)] * k)

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        if self._r:
            r, c, v = (np.concatenate(a) for a in (self._r, self._c, self._v))
        else:
            r = c = np.zeros(0, dtype=np.int64)
            v = np.zeros(0)
        F = sp.csr_matrix((v, (r, c)), shape=(self.nrows, self.n))
        F.sum_duplicates()
        g = np.zeros(self.nrows)
        for rows, const in self._g:
            g[rows] = const
        return F, g


# ---------------------------------------------------------------------------
# Backends

@dataclass
class SolveResult:
    x: np.ndarray | None
    status: str
    objective: float
    backend: str
    seconds: float
    iterations: int = 0
    raw_status: str = ""
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "near-optimal")


def _standard_form(prog: ConicProgram):
    """Map to ``A x + s = b`` with cones grouped as zero, nonneg, soc, psd.

    Returns ``(A, b, dims, psd_perms)`` where psd rows are still in
    upper-triangle column-major order (the backend adapter reorders/scales).
    """
    F = prog.F.tocsr()
    g = prog.g
    nn_rows, soc_blocks, psd_blocks = [], [], []
    pos = 0
    for kind, dim in prog.cones:
        m = cone_rows(kind, dim)
        if kind == "nonneg":
            nn_rows.append(np.arange(pos, pos + m))
        elif kind == "rsoc":
            soc_blocks.append((pos, dim))
        else:
            psd_blocks.append((pos, dim))
        pos += m

    blocks_A = [prog.A_eq, prog.A_in]
    blocks_b = [prog.b_eq, prog.b_in]
    if nn_rows:
        idx = np.concatenate(nn_rows)
        blocks_A.append(-F[idx])
        blocks_b.append(g[idx])
    # rotated (u, w, z) -> standard ((u+w)/sqrt2, (u-w)/sqrt2, z)
    soc_dims = []
    if soc_blocks:
        idx, tr_r, tr_c, tr_v = [], [], [], []
        r = 0
        h = 1 / np.sqrt(2)
        for start, dim in soc_blocks:
            idx.extend(range(start, start + dim))
            tr_r += [r, r, r + 1, r + 1] + list(range(r + 2, r + dim))
            tr_c += [r, r + 1, r, r + 1] + list(range(r + 2, r + dim))
            tr_v += [h, h, h, -h] + [1.0] * (dim - 2)
            soc_dims.append(dim)
            r += dim
        Tm = sp.csr_matrix((tr_v, (tr_r, tr_c)), shape=(r, r))
        idx = np.array(idx)
        blocks_A.append(-(Tm @ F[idx]))
        blocks_b.append(Tm @ g[idx])
    psd_dims = []
    if psd_blocks:
        idx = np.concatenate([np.arange(s, s + cone_rows("psd", d)) for s, d in psd_blocks])
        blocks_A.append(-F[idx])
        blocks_b.append(g[idx])
        psd_dims = [d for _, d in psd_blocks]
    A = sp.vstack(blocks_A, format="csr")
    b = np.concatenate(blocks_b)
    dims = {"z": prog.A_eq.shape[0], "l": prog.A_in.shape[0] + sum(len(i) for i in nn_rows),
            "q": soc_dims, "s": psd_dims}
    return A, b, dims


def _psd_scale(d: int, lower: bool) -> tuple[np.ndarray, np.ndarray]:
    """Permutation from upper-col-major order and sqrt2 scaling for svec layouts."""
    order = triu_order(d)
    pos = {ij: k for k, ij in enumerate(order)}
    if lower:
        target = [(j, i) for i in range(d) for j in range(i, d)]  # lower col-major as (row, col)
        perm = np.array([pos[(min(a, b), max(a, b))] for a, b in target])
        scale = np.array([1.0 if a == b else np.sqrt(2) for a, b in target])
    else:
        perm = np.arange(len(order))
        scale = np.array([1.0 if i == j else np.sqrt(2) for i, j in order])
    return perm, scale


def _apply_psd_svec(A, b, dims, lower: bool):
    start = dims["z"] + dims["l"] + sum(dims["q"])
    pos = start
    perm_all = [np.arange(start)]
    scale_all = [np.ones(start)]
    for d in dims["s"]:
        p, s = _psd_scale(d, lower)
        perm_all.append(pos + p)
        scale_all.append(s)
        pos += len(p)
    perm = np.concatenate(perm_all)
    scale = np.concatenate(scale_all)
    A = sp.diags(scale) @ A[perm]
    b = scale * b[perm]
    return A.tocsc(), b


def _solve_clarabel(prog, tol, verbose, max_iter, time_limit):
    import clarabel

    A, b, dims = _standard_form(prog)
    A, b = _apply_psd_svec(A, b, dims, lower=False)
    cones = []
    if dims["z"]:
        cones.append(clarabel.ZeroConeT(dims["z"]))
    if dims["l"]:
        cones.append(clarabel.NonnegativeConeT(dims["l"]))
    cones += [clarabel.SecondOrderConeT(q) for q in dims["q"]]
    cones += [clarabel.PSDTriangleConeT(d) for d in dims["s"]]
    st = clarabel.DefaultSettings()
    st.verbose = verbose
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = tol
    st.tol_ktratio = min(1e-6, tol * 100)
    st.max_iter = max_iter
    st.presolve_enable = False
    # tight relaxations have rank-deficient optima; the default 1e-8 regularization
    # lets the KKT solves stall short of the requested accuracy there
    st.static_regularization_constant = CLARABEL_STATIC_REG
    if time_limit:
        st.time_limit = float(time_limit)
    P = sp.csc_matrix((prog.n, prog.n))
    solver = clarabel.DefaultSolver(P, prog.c, A, b, cones, st)
    sol = solver.solve()
    raw = str(sol.status)
    x = np.array(sol.x)
    status = {
        "Solved": "optimal",
        "AlmostSolved": "near-optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
    }.get(raw)
    return x, status, raw, sol.iterations


def _solve_scs(prog, tol, verbose, max_iter, time_limit):
    import scs

    A, b, dims = _standard_form(prog)
    A, b = _apply_psd_svec(A, b, dims, lower=True)
    cone = {"z": dims["z"], "l": dims["l"], "q": dims["q"], "s": dims["s"]}
    settings = dict(verbose=verbose, eps_abs=tol, eps_rel=tol, max_iters=max_iter)
    if time_limit:
        settings["time_limit_secs"] = float(time_limit)
    solver = scs.SCS({"A": A, "b": b, "c": prog.c}, cone, **settings)
    out = solver.solve()
    raw = out["info"]["status"]
    status = {
        "solved": "optimal",
        "solved_inaccurate": "near-optimal",
        "infeasible": "infeasible",
        "infeasible_inaccurate": "infeasible",
        "unbounded": "unbounded",
        "unbounded_inaccurate": "unbounded",
    }.get(raw)
    return np.array(out["x"]), status, raw, out["info"]["iter"]


def _solve_cvxopt(prog, tol, verbose, max_iter, time_limit):
    import cvxopt
    from cvxopt import solvers

    A, b, dims = _standard_form(prog)
    # cvxopt: G x + s = h with 's' cones stored as full column-major matrices
    nz = dims["z"]
    G = A[nz:].tocsr()
    h = b[nz:]
    start = dims["l"] + sum(dims["q"])
    Gs_parts, hs_parts = [G[:start]], [h[:start]]
    pos = start
    for d in dims["s"]:
        m = d * (d + 1) // 2
        order = triu_order(d)
        full_idx = np.empty(d * d, dtype=int)
        for k, (i, j) in enumerate(order):
            full_idx[i + j * d] = pos + k
            full_idx[j + i * d] = pos + k
        Gs_parts.append(G[full_idx])
        hs_parts.append(h[full_idx])
        pos += m
    G = sp.vstack(Gs_parts).tocoo()
    h = np.concatenate(hs_parts)
    Gc = cvxopt.spmatrix(G.data.tolist(), G.row.tolist(), G.col.tolist(), size=G.shape)
    Aeq = A[:nz].tocoo()
    Ac = cvxopt.spmatrix(Aeq.data.tolist(), Aeq.row.tolist(), Aeq.col.tolist(),
                         size=(nz, prog.n))
    opts = {"show_progress": verbose, "abstol": tol, "reltol": tol, "feastol": tol,
            "maxiters": max_iter}
    sol = solvers.conelp(cvxopt.matrix(prog.c), Gc, cvxopt.matrix(h),
                         {"l": dims["l"], "q": dims["q"], "s": dims["s"]},
                         Ac, cvxopt.matrix(b[:nz]), options=opts)
    raw = sol["status"]
    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(raw)
    if raw == "unknown" and sol["x"] is not None:
        status = None
    x = None if sol["x"] is None else np.array(sol["x"]).ravel()
    return x, status, raw, sol.get("iterations", 0)


_BACKENDS = {"clarabel": _solve_clarabel, "scs": _solve_scs, "cvxopt": _solve_cvxopt}

DEFAULT_TOL = {"clarabel": 1e-8, "scs": 1e-6, "cvxopt": 1e-9}
DEFAULT_MAX_ITER = {"clarabel": 400, "scs": 200000, "cvxopt": 200}

# largest real PSD block handed to an interior-point backend under "auto"
AUTO_PSD_LIMIT = 40
CLARABEL_STATIC_REG = 1e-7


def pick_backend(prog: ConicProgram) -> str:
    big = max((d for k, d in prog.cones if k.startswith("psd")), default=0)
    return "scs" if big > AUTO_PSD_LIMIT else "clarabel"


def solve(prog: ConicProgram, backend: str = "auto", tol: float | None = None,
          verbose: bool = False, max_iter: int | None = None,
          time_limit: float | None = None, residual_tol: float = 1e-6) -> SolveResult:
    """Solve ``prog``; backend errors come back as ``numerical-failure``."""
    if backend == "auto":
        backend = pick_backend(prog)
    if backend not in _BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    tol = DEFAULT_TOL[backend] if tol is None else tol
    max_iter = DEFAULT_MAX_ITER[backend] if max_iter is None else max_iter
    t0 = time.perf_counter()
    try:
        x, status, raw, iters = _BACKENDS[backend](prog, tol, verbose, max_iter, time_limit)
    except Exception as exc:  # backend crashes are reported, not raised
        log.warning("%s backend failed: %s", backend, exc)
        return SolveResult(None, "numerical-failure", float("nan"), backend,
                           time.perf_counter() - t0, raw_status=f"error: {exc}")
    secs = time.perf_counter() - t0
    res = {}
    if x is not None and np.all(np.isfinite(x)) and status not in ("infeasible", "unbounded"):
        res = prog.residuals(x)
        worst = max(res.values())
        if status is None:
            # iteration/progress limits: accept the iterate if it is primal feasible
            status = "near-optimal" if worst <= residual_tol else "numerical-failure"
        elif worst > residual_tol * 100:
            status = "numerical-failure"
    elif status is None:
        status = "numerical-failure"
    obj = prog.objective(x) if x is not None and status in ("optimal", "near-optimal") else float("nan")
    if status == "numerical-failure":
        log.warning("%s returned %s; residuals %s", backend, raw, res)
    return SolveResult(x if status in ("optimal", "near-optimal") else None, status, obj,
                       backend, secs, iterations=int(iters or 0), raw_status=raw,
                       residuals=res)
