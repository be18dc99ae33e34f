"""Incidence, admittance and loss-penalty matrices of a power network."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .case_io import Branch, PowerNetwork

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NetworkMatrices:
    C: sp.csr_matrix  # |G| x |V|
    C_from: sp.csr_matrix  # |E| x |V|
    C_to: sp.csr_matrix
    Y: sp.csr_matrix  # |V| x |V| complex
    Y_from: sp.csr_matrix  # |E| x |V| complex
    Y_to: sp.csr_matrix
    f: np.ndarray  # from-bus index per line
    t: np.ndarray  # to-bus index per line
    gen_bus: np.ndarray
    # per-line stamp entries: Y_from[l] = yff at f, yft at t; Y_to[l] = ytf at f, ytt at t
    yff: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray
    shunt: np.ndarray


def series_admittance(br: Branch) -> complex:
    if br.r == 0 and br.x == 0:
        raise ValueError(f"branch {br.from_bus}-{br.to_bus} has zero series impedance")
    return 1.0 / complex(br.r, br.x)


def build_matrices(net: PowerNetwork) -> NetworkMatrices:
    nv, ne, ng = net.n_bus, net.n_branch, net.n_gen
    f, t = net.branch_ends()
    gb = net.gen_bus_index()
    y = np.array([series_admittance(br) for br in net.branches], dtype=complex)
    bc = np.array([br.b for br in net.branches])
    tap = np.array([br.tap * np.exp(1j * br.shift) for br in net.branches], dtype=complex)
    ytt = y + 0.5j * bc
    yff = ytt / (tap * np.conj(tap))
    yft = -y / np.conj(tap)
    ytf = -y / tap
    shunt = np.array([b.shunt for b in net.buses], dtype=complex)

    rows = np.arange(ne)
    ones = np.ones(ne)
    C_from = sp.csr_matrix((ones, (rows, f)), shape=(ne, nv))
    C_to = sp.csr_matrix((ones, (rows, t)), shape=(ne, nv))
    C = sp.csr_matrix((np.ones(ng), (np.arange(ng), gb)), shape=(ng, nv))
    Y_from = sp.csr_matrix(
        (np.r_[yff, yft], (np.r_[rows, rows], np.r_[f, t])), shape=(ne, nv), dtype=complex
    )
    Y_to = sp.csr_matrix(
        (np.r_[ytf, ytt], (np.r_[rows, rows], np.r_[f, t])), shape=(ne, nv), dtype=complex
    )
    Y = (C_from.T @ Y_from + C_to.T @ Y_to + sp.diags(shunt)).tocsr()
    return NetworkMatrices(C=C, C_from=C_from, C_to=C_to, Y=Y, Y_from=Y_from, Y_to=Y_to,
                           f=f, t=t, gen_bus=gb, yff=yff, yft=yft, ytf=ytf, ytt=ytt,
                           shunt=shunt)


def zeta_sign(br: Branch) -> int:
    """+1 for an inductive (``b_srs <= 0``) series admittance, -1 for a capacitive one."""
    return 1 if series_admittance(br).imag <= 0 else -1


def loss_blocks(br: Branch) -> dict[str, np.ndarray]:
    """The four 2x2 Hermitian loss forms of a line, in (from, to) bus order."""
    y = series_admittance(br)
    g, b = y.real, y.imag
    tau = br.tap
    e = np.exp(1j * br.shift)
    yc = np.conj(y)
    return {
        "p_from": np.array([[g / tau**2, e * y / (-2 * tau)],
                            [yc / (-2 * tau * e), 0.0]]),
        "q_from": np.array([[b / -(tau**2), e * y / (2j * tau)],
                            [yc / (-2j * tau * e), 0.0]]),
        "p_to": np.array([[0.0, e * yc / (-2 * tau)],
                          [y / (-2 * tau * e), g]]),
        "q_to": np.array([[0.0, e * yc / (-2j * tau)],
                          [y / (2j * tau * e), -b]]),
    }


def line_block(br: Branch, eta: float) -> np.ndarray:
    """Loss-penalty block ``zeta (Yq_from + Yq_to) + eta/(1-eta) (Yp_from + Yp_to)``."""
    blk = loss_blocks(br)
    return (zeta_sign(br) * (blk["q_from"] + blk["q_to"])
            + eta / (1 - eta) * (blk["p_from"] + blk["p_to"]))


@dataclass(frozen=True)
class PenaltyMatrix:
    """Sparse Hermitian penalty matrix supported on bus pairs joined by a line.

    ``pairs[k] = (i, j)`` with ``i < j`` and ``offdiag[k] = M[i, j]``.
    """

    n: int
    diag: np.ndarray
    pairs: np.ndarray
    offdiag: np.ndarray
    blocks: tuple[np.ndarray, ...]  # embedded (M_ij + alpha I), (from, to) order
    eta: float
    alpha: float
    zeta: np.ndarray

    def to_dense(self) -> np.ndarray:
        M = np.diag(self.diag.astype(complex))
        i, j = self.pairs.T if len(self.pairs) else (np.zeros(0, int), np.zeros(0, int))
        M[i, j] += self.offdiag
        M[j, i] += np.conj(self.offdiag)
        return M

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        if len(self.pairs):
            i, j = self.pairs.T
            np.add.at(out, i, self.offdiag * v[j])
            np.add.at(out, j, np.conj(self.offdiag) * v[i])
        return out

    def trace_with(self, w_diag: np.ndarray, w_pairs: np.ndarray) -> float:
        """``trace(W M)`` for Hermitian W given by its diagonal and the entries ``W[i, j]``
        on :attr:`pairs`."""
        return float(np.dot(self.diag, w_diag)
                     + 2 * np.sum((w_pairs * np.conj(self.offdiag)).real))


def bus_pairs(mats: NetworkMatrices) -> np.ndarray:
    """Sorted unique ``(i, j)``, ``i < j``, bus pairs joined by at least one line."""
    if len(mats.f) == 0:
        return np.zeros((0, 2), dtype=int)
    lo = np.minimum(mats.f, mats.t)
    hi = np.maximum(mats.f, mats.t)
    keep = lo != hi
    return np.unique(np.c_[lo[keep], hi[keep]], axis=0)


def build_penalty_matrix(net: PowerNetwork, eta: float = 0.5, alpha: float = 1.0,
                         pairs: np.ndarray | None = None,
                         cover_isolated: bool = False) -> PenaltyMatrix:
    """Sum of the embedded line blocks ``M_ij + alpha I``.

    With ``cover_isolated`` a bus that no line touches gets ``alpha`` on the
    diagonal, so its voltage is penalized like every other bus; otherwise its
    row of M is zero.
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    nv = net.n_bus
    f, t = net.branch_ends()
    if pairs is None:
        lo, hi = np.minimum(f, t), np.maximum(f, t)
        pairs = (np.unique(np.c_[lo, hi], axis=0) if len(f)
                 else np.zeros((0, 2), dtype=int))
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(pairs)}
    diag = np.zeros(nv)
    off = np.zeros(len(pairs), dtype=complex)
    blocks = []
    zeta = np.array([zeta_sign(br) for br in net.branches], dtype=int)
    for l, br in enumerate(net.branches):
        blk = line_block(br, eta) + alpha * np.eye(2)
        blocks.append(blk)
        mineig = np.linalg.eigvalsh(blk).min()
        if mineig < -1e-9:
            log.warning("penalty block of line %d (%d-%d) is indefinite: min eig %.3g",
                        l, br.from_bus, br.to_bus, mineig)
        a, c = int(f[l]), int(t[l])
        diag[a] += blk[0, 0].real
        diag[c] += blk[1, 1].real
        if a < c:
            off[lookup[(a, c)]] += blk[0, 1]
        elif c < a:
            off[lookup[(c, a)]] += blk[1, 0]
    if cover_isolated:
        isolated = np.ones(nv, dtype=bool)
        isolated[f] = isolated[t] = False
        diag[isolated] = alpha
    return PenaltyMatrix(n=nv, diag=diag, pairs=np.asarray(pairs, dtype=int).reshape(-1, 2),
                         offdiag=off, blocks=tuple(blocks), eta=eta, alpha=alpha, zeta=zeta)
