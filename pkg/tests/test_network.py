import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acuc.case_io import Branch, PowerNetwork, load_case
from acuc.network import (build_matrices, build_penalty_matrix, bus_pairs, line_block,
                          loss_blocks, zeta_sign)

from .conftest import micro_network
from .oracles import CASE9_BRANCHES, dense_line_block, dense_penalty, stamp_ybus


def dense(a):
    return a.toarray() if hasattr(a, "toarray") else np.asarray(a)


def test_lossless_line_row():
    m = build_matrices(micro_network(r=0.0, x=0.1))
    assert np.allclose(dense(m.Y_from)[0], [-10j, 10j], atol=1e-12)
    assert np.allclose(dense(m.Y_to)[0], [10j, -10j], atol=1e-12)


def test_tap_scales_from_entry():
    m = build_matrices(micro_network(r=0.0, x=0.1, tap=2.0))
    assert abs(dense(m.Y_from)[0, 0] - (-2.5j)) < 1e-12
    assert abs(dense(m.Y_to)[0, 1] - (-10j)) < 1e-12


def test_case9_matches_stamp_oracle(case9):
    Y = dense(build_matrices(case9).Y)
    assert np.abs(Y - stamp_ybus(9, CASE9_BRANCHES)).max() < 1e-12


@pytest.mark.parametrize("name", ["case9", "case14", "case57", "case118", "case300"])
def test_y_assembly_invariant(name):
    net = load_case(name)
    m = build_matrices(net)
    for inc in (m.C, m.C_from, m.C_to):
        d = dense(inc)
        assert np.all((d != 0).sum(axis=1) == 1) and np.all(d[d != 0] == 1)
    Y = dense(m.C_from.T @ m.Y_from + m.C_to.T @ m.Y_to) + np.diag(m.shunt)
    assert np.abs(Y - dense(m.Y)).max() < 1e-12
    rows = [(f + 1, t + 1, br.r, br.x, br.b, br.tap, br.shift)
            for f, t, br in zip(m.f, m.t, net.branches)]
    assert np.abs(dense(m.Y) - stamp_ybus(net.n_bus, rows, m.shunt)).max() < 1e-9


def test_y_symmetric_without_transformers(case9):
    Y = dense(build_matrices(case9).Y)
    assert np.abs(Y - Y.T).max() == 0


def test_zero_impedance_names_branch():
    net = micro_network()
    net.branches[0] = Branch(1, 2, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError, match="branch 1-2"):
        build_matrices(net)


@pytest.mark.parametrize("r,x,expected", [(0.0, 0.1, 1), (0.0, -0.1, -1), (0.5, 0.0, 1)])
def test_zeta(r, x, expected):
    assert zeta_sign(Branch(1, 2, r, x, 0.0)) == expected


@pytest.mark.parametrize("r,x,tap,shift", [(0.01, 0.1, 1.0, 0.0), (0.02, 0.3, 0.97, 0.1),
                                           (0.0, 0.05, 1.05, -0.2), (0.01, -0.08, 1.0, 0.0)])
def test_blocks_match_dense_oracle(r, x, tap, shift):
    br = Branch(1, 2, r, x, 0.0, tap, shift)
    blocks = loss_blocks(br)
    for blk in blocks.values():
        assert np.abs(blk - blk.conj().T).max() < 1e-12
    assert np.abs(line_block(br, 0.5) - dense_line_block(r, x, tap, shift, 0.5)).max() < 1e-12


def test_loss_forms_give_line_losses():
    # v* Yp_from v + v* Yp_to v is the active loss of the line
    br = Branch(1, 2, 0.02, 0.2, 0.0, 0.98, 0.05)
    net = micro_network(r=0.02, x=0.2, tap=0.98, shift=0.05)
    m = build_matrices(net)
    v = np.array([1.02 * np.exp(0.03j), 0.97 * np.exp(-0.08j)])
    sf = v[0] * np.conj(dense(m.Y_from)[0] @ v)
    st_ = v[1] * np.conj(dense(m.Y_to)[0] @ v)
    blk = loss_blocks(br)
    p = v.conj() @ (blk["p_from"] + blk["p_to"]) @ v
    q = v.conj() @ (blk["q_from"] + blk["q_to"]) @ v
    assert abs(p - (sf + st_).real) < 1e-12
    assert abs(q - (sf + st_).imag) < 1e-12


def test_no_lines_gives_zero_matrix():
    net = micro_network()
    empty = PowerNetwork(net.base_power, net.buses, [], net.generators)
    pen = build_penalty_matrix(empty)
    assert np.count_nonzero(pen.to_dense()) == 0


def test_case57_blocks_psd(case57):
    pen = build_penalty_matrix(case57, eta=0.5, alpha=1.0)
    assert len(pen.blocks) == case57.n_branch
    assert min(np.linalg.eigvalsh(b).min() for b in pen.blocks) >= -1e-9


def test_penalty_matches_dense_sum(case57):
    m = build_matrices(case57)
    pen = build_penalty_matrix(case57, eta=0.4, alpha=2.0)
    lines = [(f, t, br.r, br.x, br.tap, br.shift) for f, t, br in zip(m.f, m.t, case57.branches)]
    M = pen.to_dense()
    assert np.abs(M - M.conj().T).max() < 1e-12
    assert np.abs(M - dense_penalty(case57.n_bus, lines, eta=0.4, alpha=2.0)).max() < 1e-10


def test_trace_identity_two_bus():
    pen = build_penalty_matrix(micro_network(r=0.01, x=0.1))
    M = dense_penalty(2, [(0, 1, 0.01, 0.1)])
    W = np.eye(2, dtype=complex)
    assert abs(pen.trace_with(W.diagonal().real, W[pen.pairs[:, 0], pen.pairs[:, 1]])
               - np.trace(W @ M).real) < 1e-12


def _random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sparse_trace_matches_dense(seed, case9):
    rng = np.random.default_rng(seed)
    pen = build_penalty_matrix(case9, eta=rng.uniform(0.1, 0.9), alpha=rng.uniform(0.5, 10))
    W = _random_hermitian(rng, 9)
    i, j = pen.pairs.T
    sparse = pen.trace_with(W.diagonal().real, W[i, j])
    assert abs(sparse - np.trace(W @ pen.to_dense()).real) < 1e-10 * max(1, abs(sparse))
    v = rng.normal(size=9) + 1j * rng.normal(size=9)
    assert np.abs(pen.matvec(v) - pen.to_dense() @ v).max() < 1e-10


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dual_cone_membership(seed, case9):
    # D = W - v v* with every per-edge 2x2 submatrix PSD gives trace(D M) >= 0
    rng = np.random.default_rng(seed)
    pen = build_penalty_matrix(case9)
    pairs = bus_pairs(build_matrices(case9))
    d = rng.exponential(size=9) * rng.integers(0, 2, size=9)
    D = np.diag(d).astype(complex)
    for i, j in pairs:
        bound = np.sqrt(d[i] * d[j])
        D[i, j] = bound * rng.uniform(0, 1) * np.exp(2j * np.pi * rng.uniform())
        D[j, i] = np.conj(D[i, j])
    v = rng.normal(size=9) + 1j * rng.normal(size=9)
    W = D + np.outer(v, v.conj())
    i, j = pen.pairs.T
    val = pen.trace_with(W.diagonal().real, W[i, j]) - (v.conj() @ pen.matvec(v)).real
    assert val >= -1e-8


def test_parameter_errors(case9):
    with pytest.raises(ValueError, match="eta"):
        build_penalty_matrix(case9, eta=1.0)
    with pytest.raises(ValueError, match="alpha"):
        build_penalty_matrix(case9, alpha=0.0)
