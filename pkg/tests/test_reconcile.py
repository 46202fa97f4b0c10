import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freespace_qkd.errors import ConfigError, ProtocolAbort
from freespace_qkd.reconcile import (
    ReconcileConfig,
    arrange_blocks,
    block_parities,
    pass_permutation,
    reconcile,
    residual_error_bound,
)


def _enumerated_residual(p: float, rows: int = 4, cols: int = 4) -> float:
    """Brute force over every error pattern of one block: bit (0, 0) wrong, row 0 and column 0 both pass."""
    total = 0.0
    n = rows * cols
    for pattern in itertools.product((0, 1), repeat=n):
        m = np.array(pattern).reshape(rows, cols)
        if m[0, 0] and m[0].sum() % 2 == 0 and m[:, 0].sum() % 2 == 0:
            k = int(m.sum())
            total += p**k * (1 - p) ** (n - k)
    return total


def test_residual_bound_matches_enumeration():
    cfg = ReconcileConfig(4, 4)
    assert residual_error_bound(cfg, 0.06) == pytest.approx(_enumerated_residual(0.06), rel=1e-9)
    assert residual_error_bound(cfg, 0.06) == pytest.approx(0.0015219013017600004, rel=1e-12)
    assert residual_error_bound(ReconcileConfig(2, 3), 0.1) == pytest.approx(_enumerated_residual(0.1, 2, 3), rel=1e-9)


def test_residual_bound_monotone_and_edges():
    cfg = ReconcileConfig()
    vals = [residual_error_bound(cfg, p) for p in np.linspace(0, 0.3, 31)]
    assert vals[0] == 0.0
    assert all(b > a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        residual_error_bound(cfg, 0.7)


def test_block_parities_2x2():
    rows, cols = block_parities([[1, 0], [0, 1]])
    assert rows.tolist() == [1, 1] and cols.tolist() == [1, 1]
    rows, cols = block_parities([[1, 1], [0, 0]])
    assert rows.tolist() == [0, 0] and cols.tolist() == [1, 1]


def test_permutation_is_public_and_per_pass():
    cfg = ReconcileConfig(shuffle_seed=9)
    assert np.array_equal(pass_permutation(100, cfg, 0), pass_permutation(100, cfg, 0))
    assert not np.array_equal(pass_permutation(100, cfg, 0), pass_permutation(100, cfg, 1))


def test_ragged_input_is_padded():
    bits = np.ones(18, np.uint8)
    arr = arrange_blocks(bits, ReconcileConfig())
    assert arr.blocks.shape == (2, 4, 4)
    assert arr.real.sum() == 18
    assert arr.blocks[~arr.real].sum() == 0
    assert sorted(arr.source[arr.real].tolist()) == list(range(18))


def test_identical_keys_only_pay_privacy():
    a = np.random.default_rng(0).integers(0, 2, 160).astype(np.uint8)
    x, y, rep = reconcile(a, a.copy(), ReconcileConfig(passes=1))
    assert rep.discarded_bits == 0
    assert rep.privacy_deductions == 80  # eight parities per full block
    assert len(x) == 80 and np.array_equal(x, y)


def _flip_cells(a, cfg, cells):
    arr = arrange_blocks(a, cfg)
    b = a.copy()
    for i, j in cells:
        b[arr.source[0, i, j]] ^= 1
    return b


def test_single_error_costs_a_row_and_a_column():
    cfg = ReconcileConfig(passes=1)
    a = np.zeros(16, np.uint8)
    b = _flip_cells(a, cfg, [(1, 2)])
    x, y, rep = reconcile(a, b, cfg)
    assert rep.discarded_bits == 7
    # every other row and column crosses a discarded cell, so none leaks about kept bits
    assert rep.privacy_deductions == 0
    assert len(x) == 9 and np.array_equal(x, y)
    assert rep.balanced()


def test_rectangle_of_errors_escapes_one_pass():
    cfg = ReconcileConfig(passes=1)
    a = np.zeros(16, np.uint8)
    b = _flip_cells(a, cfg, [(2, 2), (2, 3), (3, 2), (3, 3)])
    x, y, rep = reconcile(a, b, cfg)
    assert rep.discarded_bits == 0
    assert int((x != y).sum()) == 4


def test_second_pass_catches_rectangle():
    cfg = ReconcileConfig(passes=2)
    rng = np.random.default_rng(5)
    a = rng.integers(0, 2, 1600).astype(np.uint8)
    b = _flip_cells(a, cfg, [(2, 2), (2, 3), (3, 2), (3, 3)])
    x, y, _ = reconcile(a, b, cfg)
    assert np.array_equal(x, y)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 300), p=st.floats(0, 0.3), passes=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_bookkeeping_balances(n, p, passes, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 2, n).astype(np.uint8)
    b = a ^ (rng.random(n) < p).astype(np.uint8)
    x, y, rep = reconcile(a, b, ReconcileConfig(passes=passes))
    assert len(x) == len(y) == rep.output_bits
    assert rep.balanced()
    assert sum(s.input_bits - s.discarded_bits - s.privacy_deductions for s in rep.passes) >= 0


def test_single_pass_residual_near_bound():
    cfg = ReconcileConfig(passes=1)
    rng = np.random.default_rng(11)
    bad = kept = 0
    for _ in range(20):
        a = rng.integers(0, 2, 10_000).astype(np.uint8)
        b = a ^ (rng.random(10_000) < 0.06).astype(np.uint8)
        x, y, rep = reconcile(a, b, cfg)
        bad += int((x != y).sum())
        kept += len(x)
    # the estimate assumes independent cells; observed agrees within a factor of two
    assert 0.5 * rep.residual_error_estimate < bad / kept < 2 * rep.residual_error_estimate


def test_two_passes_at_six_percent():
    cfg = ReconcileConfig(passes=2)
    rng = np.random.default_rng(12)
    bad = kept = 0
    for _ in range(20):
        a = rng.integers(0, 2, 10_000).astype(np.uint8)
        b = a ^ (rng.random(10_000) < 0.06).astype(np.uint8)
        x, y, _ = reconcile(a, b, cfg)
        bad += int((x != y).sum())
        kept += len(x)
    assert bad / kept < 1e-4


def test_length_mismatch_and_validation():
    with pytest.raises(ProtocolAbort):
        reconcile(np.zeros(16, np.uint8), np.zeros(17, np.uint8))
    with pytest.raises(ConfigError):
        ReconcileConfig(block_rows=1)
    with pytest.raises(ConfigError):
        ReconcileConfig(passes=0)


def test_socket_and_in_process_agree():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 2, 500).astype(np.uint8)
    b = a ^ (rng.random(500) < 0.05).astype(np.uint8)
    r1 = reconcile(a, b, ReconcileConfig(passes=3))
    r2 = reconcile(a, b, ReconcileConfig(passes=3), channel="socket")
    assert np.array_equal(r1[0], r2[0]) and r1[2] == r2[2]
