"""Two-dimensional parity error detection.

Each pass shuffles the surviving key with a public seed, fills ``r x c``
blocks row by row, and has Alice and Bob swap every row and column parity.
Any bit lying in a row or column whose parities disagree is thrown away;
nothing is corrected. Passes repeat with a fresh shuffle so error patterns
that hide in one arrangement (four errors on the corners of a rectangle,
say) get split up in the next.

Disclosed parities leak information about the kept bits. A parity whose
support still contains a discarded bit is masked by that bit, so only
parities whose real bits all survive are charged: one kept bit of the same
block is deleted for each of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ProtocolAbort
from .harness.messages import MessageKind


@dataclass(frozen=True)
class ReconcileConfig:
    block_rows: int = 4
    block_cols: int = 4
    passes: int = 2
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.block_rows < 2:
            raise ConfigError("reconcile.block_rows", "must be >= 2")
        if self.block_cols < 2:
            raise ConfigError("reconcile.block_cols", "must be >= 2")
        if self.passes < 1:
            raise ConfigError("reconcile.passes", "must be >= 1")

    @property
    def block_size(self) -> int:
        return self.block_rows * self.block_cols


@dataclass
class PassStats:
    input_bits: int
    discarded_bits: int
    privacy_deductions: int
    parities_disclosed: int
    mismatched_parities: int


@dataclass
class ReconcileReport:
    input_bits: int = 0
    output_bits: int = 0
    discarded_bits: int = 0
    privacy_deductions: int = 0
    parities_disclosed: int = 0
    residual_error_estimate: float = 0.0
    passes: list[PassStats] = field(default_factory=list)

    def balanced(self) -> bool:
        return self.output_bits + self.discarded_bits + self.privacy_deductions == self.input_bits


@dataclass
class BlockArrangement:
    """Bits laid out as ``(n_blocks, rows, cols)``.

    ``source[b, i, j]`` is the index in the input of the bit at that cell, or
    -1 for the public zero padding that fills out the last block.
    """

    blocks: np.ndarray
    source: np.ndarray

    @property
    def real(self) -> np.ndarray:
        return self.source >= 0

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)


def pass_permutation(n: int, cfg: ReconcileConfig, pass_index: int) -> np.ndarray:
    return np.random.default_rng([cfg.shuffle_seed, pass_index]).permutation(n)


def arrange_blocks(bits, cfg: ReconcileConfig, pass_index: int = 0) -> BlockArrangement:
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits)
    if n == 0:
        raise ValueError("cannot arrange an empty key")
    size = cfg.block_size
    n_blocks = -(-n // size)
    source = np.full(n_blocks * size, -1, dtype=np.int64)
    source[:n] = pass_permutation(n, cfg, pass_index)
    source = source.reshape(n_blocks, cfg.block_rows, cfg.block_cols)
    blocks = np.where(source >= 0, bits[np.maximum(source, 0)], 0).astype(np.uint8)
    return BlockArrangement(blocks, source)


def block_parities(m) -> tuple[np.ndarray, np.ndarray]:
    """(row parities, column parities) of one bit matrix."""
    m = np.asarray(m, dtype=np.uint8)
    if m.size == 0:
        raise ValueError("empty matrix")
    return np.bitwise_xor.reduce(m, axis=1), np.bitwise_xor.reduce(m, axis=0)


def _all_parities(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.bitwise_xor.reduce(blocks, axis=2), np.bitwise_xor.reduce(blocks, axis=1)


def _odd(p: float, n: int) -> float:
    """Probability that ``n`` independent bits with flip rate ``p`` hold an odd number of flips."""
    return (1.0 - (1.0 - 2.0 * p) ** n) / 2.0


def residual_error_bound(cfg: ReconcileConfig, ber: float) -> float:
    """Per-bit probability that a single pass keeps a wrong bit.

    The bit is wrong and both its row and its column hide the error behind
    an odd number of further errors, so both parities still agree.
    """
    if not 0.0 <= ber <= 0.5:
        raise ValueError("ber must lie in [0, 0.5]")
    return ber * _odd(ber, cfg.block_cols - 1) * _odd(ber, cfg.block_rows - 1)


def _residual_after_pass(cfg: ReconcileConfig, p: float) -> float:
    wrong_kept = residual_error_bound(cfg, p)
    right_kept = (1 - p) * (1 - _odd(p, cfg.block_cols - 1)) * (1 - _odd(p, cfg.block_rows - 1))
    total = wrong_kept + right_kept
    return wrong_kept / total if total else 0.0


def _ber_from_parities(mismatch_fraction: float, width: int) -> float:
    if mismatch_fraction >= 0.5:
        return 0.5
    return (1.0 - (1.0 - 2.0 * mismatch_fraction) ** (1.0 / width)) / 2.0


def _select(arr: BlockArrangement, row_bad: np.ndarray, col_bad: np.ndarray):
    """Public keep/delete decision for one pass, shared by both parties.

    Returns (kept source indices in block order, discarded count, deductions,
    disclosed parity count).
    """
    real = arr.real
    flagged = row_bad[:, :, None] | col_bad[:, None, :]
    discarded = real & flagged
    kept = real & ~flagged

    row_real = real.any(axis=2)
    col_real = real.any(axis=1)
    disclosed = int(row_real.sum() + col_real.sum())

    # a parity leaks only if none of its real bits was discarded
    row_clean = row_real & ~discarded.any(axis=2)
    col_clean = col_real & ~discarded.any(axis=1)
    charge = row_clean.sum(axis=1) + col_clean.sum(axis=1)
    kept_flat = kept.reshape(len(arr), -1)
    n_kept = kept_flat.sum(axis=1)
    charge = np.minimum(charge, n_kept)

    # delete the first `charge` kept bits of each block, row-major
    rank = np.cumsum(kept_flat, axis=1)
    survive = kept_flat & (rank > charge[:, None])
    src = arr.source.reshape(len(arr), -1)[survive]
    return src, int(discarded.sum()), int(charge.sum()), disclosed


def reconcile_party(endpoint, bits, cfg: ReconcileConfig, role: str) -> tuple[np.ndarray, ReconcileReport]:
    """One side of the parity exchange. Alice speaks first in every pass."""
    bits = np.asarray(bits, dtype=np.uint8)
    report = ReconcileReport(input_bits=len(bits))
    p_est = None
    for pass_index in range(cfg.passes):
        if len(bits) == 0:
            break
        arr = arrange_blocks(bits, cfg, pass_index)
        rows, cols = _all_parities(arr.blocks)
        mine = dict(pass_index=pass_index, key_length=len(bits), rows=rows.ravel(), cols=cols.ravel())
        if role == "alice":
            endpoint.send(MessageKind.PARITY_EXCHANGE, **mine)
            theirs = endpoint.recv(MessageKind.PARITY_EXCHANGE).payload
        else:
            theirs = endpoint.recv(MessageKind.PARITY_EXCHANGE).payload
            endpoint.send(MessageKind.PARITY_EXCHANGE, **mine)
        if theirs["pass_index"] != pass_index or theirs["key_length"] != len(bits):
            endpoint.abort("parity exchange out of step")
            raise ProtocolAbort(
                f"reconcile: key length mismatch ({len(bits)} vs {theirs['key_length']}) in pass {pass_index}"
            )
        row_bad = rows != np.asarray(theirs["rows"], dtype=np.uint8).reshape(rows.shape)
        col_bad = cols != np.asarray(theirs["cols"], dtype=np.uint8).reshape(cols.shape)

        src, discarded, deducted, disclosed = _select(arr, row_bad, col_bad)
        full_rows = arr.real.all(axis=2)
        if p_est is None:
            frac = row_bad[full_rows].mean() if full_rows.any() else 0.0
            p_est = _ber_from_parities(float(frac), cfg.block_cols)
        else:
            p_est = _residual_after_pass(cfg, p_est)
        report.passes.append(
            PassStats(len(bits), discarded, deducted, disclosed, int(row_bad.sum() + col_bad.sum()))
        )
        report.discarded_bits += discarded
        report.privacy_deductions += deducted
        report.parities_disclosed += disclosed
        bits = bits[src]
    if p_est is not None and report.passes:
        report.residual_error_estimate = _residual_after_pass(cfg, p_est)
    report.output_bits = len(bits)
    return bits, report


def reconcile(a_bits, b_bits, cfg: ReconcileConfig | None = None, channel: str = "in_process"):
    """Run both sides over a fresh channel; returns ``(a_out, b_out, report)``."""
    from .harness.transport import run_pair

    cfg = cfg or ReconcileConfig()
    if len(a_bits) != len(b_bits):
        raise ProtocolAbort(f"reconcile: key lengths differ ({len(a_bits)} vs {len(b_bits)})")
    (a_out, report), (b_out, _) = run_pair(
        lambda ep: reconcile_party(ep, a_bits, cfg, "alice"),
        lambda ep: reconcile_party(ep, b_bits, cfg, "bob"),
        mode=channel,
        session_id="reconcile",
    )
    return a_out, b_out, report
