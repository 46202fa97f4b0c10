"""Run statistics and their human / machine renderings."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..link_sim import CAUSE_CODES

CAUSES = tuple(c.value for c in CAUSE_CODES)


def _zero_causes() -> dict[str, int]:
    return {c: 0 for c in CAUSES}


@dataclass
class StatsReport:
    pulses: int = 0
    pulse_rate: float = 20e3
    protocol: str = "B92"
    detector_count: int = 1
    seed: int = 0
    session_id: str = ""
    sifted_bits: int = 0
    sifted_rate: float = 0.0
    ber_oracle: float = 0.0
    ber_estimated: float = 0.0
    error_breakdown: dict[str, int] = field(default_factory=_zero_causes)
    sifted_breakdown: dict[str, int] = field(default_factory=_zero_causes)
    early_errors: int = 0
    late_errors: int = 0
    dual_fires: int = 0
    discarded_detections: int = 0
    ber_sample_bits: int = 0
    reconciled_bits: int = 0
    reconciled_mismatches: int = 0
    discarded_by_reconcile: int = 0
    privacy_deductions: int = 0
    parities_disclosed: int = 0
    residual_error_estimate: float = 0.0
    wallclock: float = 0.0

    @property
    def simulated_time(self) -> float:
        return self.pulses / self.pulse_rate

    @property
    def total_errors(self) -> int:
        return sum(self.error_breakdown.values())

    @property
    def signal_sifted_rate(self) -> float:
        t = self.simulated_time
        return self.sifted_breakdown["signal"] / t if t else 0.0

    @property
    def late_early_ratio(self) -> float:
        return self.late_errors / self.early_errors if self.early_errors else math.inf

    def error_share(self, cause: str) -> float:
        """Errors from one cause as a fraction of all sifted bits."""
        return self.error_breakdown[cause] / self.sifted_bits if self.sifted_bits else 0.0

    def error_rate(self, *causes: str) -> float:
        """Errors per second of simulated time from the given causes."""
        t = self.simulated_time
        return sum(self.error_breakdown[c] for c in causes) / t if t else 0.0

    def to_dict(self, include_wallclock: bool = True) -> dict:
        d = asdict(self)
        if not include_wallclock:
            d.pop("wallclock")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StatsReport":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown report fields {sorted(unknown)}")
        return cls(**d)


def format_raw_key_excerpt(alice, bob, n_bits: int = 200, group: int = 8, groups_per_row: int = 5) -> str:
    """Paired A/B raw-key rows in 8-bit groups; a caret row marks every mismatch."""
    a = np.asarray(alice, dtype=np.uint8)[:n_bits]
    b = np.asarray(bob, dtype=np.uint8)[: len(a)]
    row_bits = group * groups_per_row
    lines = []
    for start in range(0, len(a), row_bits):
        ra, rb = a[start : start + row_bits], b[start : start + row_bits]
        groups = range(0, len(ra), group)
        fmt = lambda bits: " ".join("".join(str(x) for x in bits[g : g + group]) for g in groups)  # noqa: E731
        marks = " ".join(
            "".join("^" if x != y else " " for x, y in zip(ra[g : g + group], rb[g : g + group])) for g in groups
        )
        lines += [f"A  {fmt(ra)}", f"B  {fmt(rb)}", f"   {marks}".rstrip()]
    return "\n".join(lines)


def emit_report(r: StatsReport, fmt: str = "human", excerpt: tuple | None = None, include_wallclock: bool = False) -> str:
    if fmt == "machine":
        return json.dumps(r.to_dict(include_wallclock), sort_keys=True, indent=2)
    if fmt != "human":
        raise ValueError(f"unknown report format {fmt!r}")

    t = r.simulated_time
    rows = [
        ("pulses", f"{r.pulses}"),
        ("simulated time", f"{t:.3f} s"),
        ("protocol", f"{r.protocol} ({r.detector_count} detector{'s' if r.detector_count > 1 else ''})"),
        ("sifted bits", f"{r.sifted_bits}"),
        ("sifted rate", f"{r.sifted_rate:.2f} Hz"),
        ("  of which signal", f"{r.signal_sifted_rate:.2f} Hz"),
        ("BER (oracle)", f"{r.ber_oracle:.4f}"),
        ("BER (sampled)", f"{r.ber_estimated:.4f} over {r.ber_sample_bits} bits"),
        ("early / late errors", f"{r.early_errors} / {r.late_errors}"),
        ("dual fires", f"{r.dual_fires}"),
        ("reconciled bits", f"{r.reconciled_bits}"),
        ("  residual mismatches", f"{r.reconciled_mismatches}"),
        ("  residual estimate", f"{r.residual_error_estimate:.3g}"),
        ("  parities disclosed", f"{r.parities_disclosed}"),
        ("  privacy deductions", f"{r.privacy_deductions}"),
    ]
    width = max(len(k) for k, _ in rows)
    out = [f"{k:<{width}}  {v}" for k, v in rows]
    out.append("errors by cause:")
    for cause in CAUSES:
        n = r.error_breakdown[cause]
        share = n / r.sifted_bits if r.sifted_bits else 0.0
        out.append(f"  {cause:<12} {n:>8}  ({100 * share:.2f}% of bits)")
    if excerpt is not None:
        out.append("")
        out.append("raw key excerpt (^ marks a mismatch):")
        out.append(format_raw_key_excerpt(*excerpt))
    return "\n".join(out)
