"""End-to-end experiment: pulse loop, sifting, BER sampling, reconciliation, outputs."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..adversary import eve_process_batch
from ..link_sim import (
    BatchOutcome,
    bb84_state_index,
    propagate_batch,
    receive_batch,
    receive_bb84_batch,
    transmit_batch,
)
from ..protocol import (
    DISCARD,
    DUAL_FLAG,
    SiftResult,
    alice_bb84_party,
    alice_ber_party,
    alice_generate_bits,
    alice_sift_party,
    bob_bb84_party,
    bob_ber_party,
    bob_infer,
    bob_sift_party,
)
from ..reconcile import ReconcileReport, reconcile_party
from .config import ExperimentConfig, to_dict
from .keyfiles import write_key
from .report import CAUSES, StatsReport, emit_report
from .transport import MessageLog, run_pair

log = logging.getLogger(__name__)


@dataclass
class PulseRun:
    """Everything the link produced, slot by slot."""

    alice_bits: np.ndarray
    outcomes: BatchOutcome | None = None
    alice_bases: np.ndarray | None = None
    bob_bases: np.ndarray | None = None
    bob_results: np.ndarray | None = None
    bb84_cause: np.ndarray | None = None
    samples: list[dict] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: StatsReport
    sift: SiftResult
    alice_key: np.ndarray
    bob_key: np.ndarray
    reconcile_report: ReconcileReport
    transcript: list[dict]
    pulses: PulseRun
    paths: dict[str, Path] = field(default_factory=dict)


def simulate_pulses(cfg: ExperimentConfig) -> PulseRun:
    alice_rng = cfg.make_rng("alice")
    source_rng = cfg.make_rng("source")
    eve_rng = cfg.make_rng("eve")
    bob_rng = cfg.make_rng("bob")
    bb84 = cfg.protocol.protocol == "BB84"

    bits_parts, out_parts, a_bases, b_bases, results, causes = [], [], [], [], [], []
    samples: list[dict] = []
    k = cfg.pulse_sample_every
    for start in range(0, cfg.pulse_count, cfg.chunk_size):
        m = min(cfg.chunk_size, cfg.pulse_count - start)
        bits = alice_generate_bits(m, alice_rng)
        bits_parts.append(bits)
        if bb84:
            ab = alice_rng.integers(0, 2, m, dtype=np.uint8)
            bb = bob_rng.integers(0, 2, m, dtype=np.uint8)
            photons = propagate_batch(transmit_batch(bits, cfg.source, source_rng), cfg.channel, source_rng)
            res, cause = receive_bb84_batch(bb84_state_index(bits, ab), bb, photons, cfg.receiver, cfg.detector, bob_rng)
            a_bases.append(ab)
            b_bases.append(bb)
            results.append(res)
            causes.append(cause)
        else:
            photons = propagate_batch(transmit_batch(bits, cfg.source, source_rng), cfg.channel, source_rng)
            states, photons = eve_process_batch(bits.astype(np.int64), photons, cfg.eve, cfg.receiver, eve_rng)
            out = receive_batch(states, photons, cfg.receiver, cfg.detector, bob_rng)
            out_parts.append(out)
        if k:
            for i in range(-start % k, m, k):
                rec = {"event": "pulse", "slot": start + i, "bit": int(bits[i]), "photons_at_receiver": int(photons[i])}
                if bb84:
                    rec.update(bob_result=int(res[i]))
                else:
                    o = out.outcome(i)
                    rec.update(outcome=o.kind.value, cause=o.cause.value if o.cause else None, detector=o.detector_id)
                samples.append(rec)

    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, np.uint8)  # noqa: E731
    run = PulseRun(cat(bits_parts), samples=samples)
    if bb84:
        run.alice_bases, run.bob_bases = cat(a_bases), cat(b_bases)
        run.bob_results, run.bb84_cause = cat(results).astype(np.int8), cat(causes).astype(np.int8)
    else:
        run.outcomes = BatchOutcome.concat(out_parts)
    return run


def bob_detections(run: PulseRun, cfg: ExperimentConfig) -> list[tuple[int, object]]:
    out = run.outcomes
    return [(i, bob_infer(out.outcome(i), cfg.protocol)) for i in np.flatnonzero(out.kind != 0).tolist()]


def _check_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write-probe"
    probe.write_bytes(b"")
    probe.unlink()


def _sessions(cfg: ExperimentConfig, run: PulseRun):
    proto_rng = cfg.make_rng("protocol")
    bb84 = cfg.protocol.protocol == "BB84"
    detections = None if bb84 else bob_detections(run, cfg)

    def alice(ep):
        if bb84:
            slots, key = alice_bb84_party(ep, run.alice_bases, run.alice_bits)
        else:
            slots, key = alice_sift_party(ep, run.alice_bits)
        est, rest = alice_ber_party(ep, key)
        final, rep = reconcile_party(ep, rest, cfg.reconcile, "alice")
        return dict(slots=slots, sifted=key, est=est, final=final, report=rep)

    def bob(ep):
        if bb84:
            slots, key, duals = bob_bb84_party(ep, run.bob_bases, run.bob_results)
            discards = 0
        else:
            slots, key, duals, discards = bob_sift_party(ep, detections)
        est, rest = bob_ber_party(ep, key, cfg.protocol.ber_sample_fraction, proto_rng)
        final, rep = reconcile_party(ep, rest, cfg.reconcile, "bob")
        return dict(slots=slots, sifted=key, est=est, final=final, report=rep, duals=duals, discards=discards)

    return alice, bob


def _build_report(cfg, run, a, b) -> StatsReport:
    slots = a["slots"]
    err = a["sifted"] != b["sifted"]
    if run.outcomes is not None:
        cause = run.outcomes.cause[slots]
        kind = run.outcomes.kind[slots]
    else:
        cause = run.bb84_cause[slots]
        kind = np.zeros(len(slots), np.int8)
    rep: ReconcileReport = a["report"]
    seconds = cfg.pulse_count / cfg.source.pulse_rate
    n = len(slots)
    return StatsReport(
        pulses=cfg.pulse_count,
        pulse_rate=cfg.source.pulse_rate,
        protocol=cfg.protocol.protocol,
        detector_count=cfg.receiver.detector_count,
        seed=cfg.seed,
        session_id=cfg.session_id,
        sifted_bits=n,
        sifted_rate=n / seconds if seconds else 0.0,
        ber_oracle=float(err.mean()) if n else 0.0,
        ber_estimated=a["est"],
        error_breakdown={c: int((err & (cause == i)).sum()) for i, c in enumerate(CAUSES)},
        sifted_breakdown={c: int((cause == i).sum()) for i, c in enumerate(CAUSES)},
        early_errors=int((err & (kind == 1)).sum()),
        late_errors=int((err & (kind == 2)).sum()),
        dual_fires=b["duals"],
        discarded_detections=b["discards"],
        ber_sample_bits=n - len(a["final"]) - rep.discarded_bits - rep.privacy_deductions,
        reconciled_bits=len(a["final"]),
        reconciled_mismatches=int((a["final"] != b["final"]).sum()),
        discarded_by_reconcile=rep.discarded_bits,
        privacy_deductions=rep.privacy_deductions,
        parities_disclosed=rep.parities_disclosed,
        residual_error_estimate=rep.residual_error_estimate,
    )


def _transcript_config(cfg: ExperimentConfig) -> dict:
    d = to_dict(cfg)
    # where and how a run is hosted does not change its results
    for k in ("output_dir", "transport"):
        d.pop(k)
    return d


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    t0 = time.perf_counter()
    out_dir = Path(cfg.output_dir)
    if write:
        _check_writable(out_dir)

    run = simulate_pulses(cfg)
    msg_log = MessageLog()
    alice_fn, bob_fn = _sessions(cfg, run)
    a, b = run_pair(alice_fn, bob_fn, mode=cfg.transport, session_id=cfg.session_id, on_send=msg_log)

    report = _build_report(cfg, run, a, b)
    report.wallclock = time.perf_counter() - t0
    sift = SiftResult(a["slots"], a["sifted"], b["sifted"], b["duals"], b["discards"])
    transcript = [{"event": "config", "config": _transcript_config(cfg)}]
    transcript += run.samples
    transcript += msg_log.records
    transcript.append({"event": "stats", "report": report.to_dict(include_wallclock=False)})

    result = ExperimentResult(cfg, report, sift, a["final"], b["final"], a["report"], transcript, run)
    if write:
        result.paths = write_outputs(result, out_dir)
    log.info("run finished: %d sifted bits, BER %.4f", report.sifted_bits, report.ber_oracle)
    return result


def write_outputs(result: ExperimentResult, out_dir: Path) -> dict[str, Path]:
    cfg, r = result.config, result.report
    meta = dict(session_id=cfg.session_id, seed=cfg.seed)
    keys = out_dir / "keys"
    keys.mkdir(parents=True, exist_ok=True)
    paths = {
        "alice_sifted": write_key(keys / "alice_sifted.key", result.sift.alice_key, party="alice", stage="sifted", **meta),
        "bob_sifted": write_key(keys / "bob_sifted.key", result.sift.bob_key, party="bob", stage="sifted", **meta),
        "alice_final": write_key(keys / "alice_final.key", result.alice_key, party="alice", stage="reconciled", **meta),
        "bob_final": write_key(keys / "bob_final.key", result.bob_key, party="bob", stage="reconciled", **meta),
    }
    paths["report"] = out_dir / "report.json"
    paths["report"].write_text(emit_report(r, "machine") + "\n")
    paths["summary"] = out_dir / "report.txt"
    paths["summary"].write_text(emit_report(r, "human", excerpt=(result.sift.alice_key, result.sift.bob_key)) + "\n")
    paths["transcript"] = out_dir / "transcript.jsonl"
    with paths["transcript"].open("w") as fh:
        for rec in result.transcript:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    paths["meta"] = out_dir / "run_meta.json"
    paths["meta"].write_text(json.dumps({"wallclock": r.wallclock, "transport": cfg.transport}, indent=2) + "\n")
    return paths


def read_transcript(path: str | Path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def report_from_transcript(records: list[dict]) -> StatsReport:
    stats = [r for r in records if r.get("event") == "stats"]
    if not stats:
        raise ValueError("transcript holds no stats record")
    return StatsReport.from_dict(stats[-1]["report"])
