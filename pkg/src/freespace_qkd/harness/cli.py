"""Command-line interface: ``qkd-sim <command> ...``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 protocol abort,
5 file I/O, 6 key exhausted or reused. ``QKD_OUTPUT_DIR`` overrides the
output directory and ``QKD_LOG_LEVEL`` the log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from ..adversary import dual_fire_stats
from ..errors import ConfigError, KeyExhausted, ProtocolAbort
from ..link_sim import predict
from ..otp import KeyLedger, KeyReuseError, bits_to_bytes, bytes_to_bits, otp_decrypt, otp_encrypt
from ..reconcile import ReconcileConfig, reconcile
from . import keyfiles
from .config import dump_config, load_config
from .report import emit_report
from .runner import read_transcript, report_from_transcript, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_PROTOCOL = 4
EXIT_IO = 5
EXIT_KEY = 6

log = logging.getLogger("freespace_qkd")


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, pulse_count=args.pulses, output_dir=args.out, transport=args.transport)
    if args.sample_every is not None:
        cfg = replace(cfg, pulse_sample_every=args.sample_every)
    result = run_experiment(cfg)
    print(emit_report(result.report, args.format, excerpt=(result.sift.alice_key, result.sift.bob_key) if args.format == "human" else None))
    return EXIT_OK


def _cmd_predict(args) -> int:
    cfg = load_config(args.config)
    p = predict(cfg.source, cfg.channel, cfg.receiver, cfg.detector)
    d = {k: getattr(p, k) for k in p.__dataclass_fields__}
    d["late_early_ratio"] = p.late_early_ratio
    if args.format == "machine":
        print(json.dumps(d, indent=2, sort_keys=True))
    else:
        for k, v in d.items():
            print(f"{k:<24} {v:.6g}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    cfg = load_config(args.config, seed=args.seed, pulse_count=args.pulses)
    cfg = replace(cfg, receiver=replace(cfg.receiver, detector_count=args.detectors))
    base = run_experiment(cfg, write=False).report
    attacked_cfg = replace(cfg, eve=replace(cfg.eve, strategy="intercept_resend", resend_mode=args.eve))
    attacked = run_experiment(attacked_cfg, write=False).report
    print(f"{'':<18}{'baseline':>12}{'attacked':>12}")
    print(f"{'sifted rate (Hz)':<18}{base.sifted_rate:>12.3f}{attacked.sifted_rate:>12.3f}")
    print(f"{'BER (oracle)':<18}{base.ber_oracle:>12.4f}{attacked.ber_oracle:>12.4f}")
    print(f"{'dual fires':<18}{base.dual_fires:>12}{attacked.dual_fires:>12}")
    if args.detectors == 2:
        s = dual_fire_stats(attacked, base)
        print(f"dual-fire rate {s.dual_rate:.3e} [{s.ci_low:.3e}, {s.ci_high:.3e}] vs baseline {s.baseline_rate:.3e}; z = {s.z_score:.1f}")
    return EXIT_OK


def _cmd_reconcile(args) -> int:
    a, meta_a = keyfiles.read_key(args.a)
    b, _ = keyfiles.read_key(args.b)
    cfg = ReconcileConfig(args.rows, args.cols, args.passes, args.shuffle_seed)
    a_out, b_out, rep = reconcile(a, b, cfg)
    out = Path(args.out) if args.out else Path(args.a).parent
    out.mkdir(parents=True, exist_ok=True)
    meta = {k: meta_a[k] for k in ("session_id", "seed") if k in meta_a}
    keyfiles.write_key(out / "alice_reconciled.key", a_out, party="alice", stage="reconciled", **meta)
    keyfiles.write_key(out / "bob_reconciled.key", b_out, party="bob", stage="reconciled", **meta)
    print(
        f"input {rep.input_bits}  output {rep.output_bits}  discarded {rep.discarded_bits}  "
        f"deducted {rep.privacy_deductions}  parities {rep.parities_disclosed}  "
        f"residual estimate {rep.residual_error_estimate:.3g}"
    )
    return EXIT_OK


def _ledger_path(key: Path) -> Path:
    return key.with_name(key.name + ".ledger.json")


def _cmd_otp(args) -> int:
    key_path = Path(args.key)
    bits, _ = keyfiles.read_key(key_path)
    lpath = _ledger_path(key_path)
    watermark = json.loads(lpath.read_text())["consumed_watermark"] if lpath.exists() else 0
    ledger = KeyLedger(bits, watermark)
    data = bytes_to_bits(Path(args.infile).read_bytes())
    if args.start is not None:
        ledger.take(0, start=args.start)
    op = otp_encrypt if args.action == "encrypt" else otp_decrypt
    out_bits, ledger = op(ledger, data)
    Path(args.outfile).write_bytes(bits_to_bytes(out_bits))
    lpath.write_text(json.dumps({"consumed_watermark": ledger.consumed_watermark}) + "\n")
    print(f"{args.action}ed {len(data)} bits; key watermark {watermark} -> {ledger.consumed_watermark} of {len(bits)}")
    return EXIT_OK


def _cmd_report(args) -> int:
    r = report_from_transcript(read_transcript(args.transcript))
    excerpt = None
    if args.keys:
        a, _ = keyfiles.read_key(Path(args.keys) / "alice_sifted.key")
        b, _ = keyfiles.read_key(Path(args.keys) / "bob_sifted.key")
        excerpt = (a, b)
    print(emit_report(r, args.format, excerpt=excerpt))
    return EXIT_OK


def _cmd_inspect_key(args) -> int:
    bits, meta = keyfiles.read_key(args.key)
    print(json.dumps(meta, sort_keys=True))
    if args.hex:
        print(keyfiles.hexdump(bits))
    else:
        print("".join(map(str, bits[: args.bits].tolist())))
    return EXIT_OK


def _cmd_dump_config(args) -> int:
    print(dump_config(load_config(args.config)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qkd-sim", description="Free-space B92 QKD link simulator.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a full key exchange")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--pulses", type=int)
    r.add_argument("--out")
    r.add_argument("--transport", choices=("in_process", "socket"))
    r.add_argument("--sample-every", type=int, help="log every k-th pulse outcome in the transcript")
    r.add_argument("--format", choices=("human", "machine"), default="human")
    r.set_defaults(func=_cmd_run)

    pr = sub.add_parser("predict", help="closed-form rates, no simulation")
    pr.add_argument("--config")
    pr.add_argument("--format", choices=("human", "machine"), default="human")
    pr.set_defaults(func=_cmd_predict)

    a = sub.add_parser("attack", help="compare a baseline run against an intercept-resend attack")
    a.add_argument("--config")
    a.add_argument("--eve", choices=("single_photon", "bright"), required=True)
    a.add_argument("--pulses", type=int, default=1_000_000)
    a.add_argument("--seed", type=int)
    a.add_argument("--detectors", type=int, choices=(1, 2), default=2)
    a.set_defaults(func=_cmd_attack)

    rc = sub.add_parser("reconcile", help="two-dimensional parity reconciliation of two key files")
    rc.add_argument("--a", required=True)
    rc.add_argument("--b", required=True)
    rc.add_argument("--out")
    rc.add_argument("--rows", type=int, default=4)
    rc.add_argument("--cols", type=int, default=4)
    rc.add_argument("--passes", type=int, default=3)
    rc.add_argument("--shuffle-seed", type=int, default=0)
    rc.set_defaults(func=_cmd_reconcile)

    o = sub.add_parser("otp", help="one-time-pad encrypt or decrypt a file")
    o.add_argument("action", choices=("encrypt", "decrypt"))
    o.add_argument("--key", required=True)
    o.add_argument("--in", dest="infile", required=True)
    o.add_argument("--out", dest="outfile", required=True)
    o.add_argument("--start", type=int, help="expected pad offset in bits; refused if already consumed")
    o.set_defaults(func=_cmd_otp)

    rp = sub.add_parser("report", help="render the stats stored in a transcript")
    rp.add_argument("--transcript", required=True)
    rp.add_argument("--keys", help="directory with *_sifted.key files for a raw-key excerpt")
    rp.add_argument("--format", choices=("human", "machine"), default="human")
    rp.set_defaults(func=_cmd_report)

    k = sub.add_parser("inspect-key", help="show a key file")
    k.add_argument("key")
    k.add_argument("--hex", action="store_true")
    k.add_argument("--bits", type=int, default=200)
    k.set_defaults(func=_cmd_inspect_key)

    d = sub.add_parser("dump-config", help="print the effective configuration as YAML")
    d.add_argument("--config")
    d.set_defaults(func=_cmd_dump_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("QKD_LOG_LEVEL") or ("DEBUG" if args.verbose > 1 else "INFO" if args.verbose else "WARNING")
    logging.basicConfig(level=level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolAbort as exc:
        print(f"protocol aborted: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (KeyExhausted, KeyReuseError) as exc:
        print(f"key error: {exc}", file=sys.stderr)
        return EXIT_KEY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
