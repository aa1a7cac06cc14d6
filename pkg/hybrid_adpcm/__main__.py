"""
CLI entry point for hybrid_adpcm.

Usage:
    # Encode / decode one file
    python -m hybrid_adpcm encode speech.raw speech.ahpc --nq 4 --predictor hybrid
    python -m hybrid_adpcm decode speech.ahpc speech_dec.raw

    # Evaluate a corpus over a configuration grid
    python -m hybrid_adpcm eval --manifest corpus/manifest.csv --mode backward \
        --predictor lpc mlp hybrid --nq 2 3 4 5 --out table.csv

    # Frame-length sweep and synthetic corpus
    python -m hybrid_adpcm sweep speech.wav --format wav --out sweep.csv
    python -m hybrid_adpcm synth --out-dir corpus --per-kind 5

    # LM training curves (MSE per epoch, every start) for chosen frames
    python -m hybrid_adpcm train-trace speech.wav --format wav --frames 0 10 20 --out trace.csv
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, TextIO

from . import bitstream
from .codec import decode_with_report, encode_with_report
from .config import CodecConfig, EvalConfig, load_config
from .errors import AdpcmError, ConfigError, SignalError
from .evaluation import (
    build_grid,
    load_manifest,
    run_eval,
    sweep_framelen,
    training_curves,
    write_eval_csv,
    write_sweep_csv,
    write_trace_csv,
)
from .signal import PCM_FORMATS, load_pcm, save_pcm, segsnr
from .synth import SIGNAL_KINDS, generate_corpus

LOGGER = logging.getLogger(__name__)

MODES = ["backward", "forward"]
PREDICTORS = ["lpc", "mlp", "hybrid"]
NQ_CHOICES = [2, 3, 4, 5]
LPC_ORDERS = [10, 25]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="Path to JSON config (tunables)")
    parser.add_argument("--log-level", default="INFO")


def _add_codec_flags(parser: argparse.ArgumentParser, multi: bool = False) -> None:
    nargs = "+" if multi else None
    parser.add_argument("--mode", choices=MODES, nargs=nargs, default=None)
    parser.add_argument("--predictor", choices=PREDICTORS, nargs=nargs, default=None)
    parser.add_argument("--nq", type=int, choices=NQ_CHOICES, nargs=nargs, default=None)
    parser.add_argument("--frame-len", type=int, nargs=nargs, default=None)
    parser.add_argument("--lpc-order", type=int, choices=LPC_ORDERS, nargs=nargs, default=None)
    parser.add_argument("--seed", type=int, default=None, help="Unsigned 64-bit seed")
    parser.add_argument("--epochs", type=int, default=None, help="LM epochs per frame")
    parser.add_argument("--starts", type=int, default=None, help="Multistart initializations")
    parser.add_argument("--train-workers", type=int, default=None, help="Threads for multistart training")
    parser.add_argument("--trace", action="store_true", help="Log per-frame state digests")


def _add_pcm_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=PCM_FORMATS, default="raw16le")
    parser.add_argument("--bit-depth", type=int, default=12, help="Source bit depth")
    parser.add_argument("--sample-rate", type=int, default=8000, help="Rate for raw input/output")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="hybrid-adpcm",
        description="ADPCM speech coder with a switched LPC/MLP predictor",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="Encode PCM into an AHPC stream")
    enc.add_argument("input")
    enc.add_argument("output")
    _add_pcm_flags(enc)
    _add_codec_flags(enc)
    _add_common(enc)

    dec = sub.add_parser("decode", help="Decode an AHPC stream to PCM")
    dec.add_argument("input")
    dec.add_argument("output")
    dec.add_argument("--format", choices=PCM_FORMATS, default="raw16le")
    dec.add_argument("--sample-rate", type=int, default=8000)
    dec.add_argument("--trace", action="store_true")
    _add_common(dec)

    ev = sub.add_parser("eval", help="Evaluate a corpus over a configuration grid")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", required=True, help="Output CSV path")
    ev.add_argument("--workers", type=int, default=None, help="Parallel files")
    _add_codec_flags(ev, multi=True)
    _add_common(ev)

    sw = sub.add_parser("sweep", help="SEGSNR versus frame length")
    sw.add_argument("input")
    sw.add_argument("--out", required=True, help="Output CSV path")
    sw.add_argument("--lengths", type=int, nargs=3, metavar=("START", "STOP", "STEP"), default=None)
    sw.add_argument("--with-lpc25", action="store_true", help="Add an LPC-25 column")
    _add_pcm_flags(sw)
    _add_codec_flags(sw)
    _add_common(sw)

    tr = sub.add_parser("train-trace", help="Per-epoch LM training MSE for each frame and start")
    tr.add_argument("input")
    tr.add_argument("--out", required=True, help="Output CSV path")
    tr.add_argument("--frames", type=int, nargs="+", default=None, help="Frame indices (default: all)")
    _add_pcm_flags(tr)
    _add_codec_flags(tr)
    _add_common(tr)

    sy = sub.add_parser("synth", help="Write a synthetic corpus and its manifest")
    sy.add_argument("--out-dir", required=True)
    sy.add_argument("--per-kind", type=int, default=5)
    sy.add_argument("--kinds", nargs="+", choices=SIGNAL_KINDS, default=list(SIGNAL_KINDS))
    sy.add_argument("--duration", type=float, default=2.0, help="Seconds per signal")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--bit-depth", type=int, default=12)
    sy.add_argument("--log-level", default="INFO")

    return parser.parse_args(argv)


def build_config(args: argparse.Namespace) -> tuple[CodecConfig, EvalConfig]:
    """Load config, then let single-valued CLI flags override it."""
    config, eval_cfg = load_config(getattr(args, "config", None))

    def scalar(name: str):
        value = getattr(args, name, None)
        return None if isinstance(value, list) else value

    if scalar("mode") is not None:
        config.mode = args.mode
    if scalar("predictor") is not None:
        config.predictor = args.predictor
    if scalar("nq") is not None:
        config.nq = args.nq
    if scalar("frame_len") is not None:
        config.frame_len = args.frame_len
    if scalar("lpc_order") is not None:
        config.lpc_order = args.lpc_order
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        config.train.epochs = args.epochs
    if getattr(args, "starts", None) is not None:
        config.train.n_starts = args.starts
    if getattr(args, "train_workers", None) is not None:
        config.train.workers = args.train_workers
    if getattr(args, "trace", False):
        config.trace_state = True
    if getattr(args, "workers", None) is not None:
        eval_cfg.workers = args.workers
    return config, eval_cfg


def _open_output(path: str) -> TextIO:
    """Open a CSV destination, creating its directory; filesystem failures become E_SIGNAL."""
    out = Path(path)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        return out.open("w", encoding="utf-8", newline="")
    except OSError as exc:
        raise SignalError(f"cannot write {path}: {exc}") from None


def _sweep_lengths(spec: List[int]) -> List[int]:
    start, stop, step = spec
    if step <= 0:
        raise ConfigError(f"--lengths step must be positive, got {step}")
    lengths = list(range(start, stop + 1, step))
    if not lengths:
        raise ConfigError(f"--lengths {start} {stop} {step} selects no frame lengths")
    return lengths


def _describe(header) -> str:
    return (
        f"mode={header.mode.value} predictor={header.predictor.value} nq={header.nq} "
        f"lpc_order={header.lpc_order} frame_len={header.frame_len} seed={header.seed} "
        f"samples={header.sample_count} bit_depth={header.source_bit_depth} "
        f"digest={header.tunables_digest:016x}"
    )


def cmd_encode(args: argparse.Namespace) -> int:
    config, eval_cfg = build_config(args)
    signal = load_pcm(args.input, args.format, args.bit_depth, args.sample_rate)
    report = encode_with_report(signal, config)
    data = bitstream.to_bytes(report.stream)
    try:
        Path(args.output).write_bytes(data)
    except OSError as exc:
        raise SignalError(f"cannot write {args.output}: {exc}") from None

    print(_describe(report.stream.header))
    print(f"bits/sample: {report.stream.bits_per_sample():.4f} ({len(data)} bytes)")
    if len(signal) >= eval_cfg.segment_len:
        snr = segsnr(signal, report.reconstruction, eval_cfg.segment_len, eval_cfg.clamp_db)
        print(f"SEGSNR: {snr.segsnr_db:.2f} dB (std {snr.std_db:.2f}, {snr.segment_count} segments)")
    else:
        print(f"SEGSNR: n/a (fewer than {eval_cfg.segment_len} samples)")
    if config.predictor == "hybrid":
        print(f"MLP usage: {100.0 * report.mlp_usage_fraction:.2f}%")
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    config, _ = build_config(args)
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise SignalError(f"cannot read {args.input}: {exc}") from None
    stream = bitstream.from_bytes(data)
    print(_describe(stream.header))
    signal, _ = decode_with_report(stream, config, args.sample_rate)
    save_pcm(signal, args.output, args.format)
    print(f"wrote {len(signal)} samples to {args.output}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config, eval_cfg = build_config(args)
    manifest = load_manifest(args.manifest)
    grid = build_grid(
        modes=args.mode or [config.mode],
        predictors=args.predictor or [config.predictor],
        nqs=args.nq or [config.nq],
        frame_lens=args.frame_len or [config.frame_len],
        lpc_orders=args.lpc_order or [config.lpc_order],
    )
    rows = run_eval(manifest, grid, config, eval_cfg)
    with _open_output(args.out) as f:
        write_eval_csv(rows, f)
    failed = sum(1 for r in rows if r.kind == "file" and r.error)
    LOGGER.info("Wrote %d rows to %s (%d failed file runs)", len(rows), args.out, failed)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config, eval_cfg = build_config(args)
    lengths = eval_cfg.sweep_lengths
    if args.lengths:
        lengths = _sweep_lengths(args.lengths)
    signal = load_pcm(args.input, args.format, args.bit_depth, args.sample_rate)
    rows = sweep_framelen(signal, config, lengths, eval_cfg, with_lpc25=args.with_lpc25)
    with _open_output(args.out) as f:
        write_sweep_csv(rows, f)
    LOGGER.info("Wrote %d sweep rows to %s", len(rows), args.out)
    return 0


def cmd_train_trace(args: argparse.Namespace) -> int:
    config, _ = build_config(args)
    signal = load_pcm(args.input, args.format, args.bit_depth, args.sample_rate)
    rows = training_curves(signal, config, args.frames)
    with _open_output(args.out) as f:
        write_trace_csv(rows, f)
    LOGGER.info("Wrote %d training-curve rows to %s", len(rows), args.out)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    entries = generate_corpus(
        Path(args.out_dir),
        per_kind=args.per_kind,
        duration_s=args.duration,
        seed=args.seed,
        kinds=args.kinds,
        bit_depth=args.bit_depth,
    )
    print(f"wrote {len(entries)} files and manifest.csv to {args.out_dir}")
    return 0


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "train-trace": cmd_train_trace,
    "synth": cmd_synth,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )
    try:
        return COMMANDS[args.command](args)
    except AdpcmError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        # writes that fail after the destination was opened
        print(f"error[{SignalError.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
