"""Corpus evaluation and frame-length sweeps, emitted as CSV."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from tqdm import tqdm

from .codec import encode_with_report
from .config import MLP_INPUT_ORDER, CodecConfig, EvalConfig
from .errors import AdpcmError, ConfigError, ManifestError, SignalError, TrainingError
from .mlp import multistart_train_report
from .models import CorpusEntry, CorpusManifest, EvalRow, PredictorKind, SignalBuffer
from .signal import frames, load_pcm, segsnr

LOGGER = logging.getLogger(__name__)

EVAL_COLUMNS = [f.name for f in fields(EvalRow)] + ["mlp_usage_pct"]


@dataclass(frozen=True)
class GridPoint:
    mode: str
    predictor: str
    nq: int
    frame_len: int
    lpc_order: int = 10

    def apply(self, base: CodecConfig) -> CodecConfig:
        return replace(
            base,
            mode=self.mode,
            predictor=self.predictor,
            nq=self.nq,
            frame_len=self.frame_len,
            lpc_order=self.lpc_order,
        )


def load_manifest(path: str | Path) -> CorpusManifest:
    """One ``path,format,bit_depth,label`` line per file; relative paths resolve against the manifest."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such manifest: {path}")
    root = path.parent
    manifest = CorpusManifest(root=root)
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ManifestError(f"{path}:{lineno}: expected path,format,bit_depth,label")
        file_path, fmt, depth, label = parts
        try:
            bit_depth = int(depth)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: bad bit depth {depth!r}") from None
        resolved = Path(file_path)
        if not resolved.is_absolute():
            resolved = root / resolved
        if not resolved.is_file():
            raise ManifestError(f"{path}:{lineno}: missing file {resolved}")
        manifest.entries.append(CorpusEntry(path=resolved, format=fmt, bit_depth=bit_depth, label=label))
    return manifest


def build_grid(
    modes: Sequence[str],
    predictors: Sequence[str],
    nqs: Sequence[int],
    frame_lens: Sequence[int],
    lpc_orders: Sequence[int] = (10,),
) -> List[GridPoint]:
    """Cartesian grid; LPC orders other than 10 only pair with the LPC-only predictor."""
    grid = []
    for mode, predictor, nq, frame_len, order in itertools.product(
        modes, predictors, nqs, frame_lens, lpc_orders
    ):
        if order != 10 and predictor != PredictorKind.LPC_ONLY.value:
            continue
        grid.append(GridPoint(mode, predictor, nq, frame_len, order))
    return grid


def _row_for(entry_label: str, point: GridPoint, kind: str = "file") -> EvalRow:
    return EvalRow(
        kind=kind,
        label=entry_label,
        mode=point.mode,
        predictor=point.predictor,
        lpc_order=point.lpc_order,
        nq=point.nq,
        frame_len=point.frame_len,
    )


def evaluate_signal(
    signal: SignalBuffer,
    cfg: CodecConfig,
    eval_cfg: EvalConfig,
) -> Tuple[float, float, np.ndarray, float, float]:
    """(segsnr, std, per-segment SNRs, mlp usage fraction, encode seconds) for one signal."""
    started = time.perf_counter()
    report = encode_with_report(signal, cfg)
    elapsed = time.perf_counter() - started
    snr = segsnr(signal, report.reconstruction, eval_cfg.segment_len, eval_cfg.clamp_db)
    return snr.segsnr_db, snr.std_db, snr.segment_snrs, report.mlp_usage_fraction, elapsed


def _evaluate_job(
    job: Tuple[CorpusEntry, GridPoint, CodecConfig, EvalConfig]
) -> Tuple[EvalRow, np.ndarray]:
    entry, point, base, eval_cfg = job
    row = _row_for(entry.label, point)
    try:
        signal = load_pcm(entry.path, entry.format, entry.bit_depth)
        snr, std, segments, usage, elapsed = evaluate_signal(signal, point.apply(base), eval_cfg)
    except AdpcmError as exc:
        LOGGER.exception("Evaluation failed for %s (%s)", entry.label, point)
        row.error = f"{exc.code}: {exc}"
        return row, np.zeros(0)
    row.segsnr_db = snr
    row.std_db = std
    row.segment_count = int(segments.size)
    row.mlp_usage_fraction = usage
    row.encode_wall_time = elapsed
    return row, segments


def _aggregate(point: GridPoint, results: List[Tuple[EvalRow, np.ndarray]]) -> List[EvalRow]:
    ok = [(row, seg) for row, seg in results if not row.error]
    mean_row = _row_for("*", point, kind="mean_over_files")
    pooled_row = _row_for("*", point, kind="pooled_segments")
    failed = len(results) - len(ok)
    if failed:
        mean_row.error = pooled_row.error = f"{failed} file(s) failed"
    if not ok:
        return [mean_row, pooled_row]

    per_file = np.array([row.segsnr_db for row, _ in ok])
    usage = float(np.mean([row.mlp_usage_fraction for row, _ in ok]))
    segments = np.concatenate([seg for _, seg in ok])
    wall = float(sum(row.encode_wall_time for row, _ in ok))

    mean_row.segsnr_db = float(np.mean(per_file))
    mean_row.std_db = float(np.std(per_file))
    mean_row.segment_count = int(segments.size)
    mean_row.mlp_usage_fraction = usage
    mean_row.encode_wall_time = wall

    pooled_row.segsnr_db = float(np.mean(segments))
    pooled_row.std_db = float(np.std(segments))
    pooled_row.segment_count = int(segments.size)
    pooled_row.mlp_usage_fraction = usage
    pooled_row.encode_wall_time = wall
    return [mean_row, pooled_row]


def run_eval(
    manifest: CorpusManifest,
    grid: Sequence[GridPoint],
    base: CodecConfig,
    eval_cfg: EvalConfig,
    progress: bool = True,
) -> List[EvalRow]:
    """One row per file×configuration plus two aggregate rows per configuration, sorted."""
    for point in grid:
        point.apply(base).validate()
    jobs = [(entry, point, base, eval_cfg) for point in grid for entry in manifest.entries]
    LOGGER.info(
        "Evaluating %d files x %d configurations (workers=%d)",
        len(manifest.entries), len(grid), eval_cfg.workers,
    )

    if eval_cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=eval_cfg.workers) as pool:
            results = list(tqdm(pool.map(_evaluate_job, jobs), total=len(jobs), disable=not progress))
    else:
        results = [_evaluate_job(job) for job in tqdm(jobs, disable=not progress)]

    by_point: Dict[GridPoint, List[Tuple[EvalRow, np.ndarray]]] = {}
    for (_, point, _, _), result in zip(jobs, results):
        by_point.setdefault(point, []).append(result)

    rows: List[EvalRow] = [row for row, _ in results]
    if manifest.entries:
        for point in grid:
            rows.extend(_aggregate(point, by_point.get(point, [])))
    return sorted(rows, key=EvalRow.sort_key)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_eval_csv(rows: Iterable[EvalRow], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for row in rows:
        data = asdict(row)
        pct = None if row.mlp_usage_fraction is None else 100.0 * row.mlp_usage_fraction
        writer.writerow([_fmt(data[name]) for name in EVAL_COLUMNS[:-1]] + [_fmt(pct)])


def eval_csv_text(rows: Iterable[EvalRow]) -> str:
    buf = io.StringIO()
    write_eval_csv(rows, buf)
    return buf.getvalue()


# --- Frame-length sweep ---


SWEEP_PREDICTORS = ("lpc", "mlp", "hybrid")


def sweep_framelen(
    signal: SignalBuffer,
    base: CodecConfig,
    lengths: Sequence[int],
    eval_cfg: EvalConfig,
    with_lpc25: bool = False,
    progress: bool = True,
) -> List[Dict[str, float]]:
    """SEGSNR per frame length for each predictor; one dict per length."""
    if not lengths:
        raise ConfigError("no frame lengths given")
    for frame_len in lengths:
        replace(base, frame_len=frame_len).validate()
    needed = max(max(lengths), eval_cfg.segment_len)
    if len(signal) < needed:
        raise SignalError(f"sweep needs at least {needed} samples, file has {len(signal)}")

    columns: List[Tuple[str, str, int]] = [(p, p, 10) for p in SWEEP_PREDICTORS]
    if with_lpc25:
        columns.append(("lpc25", "lpc", 25))

    rows: List[Dict[str, float]] = []
    for frame_len in tqdm(list(lengths), disable=not progress):
        row: Dict[str, float] = {"frame_len": frame_len}
        for column, predictor, order in columns:
            cfg = replace(base, predictor=predictor, lpc_order=order, frame_len=frame_len)
            snr, _, _, usage, _ = evaluate_signal(signal, cfg, eval_cfg)
            row[f"segsnr_{column}"] = snr
            if predictor == PredictorKind.HYBRID.value:
                row["mlp_usage_hybrid"] = usage
        LOGGER.debug("sweep frame_len=%d: %s", frame_len, row)
        rows.append(row)
    return rows


def write_sweep_csv(rows: List[Dict[str, float]], out: TextIO, columns: Optional[List[str]] = None) -> None:
    columns = columns or (list(rows[0].keys()) if rows else ["frame_len"])
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])


# --- LM training curves ---


TRACE_COLUMNS = ["frame", "start", "epoch", "mse", "selected"]


def training_curves(
    signal: SignalBuffer,
    cfg: CodecConfig,
    frame_indices: Optional[Sequence[int]] = None,
    progress: bool = True,
) -> List[Dict[str, float]]:
    """MSE after every LM epoch for each multistart candidate of each frame.

    Networks are fitted the forward-mode way (raw frame, raw preceding samples)
    with the codec's seed, so the selected start matches what a forward-mode
    encoder keeps.
    """
    cfg.validate()
    train = cfg.effective_train()
    split = frames(signal, cfg.frame_len)
    indices = list(range(len(split))) if frame_indices is None else list(frame_indices)
    for idx in indices:
        if not 0 <= idx < len(split):
            raise ConfigError(f"frame {idx} out of range; the signal has {len(split)} frames")

    rows: List[Dict[str, float]] = []
    for idx in tqdm(indices, disable=not progress):
        frame = split[idx]
        traces: List[List[float]] = []
        try:
            selected = multistart_train_report(frame.history(MLP_INPUT_ORDER), frame.samples, train, idx, traces).start
        except TrainingError as exc:
            LOGGER.warning("No usable start on frame %d: %s", idx, exc)
            selected = -1
        for start, trace in enumerate(traces):
            for epoch, mse in enumerate(trace, start=1):
                rows.append(
                    {"frame": idx, "start": start, "epoch": epoch, "mse": mse, "selected": int(start == selected)}
                )
    return rows


def write_trace_csv(rows: List[Dict[str, float]], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow([row["frame"], row["start"], row["epoch"], f"{row['mse']:.6e}", row["selected"]])
