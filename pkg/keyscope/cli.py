from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from keyscope.audio.cache import CACHE_SUFFIX, cache_path_for, read_cache_metadata, read_spectrogram, write_spectrogram
from keyscope.audio.filterbank import FilterBank, build_filterbank
from keyscope.audio.spectrogram import FRAME_RATE, compute_spectrogram
from keyscope.audio.wav import load_wav
from keyscope.config import DEFAULT_LOG_LEVEL, env_str, load_env, resolve_config_path
from keyscope.data.manifest import ManifestEntry, apply_classical_rule, entries_for_split, load_manifest
from keyscope.data.synth import synth_dataset
from keyscope.evaluation.durations import density_rows, duration_report
from keyscope.evaluation.keys import all_labels, parse_key_label
from keyscope.evaluation.mirex import REPORT_COLUMNS, score
from keyscope.model_store import load_checkpoint, resolve_checkpoint_path, save_checkpoint
from keyscope.models.builders import build_model
from keyscope.models.config import ALLCONV_GRID_NF, GRID_DROPOUT, KEYNET_GRID_NF, ArchitectureConfig
from keyscope.models.counting import count_params
from keyscope.models.predict import predict
from keyscope.runtime.config_guard import ensure_runtime_config, guard_config, print_report
from keyscope.runtime.errors import EXIT_DATA, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, DataError, KeyscopeError
from keyscope.runtime.workers import VALID_ARCHS, resolve_workers, run_parallel
from keyscope.training.batches import load_items
from keyscope.training.fit import TrainConfig, fit
from keyscope.training.grid import best_single_run, grid_search, write_grid_csv
from keyscope.training.snippets import DEFAULT_SNIPPET_SECONDS, snippet_frames_for
from keyscope.training.timing import DEFAULT_PIECE_FRAMES, DEFAULT_TIMING_BATCH, DEFAULT_UPDATES, full_vs_snippet_timing

log = logging.getLogger(__name__)

_ARCH_CHOICES = tuple(sorted(VALID_ARCHS))
_LOG_FORMAT = "[%(asctime)s] %(levelname)s: %(message)s"
_ALL_DATASETS = "ALL"


def _emit_progress(tag: str, message: str) -> None:
    try:
        sys.stderr.write(f"[{tag}] {message}\n")
        sys.stderr.flush()
    except Exception:
        pass


def _configure_logging(verbose: bool) -> None:
    level_name = "DEBUG" if verbose else env_str("KEYSCOPE_LOG_LEVEL", DEFAULT_LOG_LEVEL).upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format=_LOG_FORMAT, force=True)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Path to config env file")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="Manifest CSV with train/valid splits")
    parser.add_argument("--features-dir", help="Directory of <id>.kspc caches for audio entries")
    parser.add_argument("--snippet-seconds", type=float, default=DEFAULT_SNIPPET_SECONDS, help="Training snippet length")
    parser.add_argument("--full", action="store_true", help="Train on full spectrograms instead of snippets")
    parser.add_argument("--batch-size", type=int, help="Minibatch size (default KEYSCOPE_BATCH_SIZE)")
    parser.add_argument("--max-epochs", type=int, help="Epoch limit (default KEYSCOPE_MAX_EPOCHS)")
    parser.add_argument("--patience", type=int, help="Early-stop patience (default KEYSCOPE_PATIENCE)")
    parser.add_argument("--lr", type=float, help="Initial learning rate (default KEYSCOPE_LEARNING_RATE)")
    parser.add_argument("--embedding-dim", type=int, help="KeyNet embedding width (default 2*N_f)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="keyscope", description="Musical key classification toolkit")
    subparsers = parser.add_subparsers(dest="command", required=True)

    extract_parser = subparsers.add_parser("extract", help="Compute spectrogram caches for a manifest")
    _add_common(extract_parser)
    extract_parser.add_argument("--manifest", required=True, help="Manifest CSV")
    extract_parser.add_argument("--out-dir", required=True, help="Directory for <id>.kspc caches")
    extract_parser.add_argument("--workers", type=int, help="Worker threads (default KEYSCOPE_WORKERS or CPU count)")

    train_parser = subparsers.add_parser("train", help="Train a key classifier")
    _add_common(train_parser)
    train_parser.add_argument("--arch", choices=_ARCH_CHOICES, default="allconv", help="keynet|allconv")
    train_parser.add_argument("--nf", type=int, default=24, help="Feature-map count N_f")
    train_parser.add_argument("--dropout", type=float, default=0.0, help="Feature-map dropout probability")
    train_parser.add_argument("--seed", type=int, default=0, help="Seed for init, shuffling and augmentation")
    train_parser.add_argument("--out", default="model.knet", help="Checkpoint path or name")
    _add_training_flags(train_parser)

    predict_parser = subparsers.add_parser("predict", help="Predict the key of WAV or .kspc inputs")
    _add_common(predict_parser)
    predict_parser.add_argument("--model", required=True, help="Checkpoint path or name")
    predict_parser.add_argument("--input", required=True, nargs="+", help="WAV or .kspc file(s)")
    predict_parser.add_argument("--format", choices=("csv", "json"), default="csv", help="Output format")

    evaluate_parser = subparsers.add_parser("evaluate", help="Score predictions against reference keys")
    _add_common(evaluate_parser)
    evaluate_parser.add_argument("--predictions", required=True, help="CSV with id,key")
    evaluate_parser.add_argument("--reference", required=True, help="CSV with id,key[,dataset]")
    evaluate_parser.add_argument("--durations", help="CSV with id,duration_s for the duration analysis")
    evaluate_parser.add_argument("--out", help="Also write the score table to this CSV")
    evaluate_parser.add_argument("--durations-out", help="Write duration densities to this CSV")

    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic keyed dataset")
    _add_common(synth_parser)
    synth_parser.add_argument("--pieces", type=int, required=True, help="Number of pieces (multiple of 24 is balanced)")
    synth_parser.add_argument("--seed", type=int, default=0, help="Generator seed")
    synth_parser.add_argument("--out-dir", required=True, help="Output directory")
    synth_parser.add_argument("--duration", type=float, default=24.0, help="Seconds per piece")
    synth_parser.add_argument("--write-audio", action="store_true", help="Also write WAV files")
    synth_parser.add_argument("--workers", type=int, help="Worker threads")

    grid_parser = subparsers.add_parser("grid", help="Grid search over N_f and dropout")
    _add_common(grid_parser)
    grid_parser.add_argument("--arch", choices=_ARCH_CHOICES, default="allconv", help="keynet|allconv")
    grid_parser.add_argument("--seeds", type=int, nargs="+", default=[0], help="Seeds per configuration")
    grid_parser.add_argument("--nf", type=int, nargs="+", help="N_f values (default: architecture grid)")
    grid_parser.add_argument("--dropout", type=float, nargs="+", help="Dropout values (default: 0.0 0.1 0.2)")
    grid_parser.add_argument("--out", default="grid.csv", help="Grid result CSV")
    _add_training_flags(grid_parser)

    timing_parser = subparsers.add_parser("timing", help="Compare full-piece and snippet update times")
    _add_common(timing_parser)
    timing_parser.add_argument("--arch", choices=_ARCH_CHOICES, default="keynet", help="keynet|allconv")
    timing_parser.add_argument("--nf", type=int, default=8, help="Feature-map count N_f")
    timing_parser.add_argument("--piece-frames", type=int, default=DEFAULT_PIECE_FRAMES, help="Full-piece frames")
    timing_parser.add_argument("--snippet-frames", type=int, default=100, help="Snippet frames")
    timing_parser.add_argument("--updates", type=int, default=DEFAULT_UPDATES, help="Timed updates per setup")
    timing_parser.add_argument("--batch-size", type=int, default=DEFAULT_TIMING_BATCH, help="Batch size")
    timing_parser.add_argument("--seed", type=int, default=0, help="Seed")
    timing_parser.add_argument("--out", help="Write the timing rows to this CSV")

    doctor_parser = subparsers.add_parser("doctor", help="Validate/migrate keyscope config")
    _add_common(doctor_parser)
    doctor_parser.add_argument("--fix", action="store_true", help="Apply automatic migration fixes")

    path_parser = subparsers.add_parser("config-path", help="Print resolved config path")
    _add_common(path_parser)

    return parser


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _print_csv(columns: Sequence[str], rows: Sequence[dict]) -> None:
    writer = csv.DictWriter(sys.stdout, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def _extract_one(entry: ManifestEntry, out_dir: Path, fb: FilterBank) -> str:
    """Returns "extracted" or "skipped"."""
    if entry.audio_path is None:
        return "skipped"
    entry = apply_classical_rule(entry)
    target = cache_path_for(out_dir, entry.id)
    try:
        mtime_ns = entry.audio_path.stat().st_mtime_ns
    except FileNotFoundError as exc:
        raise DataError("missing_audio", f"audio file not found: {entry.audio_path}") from exc
    stamp = {
        "frontend": fb.params_hash(),
        "source_mtime_ns": mtime_ns,
        "offset_s": entry.offset_s,
        "duration_s": entry.duration_s,
    }
    existing = read_cache_metadata(target)
    if existing and all(existing.get(key) == value for key, value in stamp.items()):
        return "skipped"
    clip = load_wav(entry.audio_path, offset_s=entry.offset_s, duration_s=entry.duration_s)
    write_spectrogram(target, compute_spectrogram(clip, fb), metadata=stamp)
    return "extracted"


def _cmd_extract(args: argparse.Namespace) -> int:
    entries = load_manifest(args.manifest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fb = build_filterbank()
    workers = resolve_workers(args.workers)
    _emit_progress("EXTRACT", f"{len(entries)} entries, workers={workers}")

    counts = {"extracted": 0, "skipped": 0, "failed": 0}
    for entry, outcome, error in run_parallel(lambda item: _extract_one(item, out_dir, fb), entries, workers):
        if error is not None:
            counts["failed"] += 1
            code = getattr(error, "code", type(error).__name__)
            sys.stderr.write(f"{entry.id}: {code}: {error}\n")
            continue
        counts[outcome] += 1

    sys.stdout.write(f"extracted {counts['extracted']}, skipped {counts['skipped']}, failed {counts['failed']}\n")
    return EXIT_DATA if counts["failed"] else EXIT_OK


def _training_setup(args: argparse.Namespace):
    entries = load_manifest(args.manifest)
    features_dir = Path(args.features_dir) if args.features_dir else None
    train = load_items(entries_for_split(entries, "train"), features_dir)
    valid = load_items(entries_for_split(entries, "valid"), features_dir)
    if not train or not valid:
        raise DataError("missing_split", f"manifest needs train and valid entries (train={len(train)}, valid={len(valid)})")
    train_cfg = TrainConfig.from_env(
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        learning_rate=args.lr,
        snippet_frames=None if args.full else snippet_frames_for(args.snippet_seconds, FRAME_RATE),
    )
    return train, valid, train_cfg


def _cmd_train(args: argparse.Namespace) -> int:
    ensure_runtime_config(resolve_config_path(args.config))
    # validate hyperparameters before touching data
    ArchitectureConfig(kind=args.arch, n_feature_maps=args.nf, dropout_p=args.dropout, embedding_dim=args.embedding_dim)
    train, valid, train_cfg = _training_setup(args)
    arch = ArchitectureConfig(
        kind=args.arch,
        n_feature_maps=args.nf,
        dropout_p=args.dropout,
        n_bins=train[0].spec.n_bins,
        embedding_dim=args.embedding_dim,
    )
    model = build_model(arch, seed=args.seed)
    counts = count_params(model)
    _emit_progress("TRAIN", f"{arch.kind} N_f={arch.n_feature_maps} params={counts.total} train={len(train)} valid={len(valid)}")

    result = fit(model, train, valid, replace(train_cfg, seed=args.seed))
    report = result.report
    target = resolve_checkpoint_path(args.out)
    save_checkpoint(
        model,
        target,
        extra={"best_epoch": report.best_epoch, "val_weighted": report.best_val_weighted, "seed": args.seed},
    )
    csv_path, json_path = report.write(target.with_suffix(".csv"), target.with_suffix(".json"))
    sys.stdout.write(
        f"best epoch {report.best_epoch}: val weighted {report.best_val_weighted:.4f}, "
        f"overfit ratio {report.overfit_ratio:.3f}\n"
    )
    sys.stdout.write(f"checkpoint: {target}\nreport: {csv_path}, {json_path}\n")
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    model = load_checkpoint(resolve_checkpoint_path(args.model))
    fb = build_filterbank()
    labels = all_labels()
    results = []
    for raw in args.input:
        path = Path(raw)
        if path.suffix.lower() == CACHE_SUFFIX:
            spec = read_spectrogram(path)
        else:
            spec = compute_spectrogram(load_wav(path), fb)
        results.append((path.stem, predict(model, spec)))

    if args.format == "json":
        payload = [
            {
                "id": piece_id,
                "key": prediction.label.format(),
                "index": prediction.label.index,
                "distribution": {label.format(): round(float(p), 6) for label, p in zip(labels, prediction.distribution)},
            }
            for piece_id, prediction in results
        ]
        sys.stdout.write(json.dumps(payload if len(payload) > 1 else payload[0], indent=2) + "\n")
        return EXIT_OK

    columns = ["id", "key", "index"] + [f"p{index:02d}" for index in range(len(labels))]
    rows = []
    for piece_id, prediction in results:
        row = {"id": piece_id, "key": prediction.label.format(), "index": str(prediction.label.index)}
        row.update({f"p{index:02d}": f"{float(p):.6f}" for index, p in enumerate(prediction.distribution)})
        rows.append(row)
    _print_csv(columns, rows)
    return EXIT_OK


def _read_keyed_csv(path: str, required: Sequence[str]) -> dict[str, dict[str, str]]:
    source = Path(path)
    try:
        handle = source.open(newline="", encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError("missing_file", f"file not found: {source}") from exc
    with handle:
        reader = csv.DictReader(handle)
        fieldnames = list(reader.fieldnames or [])
        if "key" not in fieldnames and "key_label" in fieldnames:
            reader.fieldnames = ["key" if name == "key_label" else name for name in fieldnames]
        missing = [column for column in required if column not in (reader.fieldnames or [])]
        if missing:
            raise DataError("missing_column", f"{source} lacks column(s): {', '.join(missing)}")
        rows = {}
        for row in reader:
            piece_id = row["id"].strip()
            if piece_id in rows:
                raise DataError("duplicate_id", f"{source}: id {piece_id!r} appears more than once")
            rows[piece_id] = row
        return rows


def _score_row(name: str, pairs) -> dict[str, str]:
    return {"Dataset": name, **score(pairs).percentages()}


def _cmd_evaluate(args: argparse.Namespace) -> int:
    predictions = _read_keyed_csv(args.predictions, ("id", "key"))
    reference = _read_keyed_csv(args.reference, ("id", "key"))
    missing_pred = sorted(set(reference) - set(predictions))
    missing_ref = sorted(set(predictions) - set(reference))
    if missing_pred or missing_ref:
        raise DataError(
            "id_mismatch",
            f"ids missing from predictions: {missing_pred[:20]}; ids missing from reference: {missing_ref[:20]}",
        )

    pairs_by_dataset: dict[str, list] = {}
    correct: dict[str, bool] = {}
    for piece_id, ref_row in reference.items():
        pred = parse_key_label(predictions[piece_id]["key"])
        target = parse_key_label(ref_row["key"])
        correct[piece_id] = pred == target
        dataset = (ref_row.get("dataset") or "").strip()
        if dataset:
            pairs_by_dataset.setdefault(dataset, []).append((pred, target))
    all_pairs = [
        (parse_key_label(predictions[piece_id]["key"]), parse_key_label(row["key"])) for piece_id, row in reference.items()
    ]

    rows = [_score_row(name, pairs) for name, pairs in sorted(pairs_by_dataset.items())]
    rows.append(_score_row(_ALL_DATASETS, all_pairs))
    columns = ("Dataset",) + REPORT_COLUMNS
    _print_csv(columns, rows)
    if args.out:
        _write_csv(Path(args.out), columns, rows)

    if args.durations:
        durations = _read_keyed_csv(args.durations, ("id", "duration_s"))
        items = []
        for piece_id, row in durations.items():
            if piece_id not in correct:
                continue
            try:
                items.append((float(row["duration_s"]), correct[piece_id]))
            except ValueError as exc:
                raise DataError("bad_duration", f"{piece_id}: duration {row['duration_s']!r} is not a number") from exc
        stats = duration_report(items)
        stat_rows = []
        for name, group in (("correct", stats.correct), ("incorrect", stats.incorrect)):
            if group is None:
                continue
            stat_rows.append(
                {
                    "group": name,
                    "count": str(group.count),
                    "median": f"{group.median:.3f}",
                    "lower_quartile": f"{group.lower_quartile:.3f}",
                    "upper_quartile": f"{group.upper_quartile:.3f}",
                }
            )
        sys.stdout.write("\n")
        _print_csv(("group", "count", "median", "lower_quartile", "upper_quartile"), stat_rows)
        if args.durations_out:
            _write_csv(Path(args.durations_out), ("grid", "density_correct", "density_incorrect"), density_rows(stats))
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    result = synth_dataset(
        args.out_dir,
        args.pieces,
        args.seed,
        args.duration,
        workers=resolve_workers(args.workers),
        write_audio=args.write_audio,
    )
    sys.stdout.write(f"synthesised {len(result.entries)} pieces; manifest: {result.manifest_path}\n")
    return EXIT_OK


def _cmd_grid(args: argparse.Namespace) -> int:
    ensure_runtime_config(resolve_config_path(args.config))
    train, valid, train_cfg = _training_setup(args)
    configs = None
    if args.nf or args.dropout:
        nf_values = args.nf or list(KEYNET_GRID_NF if args.arch == "keynet" else ALLCONV_GRID_NF)
        dropout_values = args.dropout or list(GRID_DROPOUT)
        configs = [(n_f, p) for n_f in nf_values for p in dropout_values]
        for n_f, p in configs:
            ArchitectureConfig(kind=args.arch, n_feature_maps=n_f, dropout_p=p)
    rows = grid_search(
        args.arch,
        train,
        valid,
        args.seeds,
        configs=configs,
        train_cfg=train_cfg,
        full=args.full,
        n_bins=train[0].spec.n_bins,
        embedding_dim=args.embedding_dim,
    )
    target = write_grid_csv(args.out, rows)
    best = best_single_run(rows)
    sys.stdout.write(f"grid: {target}\nbest run: N_f={best.n_f} p={best.dropout:g} seed={best.seed} w={best.val_weighted:.4f}\n")
    return EXIT_OK


def _cmd_timing(args: argparse.Namespace) -> int:
    cfg = ArchitectureConfig(kind=args.arch, n_feature_maps=args.nf)
    report = full_vs_snippet_timing(
        cfg,
        args.piece_frames,
        args.snippet_frames,
        batch_size=args.batch_size,
        updates=args.updates,
        seed=args.seed,
    )
    columns = ("setup", "frames", "mean_update_s", "activation_bytes")
    _print_csv(columns, report.rows())
    sys.stdout.write(f"ratio {report.ratio:.3f}\n")
    if args.out:
        _write_csv(Path(args.out), columns, report.rows())
    return EXIT_OK


def _cmd_doctor(args: argparse.Namespace) -> int:
    report = guard_config(config_path=resolve_config_path(args.config), apply_fixes=args.fix)
    print_report(report)
    if report.ok:
        sys.stdout.write("[DOCTOR] result: OK\n")
        return EXIT_OK
    sys.stderr.write("[DOCTOR] result: FAILED\n")
    return EXIT_USAGE


def _cmd_config_path(args: argparse.Namespace) -> int:
    sys.stdout.write(f"{resolve_config_path(args.config)}\n")
    return EXIT_OK


_COMMANDS = {
    "extract": _cmd_extract,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
    "grid": _cmd_grid,
    "timing": _cmd_timing,
    "doctor": _cmd_doctor,
    "config-path": _cmd_config_path,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    if sys.version_info < (3, 10):
        sys.stderr.write("Python 3.10+ is required.\n")
        return EXIT_USAGE

    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        load_env(args.config)
    except Exception as exc:
        log.debug("Config load skipped: %s", exc)
    _configure_logging(args.verbose)

    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except KeyscopeError as exc:
        sys.stderr.write(f"{args.command} failed: {exc.code}: {exc}\n")
        return exc.exit_status
    except OSError as exc:
        sys.stderr.write(f"{args.command} failed: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
