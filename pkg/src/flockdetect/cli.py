"""Command-line pipeline.

Subcommands:
    synth     generate a synthetic dataset (trajectory CSV + group file)
    prepare   build the labeled pair dataset, scene bins, and summary tables
    train     train one classifier on a prepared pair dataset
    grid      run the full hyperparameter grid and emit tables + plots
    detect    run flock detection over exported scene files
    validate  detect on an annotated dataset and score against the annotations

Any flag can also be supplied through `--config file` (one `key = value`
per line, keys named like the long flags with dashes as underscores);
explicit flags win. Exit codes: 0 ok, 2 usage, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plots
from .aggregate import (
    aggregate_flocks,
    combine_metrics,
    evaluate_all_pairs,
    histogram_report,
    size_histogram,
    validate_against_annotations,
)
from .errors import (
    ConfigMismatch,
    FlockDetectError,
    NumericalFailure,
    TrainingDiverged,
)
from .features import apply_scalers, featurize_sample, fit_scalers
from .ingest import (
    Dataset,
    generate_synthetic,
    load_dataset,
    parse_synthetic_config,
    write_group_file,
    write_trajectory_csv,
)
from .scenes import (
    PairDatasetSpec,
    assign_time_bins,
    build_pair_dataset,
    fill_sequence_blocks,
    read_pair_dataset,
    read_scene_dir,
    write_pair_dataset,
    write_scene_dir,
)
from .seqnet import (
    ModelConfig,
    SequenceModel,
    TrainConfig,
    class_weights_from_labels,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .seqnet.training import _samples_to_arrays

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULT_BIN_MS = 60_000
DEFAULT_SEQ_LEN = 100

GRID_SEQ_LENS = (30, 60, 100, 150, 200, 300, 500)
GRID_BATCHES = (64, 32, 16, 8)
GRID_HIDDENS = (256, 128, 64, 32, 16)
GRID_ARCHS = ("rnn", "lstm", "transformer")


@dataclass(frozen=True)
class ExperimentGrid:
    sequence_lengths: tuple[int, ...] = GRID_SEQ_LENS
    batch_sizes: tuple[int, ...] = GRID_BATCHES
    hidden_sizes: tuple[int, ...] = GRID_HIDDENS
    archs: tuple[str, ...] = GRID_ARCHS
    repeats: int = 1
    seed_base: int = 0

    def __post_init__(self):
        if not (self.sequence_lengths and self.batch_sizes
                and self.hidden_sizes and self.archs):
            raise ValueError("grid lists must be non-empty")

    def cells(self):
        index = 0
        for arch in self.archs:
            for L in self.sequence_lengths:
                for batch in self.batch_sizes:
                    for hidden in self.hidden_sizes:
                        for repeat in range(self.repeats):
                            yield index, arch, L, batch, hidden, self.seed_base + index, repeat
                            index += 1


@dataclass(frozen=True)
class RunRecord:
    arch: str
    L: int
    batch: int
    hidden: int
    seed: int
    accuracy: float
    wall_time_s: float
    epochs_run: int

    def __post_init__(self):
        if not (math.isnan(self.accuracy) or 0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")

    def as_line(self) -> str:
        return (f"arch={self.arch} L={self.L} batch={self.batch} "
                f"hidden={self.hidden} seed={self.seed} "
                f"accuracy={self.accuracy:.4f} wall_time_s={self.wall_time_s:.2f} "
                f"epochs_run={self.epochs_run}")

    def as_csv_row(self) -> str:
        return (f"{self.arch},{self.L},{self.batch},{self.hidden},{self.seed},"
                f"{self.accuracy:.6f},{self.wall_time_s:.4f},{self.epochs_run}")


# ---------------------------------------------------------------------------
# Flag / config-file plumbing
# ---------------------------------------------------------------------------

def _read_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    values = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _get(args, config: dict[str, str], key: str, default, cast=None):
    """Effective option value: explicit flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        raw = config[key]
        return cast(raw) if cast else raw
    return default


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _parse_size_dist(text: str) -> tuple[tuple[int, float], ...]:
    pairs = []
    for item in text.split(","):
        size, _, weight = item.partition(":")
        pairs.append((int(size), float(weight) if weight else 1.0))
    return tuple(pairs)


def _load_input_dataset(args, config) -> Dataset:
    traj = _get(args, config, "traj", None)
    synth_config = _get(args, config, "synth_config", None)
    if (traj is None) == (synth_config is None):
        raise UsageError("provide exactly one of --traj or --synth-config")
    if synth_config is not None:
        return generate_synthetic(parse_synthetic_config(synth_config))
    groups = _get(args, config, "groups", None)
    return load_dataset(traj, groups, source_label=Path(traj).stem)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Shared featurize / scale / split helpers
# ---------------------------------------------------------------------------

def _featurize_split(train_raw, test_raw, dtw_mode: str):
    train_feat = [featurize_sample(s, dtw_mode) for s in train_raw]
    test_feat = [featurize_sample(s, dtw_mode) for s in test_raw]
    scaler = fit_scalers(train_feat)
    return ([apply_scalers(scaler, s) for s in train_feat],
            [apply_scalers(scaler, s) for s in test_feat],
            scaler)


def carve_validation(train_scaled, seed: int, fraction: float = 0.1):
    """Split scaled training samples into (train, val), stratified by label."""
    rng = np.random.default_rng((seed, 3))
    fit, val = [], []
    for label in (1, 0):
        group = [s for s in train_scaled if s.label == label]
        if not group:
            continue
        order = rng.permutation(len(group))
        n_val = max(1, int(round(fraction * len(group)))) if len(group) > 1 else 0
        for pos, idx in enumerate(order):
            (val if pos < n_val else fit).append(group[idx])
    if not val and fit:
        val.append(fit.pop())
    return fit, val


def _train_once(arch, hidden, batch, seed, train_scaled, test_scaled, scaler, *,
                lr=0.001, epochs=1000, patience=50, optimizer="adam",
                weights=None, num_layers=1, heads=4, ff_multiplier=4,
                dropout=0.0, dtw_mode="full_broadcast"):
    """Train one model configuration; returns (model, history, RunRecord)."""
    fit_set, val_set = carve_validation(train_scaled, seed)
    if weights is None:
        weights = class_weights_from_labels([s.label for s in fit_set])
    model_cfg = ModelConfig(
        arch=arch, hidden_size=hidden, num_layers=num_layers, heads=heads,
        ff_multiplier=ff_multiplier, dropout=dropout, seed=seed,
        dtw_mode=dtw_mode)
    model = SequenceModel.create(model_cfg)
    model.scaler = scaler
    train_cfg = TrainConfig(
        learning_rate=lr, max_epochs=epochs, batch_size=batch,
        early_stop_patience=patience, class_weights=weights,
        optimizer=optimizer, seed=seed)
    trained, history = train(model, fit_set, val_set, train_cfg)
    if test_scaled:
        x_test, y_test = _samples_to_arrays(test_scaled)
        _, accuracy = evaluate(trained, x_test, y_test)
    else:
        accuracy = float("nan")
    L = train_scaled[0].sequence_length
    record = RunRecord(
        arch=arch, L=L, batch=batch, hidden=hidden, seed=seed,
        accuracy=accuracy, wall_time_s=trained.meta.wall_time_s,
        epochs_run=trained.meta.epochs_run)
    return trained, history, record


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args, config) -> int:
    synth_path = _get(args, config, "synth_config", None)
    if synth_path:
        cfg = parse_synthetic_config(synth_path)
    else:
        from .ingest import SyntheticConfig
        cfg = SyntheticConfig(
            n_flocks=_get(args, config, "n_flocks", 10, int),
            flock_size_distribution=_parse_size_dist(
                _get(args, config, "sizes", "2:1.0")),
            n_singletons=_get(args, config, "n_singletons", 20, int),
            duration_ms=_get(args, config, "duration_ms", 60_000, int),
            sample_period_ms=_get(args, config, "period_ms", 500, int),
            cohesion_radius_mm=_get(args, config, "cohesion_mm", 2000.0, float),
            noise_std_mm=_get(args, config, "noise_mm", 50.0, float),
            rng_seed=_get(args, config, "seed", 0, int),
        )
    out_dir = Path(_get(args, config, "out", "synth_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(cfg)
    write_trajectory_csv(dataset, out_dir / "trajectories.csv")
    write_group_file(dataset.groups, out_dir / "groups.dat")
    print(f"wrote {len(dataset.trajectories)} trajectories, "
          f"{len(dataset.groups)} group rows to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# prepare
# ---------------------------------------------------------------------------

def cmd_prepare(args, config) -> int:
    dataset = _load_input_dataset(args, config)
    L = _get(args, config, "seq_len", DEFAULT_SEQ_LEN, int)
    t_ms = _get(args, config, "bin_ms", DEFAULT_BIN_MS, int)
    out_dir = Path(_get(args, config, "out", "prepared"))
    out_dir.mkdir(parents=True, exist_ok=True)

    spec = PairDatasetSpec(
        sequence_length_L=L,
        negative_ratio=_get(args, config, "neg_ratio", 1.0, float),
        balance_strategy=_get(args, config, "balance", "weighted_loss"),
        train_fraction=_get(args, config, "train_frac", 0.8, float),
        rng_seed=_get(args, config, "seed", 0, int),
    )
    train_raw, test_raw = build_pair_dataset(dataset, spec)
    write_pair_dataset(train_raw, test_raw, out_dir, sequence_length=L)

    bins = assign_time_bins(dataset, t_ms, L)
    bins, drop_diags = fill_sequence_blocks(dataset, bins, L)
    write_scene_dir(bins, out_dir / "scenes")
    for diag in drop_diags:
        print(f"warning: {diag}", file=sys.stderr)

    excluded = sum(1 for t in dataset.trajectories.values() if len(t) < L)
    total = len(train_raw) + len(test_raw)
    (out_dir / "summary.csv").write_text(
        "sequence_length,total_samples,training_samples,excluded_agents\n"
        f"{L},{total},{len(train_raw)},{excluded}\n",
        encoding="utf-8")

    member_counts = [(b.bin_index, len(b.member_ids)) for b in bins]
    lines = ["bin_index,member_count"] + [f"{i},{n}" for i, n in member_counts]
    (out_dir / "bin_members.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    plots.bar_plot(
        [i for i, _ in member_counts], [n for _, n in member_counts],
        out_dir / "bin_members.svg",
        title="Members per time bin", xlabel="bin index", ylabel="members")

    print(f"sequence_length={L} total_samples={total} "
          f"training_samples={len(train_raw)} excluded_agents={excluded} "
          f"bins={len(bins)}")
    if total == 0:
        print("warning: empty pair dataset (no usable positives at this "
              "sequence length)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _resolve_pairs_path(path: Path) -> Path:
    return path / "pairs.txt" if path.is_dir() else path


def cmd_train(args, config) -> int:
    pairs_path = _resolve_pairs_path(Path(_get(args, config, "pairs", "prepared")))
    train_raw, test_raw, L = read_pair_dataset(pairs_path)
    if not train_raw:
        print("error: pair dataset has no training samples", file=sys.stderr)
        return EXIT_DATA

    dtw_mode = _get(args, config, "dtw_mode", "full_broadcast")
    train_scaled, test_scaled, scaler = _featurize_split(train_raw, test_raw, dtw_mode)

    weights_text = _get(args, config, "class_weights", "auto")
    weights = None
    if weights_text != "auto":
        w0, w1 = (float(w) for w in weights_text.split(","))
        weights = (w0, w1)

    seed = _get(args, config, "seed", 0, int)
    trained, history, record = _train_once(
        arch=_get(args, config, "arch", "transformer"),
        hidden=_get(args, config, "hidden", 64, int),
        batch=_get(args, config, "batch", 32, int),
        seed=seed,
        train_scaled=train_scaled,
        test_scaled=test_scaled,
        scaler=scaler,
        lr=_get(args, config, "lr", 0.001, float),
        epochs=_get(args, config, "epochs", 1000, int),
        patience=_get(args, config, "patience", 50, int),
        optimizer=_get(args, config, "optimizer", "adam"),
        weights=weights,
        num_layers=_get(args, config, "layers", 1, int),
        heads=_get(args, config, "heads", 4, int),
        ff_multiplier=_get(args, config, "ff_mult", 4, int),
        dropout=_get(args, config, "dropout", 0.0, float),
        dtw_mode=dtw_mode,
    )
    out_path = Path(_get(args, config, "out", "model.ckpt"))
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(trained, out_path)
    history.to_csv(out_path.with_suffix(out_path.suffix + ".history.csv"))
    print(record.as_line())
    return EXIT_OK


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def _run_grid_cell(payload: dict) -> tuple:
    """Executed in a worker process; one grid cell = one training run."""
    data = payload["data"]
    _, _, record = _train_once(
        arch=payload["arch"], hidden=payload["hidden"], batch=payload["batch"],
        seed=payload["seed"],
        train_scaled=data["train"], test_scaled=data["test"],
        scaler=data["scaler"],
        lr=payload["lr"], epochs=payload["epochs"], patience=payload["patience"],
    )
    return payload["index"], record


def _default_jobs() -> int:
    try:
        import psutil
        cores = psutil.cpu_count(logical=False)
    except ImportError:
        cores = None
    return cores or os.cpu_count() or 1


def grid_means(records: list[RunRecord]) -> dict[tuple[str, int], tuple[float, float, int]]:
    cells: dict[tuple[str, int], list[RunRecord]] = {}
    for r in records:
        cells.setdefault((r.arch, r.L), []).append(r)
    return {
        key: (
            float(np.mean([r.accuracy for r in group])),
            float(np.mean([r.wall_time_s for r in group])),
            len(group),
        )
        for key, group in sorted(cells.items())
    }


def read_grid_csv(path: str | Path) -> list[RunRecord]:
    records = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        arch, L, batch, hidden, seed, acc, wall, epochs = line.split(",")
        records.append(RunRecord(arch, int(L), int(batch), int(hidden), int(seed),
                                 float(acc), float(wall), int(epochs)))
    return records


def grid_plots_from_csv(runs_csv: str | Path, out_dir: str | Path) -> None:
    """Regenerate the two grid plots purely from the runs CSV."""
    records = read_grid_csv(runs_csv)
    means = grid_means(records)
    out_dir = Path(out_dir)
    acc_series: dict[str, tuple[list, list]] = {}
    time_series: dict[str, tuple[list, list]] = {}
    for (arch, L), (acc, wall, _) in means.items():
        acc_series.setdefault(arch, ([], []))
        time_series.setdefault(arch, ([], []))
        acc_series[arch][0].append(L)
        acc_series[arch][1].append(acc)
        time_series[arch][0].append(L)
        time_series[arch][1].append(wall)
    plots.line_plot(acc_series, out_dir / "accuracy_vs_length.svg",
                    title="Pair classification accuracy vs sequence length",
                    xlabel="sequence length", ylabel="mean test accuracy")
    plots.line_plot(time_series, out_dir / "runtime_vs_length.svg",
                    title="Training time vs sequence length",
                    xlabel="sequence length", ylabel="mean training time [s]")


def cmd_grid(args, config) -> int:
    dataset = _load_input_dataset(args, config)
    grid = ExperimentGrid(
        sequence_lengths=_parse_int_list(_get(args, config, "seq_lens",
                                              ",".join(map(str, GRID_SEQ_LENS)))),
        batch_sizes=_parse_int_list(_get(args, config, "batches",
                                         ",".join(map(str, GRID_BATCHES)))),
        hidden_sizes=_parse_int_list(_get(args, config, "hiddens",
                                          ",".join(map(str, GRID_HIDDENS)))),
        archs=tuple(_get(args, config, "archs", ",".join(GRID_ARCHS)).split(",")),
        repeats=_get(args, config, "repeats", 1, int),
        seed_base=_get(args, config, "seed_base", 0, int),
    )
    epochs = _get(args, config, "epochs", 1000, int)
    patience = _get(args, config, "patience", 50, int)
    lr = _get(args, config, "lr", 0.001, float)
    jobs = _get(args, config, "jobs", _default_jobs(), int)
    out_dir = Path(_get(args, config, "out", "grid_out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    # One pair dataset (and one fitted scaler) per sequence length, shared
    # by every cell at that length.
    per_length: dict[int, dict] = {}
    for L in grid.sequence_lengths:
        spec = PairDatasetSpec(sequence_length_L=L, rng_seed=grid.seed_base)
        train_raw, test_raw = build_pair_dataset(dataset, spec)
        if not train_raw:
            print(f"error: no training pairs at sequence length {L}", file=sys.stderr)
            return EXIT_DATA
        train_scaled, test_scaled, scaler = _featurize_split(
            train_raw, test_raw, "full_broadcast")
        per_length[L] = {"train": train_scaled, "test": test_scaled, "scaler": scaler}

    payloads = [
        {
            "index": index, "arch": arch, "hidden": hidden, "batch": batch,
            "seed": seed, "lr": lr, "epochs": epochs, "patience": patience,
            "data": per_length[L],
        }
        for index, arch, L, batch, hidden, seed, _ in grid.cells()
    ]
    t0 = time.perf_counter()
    results: list[tuple[int, RunRecord]] = []
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(payloads))) as pool:
            results = list(pool.map(_run_grid_cell, payloads))
    else:
        results = [_run_grid_cell(p) for p in payloads]
    results.sort(key=lambda item: item[0])
    records = [record for _, record in results]

    runs_csv = out_dir / "grid_runs.csv"
    lines = ["arch,L,batch,hidden,seed,accuracy,wall_time_s,epochs_run"]
    lines += [r.as_csv_row() for r in records]
    runs_csv.write_text("\n".join(lines) + "\n", encoding="utf-8")

    means = grid_means(records)
    mean_lines = ["arch,L,mean_accuracy,mean_wall_time_s,n_runs"]
    mean_lines += [
        f"{arch},{L},{acc:.6f},{wall:.4f},{n}"
        for (arch, L), (acc, wall, n) in means.items()
    ]
    (out_dir / "grid_means.csv").write_text("\n".join(mean_lines) + "\n", encoding="utf-8")
    grid_plots_from_csv(runs_csv, out_dir)
    print(f"{len(records)} runs in {time.perf_counter() - t0:.1f}s -> {runs_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------

def _format_flocks(flockset) -> str:
    return ";".join(f"{len(f)}:{' '.join(map(str, f))}" for f in flockset.flocks)


def cmd_detect(args, config) -> int:
    model = load_checkpoint(_get(args, config, "checkpoint", "model.ckpt"))
    scene_dir = Path(_get(args, config, "scenes", "prepared/scenes"))
    threshold = _get(args, config, "threshold", 0.9, float)
    out_dir = Path(_get(args, config, "out", "detect_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    make_plots = bool(getattr(args, "plot", False))

    if not scene_dir.is_dir():
        raise FileNotFoundError(f"scene directory {scene_dir} does not exist")
    bins = read_scene_dir(scene_dir)
    report_lines = ["bin_index,flocks,singletons"]
    flocksets = []
    for scene in bins:
        predictions = evaluate_all_pairs(model, scene, threshold)
        flockset = aggregate_flocks(predictions, scene.member_ids)
        flocksets.append(flockset)
        report_lines.append(
            f"{scene.bin_index},\"{_format_flocks(flockset)}\","
            f"\"{' '.join(map(str, flockset.singletons))}\""
        )
        if make_plots:
            plots.scene_plot(scene, flockset,
                             out_dir / f"scene_{scene.bin_index:05d}.svg")
    (out_dir / "flock_report.csv").write_text(
        "\n".join(report_lines) + "\n", encoding="utf-8")
    histogram = histogram_report(size_histogram(flocksets))
    (out_dir / "histogram.json").write_text(
        json.dumps(histogram) + "\n", encoding="utf-8")
    print(json.dumps(histogram))
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def cmd_validate(args, config) -> int:
    model = load_checkpoint(_get(args, config, "checkpoint", "model.ckpt"))
    dataset = _load_input_dataset(args, config)
    threshold = _get(args, config, "threshold", 0.9, float)
    t_ms = _get(args, config, "bin_ms", DEFAULT_BIN_MS, int)
    out_dir = Path(_get(args, config, "out", "validate_out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    trained_L = model.meta.trained_sequence_length
    requested_L = _get(args, config, "seq_len", None, int)
    if requested_L is not None and trained_L is not None and requested_L != trained_L:
        raise ConfigMismatch(
            f"checkpoint sequence length {trained_L} != requested {requested_L}")
    L = requested_L or trained_L
    if L is None:
        raise ConfigMismatch(
            "checkpoint has no trained sequence length; pass --seq-len")

    bins = assign_time_bins(dataset, t_ms, L)
    bins, _ = fill_sequence_blocks(dataset, bins, L)
    per_scene = []
    flocksets = []
    metric_lines = [
        "bin_index,truth_groups,exact_matches,exact_match_rate,"
        "precision,recall,f1"]
    for scene in bins:
        predictions = evaluate_all_pairs(model, scene, threshold)
        flockset = aggregate_flocks(predictions, scene.member_ids)
        flocksets.append(flockset)
        metrics = validate_against_annotations(flockset, dataset.groups)
        per_scene.append(metrics)
        metric_lines.append(
            f"{scene.bin_index},{metrics.n_truth_groups},{metrics.n_exact_matches},"
            f"{metrics.exact_match_rate:.6f},{metrics.precision:.6f},"
            f"{metrics.recall:.6f},{metrics.f1:.6f}")
    overall = combine_metrics(per_scene)
    metric_lines.append(
        f"overall,{overall.n_truth_groups},{overall.n_exact_matches},"
        f"{overall.exact_match_rate:.6f},{overall.precision:.6f},"
        f"{overall.recall:.6f},{overall.f1:.6f}")
    (out_dir / "metrics.csv").write_text("\n".join(metric_lines) + "\n", encoding="utf-8")

    histogram = histogram_report(size_histogram(flocksets))
    (out_dir / "histogram.json").write_text(json.dumps(histogram) + "\n", encoding="utf-8")

    print(f"scenes={len(bins)} truth_groups={overall.n_truth_groups} "
          f"exact_match={overall.exact_match_rate:.4f} "
          f"precision={overall.precision:.4f} recall={overall.recall:.4f} "
          f"f1={overall.f1:.4f}")
    for note in overall.notes:
        print(f"note: {note}")
    print(json.dumps(histogram))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flockdetect",
        description="Pedestrian flock detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value file supplying defaults")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--out", help="output path or directory")

    def add_dataset_inputs(p):
        p.add_argument("--traj", help="trajectory CSV path")
        p.add_argument("--groups", help="group annotation file path")
        p.add_argument("--synth-config", dest="synth_config",
                       help="synthetic dataset config file (key=value)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--synth-config", dest="synth_config")
    p.add_argument("--n-flocks", dest="n_flocks", type=int)
    p.add_argument("--sizes", help="flock size distribution, e.g. 2:1.0,3:0.5")
    p.add_argument("--n-singletons", dest="n_singletons", type=int)
    p.add_argument("--duration-ms", dest="duration_ms", type=int)
    p.add_argument("--period-ms", dest="period_ms", type=int)
    p.add_argument("--cohesion-mm", dest="cohesion_mm", type=float)
    p.add_argument("--noise-mm", dest="noise_mm", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="build pair dataset + scene bins")
    add_common(p)
    add_dataset_inputs(p)
    p.add_argument("-L", "--seq-len", dest="seq_len", type=int)
    p.add_argument("-T", "--bin-ms", dest="bin_ms", type=int)
    p.add_argument("--neg-ratio", dest="neg_ratio", type=float)
    p.add_argument("--balance", choices=PairDatasetSpec.BALANCE_STRATEGIES)
    p.add_argument("--train-frac", dest="train_frac", type=float)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one classifier")
    add_common(p)
    p.add_argument("--pairs", help="pair dataset directory or pairs.txt")
    p.add_argument("--arch", choices=GRID_ARCHS)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--ff-mult", dest="ff_mult", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--dtw-mode", dest="dtw_mode",
                   choices=("full_broadcast", "prefix"))
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--optimizer", choices=("adam", "sgd"))
    p.add_argument("--class-weights", dest="class_weights",
                   help="'auto' or 'w0,w1'")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    add_common(p)
    add_dataset_inputs(p)
    p.add_argument("--seq-lens", dest="seq_lens")
    p.add_argument("--batches")
    p.add_argument("--hiddens")
    p.add_argument("--archs")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed-base", dest="seed_base", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("detect", help="detect flocks over exported scenes")
    add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--scenes")
    p.add_argument("--threshold", type=float)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("validate", help="detect and score against annotations")
    add_common(p)
    add_dataset_inputs(p)
    p.add_argument("--checkpoint")
    p.add_argument("--threshold", type=float)
    p.add_argument("-T", "--bin-ms", dest="bin_ms", type=int)
    p.add_argument("-L", "--seq-len", dest="seq_len", type=int)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = _read_config_file(getattr(args, "config", None))
    try:
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, TrainingDiverged) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FlockDetectError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
