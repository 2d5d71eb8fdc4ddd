"""Command-line pipeline: synth, patchify, train, detect, track, match,
metrics, tune, report.

Every subcommand reads its inputs and writes its outputs through the
shared config tree, so a pipeline is a sequence of invocations against
one file. All randomness is seeded from the config; running any
subcommand twice with identical inputs produces byte-identical outputs.

Exit codes: 0 success, 2 usage, 3 config validation, 4 input/output,
5 undefined metric. Failures print one machine-readable line to stderr:
    stormlink-error code=<n> kind=<kind> message="<text>"
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .config import (
    ConfigError,
    apply_overrides,
    arch_config,
    byte_params,
    detector_params,
    load_config,
    scenario_config,
    serialize_config,
    tuner_weights,
    validate_config,
)
from .besttrack import main_only, read_best_tracks
from .detect import detect_neural, detect_physics_baseline, read_detections, write_detections
from .grids import read_grid_dir, read_land_mask, write_grid_dir
from .metrics import (
    MetricUndefined,
    RefTrack,
    compute_metrics,
    match_tracks,
    ref_tracks_from_best,
    ref_tracks_from_tracker,
)
from .nn import AdamW, AdamWConfig, build_network, fit, load_model, save_model
from .patches import (
    augment_positive,
    label_patches,
    load_dataset,
    patchify,
    save_dataset,
    select_training_patches,
    snap_centers,
    split_dataset,
)
from .reports import write_metrics_report, write_text_report
from .synth import generate
from .tracker import apply_physical_filters, read_tracks, run_tracker, write_tracks
from .tune import enumerate_candidates, run_tuner

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_METRIC = 5

SUBCOMMANDS = (
    "synth",
    "patchify",
    "train",
    "detect",
    "track",
    "match",
    "metrics",
    "tune",
    "report",
)


def _print_error(kind: str, code: int, message: str) -> None:
    flat = " ".join(str(message).split()).replace('"', "'")
    print(f'stormlink-error code={code} kind={kind} message="{flat}"', file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        _print_error("usage", EXIT_USAGE, message)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="stormlink", description=__doc__, add_help=True)
    parser.add_argument("--version", action="version", version=f"stormlink {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default=None, help="YAML config file; defaults used if omitted")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY.PATH=VALUE",
            help="override one config value (repeatable; wins over the file)",
        )
        p.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the effective config and exit",
        )
    return parser


def _path(config: dict[str, Any], key: str) -> Path:
    value = config["paths"][key]
    if value is None:
        raise ConfigError(f"paths.{key} is required by this subcommand but is null")
    return Path(value)


def _load_observed(config: dict[str, Any]) -> list[RefTrack]:
    best = config["paths"]["best_tracks"]
    if best is not None:
        return ref_tracks_from_best(main_only(read_best_tracks(best)))
    return ref_tracks_from_tracker(read_tracks(_path(config, "truth_tracks")))


def _years(config: dict[str, Any], observed: list[RefTrack]) -> list[int]:
    years = config["metrics"]["years"]
    if years is not None:
        return list(years)
    if not observed:
        raise ConfigError("metrics.years is null and there are no observed tracks to infer from")
    stamps = [t.genesis_time.year for t in observed]
    return list(range(min(stamps), max(stamps) + 1))


def _cmd_synth(config: dict[str, Any]) -> None:
    series, truth = generate(scenario_config(config))
    write_grid_dir(series, _path(config, "grids"))
    write_tracks(truth, _path(config, "truth_tracks"))


def _group_points_by_time(tracks) -> dict[datetime, list]:
    out: dict[datetime, list] = {}
    for t in tracks:
        for p in t.points:
            out.setdefault(p.time, []).append(p)
    return out


def _cmd_patchify(config: dict[str, Any]) -> None:
    series = read_grid_dir(_path(config, "grids"))
    best = config["paths"]["best_tracks"]
    if best is not None:
        points = main_only(read_best_tracks(best))
        by_time: dict[datetime, list] = {}
        for p in points:
            by_time.setdefault(p.time, []).append(p)
    else:
        by_time = _group_points_by_time(read_tracks(_path(config, "truth_tracks")))
    maps = []
    for i, stamp in enumerate(series.timestamps):
        tiles = patchify(series.values[i], stamp)
        cells, _ = snap_centers(by_time.get(stamp, []), series.spec)
        maps.append(label_patches(tiles, cells))
    samples = select_training_patches(maps, seed=config["patchify"]["seed"])
    save_dataset(samples, _path(config, "dataset"))


def _train_one(kind, arch, x, y, section, stats, seed):
    net = build_network(arch, kind, seed=seed, norm_stats=stats)
    opt = AdamW(
        net.parameters(),
        AdamWConfig(lr=float(section["lr"]), weight_decay=float(section["weight_decay"])),
    )
    history = fit(
        net,
        net.normalize(x),
        y,
        opt,
        steps=int(section["steps"]),
        batch_size=int(section["batch_size"]),
        seed=seed,
    )
    return net, history


def _cmd_train(config: dict[str, Any]) -> None:
    section = config["train"]
    samples = load_dataset(_path(config, "dataset"))
    splits = split_dataset(samples)
    if section["split"] not in splits:
        raise ConfigError(
            f"train.split must be one of {sorted(splits)}, got {section['split']!r}"
        )
    chosen = splits[section["split"]]
    if not chosen:
        raise ConfigError(f"training split {section['split']!r} is empty")
    augmented = list(chosen)
    for s in chosen:
        if s.label == 1:
            augmented.extend(augment_positive(s))

    x = np.stack([s.pixels for s in augmented]).astype(np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    stats = (mean, std)
    arch = arch_config(config)

    y_cls = np.array([float(s.label) for s in augmented])
    clf, clf_history = _train_one(
        "classify", arch, x, y_cls, section, stats, int(section["seed_classify"])
    )

    pos = [s for s in augmented if s.label == 1]
    if not pos:
        raise ConfigError("training split has no positive patches for the localization model")
    x_pos = np.stack([s.pixels for s in pos]).astype(np.float64)
    y_loc = np.array([[float(s.center[0]), float(s.center[1])] for s in pos])
    loc, loc_history = _train_one(
        "locate", arch, x_pos, y_loc, section, stats, int(section["seed_locate"])
    )

    models = _path(config, "models")
    models.mkdir(parents=True, exist_ok=True)
    save_model(clf, models / "classify.model")
    save_model(loc, models / "locate.model")
    for name, history in (("classify", clf_history), ("locate", loc_history)):
        lines = ["step,loss"] + [f"{i},{loss:.9f}" for i, loss in enumerate(history)]
        (models / f"{name}_history.csv").write_text("\n".join(lines) + "\n")


def _cmd_detect(config: dict[str, Any]) -> None:
    series = read_grid_dir(_path(config, "grids"))
    params = detector_params(config)
    if config["detector"]["kind"] == "neural":
        models = _path(config, "models")
        clf = load_model(models / "classify.model")
        loc = load_model(models / "locate.model")
        dets = detect_neural(series, clf, loc, params)
    else:
        dets = detect_physics_baseline(series, params)
    out = _path(config, "detections")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_detections(dets, out)


def _cmd_track(config: dict[str, Any]) -> None:
    params = byte_params(config)
    dets = read_detections(_path(config, "detections"))
    tracks = apply_physical_filters(run_tracker(dets, params), params)
    write_tracks(tracks, _path(config, "tracks"))


def _cmd_match(config: dict[str, Any]) -> None:
    observed = _load_observed(config)
    detected = ref_tracks_from_tracker(read_tracks(_path(config, "tracks")))
    section = config["metrics"]
    report = match_tracks(
        observed,
        detected,
        radius_km=float(section["radius_km"]),
        min_matched_steps=int(section["min_matched_steps"]),
    )
    out_dir = _path(config, "reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "hits": report.hits,
        "misses": report.misses,
        "false_alarms": report.false_alarms,
        "radius_km": report.radius_km,
        "min_matched_steps": report.min_matched_steps,
        "pairs": [
            {
                "obs_id": p.obs_id,
                "det_id": p.det_id,
                "matched_steps": p.matched_steps,
                "mean_distance_km": round(p.mean_distance_km, 6),
            }
            for p in report.pairs
        ],
    }
    (out_dir / "match.yaml").write_text(yaml.safe_dump(payload, sort_keys=True))


def _cmd_metrics(config: dict[str, Any]) -> None:
    observed = _load_observed(config)
    detected = read_tracks(_path(config, "tracks"))
    section = config["metrics"]
    report = compute_metrics(
        observed,
        ref_tracks_from_tracker(detected),
        years=section["years"],
        month=int(section["month"]),
        radius_km=float(section["radius_km"]),
        min_matched_steps=int(section["min_matched_steps"]),
    )
    write_metrics_report(report, observed, detected, _path(config, "reports"))


def _cmd_tune(config: dict[str, Any]) -> None:
    observed = _load_observed(config)
    dets = read_detections(_path(config, "detections"))
    section = config["tuner"]
    mask = None
    if config["paths"]["land_mask"] is not None:
        mask, _ = read_land_mask(config["paths"]["land_mask"])
    candidates = enumerate_candidates(
        bbox_sizes=tuple(section["bbox_sizes"]),
        buffers=tuple(section["buffers"]),
        constraint_sets=tuple(section["constraint_sets"]),
        match_threshold=float(section["match_threshold"]),
        track_threshold=float(section["track_threshold"]),
    )
    result = run_tuner(
        dets,
        observed,
        years=_years(config, observed),
        month=int(config["metrics"]["month"]),
        land_mask=mask,
        weights=tuner_weights(config),
        candidates=candidates,
        jobs=int(config["jobs"]),
    )
    frontier = set(result.frontier)
    rows = []
    for i, c in enumerate(result.candidates):
        rows.append(
            {
                "bbox_size": c.bbox_size,
                "track_buffer": c.track_buffer,
                "match_threshold": c.match_threshold,
                "track_threshold": c.track_threshold,
                "constraint_set": c.constraint_set,
                "pod": round(c.metrics.pod, 6),
                "far": round(c.metrics.far, 6),
                "r_enp": round(c.metrics.r_enp, 6),
                "r_wnp": round(c.metrics.r_wnp, 6),
                "degenerate": list(c.metrics.degenerate),
                "on_frontier": i in frontier,
                "selected": c == result.selected,
            }
        )
    payload = {
        "weights": {
            "w_pod": result.weights.w_pod,
            "w_far": result.weights.w_far,
            "w_enp": result.weights.w_enp,
            "w_wnp": result.weights.w_wnp,
        },
        "skipped_sets": list(result.skipped_sets),
        "selected": {
            "bbox_size": result.selected.bbox_size,
            "track_buffer": result.selected.track_buffer,
            "match_threshold": result.selected.match_threshold,
            "track_threshold": result.selected.track_threshold,
            "constraint_set": result.selected.constraint_set,
        },
        "candidates": rows,
    }
    out_dir = _path(config, "reports")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tuner.yaml").write_text(yaml.safe_dump(payload, sort_keys=True))


def _cmd_report(config: dict[str, Any]) -> None:
    write_text_report(_path(config, "reports"))


_HANDLERS = {
    "synth": _cmd_synth,
    "patchify": _cmd_patchify,
    "train": _cmd_train,
    "detect": _cmd_detect,
    "track": _cmd_track,
    "match": _cmd_match,
    "metrics": _cmd_metrics,
    "tune": _cmd_tune,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = load_config(args.config)
        config = apply_overrides(config, args.overrides)
        if args.jobs is not None:
            config["jobs"] = args.jobs
        validate_config(config)
    except ConfigError as e:
        _print_error("config", EXIT_CONFIG, str(e))
        return EXIT_CONFIG
    except OSError as e:
        _print_error("io", EXIT_IO, str(e))
        return EXIT_IO

    if args.print_config:
        print(serialize_config(config), end="")
        return EXIT_OK

    try:
        _HANDLERS[args.subcommand](config)
    except ConfigError as e:
        _print_error("config", EXIT_CONFIG, str(e))
        return EXIT_CONFIG
    except MetricUndefined as e:
        _print_error("metric", EXIT_METRIC, str(e))
        return EXIT_METRIC
    except (OSError, ValueError) as e:
        _print_error("io", EXIT_IO, str(e))
        return EXIT_IO
    except RuntimeError as e:
        _print_error("internal", 1, str(e))
        return 1
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
