"""Command-line front end.

    promptgate simulate  --config exp.cfg --out runs/
    promptgate auc-probe --config exp.cfg --out runs/

`simulate` executes every run in the manifest (policy x data-fraction x
seed cross product) and writes, per run, a metrics table, a binary run-dump
and a gate-decision log into a subdirectory keyed by the run's config hash,
plus one combined metrics.csv at the output root. `auc-probe` trains under
the adaptive policy and emits per-boundary and averaged seen-vs-unseen AUC
for the three scoring rules. Identical configs and seeds reproduce every
output file byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    ExperimentManifest,
    RunSpec,
    canonical_text,
    config_hash,
    parse_config,
    resolve_run_config,
)
from .data import SyntheticStreamConfig, TaskStream, generate_stream, load_embeddings
from .dump import write_run_dump
from .loop import RunResult, run_sequence
from .metrics import caa, faa, ffm, usage_gap

__all__ = ["main", "cmd_simulate", "cmd_auc_probe"]


def _build_stream(settings: dict, seed: int) -> TaskStream:
    if settings["stream"] == "synthetic":
        return generate_stream(SyntheticStreamConfig(
            tasks=settings["tasks"], dim=settings["dim"],
            classes_per_task=settings["classes_per_task"],
            overlap_fraction=settings["overlap_fraction"],
            samples_per_class_train=settings["samples_per_class_train"],
            samples_per_class_test=settings["samples_per_class_test"],
            mean_separation=settings["mean_separation"],
            noise_scale=settings["noise_scale"],
            center_norm=settings["center_norm"], seed=seed))
    return load_embeddings(settings["stream"])


def _header_lines(run_hash: str) -> list[str]:
    return [f"# engine=promptgate-{__version__} config_hash={run_hash}"]


def _metric_rows(spec: RunSpec, result: RunResult) -> list[tuple[str, float]]:
    a = result.accuracy
    rows = [("faa", faa(a)), ("caa", caa(a))]
    if a.shape[0] >= 2:
        rows.append(("ffm", ffm(a)))
    rows.append(("usage_gap", usage_gap(result.train_usage, result.val_usage)))
    for name, value in sorted(result.auc_average.items()):
        rows.append((f"auc_{name}", value))
    return rows


def _write_metrics_csv(path: Path, run_hash: str, rows: list[str]) -> None:
    lines = _header_lines(run_hash)
    lines.append("run_id,policy,seed,data_fraction,metric,value")
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n")


def _write_gate_log(path: Path, run_hash: str, result: RunResult) -> None:
    lines = _header_lines(run_hash)
    lines.extend(
        f"task={r.task} index={r.index} score={r.score!r} tau={r.tau!r} bit={r.bit}"
        for r in result.gate_records)
    path.write_text("\n".join(lines) + "\n")


def _execute_run(manifest: ExperimentManifest, spec: RunSpec, out_dir: Path,
                 ) -> tuple[str, RunResult, list[str]]:
    run_cfg = resolve_run_config(manifest, spec)
    stream = _build_stream(manifest.settings, spec.seed)
    stream = stream.subsample(spec.data_fraction, spec.seed)
    result = run_sequence(run_cfg, stream)

    run_hash = config_hash(manifest, spec)
    run_dir = out_dir / run_hash
    run_dir.mkdir(parents=True, exist_ok=True)

    rows = [f"{run_hash},{spec.policy},{spec.seed},{spec.data_fraction!r},"
            f"{name},{value!r}" for name, value in _metric_rows(spec, result)]
    _write_metrics_csv(run_dir / "metrics.csv", run_hash, rows)
    _write_gate_log(run_dir / "gate.log", run_hash, result)
    state = result.state
    write_run_dump(run_dir / "run.dump", canonical_text(manifest, spec),
                   state.summary, state.pool, state.head,
                   run_cfg.resolved_train(), result)
    return run_hash, result, rows


def _load_manifest(args) -> ExperimentManifest:
    text = ""
    if args.config is not None:
        text = Path(args.config).read_text()
    manifest = parse_config(text, strict=args.strict)
    manifest.override(policies=args.policy, seeds=args.seed,
                      data_fractions=args.data_fraction)
    for warning in manifest.warnings:
        print(f"warning: {args.config or '<empty>'}: {warning}", file=sys.stderr)
    return manifest


def cmd_simulate(args) -> int:
    manifest = _load_manifest(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_rows: list[str] = []
    for spec in manifest.runs():
        run_hash, result, rows = _execute_run(manifest, spec, out_dir)
        all_rows.extend(rows)
        total = sum(result.wall_clock)
        print(f"{run_hash}  policy={spec.policy} seed={spec.seed} "
              f"fraction={spec.data_fraction} faa={faa(result.accuracy):.4f} "
              f"({total:.2f}s)")
    _write_metrics_csv(out_dir / "metrics.csv", config_hash(manifest), all_rows)
    return 0


def cmd_auc_probe(args) -> int:
    manifest = _load_manifest(args)
    if manifest.settings["stream"] == "synthetic" and manifest.settings["tasks"] < 2:
        raise ConfigError(0, "auc-probe needs at least 2 tasks")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = _header_lines(config_hash(manifest))
    lines.append("seed,boundary,rmd,learnable_key,task_centroids")
    for seed in manifest.seeds:
        spec = RunSpec(policy="adaptive_rmd", seed=seed,
                       data_fraction=manifest.data_fractions[0])
        run_cfg = resolve_run_config(manifest, spec)
        stream = _build_stream(manifest.settings, seed)
        stream = stream.subsample(spec.data_fraction, seed)
        if len(stream.tasks) < 2:
            raise ConfigError(0, "auc-probe needs a stream with at least 2 tasks")
        result = run_sequence(run_cfg, stream)
        for probe in result.auc_probes:
            lines.append(f"{seed},{probe['task']},{probe['rmd']!r},"
                         f"{probe['learnable_key']!r},{probe['task_centroids']!r}")
        avg = result.auc_average
        lines.append(f"{seed},avg,{avg['rmd']!r},{avg['learnable_key']!r},"
                     f"{avg['task_centroids']!r}")
        print(f"seed={seed} avg_rmd={avg['rmd']:.4f} "
              f"avg_learnable_key={avg['learnable_key']:.4f} "
              f"avg_task_centroids={avg['task_centroids']:.4f}")
    (out_dir / "auc.csv").write_text("\n".join(lines) + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptgate",
        description="Similarity-aware prompt-pool routing simulations")
    parser.add_argument("--version", action="version",
                        version=f"promptgate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("auc-probe", cmd_auc_probe)):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="experiment config file")
        p.add_argument("--seed", type=int, action="append", default=None,
                       help="override config seeds (repeatable)")
        p.add_argument("--data-fraction", default=None,
                       help="comma list of train-split fractions")
        p.add_argument("--policy", default=None,
                       help="comma list of routing policies (or 'all')")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--strict", action="store_true",
                       help="treat unknown config keys as errors")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        location = f"{args.config}: " if args.config else ""
        print(f"error: {location}{exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
