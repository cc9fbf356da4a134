"""Command-line interface: stage commands plus an all-in-one pipeline.

Exit codes: 0 success, 2 configuration error, 3 data/parse error,
4 numerical convergence failure.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, evaluate, features
from .config import DATA_DIR_ENV, PipelineConfig, parse_synthetic_option
from .dsp import design_filter
from .edf import SubsetSpec, resolve_subset
from .errors import ConfigError, ConvergenceError, DataError, MotordecodeError
from .pipeline import Pipeline

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


def _fail(exc: MotordecodeError) -> int:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(exc, DataError):
        return EXIT_DATA
    return 1


def parse_subjects(text: str) -> list[str]:
    """Accept 'S001..S006' ranges and comma lists."""
    out: list[str] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            if not (lo.startswith("S") and hi.startswith("S")):
                raise ConfigError(f"bad subject range {part!r}")
            for i in range(int(lo[1:]), int(hi[1:]) + 1):
                out.append(f"S{i:03d}")
        elif part:
            out.append(part)
    if not out:
        raise ConfigError("no subjects given")
    return out


def _build_config(ctx) -> PipelineConfig:
    params = ctx.obj
    config = (
        PipelineConfig.load(params["config_path"])
        if params["config_path"]
        else PipelineConfig()
    )
    overrides = {
        key: params[key]
        for key in (
            "data_dir", "out_dir", "cache_dir", "seed",
        )
        if params.get(key) is not None
    }
    if params.get("subjects"):
        overrides["subjects"] = parse_subjects(params["subjects"])
    if params.get("runs"):
        overrides["runs"] = [int(r) for r in params["runs"].split(",")]
    if params.get("synthetic") is not None:
        overrides["synthetic"] = parse_synthetic_option(params["synthetic"])
    return config.with_overrides(**overrides)


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="YAML config file; flags override its keys.")
@click.option("--data-dir", default=None,
              help=f"EDF data directory (or set ${DATA_DIR_ENV}).")
@click.option("--out-dir", default=None, help="Output directory for reports and models.")
@click.option("--cache-dir", default=None, help="Stage cache directory.")
@click.option("--subjects", default=None,
              help="Subject list/range, e.g. S001..S006 or S001,S004.")
@click.option("--runs", default=None, help="Comma-separated run indices, e.g. 3,7,11.")
@click.option("--seed", type=int, default=None,
              help="Master seed for every stochastic stage.")
@click.option("--synthetic", default=None,
              help="Use simulated records instead of files; key=value list, "
                   "e.g. 'depth=0.6,subjects=6,runs=3,events=16,noise=2.0'.")
@click.pass_context
def main(ctx, **params):
    """Offline left/right fist-movement EEG classification toolkit."""
    ctx.obj = params


def _run_stage(ctx, action):
    try:
        config = _build_config(ctx)
        return action(config)
    except MotordecodeError as exc:
        sys.exit(_fail(exc))


@main.command()
@click.pass_context
def fetch(ctx):
    """Download the configured subject/run EDF files."""
    from .fetch import fetch as do_fetch

    def action(config: PipelineConfig):
        subset = SubsetSpec(tuple(config.subjects), tuple(config.runs))
        paths = do_fetch(subset, config.resolve_data_dir())
        click.echo(f"{len(paths)} files present under {config.resolve_data_dir()}")

    _run_stage(ctx, action)


@main.command()
@click.pass_context
def ingest(ctx):
    """Parse records and report channels/events per run."""

    def action(config: PipelineConfig):
        records = Pipeline(config).ingest()
        click.echo(f"{'record':<10} {'channels':>8} {'fs':>6} {'events':>7} "
                   f"{'left':>5} {'right':>6}")
        for rec in records:
            left = sum(1 for e in rec.events if e.side.value == "Left")
            right = len(rec.events) - left
            click.echo(f"{rec.record_id:<10} {len(rec.labels):>8} {rec.fs:>6.1f} "
                       f"{len(rec.events):>7} {left:>5} {right:>6}")

    _run_stage(ctx, action)


@main.command()
@click.option("--aar-scope", type=click.Choice(["montage", "full"]), default=None)
@click.option("--eog-threshold", type=float, default=None)
@click.option("--emg-threshold", type=float, default=None)
@click.pass_context
def clean(ctx, aar_scope, eog_threshold, emg_threshold):
    """Run preprocessing and artifact removal, printing removal reports."""

    def action(config: PipelineConfig):
        config = config.with_overrides(
            aar_scope=aar_scope, eog_threshold=eog_threshold,
            emg_threshold=emg_threshold,
        )
        pipe = Pipeline(config)
        for record in pipe.ingest():
            rec_hash_arrays = {"data": record.data}
            from .storage import hash_arrays
            signal, pre_key = pipe._preprocess_one(record, hash_arrays(rec_hash_arrays))
            _, clean_key = pipe._clean_one(signal, record.record_id, pre_key)
            stage = pipe.manifest["stages"]["clean"][record.record_id]
            removal = stage.get("removal", [])
            flagged = {r["stage"]: r["removed_component_indices"] for r in removal}
            click.echo(f"{record.record_id}: EOG {flagged.get('EOG', [])} "
                       f"EMG {flagged.get('EMG', [])}")
        pipe.write_manifest()

    _run_stage(ctx, action)


@main.command()
@click.option("--analysis", default="erd,ers,mrcp",
              help="Comma list of analyses to extract.")
@click.pass_context
def epoch(ctx, analysis):
    """Extract event-locked, rhythm-isolated epochs."""

    def action(config: PipelineConfig):
        config = config.with_overrides(
            analyses=[a.strip().upper() for a in analysis.split(",") if a.strip()]
        )
        pipe = Pipeline(config)
        from .storage import hash_arrays
        count = 0
        for record in pipe.ingest():
            signal, pre_key = pipe._preprocess_one(
                record, hash_arrays({"data": record.data}))
            cleaned, clean_key = pipe._clean_one(signal, record.record_id, pre_key)
            datasets = pipe._epoch_one(cleaned, record, clean_key)
            for dataset, _ in datasets:
                count += 1
                click.echo(f"{record.record_id} {dataset.analysis.name:<5} "
                           f"{dataset.side.value:<5} epochs={len(dataset.epochs)}")
        click.echo(f"{count} datasets")
        pipe.write_manifest()

    _run_stage(ctx, action)


@main.command()
@click.pass_context
def ica(ctx):
    """Fit per-dataset ICA models and report convergence."""

    def action(config: PipelineConfig):
        pipe = Pipeline(config)
        from .storage import hash_arrays
        for record in pipe.ingest():
            signal, pre_key = pipe._preprocess_one(
                record, hash_arrays({"data": record.data}))
            cleaned, clean_key = pipe._clean_one(signal, record.record_id, pre_key)
            for dataset, epoch_key in pipe._epoch_one(cleaned, record, clean_key):
                pipe._ica_features_one(dataset, epoch_key)
        for name, info in pipe.manifest["stages"].get("ica", {}).items():
            click.echo(f"{name}: iterations={info.get('iterations', '?')}")
        pipe.write_manifest()

    _run_stage(ctx, action)


@main.command("features")
@click.pass_context
def features_cmd(ctx):
    """Build the labeled feature matrix and write the CSV outputs."""

    def action(config: PipelineConfig):
        pipe = Pipeline(config)
        matrix = pipe.build_matrix()
        pipe.write_manifest()
        click.echo(f"feature matrix: {matrix.n_rows} x {len(matrix.column_names)} "
                   f"-> {pipe.out_dir / 'features.csv'}")

    _run_stage(ctx, action)


@main.command("evaluate")
@click.option("--subsets", default=None,
              help="Comma list from all,px,mx,ex,pmx,mex,pex.")
@click.option("--classifiers", default=None, help="Comma list from nn,svm.")
@click.option("--normalization", type=click.Choice(["full", "train-only"]),
              default=None)
@click.option("--stratify/--no-stratify", "stratify", default=None)
@click.pass_context
def evaluate_cmd(ctx, subsets, classifiers, normalization, stratify):
    """Run the repeated-split grid evaluation."""

    def action(config: PipelineConfig):
        overrides = {}
        if subsets:
            overrides["subsets"] = [
                "All" if s.strip().lower() == "all" else s.strip().upper()
                for s in subsets.split(",")
            ]
        if classifiers:
            overrides["classifiers"] = [c.strip().upper() for c in classifiers.split(",")]
        if normalization:
            overrides["normalization"] = normalization
        if stratify is not None:
            overrides["stratify"] = stratify
        config = config.with_overrides(**overrides)
        pipe = Pipeline(config)
        matrix = pipe.build_matrix()
        table = pipe.evaluate_matrix(matrix)
        pipe.save_models(matrix, table)
        pipe.write_manifest()
        click.echo(evaluate.report_text(table), nl=False)

    _run_stage(ctx, action)


@main.command()
@click.option("--figures/--no-figures", default=True,
              help="Also render PNG figures next to the CSV/JSON outputs.")
@click.pass_context
def report(ctx, figures):
    """Produce the report files (text, JSON, CSV, figures)."""

    def action(config: PipelineConfig):
        pipe = Pipeline(config)
        matrix = pipe.build_matrix()
        table = pipe.evaluate_matrix(matrix)
        paths = pipe.write_report(table, figures=figures)
        pipe.write_manifest()
        for path in paths:
            click.echo(str(path))

    _run_stage(ctx, action)


@main.command()
@click.option("--dest", type=click.Path(file_okay=False), required=True,
              help="Directory for the generated EDF files.")
@click.option("--depth", type=float, default=0.6)
@click.option("--noise", type=float, default=2.0)
@click.option("--n-subjects", type=int, default=6)
@click.option("--n-runs", type=int, default=3)
@click.option("--events", type=int, default=16)
@click.pass_context
def synth(ctx, dest, depth, noise, n_subjects, n_runs, events):
    """Write synthetic EDF+ records with planted class structure."""
    from .edf import write_edf
    from .synth import SynthSpec, synth_generate

    def action(config: PipelineConfig):
        spec = SynthSpec(
            n_subjects=n_subjects, n_runs=n_runs, events_per_run=events,
            erd_depth=depth, noise_level=noise, seed=config.seed,
        )
        dest_dir = Path(dest)
        dest_dir.mkdir(parents=True, exist_ok=True)
        for record in synth_generate(spec):
            payload = write_edf(
                list(record.labels), record.data, record.fs, record.annotation_log
            )
            target = dest_dir / record.record_id[:4] / f"{record.record_id}.edf"
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
            click.echo(str(target))

    _run_stage(ctx, action)


@main.command("pipeline")
@click.option("--figures/--no-figures", default=True)
@click.pass_context
def pipeline_cmd(ctx, figures):
    """Run everything: ingest through report."""

    def action(config: PipelineConfig):
        result = Pipeline(config).run(figures=figures)
        click.echo(evaluate.report_text(result.table), nl=False)
        click.echo(f"manifest: {result.manifest_path}")

    _run_stage(ctx, action)


@main.group()
def dsp():
    """Filter diagnostics."""


NAMED_FILTERS = {
    "preprocess-bandpass": ("bandpass", "broadband preprocessing bandpass"),
    "line-notch": ("notch", "mains notch"),
    "mu-beta-bandpass": ("mu-beta", "mu/beta rhythm isolation bandpass"),
    "delta-lowpass": ("delta", "slow-potential isolation lowpass"),
}


@dsp.command()
@click.option("--spec", "spec_name", type=click.Choice(sorted(NAMED_FILTERS)),
              required=True)
@click.option("--grid", default="0..80", help="Frequency range, e.g. 0..80.")
@click.option("--points", type=int, default=1024)
@click.option("--fs", type=float, default=160.0)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV output path (default: stdout).")
@click.option("--plot", type=click.Path(dir_okay=False), default=None,
              help="Also render the response curve to this PNG.")
@click.pass_context
def response(ctx, spec_name, grid, points, fs, out, plot):
    """Emit a frequency/magnitude-dB table for one named filter."""

    def action(config: PipelineConfig):
        kind, title = NAMED_FILTERS[spec_name]
        if kind == "bandpass":
            spec = design_filter(
                "bandpass",
                (config.bandpass_low_hz, min(config.bandpass_high_hz, 0.98 * fs / 2)),
                config.bandpass_order, fs=fs,
            )
        elif kind == "notch":
            spec = design_filter("notch", config.notch_hz, fs=fs,
                                 notch_q=config.notch_q)
        elif kind == "mu-beta":
            spec = design_filter("bandpass", (8.0, 30.0), config.rhythm_order, fs=fs)
        else:
            spec = design_filter("lowpass", 3.0, config.rhythm_order, fs=fs)
        try:
            lo, hi = (float(v) for v in grid.split(".."))
        except ValueError:
            raise ConfigError(f"bad grid {grid!r}; expected LO..HI") from None
        freqs = np.linspace(max(lo, 0.0), min(hi, 0.999 * fs / 2), points)
        mags = spec.magnitude_db(freqs)
        lines = ["frequency_hz,magnitude_db"]
        lines += [f"{f:.6f},{m:.6f}" for f, m in zip(freqs, mags)]
        text = "\n".join(lines) + "\n"
        if out:
            Path(out).write_text(text)
            click.echo(out)
        else:
            click.echo(text, nl=False)
        if plot:
            from . import plots

            plots.frequency_response(freqs, mags, title, Path(plot))
            click.echo(plot)

    _run_stage(ctx, action)


if __name__ == "__main__":
    main()
