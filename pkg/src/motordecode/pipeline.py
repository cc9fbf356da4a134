"""End-to-end orchestration with per-stage content-addressed caching.

Stages: ingest -> preprocess (broadband + notch) -> clean (montage + BSS
artifact removal) -> epoch (windows + rhythm isolation) -> ica -> features
-> evaluate -> report. Each stage's cache key hashes its inputs plus the
configuration slice it depends on, so re-tuning classifiers never recomputes
ICA, while any upstream change invalidates everything downstream.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, artifacts, evaluate, features, ica, learn, synth
from .config import PipelineConfig
from .dsp import MultiChannelSignal, apply_filter, design_filter, select_channels
from .edf import MovementEvent, RawRecord, Side, SubsetSpec, read_record, record_path, resolve_subset
from .epochs import EpochedDataset, Epoch, SkipReport, extract_epochs, get_analysis, group_by_side, isolate_rhythm
from .errors import DataError
from .storage import hash_arrays, hash_file, hash_obj, load_bundle, save_bundle


@dataclass
class StageInfo:
    key: str
    cached: bool
    elapsed_s: float
    output_hash: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class RunResult:
    manifest_path: Path
    matrix: features.FeatureMatrix | None = None
    table: evaluate.ResultTable | None = None
    report_paths: list[Path] = field(default_factory=list)


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self.cache_dir = Path(config.cache_dir)
        self.out_dir = Path(config.out_dir)
        self.manifest: dict = {
            "tool_version": __version__,
            "config": config.to_dict(),
            "config_hash": hash_obj(config.to_dict()),
            "stages": {},
        }

    # -- cache helpers ---------------------------------------------------

    def _cache_path(self, stage: str, key: str) -> Path:
        return self.cache_dir / stage / f"{key}.bundle"

    def _record_stage(self, stage: str, name: str, info: StageInfo):
        self.manifest["stages"].setdefault(stage, {})[name] = {
            "key": info.key,
            "cached": info.cached,
            "elapsed_s": round(info.elapsed_s, 6),
            "output_hash": info.output_hash,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            **info.extra,
        }

    def _cached_arrays(self, stage: str, name: str, key: str, builder):
        """Load stage output from cache or build + store it."""
        path = self._cache_path(stage, key)
        started = time.perf_counter()
        if path.exists():
            arrays, meta = load_bundle(path)
            info = StageInfo(key=key, cached=True,
                             elapsed_s=time.perf_counter() - started,
                             output_hash=hash_arrays(arrays),
                             extra=meta.get("stage_extra", {}))
            self._record_stage(stage, name, info)
            return arrays, meta
        arrays, meta = builder()
        save_bundle(path, arrays, meta)
        info = StageInfo(key=key, cached=False,
                         elapsed_s=time.perf_counter() - started,
                         output_hash=hash_arrays(arrays),
                         extra=meta.get("stage_extra", {}))
        self._record_stage(stage, name, info)
        return arrays, meta

    # -- ingest ----------------------------------------------------------

    def _synthetic_spec(self) -> synth.SynthSpec:
        settings = self.config.synthetic or {}
        return synth.SynthSpec(
            n_subjects=settings.get("subjects", 6),
            n_runs=settings.get("runs", 3),
            events_per_run=settings.get("events", 16),
            erd_depth=settings.get("depth", 0.6),
            noise_level=settings.get("noise", 2.0),
            mu_amplitude=settings.get("mu_amplitude", 1.0),
            seed=self.config.seed,
        )

    def ingest(self) -> list[RawRecord]:
        if self.config.synthetic is not None:
            spec = self._synthetic_spec()
            records = []
            for record in synth.synth_generate(spec):
                key = hash_obj({
                    "stage": "ingest-synth",
                    "spec": spec.__dict__,
                    "record": record.record_id,
                    "version": 1,
                })
                arrays, meta = self._cached_arrays(
                    "ingest", record.record_id, key,
                    lambda rec=record: _record_to_bundle(rec),
                )
                records.append(_record_from_bundle(arrays, meta))
            return records

        data_dir = self.config.resolve_data_dir()
        subset = SubsetSpec(tuple(self.config.subjects), tuple(self.config.runs))
        records = []
        for record_id in resolve_subset(subset):
            path = record_path(data_dir, record_id)
            if not path.exists():
                raise DataError(
                    f"missing data file {path}; run `motordecode fetch` first "
                    f"or use --synthetic"
                )
            key = hash_obj({
                "stage": "ingest",
                "file": hash_file(path),
                "version": 1,
            })
            arrays, meta = self._cached_arrays(
                "ingest", record_id, key,
                lambda p=path: _record_to_bundle(read_record(p)),
            )
            records.append(_record_from_bundle(arrays, meta))
        return records

    # -- preprocess / clean ----------------------------------------------

    def _preprocess_one(self, record: RawRecord, input_hash: str
                        ) -> tuple[MultiChannelSignal, str]:
        cfg = self.config
        key = hash_obj({
            "stage": "preprocess",
            "input": input_hash,
            "band": [cfg.bandpass_low_hz, cfg.bandpass_high_hz, cfg.bandpass_order],
            "notch": [cfg.notch_hz, cfg.notch_q],
            "version": 1,
        })

        def build():
            signal = MultiChannelSignal(tuple(record.labels), record.data, record.fs)
            nyquist = record.fs / 2.0
            if cfg.bandpass_high_hz < nyquist:
                spec = design_filter(
                    "bandpass", (cfg.bandpass_low_hz, cfg.bandpass_high_hz),
                    cfg.bandpass_order, fs=record.fs,
                )
            else:
                # Upper edge at/above Nyquist carries no content to remove;
                # fall back to the equivalent highpass (as a bandpass with
                # the top edge just under Nyquist it would be ill posed).
                spec = design_filter(
                    "bandpass", (cfg.bandpass_low_hz, 0.98 * nyquist),
                    cfg.bandpass_order, fs=record.fs,
                )
            out = apply_filter(spec, signal, mode="zero_phase")
            if cfg.notch_hz < nyquist:
                notch = design_filter("notch", cfg.notch_hz, fs=record.fs,
                                      notch_q=cfg.notch_q)
                out = apply_filter(notch, out, mode="zero_phase")
            return {"data": out.data}, {"labels": list(out.labels), "fs": out.fs}

        arrays, meta = self._cached_arrays("preprocess", record.record_id, key, build)
        return MultiChannelSignal(tuple(meta["labels"]), arrays["data"], meta["fs"]), key

    def _clean_one(self, signal: MultiChannelSignal, record_id: str,
                   input_key: str) -> tuple[MultiChannelSignal, str]:
        cfg = self.config
        key = hash_obj({
            "stage": "clean",
            "input": input_key,
            "montage": cfg.montage,
            "frontal": cfg.frontal,
            "scope": cfg.aar_scope,
            "thresholds": [cfg.eog_threshold, cfg.emg_threshold],
            "lags": cfg.aar_lags,
            "version": 1,
        })

        def build():
            if cfg.aar_scope == "montage":
                picked = select_channels(signal, cfg.montage)
                cleaned, reports = artifacts.run_aar(
                    picked, frontal_labels=cfg.frontal,
                    eog_threshold=cfg.eog_threshold,
                    emg_threshold=cfg.emg_threshold, n_lags=cfg.aar_lags,
                )
            else:
                cleaned_full, reports = artifacts.run_aar(
                    signal, frontal_labels=cfg.frontal,
                    eog_threshold=cfg.eog_threshold,
                    emg_threshold=cfg.emg_threshold, n_lags=cfg.aar_lags,
                )
                cleaned = select_channels(cleaned_full, cfg.montage)
            return (
                {"data": cleaned.data},
                {
                    "labels": list(cleaned.labels),
                    "fs": cleaned.fs,
                    "stage_extra": {"removal": [r.as_dict() for r in reports]},
                },
            )

        arrays, meta = self._cached_arrays("clean", record_id, key, build)
        return MultiChannelSignal(tuple(meta["labels"]), arrays["data"], meta["fs"]), key

    # -- epoch / ica / features -------------------------------------------

    def _epoch_one(self, cleaned: MultiChannelSignal, record: RawRecord,
                   input_key: str) -> list[tuple[EpochedDataset, str]]:
        cfg = self.config
        datasets = []
        skip_total = {"produced": 0, "skipped": 0}
        for analysis_name in cfg.analyses:
            analysis = get_analysis(analysis_name)
            key = hash_obj({
                "stage": "epoch",
                "input": input_key,
                "analysis": analysis.name,
                "window": list(analysis.window_s),
                "band": list(analysis.band),
                "order": cfg.rhythm_order,
                "events": [(e.onset_s, e.duration_s, e.side.value) for e in record.events],
                "version": 1,
            })

            def build(analysis=analysis):
                report = SkipReport()
                epochs = extract_epochs(cleaned, record.events, analysis, report)
                if not epochs:
                    raise DataError(
                        f"{record.record_id}: no usable {analysis.name} epochs"
                    )
                left, right = group_by_side(epochs, record.record_id, cleaned.labels)
                left = isolate_rhythm(left, cfg.rhythm_order)
                right = isolate_rhythm(right, cfg.rhythm_order)
                arrays = {}
                meta_sides = {}
                for ds, side in ((left, "Left"), (right, "Right")):
                    stack = np.stack([e.data for e in ds.epochs])
                    arrays[side] = stack
                    meta_sides[side] = {
                        "onsets": [e.event.onset_s for e in ds.epochs],
                        "durations": [e.event.duration_s for e in ds.epochs],
                    }
                return arrays, {
                    "analysis": analysis.name,
                    "labels": list(cleaned.labels),
                    "fs": cleaned.fs,
                    "run_id": record.record_id,
                    "sides": meta_sides,
                    "stage_extra": {
                        "produced": report.produced,
                        "skipped": report.skipped,
                        "skipped_onsets": report.skipped_onsets,
                    },
                }

            arrays, meta = self._cached_arrays(
                "epoch", f"{record.record_id}-{analysis.name}", key, build
            )
            skip_total["produced"] += meta["stage_extra"]["produced"] if "stage_extra" in meta else 0
            skip_total["skipped"] += meta["stage_extra"]["skipped"] if "stage_extra" in meta else 0
            for side_name in ("Left", "Right"):
                datasets.append(
                    (_dataset_from_bundle(arrays, meta, side_name), key)
                )
        return datasets

    def _ica_features_one(self, dataset: EpochedDataset, epoch_key: str
                          ) -> features.FeatureVector:
        cfg = self.config
        analysis = dataset.analysis
        key = hash_obj({
            "stage": "ica",
            "input": epoch_key,
            "side": dataset.side.value,
            "seed": cfg.seed,
            "max_iterations": cfg.ica_max_iterations,
            "version": 1,
        })

        def build():
            model = ica.fit_ica(dataset, seed=cfg.seed,
                                max_iterations=cfg.ica_max_iterations)
            acts = ica.activations(model, dataset)
            return (
                {
                    "weights": model.weights,
                    "sphere": model.sphere,
                    "channel_means": model.channel_means,
                    "activations": acts,
                },
                {
                    "iterations": model.iterations,
                    "final_grad_norm": model.final_grad_norm,
                    "stage_extra": {"iterations": model.iterations},
                },
            )

        name = f"{dataset.run_id}-{analysis.name}-{dataset.side.value}"
        arrays, meta = self._cached_arrays("ica", name, key, build)
        acts = arrays["activations"]
        mean, power, energy = features.compute_stats(acts)
        subject = dataset.run_id[:4]
        run = int(dataset.run_id[5:]) if dataset.run_id[5:].isdigit() else 0
        return features.FeatureVector(
            subject=subject,
            run=run,
            analysis=analysis.name,
            analysis_code=analysis.code,
            side=dataset.side,
            mean=tuple(mean),
            power=tuple(power),
            energy=tuple(energy),
            n_samples=acts.shape[1],
        )

    # -- high-level stages -------------------------------------------------

    def build_matrix(self) -> features.FeatureMatrix:
        records = self.ingest()
        vectors = []
        for record in records:
            record_hash = hash_arrays({"data": record.data})
            signal, pre_key = self._preprocess_one(record, record_hash)
            cleaned, clean_key = self._clean_one(signal, record.record_id, pre_key)
            for dataset, epoch_key in self._epoch_one(cleaned, record, clean_key):
                vectors.append(self._ica_features_one(dataset, epoch_key))
        matrix = features.assemble_matrix(vectors)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "features_raw.csv").write_text(features.to_csv(matrix))
        normalized = features.normalize_columns(matrix)
        (self.out_dir / "features.csv").write_text(features.to_csv(normalized))
        (self.out_dir / "feature_rows.csv").write_text(features.rows_csv(normalized))
        (self.out_dir / "normalization.json").write_text(
            json.dumps(
                {"bounds": normalized.normalization,
                 "columns": list(normalized.column_names[:-1])},
                indent=2,
            )
            + "\n"
        )
        return normalized

    def evaluate_matrix(self, matrix: features.FeatureMatrix) -> evaluate.ResultTable:
        cfg = self.config
        key = hash_obj({
            "stage": "evaluate",
            "matrix": hash_arrays({"values": matrix.values}),
            "subsets": [s.upper() for s in cfg.subsets],
            "classifiers": [c.upper() for c in cfg.classifiers],
            "seed": cfg.seed,
            "stratify": cfg.stratify,
            "normalization": cfg.normalization,
            "nn": [cfg.nn_hidden_max, cfg.nn_learning_rate, cfg.nn_max_epochs],
            "svm": [cfg.svm_degree_max, cfg.svm_gamma_max, cfg.svm_c],
            "version": 1,
        })
        path = self._cache_path("evaluate", key)
        started = time.perf_counter()
        if path.exists():
            _, meta = load_bundle(path)
            table = evaluate.ResultTable.from_dict(meta["table"])
            self._record_stage("evaluate", "grid", StageInfo(
                key=key, cached=True, elapsed_s=time.perf_counter() - started))
            return table
        table = evaluate.run_experiments(
            matrix,
            subsets=[s if s == "All" else s.upper() for s in cfg.subsets],
            classifiers=[c.upper() for c in cfg.classifiers],
            seed=cfg.seed,
            normalization_mode=cfg.normalization,
            stratify=cfg.stratify,
            nn_hidden_grid=tuple(range(1, cfg.nn_hidden_max + 1)),
            svm_degree_grid=tuple(range(1, cfg.svm_degree_max + 1)),
            svm_gamma_grid=tuple(range(1, cfg.svm_gamma_max + 1)),
            svm_c=cfg.svm_c,
            nn_learning_rate=cfg.nn_learning_rate,
            nn_max_epochs=cfg.nn_max_epochs,
        )
        save_bundle(path, {"empty": np.zeros(1)}, {"table": table.as_dict()})
        self._record_stage("evaluate", "grid", StageInfo(
            key=key, cached=False, elapsed_s=time.perf_counter() - started))
        return table

    def save_models(self, matrix: features.FeatureMatrix,
                    table: evaluate.ResultTable) -> list[Path]:
        """Refit each cell's best hyperparameters on the full matrix."""
        cfg = self.config
        models_dir = self.out_dir / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
        inputs = matrix.inputs()
        targets = np.where(matrix.targets() > 0.5, 1.0, -1.0)
        paths = []
        for entry in table.entries:
            cols = features.subset_columns(entry.subset)
            x = inputs[:, cols]
            name = f"{entry.classifier.lower()}_{entry.subset.lower()}.bundle"
            path = models_dir / name
            if entry.classifier == "SVM":
                model = learn.train_svm(
                    x, targets, degree=entry.best_params["degree"],
                    gamma=entry.best_params["gamma"], box_c=cfg.svm_c,
                )
                save_bundle(path, {
                    "support_vectors": model.support_vectors,
                    "coefficients": model.coefficients,
                }, {
                    "kind": "svm",
                    "bias": model.bias,
                    "gamma": model.gamma,
                    "degree": model.degree,
                    "box_c": model.box_c,
                    "subset": entry.subset,
                })
            else:
                nn_targets = np.where(
                    targets > 0, learn.NN_TARGET_HI, learn.NN_TARGET_LO
                )
                model = learn.train_nn(
                    x, nn_targets, hidden_nodes=entry.best_params["hidden"],
                    learning_rate=cfg.nn_learning_rate,
                    max_epochs=cfg.nn_max_epochs, seed=cfg.seed,
                )
                save_bundle(path, {
                    "w_hidden": model.w_hidden,
                    "b_hidden": model.b_hidden,
                    "w_out": model.w_out,
                }, {
                    "kind": "nn",
                    "b_out": model.b_out,
                    "hidden": model.hidden_nodes,
                    "seed": model.seed,
                    "subset": entry.subset,
                })
            paths.append(path)
        return paths

    def write_report(self, table: evaluate.ResultTable,
                     figures: bool = True) -> list[Path]:
        from . import plots

        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        text_path = self.out_dir / "report.txt"
        text_path.write_text(evaluate.report_text(table))
        paths.append(text_path)
        json_path = self.out_dir / "results.json"
        json_path.write_text(evaluate.report_json(table))
        paths.append(json_path)
        summary_path = self.out_dir / "results.csv"
        summary_path.write_text(evaluate.report_summary_csv(table))
        paths.append(summary_path)
        reps_path = self.out_dir / "repetitions.csv"
        reps_path.write_text(evaluate.repetitions_csv(table))
        paths.append(reps_path)
        if figures:
            fig_dir = self.out_dir / "figures"
            paths.extend(plots.render_report_figures(table, fig_dir))
        return paths

    def write_manifest(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
        return path

    def run(self, figures: bool = True) -> RunResult:
        matrix = self.build_matrix()
        table = self.evaluate_matrix(matrix)
        self.save_models(matrix, table)
        report_paths = self.write_report(table, figures=figures)
        manifest_path = self.write_manifest()
        return RunResult(
            manifest_path=manifest_path,
            matrix=matrix,
            table=table,
            report_paths=report_paths,
        )


# ---------------------------------------------------------------------------
# bundle adapters


def _record_to_bundle(record: RawRecord):
    header_bytes = np.frombuffer(
        bytearray(record.header.raw or b""), dtype=np.uint8
    ).copy()
    arrays = {"data": record.data, "header_raw": header_bytes}
    meta = {
        "record_id": record.record_id,
        "labels": list(record.labels),
        "fs": record.fs,
        "events": [(e.onset_s, e.duration_s, e.side.value) for e in record.events],
        "annotation_log": [list(entry) for entry in record.annotation_log],
        "n_data_records": record.header.n_data_records,
        "record_duration_s": record.header.record_duration_s,
    }
    return arrays, meta


def _record_from_bundle(arrays, meta) -> RawRecord:
    from .edf import make_record, parse_header

    log = [(float(o), float(d), str(lab)) for o, d, lab in meta["annotation_log"]]
    record = make_record(
        list(meta["labels"]), arrays["data"], meta["fs"], log,
        record_id=meta["record_id"],
    )
    raw = arrays.get("header_raw")
    if raw is not None and raw.size:
        record.header = parse_header(raw.tobytes())
    return record


def _dataset_from_bundle(arrays, meta, side_name: str) -> EpochedDataset:
    analysis = get_analysis(meta["analysis"])
    side = Side.LEFT if side_name == "Left" else Side.RIGHT
    stack = arrays[side_name]
    onsets = meta["sides"][side_name]["onsets"]
    durations = meta["sides"][side_name]["durations"]
    epochs = [
        Epoch(
            data=stack[i],
            side=side,
            analysis=analysis,
            event=MovementEvent(onsets[i], durations[i], side),
            fs=meta["fs"],
        )
        for i in range(stack.shape[0])
    ]
    return EpochedDataset(epochs, run_id=meta["run_id"], labels=tuple(meta["labels"]))
