"""Command-line entry point: file-mediated pipeline stages.

Every stage reads and writes manifests plus feature files, so each training
condition is a shell-scriptable recipe. Each run writes a run-manifest
(config, seeds, input digests) into its output directory; `rerun` re-executes
a recorded run and reproduces its outputs bit-identically.

Errors exit nonzero with a single machine-parsable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import NoiseSpec, SpecAugmentParams, add_noise, pitch_shift, rir_convolve, spec_augment
from .classifier import TrainConfig, load_model, save_model, train, write_loss_trace
from .core import (
    ConversionPlan,
    Dataset,
    ManifestError,
    ToolkitError,
    UtteranceRecord,
    VoicePool,
    assign_targets,
    load_manifest,
    merge_datasets,
    save_manifest,
)
from .evaluation import (
    DomainReport,
    domain_report,
    evaluate,
    evaluate_by_domain,
    metrics_from_confusion,
    render_report,
    write_report,
)
from .features import (
    FeatureConfig,
    load_features,
    logmel,
    read_wav,
    save_features,
    write_wav,
)
from .seeding import derive_seed
from .synthlab import SynthConfig, gen_corpus, render_experiment, run_bias_experiment
from .vc import VCConfig, build_matching_set, execute_plan

DEFAULT_MAX_DURATION_S = 10.0

_SAFE_NAME = re.compile(r"[^A-Za-z0-9._+-]")


class CliError(ToolkitError):
    pass


def _safe_name(record_id: str) -> str:
    return _SAFE_NAME.sub("_", record_id)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _resolve_source(record: UtteranceRecord, manifest_path: Path, features_dir: str | None) -> Path:
    src = Path(record.source)
    if src.is_absolute():
        return src
    base = Path(features_dir) if features_dir else manifest_path.parent
    return base / src


def _load_feature_map(dataset: Dataset, manifest_path: Path, features_dir: str | None):
    feats = {}
    for rec in dataset.records:
        path = _resolve_source(rec, manifest_path, features_dir)
        if path.suffix != ".ft":
            raise CliError(
                f"record {rec.id!r}: source {path} is not a feature file; run `extract` first",
                record_id=rec.id,
            )
        feats[rec.id] = load_features(path)
    return feats


def _write_run_manifest(out_dir: Path, command: str, argv: list[str], inputs: list[Path],
                        outputs: list[str], extra: dict | None = None) -> None:
    record = {
        "tool": "dialectvc",
        "version": __version__,
        "command": command,
        "argv": argv,
        "inputs": {str(p): _sha256(p) for p in sorted(set(inputs)) if p.is_file()},
        "outputs": sorted(outputs),
    }
    if extra:
        record.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "run_manifest.json").write_text(
        json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_voices(path: Path) -> list[dict]:
    if not path.is_file():
        raise CliError(f"voices manifest not found: {path}")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}:{lineno}: malformed voices line ({exc.msg})") from None
        unknown = set(obj) - {"speaker", "source", "dialect"}
        if unknown or "speaker" not in obj or "source" not in obj:
            raise CliError(f"{path}:{lineno}: voices lines need speaker+source (optional dialect)")
        rows.append(obj)
    if not rows:
        raise CliError(f"voices manifest is empty: {path}")
    return rows


def _build_voice_pool(rows: list[dict], base: Path, min_pool_warn: int) -> VoicePool:
    grouped: dict[str, list[Path]] = {}
    order: list[str] = []
    for row in rows:
        sid = row["speaker"]
        if sid not in grouped:
            grouped[sid] = []
            order.append(sid)
        src = Path(row["source"])
        grouped[sid].append(src if src.is_absolute() else base / src)
    voices = []
    for sid in order:
        segments = []
        for path in grouped[sid]:
            if path.suffix == ".ft":
                segments.append(load_features(path))
            else:
                segments.append(logmel(read_wav(path)))
        voices.append((sid, build_matching_set(sid, segments, min_pool_warn=min_pool_warn)))
    return VoicePool(voices)


# ---------------------------------------------------------------- subcommands


def cmd_extract(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out_dir)
    dataset = load_manifest(manifest_path, labels=args.labels)
    cfg = FeatureConfig()
    feat_dir = out_dir / "features"

    def job(rec: UtteranceRecord):
        wav_path = _resolve_source(rec, manifest_path, None)
        wave = read_wav(wav_path)
        if wave.duration_s > args.max_duration_s:
            raise CliError(
                f"record {rec.id!r}: duration {wave.duration_s:.2f}s exceeds "
                f"--max-duration-s {args.max_duration_s}",
                record_id=rec.id,
            )
        feat = logmel(wave, cfg)
        name = f"{_safe_name(rec.id)}.ft"
        save_features(feat, feat_dir / name)
        return dataclasses.replace(rec, source=f"features/{name}")

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            new_records = list(pool.map(job, dataset.records))
    else:
        new_records = [job(r) for r in dataset.records]

    out_manifest = out_dir / "manifest.jsonl"
    save_manifest(Dataset(new_records, dataset.labels), out_manifest)
    _write_run_manifest(
        out_dir, "extract", args.argv, [manifest_path],
        ["manifest.jsonl"] + [r.source for r in new_records],
        {"feature_config": cfg.config_id(), "records": len(new_records)},
    )
    print(f"extract: {len(new_records)} records -> {feat_dir}")
    return 0


def cmd_plan(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out_dir)
    dataset = load_manifest(manifest_path, labels=args.labels)
    rows = _load_voices(Path(args.voices))
    pool = VoicePool([(row["speaker"], row["source"]) for row in _dedupe_voices(rows)])
    dialect_speakers = None
    if args.policy == "biased_disjoint":
        dialect_speakers = {}
        for row in rows:
            if "dialect" not in row:
                raise CliError(
                    f"voices line for {row['speaker']!r} needs a dialect key under biased_disjoint"
                )
            dialect_speakers.setdefault(row["dialect"], [])
            if row["speaker"] not in dialect_speakers[row["dialect"]]:
                dialect_speakers[row["dialect"]].append(row["speaker"])
    plan = assign_targets(dataset, pool, args.policy, args.seed, dialect_speakers=dialect_speakers)
    out_path = out_dir / "plan.json"
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(
            {"policy": plan.policy, "seed": plan.seed, "pairs": [list(p) for p in plan.pairs]},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_run_manifest(out_dir, "plan", args.argv, [manifest_path, Path(args.voices)],
                        ["plan.json"], {"pairs": len(plan.pairs)})
    print(f"plan: {len(plan.pairs)} pairs under {plan.policy} -> {out_path}")
    return 0


def _dedupe_voices(rows: list[dict]) -> list[dict]:
    seen = set()
    out = []
    for row in rows:
        if row["speaker"] not in seen:
            seen.add(row["speaker"])
            out.append(row)
    return out


def cmd_convert(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out_dir)
    dataset = load_manifest(manifest_path, labels=args.labels)
    plan_path = Path(args.plan)
    if not plan_path.is_file():
        raise CliError(f"plan file not found: {plan_path}")
    plan_obj = json.loads(plan_path.read_text(encoding="utf-8"))
    plan = ConversionPlan(
        tuple((s, t) for s, t in plan_obj["pairs"]), plan_obj["policy"], int(plan_obj["seed"])
    )
    voices_path = Path(args.voices)
    voices = _build_voice_pool(_load_voices(voices_path), voices_path.parent, args.min_pool_warn)
    features = _load_feature_map(dataset, manifest_path, args.features_dir)
    cfg = VCConfig(k=args.k, min_pool_warn=args.min_pool_warn)
    out_ds, out_feats = execute_plan(plan, dataset, features, voices, cfg, threads=args.threads)

    feat_dir = out_dir / "features"
    new_records = []
    for rec in out_ds.records:
        name = f"{_safe_name(rec.id)}.ft"
        save_features(out_feats[rec.id], feat_dir / name)
        new_records.append(dataclasses.replace(rec, source=f"features/{name}"))
    out_manifest = out_dir / "manifest.jsonl"
    save_manifest(Dataset(new_records, out_ds.labels), out_manifest)
    _write_run_manifest(
        out_dir, "convert", args.argv, [manifest_path, plan_path, voices_path],
        ["manifest.jsonl"] + [r.source for r in new_records],
        {"k": args.k, "converted": len(new_records)},
    )
    print(f"convert: {len(new_records)} resynthesized records -> {out_dir}")
    return 0


def _load_recipe(path: Path) -> list[dict]:
    if not path.is_file():
        raise CliError(f"recipe not found: {path}")
    recipe = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(recipe, list) or not recipe:
        raise CliError("recipe must be a nonempty JSON list of steps")
    for step in recipe:
        if step.get("kind") not in ("specaugment", "pitch_shift", "add_noise", "rir"):
            raise CliError(f"unknown augmentation kind {step.get('kind')!r}")
        prob = step.get("probability", 1.0)
        if not (0.0 <= float(prob) <= 1.0):
            raise CliError("step probability must be within [0, 1]")
    return recipe


def _apply_waveform_step(kind: str, wave, params: dict, rng: np.random.Generator, base: Path):
    if kind == "pitch_shift":
        if "semitones_range" in params:
            lo, hi = params["semitones_range"]
            semis = float(rng.uniform(lo, hi))
        else:
            semis = float(params.get("semitones", 2.0))
        return pitch_shift(wave, semis)
    if kind == "add_noise":
        noise_path = Path(params["noise"])
        noise = read_wav(noise_path if noise_path.is_absolute() else base / noise_path)
        snr = params.get("snr_db")
        if snr is None and "snr_range" in params:
            lo, hi = params["snr_range"]
            snr = float(rng.uniform(lo, hi))
        return add_noise(wave, NoiseSpec(noise, snr), seed=int(rng.integers(0, 2**63 - 1)))
    rir_path = Path(params["rir"])
    rir = read_wav(rir_path if rir_path.is_absolute() else base / rir_path)
    return rir_convolve(wave, rir)


def cmd_augment(args) -> int:
    manifest_path = Path(args.manifest)
    out_dir = Path(args.out_dir)
    dataset = load_manifest(manifest_path, labels=args.labels)
    recipe_path = Path(args.recipe)
    recipe = _load_recipe(recipe_path)
    base = recipe_path.parent

    def job(rec: UtteranceRecord):
        produced = []
        src_path = _resolve_source(rec, manifest_path, args.features_dir)
        for step in recipe:
            kind = step["kind"]
            params = step.get("params", {})
            rng = np.random.default_rng(derive_seed(args.seed, rec.id, kind))
            if float(rng.uniform()) >= float(step.get("probability", 1.0)):
                continue
            new_id = f"{rec.id}__aug_{kind}"
            if kind == "specaugment":
                if src_path.suffix != ".ft":
                    raise CliError(
                        f"record {rec.id!r}: specaugment needs feature-backed sources",
                        record_id=rec.id,
                    )
                feat = load_features(src_path)
                sa = SpecAugmentParams(**params)
                out = spec_augment(feat, sa, seed=int(rng.integers(0, 2**63 - 1)))
                name = f"features/{_safe_name(new_id)}.ft"
                save_features(out, out_dir / name)
            else:
                if src_path.suffix != ".wav":
                    raise CliError(
                        f"record {rec.id!r}: {kind} needs waveform-backed sources",
                        record_id=rec.id,
                    )
                wave = read_wav(src_path)
                out = _apply_waveform_step(kind, wave, params, rng, base)
                name = f"audio/{_safe_name(new_id)}.wav"
                write_wav(out, out_dir / name)
            produced.append(
                dataclasses.replace(
                    rec, id=new_id, source=name, provenance=f"augmented:{kind}", target_speaker=None
                )
            )
        return produced

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            groups = list(pool.map(job, dataset.records))
    else:
        groups = [job(r) for r in dataset.records]
    new_records = [rec for group in groups for rec in group]
    if not new_records:
        raise CliError("recipe produced no augmented records")
    out_manifest = out_dir / "manifest.jsonl"
    save_manifest(Dataset(new_records, dataset.labels), out_manifest)
    _write_run_manifest(
        out_dir, "augment", args.argv, [manifest_path, recipe_path],
        ["manifest.jsonl"] + [r.source for r in new_records],
        {"seed": args.seed, "augmented": len(new_records)},
    )
    print(f"augment: {len(new_records)} augmented records -> {out_dir}")
    return 0


def cmd_train(args) -> int:
    out_dir = Path(args.out_dir)
    manifests = [Path(p) for p in args.train_manifest]
    datasets = [load_manifest(p, labels=args.labels) for p in manifests]
    combined = datasets[0] if len(datasets) == 1 else merge_datasets(datasets[0], *datasets[1:])
    train_ds = combined.subset(split="train")
    if not train_ds.records:
        raise CliError("no train-split records in the given manifests")

    features = {}
    for ds, path in zip(datasets, manifests):
        features.update(_load_feature_map(ds.subset(split="train"), path, args.features_dir))

    n_natural = sum(1 for r in train_ds.records if r.provenance == "natural")
    n_modified = len(train_ds) - n_natural
    print(f"train: |D_train| = {n_natural} natural + {n_modified} resynthesized/augmented "
          f"= {len(train_ds)}")

    cfg = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed
    )
    model, trace = train(train_ds, features, cfg)
    save_model(model, out_dir / "model.md01")
    write_loss_trace(trace, out_dir / "loss_trace.txt")
    _write_run_manifest(
        out_dir, "train", args.argv, manifests, ["model.md01", "loss_trace.txt"],
        {
            "seed": args.seed,
            "train_size": len(train_ds),
            "natural": n_natural,
            "modified": n_modified,
            "epochs": len(trace),
            "final_loss": trace[-1],
        },
    )
    print(f"train: final mean loss {trace[-1]:.4f} after {len(trace)} epochs -> {out_dir}")
    return 0


def _report_from_json(path: Path) -> DomainReport:
    obj = json.loads(path.read_text(encoding="utf-8"))
    per_domain = {
        d: metrics_from_confusion(np.asarray(m["confusion"]), tuple(m["labels"]))
        for d, m in obj["per_domain"].items()
    }
    return DomainReport(per_domain, obj["average_accuracy"], obj.get("deltas", {}))


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out_dir)
    manifest_path = Path(args.manifest)
    dataset = load_manifest(manifest_path, labels=args.labels)
    model = load_model(Path(args.model))
    features = _load_feature_map(dataset.subset(split=args.split), manifest_path, args.features_dir)
    per_domain = evaluate_by_domain(model, dataset, features, split=args.split)
    baseline = _report_from_json(Path(args.baseline_report)) if args.baseline_report else None
    report = domain_report(per_domain, baseline=baseline)
    overall = evaluate(model, dataset, features, split=args.split)
    write_report(report, out_dir / "report.json", out_dir / "report.txt",
                 title=f"evaluation on split {args.split!r}")
    _write_run_manifest(
        out_dir, "evaluate", args.argv,
        [manifest_path, Path(args.model)] + ([Path(args.baseline_report)] if args.baseline_report else []),
        ["report.json", "report.txt"],
        {"split": args.split, "overall_accuracy": overall.accuracy},
    )
    print(render_report(report, title=f"evaluation on split {args.split!r}"))
    print(f"overall accuracy: {100 * overall.accuracy:.2f}%")
    return 0


def _synth_config(path: str | None, seed: int | None) -> SynthConfig:
    values: dict = {}
    if path:
        cfg_path = Path(path)
        if not cfg_path.is_file():
            raise CliError(f"config not found: {cfg_path}")
        fields = {f.name: f.type for f in dataclasses.fields(SynthConfig)}
        for lineno, line in enumerate(cfg_path.read_text(encoding="utf-8").splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{cfg_path}:{lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in fields:
                raise CliError(f"{cfg_path}:{lineno}: unknown config key {key!r}")
            values[key] = float(raw) if "." in raw or "e" in raw.lower() else int(raw)
    if seed is not None:
        values["seed"] = seed
    return SynthConfig(**values)


def cmd_gen_synth(args) -> int:
    out_dir = Path(args.out_dir)
    cfg = _synth_config(args.config, args.seed)
    corpus = gen_corpus(cfg)
    feat_dir = out_dir / "features"

    new_records = []
    for rec in corpus.dataset.records:
        name = f"features/{_safe_name(rec.id)}.ft"
        save_features(corpus.features[rec.id], out_dir / name)
        new_records.append(dataclasses.replace(rec, source=name))
    save_manifest(Dataset(new_records, corpus.dataset.labels), out_dir / "data.jsonl")

    outputs = ["data.jsonl", "voices_shared.jsonl", "voices_disjoint.jsonl"]
    outputs += [r.source for r in new_records]
    from .features import FeatureSequence

    with (out_dir / "voices_shared.jsonl").open("w", encoding="utf-8") as fh:
        for sid, ms in corpus.shared_voices.voices:
            name = f"features/voice_{_safe_name(sid)}.ft"
            save_features(FeatureSequence(ms.pool, 100.0, "synth-voice"), out_dir / name)
            fh.write(json.dumps({"speaker": sid, "source": name}) + "\n")
            outputs.append(name)
    with (out_dir / "voices_disjoint.jsonl").open("w", encoding="utf-8") as fh:
        dialect_of = {sid: d for d, ids in corpus.dialect_speakers.items() for sid in ids}
        for sid, ms in corpus.disjoint_voices.voices:
            name = f"features/voice_{_safe_name(sid)}.ft"
            save_features(FeatureSequence(ms.pool, 100.0, "synth-voice"), out_dir / name)
            fh.write(json.dumps({"speaker": sid, "source": name, "dialect": dialect_of[sid]}) + "\n")
            outputs.append(name)

    _write_run_manifest(
        out_dir, "gen-synth", args.argv, [Path(args.config)] if args.config else [],
        outputs, {"seed": cfg.seed, "records": len(new_records), "labels": list(corpus.dataset.labels)},
    )
    print(f"gen-synth: {len(new_records)} records, "
          f"{len(corpus.shared_voices)} shared + {len(corpus.disjoint_voices)} disjoint voices -> {out_dir}")
    return 0


def cmd_bias_experiment(args) -> int:
    out_dir = Path(args.out_dir)
    cfg = _synth_config(args.config, args.seed)
    report = run_bias_experiment(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "experiment_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    text = render_experiment(report)
    (out_dir / "experiment_report.txt").write_text(text, encoding="utf-8")
    _write_run_manifest(
        out_dir, "bias-experiment", args.argv, [Path(args.config)] if args.config else [],
        ["experiment_report.json", "experiment_report.txt"], {"seed": cfg.seed},
    )
    print(text)
    return 0


def cmd_rerun(args) -> int:
    manifest_path = Path(args.run_manifest)
    if not manifest_path.is_file():
        raise CliError(f"run manifest not found: {manifest_path}")
    record = json.loads(manifest_path.read_text(encoding="utf-8"))
    argv = list(record["argv"])
    if "--out-dir" in argv:
        idx = argv.index("--out-dir")
        argv[idx + 1] = args.out_dir
    else:
        argv += ["--out-dir", args.out_dir]
    print(f"rerun: {record['command']} -> {args.out_dir}")
    return main(argv)


# ------------------------------------------------------------------- parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialectvc",
        description="Voice-conversion-driven training toolkit for dialect identification.",
    )
    parser.add_argument("--version", action="version", version=f"dialectvc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_default: int | None = 0):
        p.add_argument("--out-dir", required=True, help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=seed_default, help="global random seed")
        p.add_argument("--threads", type=int, default=1, help="worker parallelism")
        p.add_argument(
            "--labels",
            type=lambda s: tuple(s.split(",")),
            default=None,
            help="comma-separated closed label set (default: msa,gulf,levantine,maghrebi,egyptian)",
        )

    p = sub.add_parser("extract", help="manifest of waveforms -> feature files")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--max-duration-s", type=float, default=DEFAULT_MAX_DURATION_S)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("plan", help="manifest + voices + policy -> conversion plan")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--voices", required=True, help="JSONL of {speaker, source[, dialect]}")
    p.add_argument(
        "--policy",
        required=True,
        choices=["fixed_single", "uniform_draw", "per_voice_full", "unbiased_shared", "biased_disjoint"],
    )
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("convert", help="plan -> resynthesized manifest + features")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--voices", required=True)
    p.add_argument("--features-dir", default=None)
    p.add_argument("--k", type=int, default=4, help="nearest neighbors per frame")
    p.add_argument("--min-pool-warn", type=int, default=6000)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="manifest + recipe -> augmented manifest")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--recipe", required=True, help="JSON list of {kind, probability, params}")
    p.add_argument("--features-dir", default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="manifest(s) -> model + loss trace")
    common(p)
    p.add_argument("--train-manifest", action="append", required=True,
                   help="repeatable; natural and resynthesized sets are unioned")
    p.add_argument("--features-dir", default=None)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=None,
                   help="default: 6 natural-only, 3 with resynthesized data")
    p.add_argument("--batch", type=int, default=32)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="model + manifest -> per-domain report")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-dir", default=None)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--baseline-report", default=None, help="report.json to compute deltas against")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-synth", help="synthetic corpus -> manifests + features")
    common(p, seed_default=None)
    p.add_argument("--config", default=None, help="flat key=value settings file")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("bias-experiment", help="run the three-condition speaker-bias experiment")
    common(p, seed_default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_bias_experiment)

    p = sub.add_parser("rerun", help="re-execute a recorded run into a new directory")
    p.add_argument("--run-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rerun)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "labels", None) is None and hasattr(args, "labels"):
        from .core import DEFAULT_LABELS

        args.labels = DEFAULT_LABELS
    args.argv = argv
    try:
        return args.func(args)
    except ToolkitError as exc:
        module = type(exc).__module__.rsplit(".", 1)[-1]
        payload = {"module": module, "type": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "record_id", None):
            payload["record_id"] = exc.record_id
        print(json.dumps({"error": payload}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
