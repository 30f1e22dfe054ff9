import json
from pathlib import Path

import numpy as np
import pytest

from dialectvc.cli import main
from dialectvc.features import Waveform, load_features, write_wav

SYNTH_CFG = """
n_dialects = 3
speakers_per_dialect_train = 2
speakers_test = 2
utterances_per_speaker = 4
frames_per_utterance = 20
feature_dim = 12
codebook_size = 8
seed = 5
"""

LABELS = "d0,d1,d2"


@pytest.fixture()
def corpus(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG, encoding="utf-8")
    out = tmp_path / "corpus"
    assert main(["gen-synth", "--config", str(cfg), "--out-dir", str(out)]) == 0
    return out


def test_gen_synth_writes_corpus_tree(corpus):
    assert (corpus / "data.jsonl").is_file()
    assert (corpus / "voices_shared.jsonl").is_file()
    assert (corpus / "voices_disjoint.jsonl").is_file()
    assert (corpus / "run_manifest.json").is_file()
    feat = load_features(next((corpus / "features").glob("spk_*.ft")))
    assert feat.dim == 12


def test_full_pipeline_plan_convert_train_evaluate(corpus, tmp_path, capsys):
    plan_dir = tmp_path / "plan"
    assert main([
        "plan", "--manifest", str(corpus / "data.jsonl"), "--voices",
        str(corpus / "voices_shared.jsonl"), "--policy", "uniform_draw",
        "--seed", "11", "--out-dir", str(plan_dir), "--labels", LABELS,
    ]) == 0
    plan = json.loads((plan_dir / "plan.json").read_text())
    assert plan["policy"] == "uniform_draw"
    assert len(plan["pairs"]) == 24  # train records only

    vc_dir = tmp_path / "vc"
    assert main([
        "convert", "--manifest", str(corpus / "data.jsonl"), "--plan",
        str(plan_dir / "plan.json"), "--voices", str(corpus / "voices_shared.jsonl"),
        "--k", "4", "--min-pool-warn", "0", "--out-dir", str(vc_dir), "--labels", LABELS,
    ]) == 0

    train_dir = tmp_path / "model"
    assert main([
        "train", "--train-manifest", str(corpus / "data.jsonl"),
        "--train-manifest", str(vc_dir / "manifest.jsonl"),
        "--epochs", "6", "--lr", "0.003",
        "--out-dir", str(train_dir), "--labels", LABELS, "--seed", "3",
    ]) == 0
    header = capsys.readouterr().out
    assert "|D_train| = 24 natural + 24 resynthesized/augmented = 48" in header
    run_manifest = json.loads((train_dir / "run_manifest.json").read_text())
    assert run_manifest["train_size"] == 48

    eval_dir = tmp_path / "eval"
    assert main([
        "evaluate", "--model", str(train_dir / "model.md01"), "--manifest",
        str(corpus / "data.jsonl"), "--out-dir", str(eval_dir), "--labels", LABELS,
    ]) == 0
    report = json.loads((eval_dir / "report.json").read_text())
    assert set(report["per_domain"]) == {"studio", "field"}
    assert "macro" in report["header"]


def test_rerun_reproduces_bit_identical_outputs(corpus, tmp_path):
    train_dir = tmp_path / "model"
    main([
        "train", "--train-manifest", str(corpus / "data.jsonl"), "--epochs", "4",
        "--out-dir", str(train_dir), "--labels", LABELS, "--seed", "3",
    ])
    rerun_dir = tmp_path / "model2"
    assert main(["rerun", "--run-manifest", str(train_dir / "run_manifest.json"),
                 "--out-dir", str(rerun_dir)]) == 0
    assert (train_dir / "model.md01").read_bytes() == (rerun_dir / "model.md01").read_bytes()
    assert (train_dir / "loss_trace.txt").read_bytes() == (rerun_dir / "loss_trace.txt").read_bytes()


def test_unknown_subcommand_exits_nonzero_with_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--out-dir", "x"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--train-manifest", "x", "--out-dir", "y", "--bogus", "1"])
    assert exc.value.code != 0


def test_errors_are_single_line_json(tmp_path, capsys):
    manifest = tmp_path / "bad.jsonl"
    rows = [
        {"id": "u1", "source": "a.wav", "dialect": "msa", "speaker": "s",
         "domain": "d", "split": "train", "provenance": "natural"},
        {"id": "u1", "source": "b.wav", "dialect": "gulf", "speaker": "s",
         "domain": "d", "split": "train", "provenance": "natural"},
    ]
    manifest.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    code = main(["extract", "--manifest", str(manifest), "--out-dir", str(tmp_path / "o")])
    assert code == 1
    err_lines = capsys.readouterr().err.strip().splitlines()
    assert len(err_lines) == 1
    payload = json.loads(err_lines[0])
    assert payload["error"]["module"] == "core"
    assert payload["error"]["record_id"] == "u1"


def wav_manifest(tmp_path, n=3, seconds=0.6):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(n):
        path = tmp_path / f"w{i}.wav"
        write_wav(Waveform(0.4 * np.tanh(rng.normal(size=int(16000 * seconds)))), path)
        rows.append({
            "id": f"w{i}", "source": str(path), "dialect": "msa", "speaker": f"s{i}",
            "domain": "radio", "split": "train", "provenance": "natural",
        })
    manifest = tmp_path / "wavs.jsonl"
    manifest.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")
    return manifest


def test_extract_writes_features_and_manifest(tmp_path):
    manifest = wav_manifest(tmp_path)
    out = tmp_path / "feats"
    assert main(["extract", "--manifest", str(manifest), "--out-dir", str(out)]) == 0
    ds_path = out / "manifest.jsonl"
    assert ds_path.is_file()
    first = json.loads(ds_path.read_text().splitlines()[0])
    feat = load_features(out / first["source"])
    assert feat.dim == 80
    # 0.6 s -> 1 + (9600 - 400) // 160 = 58 frames
    assert feat.n_frames == 58


def test_extract_rejects_overlong_audio(tmp_path, capsys):
    manifest = wav_manifest(tmp_path, n=1, seconds=1.2)
    out = tmp_path / "feats"
    code = main(["extract", "--manifest", str(manifest), "--out-dir", str(out),
                 "--max-duration-s", "1.0"])
    assert code == 1
    assert "duration" in capsys.readouterr().err


def test_augment_waveform_recipe(tmp_path, capsys):
    manifest = wav_manifest(tmp_path)
    rir = tmp_path / "rir.wav"
    impulse = np.zeros(64)
    impulse[0] = 1.0
    impulse[40] = 0.4
    write_wav(Waveform(impulse), rir)
    noise = tmp_path / "noise.wav"
    write_wav(Waveform(0.3 * np.sin(np.arange(16000) * 0.17)), noise)
    recipe = tmp_path / "recipe.json"
    recipe.write_text(json.dumps([
        {"kind": "pitch_shift", "probability": 1.0, "params": {"semitones": 2.0}},
        {"kind": "rir", "probability": 1.0, "params": {"rir": str(rir)}},
        {"kind": "add_noise", "probability": 1.0, "params": {"noise": str(noise), "snr_db": 15.0}},
    ]), encoding="utf-8")
    out = tmp_path / "aug"
    assert main(["augment", "--manifest", str(manifest), "--recipe", str(recipe),
                 "--out-dir", str(out), "--seed", "9"]) == 0
    lines = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert len(lines) == 9  # 3 records x 3 kinds
    kinds = {l["provenance"] for l in lines}
    assert kinds == {"augmented:pitch_shift", "augmented:rir", "augmented:add_noise"}
    assert all(l["dialect"] == "msa" for l in lines)  # label-preserving
    # determinism: rerun into a new directory gives identical audio bytes
    out2 = tmp_path / "aug2"
    assert main(["rerun", "--run-manifest", str(out / "run_manifest.json"),
                 "--out-dir", str(out2)]) == 0
    sample = lines[0]["source"]
    assert (out / sample).read_bytes() == (out2 / sample).read_bytes()


def test_augment_specaugment_on_features(corpus, tmp_path):
    recipe = tmp_path / "recipe.json"
    recipe.write_text(json.dumps([
        {"kind": "specaugment", "probability": 1.0,
         "params": {"time_mask_max": 4, "freq_mask_max": 3, "stretch_range": [1.0, 1.0]}},
    ]), encoding="utf-8")
    out = tmp_path / "sa"
    assert main(["augment", "--manifest", str(corpus / "data.jsonl"), "--recipe",
                 str(recipe), "--out-dir", str(out), "--labels", LABELS, "--seed", "4"]) == 0
    lines = [json.loads(l) for l in (out / "manifest.jsonl").read_text().splitlines()]
    assert all(l["provenance"] == "augmented:specaugment" for l in lines)
    assert len(lines) == 72  # every record augmented once


def test_bias_experiment_smoke(tmp_path):
    cfg = tmp_path / "synth.cfg"
    cfg.write_text(SYNTH_CFG, encoding="utf-8")
    out = tmp_path / "exp"
    assert main(["bias-experiment", "--config", str(cfg), "--out-dir", str(out)]) == 0
    report = json.loads((out / "experiment_report.json").read_text())
    assert set(report["conditions"]) == {"baseline_natural", "vc_unbiased", "vc_biased"}
    assert (out / "experiment_report.txt").read_text().count("vc_") >= 2


def test_gen_synth_rerun_bit_identical(corpus, tmp_path):
    out2 = tmp_path / "corpus2"
    assert main(["rerun", "--run-manifest", str(corpus / "run_manifest.json"),
                 "--out-dir", str(out2)]) == 0
    name = "features/spk_d0_00_u000.ft"
    assert (corpus / name).read_bytes() == (out2 / name).read_bytes()
    assert (corpus / "data.jsonl").read_bytes() == (out2 / "data.jsonl").read_bytes()
