"""End-to-end pipeline stages: preprocessing, teacher/student training,
quantization-aware fine-tuning, evaluation, and the ablation grid.

Every stage is a plain function over a RunConfig plus explicit paths, so the
CLI subcommands and the tests drive exactly the same code. All randomness is
derived from (cfg.seed, purpose-tag) generators; rerunning a stage with the
same config and seed writes byte-identical metrics and ROC files.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .audio import (
    FeatureSequence,
    MfccConfig,
    VadConfig,
    fix_length,
    load_features,
    lowpass_filter,
    mfcc_extract,
    read_wav,
    resample,
    save_features,
    vad_segments,
)
from .config import RunConfig
from .data import (
    Batch,
    DatasetManifest,
    Example,
    load_dataset,
    make_batches,
    rng_for,
    synth_generate,
)
from .distill import (
    DistillConfig,
    LossBreakdown,
    ce_loss_tensor,
    one_hot,
    softmax_np,
    student_train_step,
)
from .metrics import MetricsReport, compute_metrics, emit_report, roc_auc
from .models import (
    AudioTeacherModel,
    StudentModel,
    TextTeacherModel,
    load_model,
    make_fake_quant_transform,
    quantize_model,
    quantized_storage_bytes,
)
from .optim import PlateauScheduler, make_optimizer
from .text import encode, build_vocab, load_vocab, parse_and_filter_transcript, save_vocab
from .checkpoint import save_checkpoint

logger = logging.getLogger(__name__)

__all__ = [
    "ablate",
    "effective_threads",
    "evaluate_model",
    "load_split_examples",
    "preprocess",
    "quantize_pipeline",
    "run_full",
    "train_audio_teacher",
    "train_student",
    "train_text_teacher",
]

THREADS_ENV = "DISTILLFUSE_THREADS"


def effective_threads(cfg: RunConfig) -> int:
    n = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        n = min(n, cap)
    return max(1, n)


# ------------------------------------------------------------- preprocess


def _audio_features(cfg: RunConfig, wav_path) -> FeatureSequence:
    w = read_wav(wav_path)
    w = resample(w, cfg.sample_rate)
    w = lowpass_filter(w, cfg.fir_cutoff_hz, cfg.fir_taps)
    vad_cfg = VadConfig(cfg.vad_frame_ms, cfg.vad_hop_ms, cfg.vad_threshold_ratio)
    segments = vad_segments(w, vad_cfg)
    voiced = (
        np.concatenate([w.samples[s:e] for s, e in segments]) if segments else w.samples
    )
    if voiced.size < cfg.n_fft:  # too little voiced audio: fall back to the clip
        voiced = w.samples
    mfcc_cfg = MfccConfig(cfg.n_fft, cfg.hop, cfg.n_mels, cfg.n_coeffs, cfg.fmin, cfg.fmax)
    return mfcc_extract(type(w)(voiced, w.sample_rate), mfcc_cfg)


def preprocess(cfg: RunConfig, data_dir, features_dir) -> DatasetManifest:
    """Extract and cache per-participant features under features_dir.

    Writes ``<id>.dfmf`` (MFCC frames), ``<id>_text.txt`` (merged participant
    turns), ``vocab.txt`` (built from the training split only), and
    ``splits.csv``.
    """
    features_dir = Path(features_dir)
    features_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_dataset(data_dir, seed=cfg.seed)
    entries = sorted(manifest.entries, key=lambda e: e.participant_id)

    def one(entry):
        feats = _audio_features(cfg, entry.audio_path)
        save_features(features_dir / f"{entry.participant_id}.dfmf", feats)

    with ThreadPoolExecutor(max_workers=effective_threads(cfg)) as pool:
        list(pool.map(one, entries))

    train_texts = []
    for entry in entries:
        raw = Path(entry.transcript_path).read_text(encoding="utf-8")
        text = parse_and_filter_transcript(raw, cfg.interviewer)
        with open(features_dir / f"{entry.participant_id}_text.txt", "w",
                  encoding="utf-8", newline="\n") as f:
            f.write(text + "\n")
        if manifest.split_of[entry.participant_id] == "train":
            train_texts.append(text)
    save_vocab(features_dir / "vocab.txt", build_vocab(train_texts, cfg.min_count))

    with open(features_dir / "splits.csv", "w", encoding="utf-8", newline="\n") as f:
        f.write("participant_id,label,split\n")
        for entry in entries:
            f.write(f"{entry.participant_id},{entry.label},{manifest.split_of[entry.participant_id]}\n")
    return manifest


def _read_splits(features_dir) -> list[tuple[int, int, str]]:
    path = Path(features_dir) / "splits.csv"
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != "participant_id,label,split":
        raise ValueError(f"{path}: expected header 'participant_id,label,split'")
    out = []
    for line in lines[1:]:
        pid, label, split = line.split(",")
        out.append((int(pid), int(label), split))
    return out


def load_split_examples(cfg: RunConfig, features_dir, split: str) -> list[Example]:
    """Materialize encoded text + fixed-length MFCC examples for one split."""
    features_dir = Path(features_dir)
    vocab = load_vocab(features_dir / "vocab.txt")
    rows = [(pid, label) for pid, label, s in _read_splits(features_dir) if s == split]
    if not rows:
        raise ValueError(f"split {split!r} is empty in {features_dir}")
    examples = []
    for pid, label in rows:
        text = (features_dir / f"{pid}_text.txt").read_text(encoding="utf-8").rstrip("\n")
        seq = encode(text, vocab, cfg.max_len)
        feats = fix_length(load_features(features_dir / f"{pid}.dfmf"), cfg.target_frames)
        examples.append(Example(pid, seq.ids, seq.mask, feats.frames, label))
    return examples


def _vocab_size(features_dir) -> int:
    return load_vocab(Path(features_dir) / "vocab.txt").size


# ------------------------------------------------------------- training


def _batch_probs(model, batch: Batch) -> np.ndarray:
    if isinstance(model, TextTeacherModel):
        return model.predict_probs(batch.token_ids, batch.mask)
    if isinstance(model, AudioTeacherModel):
        return model.predict_probs(batch.mfcc)
    return model.predict_probs(batch.token_ids, batch.mask, batch.mfcc)


def _split_loss_acc(model, examples: list[Example], batch_size: int) -> tuple[float, float]:
    """Mean cross-entropy (natural log) and accuracy over a split."""
    ces, hits, n = 0.0, 0, 0
    for batch in make_batches(examples, batch_size):
        probs = _batch_probs(model, batch)
        p_true = np.maximum(probs[np.arange(len(batch.labels)), batch.labels], 1e-12)
        ces += float(-np.log(p_true).sum())
        hits += int((probs.argmax(axis=1) == batch.labels).sum())
        n += len(batch.labels)
    return ces / n, hits / n


def _write_log(path, header: str, rows: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(row + "\n")


def train_text_teacher(cfg: RunConfig, features_dir, out_dir) -> Path:
    """LoRA fine-tuning of the text encoder: base frozen, adapters + head
    trained with cross-entropy."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = load_split_examples(cfg, features_dir, "train")
    val = load_split_examples(cfg, features_dir, "validation")
    model = TextTeacherModel.build(_vocab_size(features_dir), cfg)
    opt = make_optimizer(cfg.optimizer_text, model.trainable_parameters(),
                         cfg.lr_text, cfg.weight_decay)
    rows = []
    for epoch in range(1, cfg.epochs_text + 1):
        rng = rng_for(cfg.seed, f"text-teacher-epoch-{epoch}")
        losses = []
        for batch in make_batches(train, cfg.batch_size, rng):
            loss = ce_loss_tensor(model.forward_logits(batch.token_ids, batch.mask),
                                  one_hot(batch.labels))
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val_loss, val_acc = _split_loss_acc(model, val, cfg.batch_size)
        rows.append(f"{epoch},{float(np.mean(losses))!r},{val_loss!r},{val_acc!r},{opt.lr!r}")
    _write_log(out_dir / "text_teacher_log.csv", "epoch,train_loss,val_loss,val_accuracy,lr", rows)
    path = out_dir / "text_teacher.ckpt"
    save_checkpoint(path, model.to_checkpoint())
    return path


def train_audio_teacher(cfg: RunConfig, features_dir, out_dir) -> Path:
    """BiLSTM audio classifier trained with cross-entropy and a
    reduce-on-plateau schedule on the validation loss."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = load_split_examples(cfg, features_dir, "train")
    val = load_split_examples(cfg, features_dir, "validation")
    model = AudioTeacherModel.build(cfg)
    opt = make_optimizer(cfg.optimizer_audio, model.trainable_parameters(),
                         cfg.lr_audio, cfg.weight_decay)
    sched = PlateauScheduler(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_min_lr)
    rows = []
    for epoch in range(1, cfg.epochs_audio + 1):
        rng = rng_for(cfg.seed, f"audio-teacher-epoch-{epoch}")
        losses = []
        for batch in make_batches(train, cfg.batch_size, rng):
            loss = ce_loss_tensor(model.forward_logits(batch.mfcc), one_hot(batch.labels))
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        val_loss, val_acc = _split_loss_acc(model, val, cfg.batch_size)
        opt.lr = sched.update(val_loss, opt.lr)
        rows.append(f"{epoch},{float(np.mean(losses))!r},{val_loss!r},{val_acc!r},{opt.lr!r}")
    _write_log(out_dir / "audio_teacher_log.csv", "epoch,train_loss,val_loss,val_accuracy,lr", rows)
    path = out_dir / "audio_teacher.ckpt"
    save_checkpoint(path, model.to_checkpoint())
    return path


class _RowCachedTeacher:
    """Memoizes a frozen teacher's per-example probabilities.

    Teachers process examples independently, so each row's output is keyed by
    its input bytes; across epochs the same examples reappear in different
    batch arrangements and hit the cache.
    """

    def __init__(self, model):
        self.model = model
        self._cache: dict = {}

    def predict_probs(self, *arrays, temperature: float = 1.0) -> np.ndarray:
        n = arrays[0].shape[0]
        keys = [
            (temperature,) + tuple(np.ascontiguousarray(a[i]).tobytes() for a in arrays)
            for i in range(n)
        ]
        miss = [i for i, k in enumerate(keys) if k not in self._cache]
        if miss:
            probs = self.model.predict_probs(*(a[miss] for a in arrays), temperature=temperature)
            for row, i in enumerate(miss):
                self._cache[keys[i]] = probs[row]
        return np.stack([self._cache[k] for k in keys])


def train_student(cfg: RunConfig, features_dir, text_ckpt, audio_ckpt, out_dir) -> Path:
    """Distill both frozen teachers into the fused student."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = load_split_examples(cfg, features_dir, "train")
    val = load_split_examples(cfg, features_dir, "validation")
    text_teacher = load_model(text_ckpt)
    audio_teacher = load_model(audio_ckpt)
    if not isinstance(text_teacher, TextTeacherModel) or not isinstance(audio_teacher, AudioTeacherModel):
        raise ValueError("teacher checkpoints must be a text teacher and an audio teacher")
    text_teacher.freeze_all()
    audio_teacher.freeze_all()
    teachers = (_RowCachedTeacher(text_teacher), _RowCachedTeacher(audio_teacher))
    student = StudentModel.build(_vocab_size(features_dir), cfg)
    dcfg = DistillConfig(cfg.alpha, cfg.teacher_mix_beta, cfg.temperature)
    opt = make_optimizer(cfg.optimizer_student, student.trainable_parameters(),
                         cfg.lr_student, cfg.weight_decay)
    rows = []
    for epoch in range(1, cfg.epochs_student + 1):
        rng = rng_for(cfg.seed, f"student-epoch-{epoch}")
        parts = []
        for batch in make_batches(train, cfg.batch_size, rng):
            parts.append(student_train_step(batch, teachers, student, dcfg, opt))
        kl = float(np.mean([b.kl_term for b in parts]))
        ce = float(np.mean([b.ce_term for b in parts]))
        total = float(np.mean([b.total for b in parts]))
        val_loss, val_acc = _split_loss_acc(student, val, cfg.batch_size)
        rows.append(f"{epoch},{kl!r},{ce!r},{total!r},{val_loss!r},{val_acc!r},{opt.lr!r}")
    _write_log(out_dir / "student_log.csv",
               "epoch,kl_term,ce_term,total,val_loss,val_accuracy,lr", rows)
    path = out_dir / "student.ckpt"
    save_checkpoint(path, student.to_checkpoint())
    return path


def quantize_pipeline(cfg: RunConfig, audio_ckpt, features_dir, out_dir) -> Path:
    """Quantization-aware fine-tuning of the audio teacher, then int8 export.

    Writes the quantized checkpoint plus ``quantization.txt`` reporting the
    float-vs-quantized prediction agreement on the validation split and the
    storage ratio.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(audio_ckpt)
    if not isinstance(model, AudioTeacherModel):
        raise ValueError(f"expected an audio-teacher checkpoint, got {model.kind!r}")
    train = load_split_examples(cfg, features_dir, "train")
    val = load_split_examples(cfg, features_dir, "validation")
    transform = make_fake_quant_transform(cfg.quant_scheme)
    opt = make_optimizer("adam", model.trainable_parameters(), cfg.lr_qat)
    for epoch in range(1, cfg.epochs_qat + 1):
        rng = rng_for(cfg.seed, f"qat-epoch-{epoch}")
        for batch in make_batches(train, cfg.batch_size, rng):
            loss = ce_loss_tensor(model.forward_logits(batch.mfcc, transform),
                                  one_hot(batch.labels))
            opt.zero_grad()
            loss.backward()
            opt.step()
    float_preds = _predictions(model, val, cfg.batch_size)
    quantize_model(model, cfg.quant_scheme)
    quant_preds = _predictions(model, val, cfg.batch_size)
    agreement = float(np.mean(float_preds == quant_preds))
    q_bytes, f_bytes = quantized_storage_bytes(model)
    path = out_dir / "audio_teacher_quantized.ckpt"
    save_checkpoint(path, model.to_checkpoint())
    with open(out_dir / "quantization.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write(f"agreement={agreement!r}\n")
        f.write(f"quantized_bytes={q_bytes}\n")
        f.write(f"float64_bytes={f_bytes}\n")
        f.write(f"storage_ratio={q_bytes / f_bytes!r}\n")
    return path


def _predictions(model, examples: list[Example], batch_size: int) -> np.ndarray:
    preds = []
    for batch in make_batches(examples, batch_size):
        preds.append(_batch_probs(model, batch).argmax(axis=1))
    return np.concatenate(preds)


# ------------------------------------------------------------- evaluation


def evaluate_model(cfg: RunConfig, ckpt_path, features_dir, split, out_dir) -> MetricsReport:
    """Run a checkpoint over a split; write metrics.txt, roc.csv, and (for a
    student) per-example fusion attention weights."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = load_model(ckpt_path)
    examples = load_split_examples(cfg, features_dir, split)
    preds, scores, labels = [], [], []
    attention_rows = []
    for batch in make_batches(examples, cfg.batch_size):
        if isinstance(model, StudentModel):
            logits, weights = model.forward_with_attention(batch.token_ids, batch.mask, batch.mfcc)
            probs = softmax_np(logits.data, axis=-1)
            for i, pid in enumerate(batch.ids):
                for h in range(weights.shape[1]):
                    attention_rows.append(
                        f"{pid},{h},{float(weights[i, h, 0])!r},{float(weights[i, h, 1])!r}"
                    )
        else:
            probs = _batch_probs(model, batch)
        preds.append(probs.argmax(axis=1))
        scores.append(probs[:, 1])
        labels.append(batch.labels)
    preds = np.concatenate(preds)
    scores = np.concatenate(scores)
    labels = np.concatenate(labels)
    report = compute_metrics(preds, labels)
    curve = None
    try:
        curve, auc = roc_auc(scores, labels)
        report.auc = auc
    except ValueError as err:
        logger.warning("skipping ROC: %s", err)
    emit_report(report, curve, out_dir)
    if attention_rows:
        with open(out_dir / "attention.csv", "w", encoding="utf-8", newline="\n") as f:
            f.write("participant_id,head,weight_text,weight_audio\n")
            for row in attention_rows:
                f.write(row + "\n")
    return report


# ------------------------------------------------------------- ablation


ABLATION_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def ablate(cfg: RunConfig, features_dir, text_ckpt, audio_ckpt, out_dir) -> Path:
    """Unimodal baselines plus the {single, multi}-head x alpha student grid,
    each trained and evaluated on the test split; one row per configuration."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []

    def add_row(name: str, report: MetricsReport):
        auc = repr(report.auc) if report.auc is not None else "nan"
        rows.append(
            f"{name},{report.accuracy!r},{report.precision_weighted!r},"
            f"{report.recall_weighted!r},{report.f1_weighted!r},{auc}"
        )

    for name, ckpt in (("text-teacher", text_ckpt), ("audio-teacher", audio_ckpt)):
        report = evaluate_model(cfg, ckpt, features_dir, "test", out_dir / name)
        add_row(name, report)
    for multi in (False, True):
        for alpha in ABLATION_ALPHAS:
            name = f"student-{'multi' if multi else 'single'}-alpha{alpha:g}"
            sub_cfg = replace(cfg, multi_head=multi, alpha=alpha)
            ckpt = train_student(sub_cfg, features_dir, text_ckpt, audio_ckpt, out_dir / name)
            report = evaluate_model(sub_cfg, ckpt, features_dir, "test", out_dir / name)
            add_row(name, report)
    table = out_dir / "ablation.csv"
    _write_log(table, "config,accuracy,precision_weighted,recall_weighted,f1_weighted,auc", rows)
    return table


# ------------------------------------------------------------- full run


def run_full(cfg: RunConfig, workdir) -> dict:
    """synth -> preprocess -> both teachers -> student -> evaluate, under one
    working directory. Returns paths and the final test reports."""
    workdir = Path(workdir)
    data_dir = workdir / "data"
    features_dir = workdir / "features"
    synth_generate(cfg.synth_n, cfg.seed, data_dir, cfg.synth_sample_rate)
    preprocess(cfg, data_dir, features_dir)
    text_ckpt = train_text_teacher(cfg, features_dir, workdir / "teachers")
    audio_ckpt = train_audio_teacher(cfg, features_dir, workdir / "teachers")
    student_ckpt = train_student(cfg, features_dir, text_ckpt, audio_ckpt, workdir / "student")
    report = evaluate_model(cfg, student_ckpt, features_dir, "test", workdir / "eval" / "student")
    text_report = evaluate_model(cfg, text_ckpt, features_dir, "test", workdir / "eval" / "text-teacher")
    audio_report = evaluate_model(cfg, audio_ckpt, features_dir, "test", workdir / "eval" / "audio-teacher")
    return {
        "data_dir": data_dir,
        "features_dir": features_dir,
        "text_ckpt": text_ckpt,
        "audio_ckpt": audio_ckpt,
        "student_ckpt": student_ckpt,
        "student_report": report,
        "text_report": text_report,
        "audio_report": audio_report,
        "eval_dir": workdir / "eval",
    }
