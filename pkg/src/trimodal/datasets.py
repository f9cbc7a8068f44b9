"""Corpus manifests, label mapping, fold construction, and synthetic corpus
generation.

A manifest is a versioned JSON file describing one corpus: utterance ids,
speakers, raw label payloads, and per-modality payloads (inline tokens or a
transcript file, a WAV path, a list of frame image paths) or precomputed
feature vectors that bypass extraction. Raw label payloads are recognized by
JSON type: a string is categorical, a list of numbers is annotator scores,
a list of strings is annotator emotion votes.

Splits come in three modes. Speaker-dependent k-fold shuffles utterances;
leave-one-speaker-out tests one speaker per fold; grouped speaker k-fold
shuffles speakers into k near-equal groups. Both speaker-aware modes
guarantee empty train/test speaker overlap in every fold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import AudioClip, read_wav, write_wav
from .errors import ConfigError, DataError
from .text import tokenize
from .visual import FrameSequence, read_pgm, write_pgm

MANIFEST_FORMAT = "trimodal-manifest"
MANIFEST_VERSION = 1

BINARY_SCHEME = "binary_sentiment"
EMOTION_SCHEME = "four_class_emotion"

BINARY_CLASSES = ("negative", "positive")
EMOTION_CLASSES = ("angry", "happy", "sad", "neutral")

SPEAKER_DEPENDENT_KFOLD = "speaker_dependent_kfold"
LEAVE_ONE_SPEAKER_OUT = "leave_one_speaker_out"
GROUPED_SPEAKER_KFOLD = "grouped_speaker_kfold"
SPLIT_MODES = (SPEAKER_DEPENDENT_KFOLD, LEAVE_ONE_SPEAKER_OUT, GROUPED_SPEAKER_KFOLD)
SPEAKER_INDEPENDENT_MODES = (LEAVE_ONE_SPEAKER_OUT, GROUPED_SPEAKER_KFOLD)


@dataclass
class Utterance:
    utterance_id: str
    speaker_id: str
    label: object
    tokens: list[str] | None = None
    transcript_path: str | None = None
    audio_path: str | None = None
    audio_vector: np.ndarray | None = None
    frames: list[str] | None = None
    face_boxes: list[tuple[int, int, int, int]] | None = None
    visual_vector: np.ndarray | None = None
    text_vector: np.ndarray | None = None

    def has_modality(self, modality: str) -> bool:
        if modality == "T":
            return self.tokens is not None or self.transcript_path is not None \
                or self.text_vector is not None
        if modality == "A":
            return self.audio_path is not None or self.audio_vector is not None
        if modality == "V":
            return self.frames is not None or self.visual_vector is not None
        raise ConfigError(f"unknown modality {modality!r}")


@dataclass
class DatasetManifest:
    name: str
    language: str
    label_scheme: str
    utterances: list[Utterance]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.label_scheme not in (BINARY_SCHEME, EMOTION_SCHEME):
            raise DataError(f"unknown label scheme {self.label_scheme!r}")
        seen = set()
        for u in self.utterances:
            if u.utterance_id in seen:
                raise DataError(f"duplicate utterance_id {u.utterance_id!r}")
            seen.add(u.utterance_id)
            if not u.speaker_id:
                raise DataError(f"{u.utterance_id}: empty speaker_id")
            if not any(u.has_modality(m) for m in ("T", "A", "V")):
                raise DataError(f"{u.utterance_id}: no modality payload")

    @property
    def class_names(self) -> tuple[str, ...]:
        return BINARY_CLASSES if self.label_scheme == BINARY_SCHEME else EMOTION_CLASSES

    def speakers(self) -> list[str]:
        return sorted({u.speaker_id for u in self.utterances})


def _vec(values) -> np.ndarray | None:
    return None if values is None else np.asarray(values, dtype=np.float64).reshape(-1)


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest {doc.get('format')!r}")
    utterances = []
    for entry in doc["utterances"]:
        utterances.append(Utterance(
            utterance_id=entry["utterance_id"],
            speaker_id=entry["speaker_id"],
            label=entry["label"],
            tokens=entry.get("tokens"),
            transcript_path=entry.get("transcript_path"),
            audio_path=entry.get("audio_path"),
            audio_vector=_vec(entry.get("audio_vector")),
            frames=entry.get("frames"),
            face_boxes=[tuple(b) for b in entry["face_boxes"]] if entry.get("face_boxes") else None,
            visual_vector=_vec(entry.get("visual_vector")),
            text_vector=_vec(entry.get("text_vector")),
        ))
    return DatasetManifest(
        name=doc["name"],
        language=doc.get("language", ""),
        label_scheme=doc["label_scheme"],
        utterances=utterances,
        root=path.parent,
    )


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    entries = []
    for u in manifest.utterances:
        entry: dict = {
            "utterance_id": u.utterance_id,
            "speaker_id": u.speaker_id,
            "label": u.label,
        }
        if u.tokens is not None:
            entry["tokens"] = list(u.tokens)
        if u.transcript_path is not None:
            entry["transcript_path"] = u.transcript_path
        if u.audio_path is not None:
            entry["audio_path"] = u.audio_path
        if u.audio_vector is not None:
            entry["audio_vector"] = u.audio_vector.tolist()
        if u.frames is not None:
            entry["frames"] = list(u.frames)
        if u.face_boxes is not None:
            entry["face_boxes"] = [list(b) for b in u.face_boxes]
        if u.visual_vector is not None:
            entry["visual_vector"] = u.visual_vector.tolist()
        if u.text_vector is not None:
            entry["text_vector"] = u.text_vector.tolist()
        entries.append(entry)
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "name": manifest.name,
        "language": manifest.language,
        "label_scheme": manifest.label_scheme,
        "utterances": entries,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def utterance_tokens(u: Utterance, root: Path) -> list[str]:
    if u.tokens is not None:
        return [t.lower() for t in u.tokens]
    if u.transcript_path is not None:
        try:
            text = (root / u.transcript_path).read_text()
        except OSError as e:
            raise DataError(f"{u.utterance_id}: cannot read transcript: {e}") from e
        return tokenize(text)
    raise DataError(f"{u.utterance_id}: no text payload")


def utterance_audio(u: Utterance, root: Path) -> AudioClip:
    if u.audio_path is None:
        raise DataError(f"{u.utterance_id}: no audio payload")
    return read_wav(root / u.audio_path)


def utterance_frames(u: Utterance, root: Path) -> FrameSequence:
    if u.frames is None:
        raise DataError(f"{u.utterance_id}: no frame payload")
    images = [read_pgm(root / p) for p in u.frames]
    return FrameSequence(images, u.face_boxes)


# ---------------------------------------------------------------------------
# label mapping


@dataclass
class LabeledUtterance:
    utterance: Utterance
    label: int

    @property
    def utterance_id(self) -> str:
        return self.utterance.utterance_id

    @property
    def speaker_id(self) -> str:
        return self.utterance.speaker_id


def _map_binary(u: Utterance) -> int | None:
    raw = u.label
    if isinstance(raw, str):
        low = raw.lower()
        if low == "positive":
            return 1
        if low == "negative":
            return 0
        if low == "neutral":
            return None
        raise DataError(f"{u.utterance_id}: unknown sentiment label {raw!r}")
    if isinstance(raw, (list, tuple)) and raw and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
    ):
        mean = float(np.mean(raw))
        if mean > 0:
            return 1
        if mean < 0:
            return 0
        return None  # exactly neutral, dropped
    raise DataError(f"{u.utterance_id}: unmappable sentiment payload {raw!r}")


def _map_emotion(u: Utterance) -> int | None:
    raw = u.label
    index = {name: i for i, name in enumerate(EMOTION_CLASSES)}
    if isinstance(raw, str):
        return index.get(raw.lower())  # outside the 4 target classes: dropped
    if isinstance(raw, (list, tuple)) and raw and all(isinstance(v, str) for v in raw):
        votes: dict[str, int] = {}
        for v in raw:
            votes[v.lower()] = votes.get(v.lower(), 0) + 1
        top = max(votes.values())
        winners = [e for e, c in votes.items() if c == top]
        if top < 2 or len(winners) != 1:
            return None  # no majority agreement
        return index.get(winners[0])
    raise DataError(f"{u.utterance_id}: unmappable emotion payload {raw!r}")


def map_labels(manifest: DatasetManifest) -> list[LabeledUtterance]:
    """Apply the corpus label convention, dropping utterances it excludes:
    neutral sentiment (categorical or zero-mean scores) and emotions without
    majority agreement or outside the four target classes."""
    mapper = _map_binary if manifest.label_scheme == BINARY_SCHEME else _map_emotion
    out = []
    for u in manifest.utterances:
        label = mapper(u)
        if label is not None:
            out.append(LabeledUtterance(u, label))
    return out


# ---------------------------------------------------------------------------
# splits


@dataclass
class SplitPlan:
    """Fold assignments; each fold is (train ids, test ids). In the
    speaker-aware modes no speaker appears on both sides of any fold."""

    mode: str
    folds: list[tuple[tuple[str, ...], tuple[str, ...]]]
    seed: int

    def verify(self, utterances: Sequence) -> None:
        """Check the partition and disjointness invariants against the
        utterance list the plan was built from."""
        speaker_of = {u.utterance_id: u.speaker_id for u in utterances}
        tested: list[str] = []
        for train_ids, test_ids in self.folds:
            tested.extend(test_ids)
            if set(train_ids) & set(test_ids):
                raise DataError("train and test ids overlap within a fold")
            if self.mode in SPEAKER_INDEPENDENT_MODES:
                train_spk = {speaker_of[i] for i in train_ids}
                test_spk = {speaker_of[i] for i in test_ids}
                if train_spk & test_spk:
                    raise DataError(f"speaker overlap {sorted(train_spk & test_spk)}")
        if sorted(tested) != sorted(speaker_of):
            raise DataError("folds do not test every utterance exactly once")


def make_splits(utterances: Sequence, mode: str, k: int, seed: int) -> SplitPlan:
    """Build fold assignments over items carrying utterance_id and
    speaker_id.

    leave_one_speaker_out ignores k and builds one fold per speaker.
    grouped_speaker_kfold shuffles speakers by seed and deals them
    round-robin into k groups. speaker_dependent_kfold shuffles utterances
    into k near-equal folds with no speaker constraint.
    """
    if mode not in SPLIT_MODES:
        raise ConfigError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")
    if not utterances:
        raise DataError("no utterances to split")
    ids = [u.utterance_id for u in utterances]
    speakers = sorted({u.speaker_id for u in utterances})
    by_speaker: dict[str, list[str]] = {s: [] for s in speakers}
    for u in utterances:
        by_speaker[u.speaker_id].append(u.utterance_id)

    rng = np.random.Generator(np.random.PCG64(seed))
    folds: list[tuple[tuple[str, ...], tuple[str, ...]]] = []

    if mode == LEAVE_ONE_SPEAKER_OUT:
        if len(speakers) < 2:
            raise DataError(f"leave-one-speaker-out needs >= 2 speakers, got {len(speakers)}")
        for s in speakers:
            test = tuple(by_speaker[s])
            train = tuple(i for i in ids if i not in set(test))
            folds.append((train, test))
    elif mode == GROUPED_SPEAKER_KFOLD:
        if k < 2:
            raise ConfigError(f"grouped k-fold needs k >= 2, got {k}")
        if k > len(speakers):
            raise DataError(f"k={k} exceeds {len(speakers)} speakers")
        order = [speakers[i] for i in rng.permutation(len(speakers))]
        groups: list[list[str]] = [[] for _ in range(k)]
        for i, s in enumerate(order):
            groups[i % k].append(s)
        for group in groups:
            test_set = set()
            for s in group:
                test_set.update(by_speaker[s])
            test = tuple(i for i in ids if i in test_set)
            train = tuple(i for i in ids if i not in test_set)
            folds.append((train, test))
    else:  # speaker-dependent utterance-level k-fold
        if k < 2:
            raise ConfigError(f"k-fold needs k >= 2, got {k}")
        if k > len(ids):
            raise DataError(f"k={k} exceeds {len(ids)} utterances")
        order = [ids[i] for i in rng.permutation(len(ids))]
        base, extra = divmod(len(order), k)
        folds_ids: list[list[str]] = []
        pos = 0
        for i in range(k):
            size = base + (1 if i < extra else 0)
            folds_ids.append(order[pos : pos + size])
            pos += size
        for test_list in folds_ids:
            test_set = set(test_list)
            test = tuple(i for i in ids if i in test_set)
            train = tuple(i for i in ids if i not in test_set)
            folds.append((train, test))

    plan = SplitPlan(mode=mode, folds=folds, seed=seed)
    plan.verify(utterances)
    return plan


def make_tuning_split(utterances: Sequence, fraction: float = 0.8,
                      seed: int = 0) -> tuple[list, list]:
    """Deterministic shuffled split of training material into a tuning
    train/validation pair; both sides are nonempty."""
    if len(utterances) < 2:
        raise DataError(f"tuning split needs >= 2 utterances, got {len(utterances)}")
    if not (0.0 < fraction < 1.0):
        raise ConfigError(f"fraction must be in (0, 1), got {fraction}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(utterances))
    cut = int(np.floor(len(utterances) * fraction))
    cut = min(max(cut, 1), len(utterances) - 1)
    train = [utterances[i] for i in order[:cut]]
    val = [utterances[i] for i in order[cut:]]
    return train, val


# ---------------------------------------------------------------------------
# synthetic corpora


@dataclass
class SynthSpec:
    """Controls for the synthetic corpus generator.

    separability sets, per modality, the probability that an utterance's
    payload carries its true class marker; an unmarked payload smears its
    signal parameter uniformly over the whole range, so 0 is pure noise and
    1 a perfect signal. speaker_confound is the probability that a marker
    is expressed in a speaker-specific form (its own token, its own
    pitch/band assignment), learnable only when that speaker was seen in
    training. token_prefix shifts the surface vocabulary and invert_markers
    reverses the class-to-level mapping of the audio and visual markers;
    together they emulate cross-corpus distribution shift.
    """

    name: str = "synth"
    n_speakers: int = 4
    utt_per_speaker: int = 8
    separability: tuple[float, float, float] = (0.8, 0.8, 0.8)
    speaker_confound: float = 0.0
    n_classes: int = 2
    seed: int = 0
    token_prefix: str = "en"
    sentence_len: int = 8
    marker_repeats: int = 2
    invert_markers: bool = False
    audio_base_hz: float = 100.0
    audio_step_hz: float = 80.0
    audio_seconds: float = 0.4
    sample_rate: int = 8000
    n_frames: int = 5
    frame_height: int = 40
    frame_width: int = 56

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ConfigError(f"n_speakers must be >= 2, got {self.n_speakers}")
        if self.utt_per_speaker < 1:
            raise ConfigError("utt_per_speaker must be >= 1")
        if self.n_classes not in (2, 4):
            raise ConfigError(f"n_classes must be 2 or 4, got {self.n_classes}")
        if len(self.separability) != 3 or any(not 0 <= s <= 1 for s in self.separability):
            raise ConfigError(f"separability must be three values in [0,1]")
        if not 0 <= self.speaker_confound <= 1:
            raise ConfigError("speaker_confound must be in [0,1]")

    @property
    def label_scheme(self) -> str:
        return BINARY_SCHEME if self.n_classes == 2 else EMOTION_SCHEME

    def to_dict(self) -> dict:
        out = dict(vars(self))
        out["separability"] = list(self.separability)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        kwargs = dict(d)
        if "separability" in kwargs:
            kwargs["separability"] = tuple(kwargs["separability"])
        unknown = set(kwargs) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown synthesis spec fields {sorted(unknown)}")
        return cls(**kwargs)


def _signal_class(rng, label: int, separability: float) -> int | None:
    """Discrete marker draw: the true class when informative, None (no
    marker at all) otherwise, so uninformative text never carries a
    coherent contradicting signal."""
    if rng.random() < separability:
        return label
    return None


def _signal_level(rng, label: int, separability: float, n_classes: int,
                  perm: np.ndarray | None) -> float:
    """Continuous class marker level in [0, n_classes - 1].

    Informative draws sit at the class's level (after any speaker-specific
    permutation); uninformative draws smear uniformly over the whole range,
    carrying no class information at all."""
    if rng.random() < separability:
        idx = label if perm is None else int(perm[label])
        return float(idx)
    return float(rng.uniform(0, n_classes - 1)) if n_classes > 1 else 0.0


def gen_synthetic(spec: SynthSpec, out_dir) -> DatasetManifest:
    """Emit a complete synthetic corpus (manifest, WAV clips, PGM frames)
    whose per-modality class signal strength follows the separability knobs.

    Every payload byte derives from spec.seed, so an identical spec
    regenerates identical files. Class markers: an indicative token in the
    sentence, the sine pitch of the clip, and the row of a bright band in
    the frames. Speaker style enters as per-speaker filler tokens, loudness,
    and background brightness; under speaker_confound the markers themselves
    become speaker-specific.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    class_names = BINARY_CLASSES if spec.n_classes == 2 else EMOTION_CLASSES

    # fixed per-speaker style and confounded marker assignments
    speaker_style = rng.uniform(0.0, 1.0, size=spec.n_speakers)
    speaker_audio_perm = [rng.permutation(spec.n_classes) for _ in range(spec.n_speakers)]
    speaker_visual_perm = [rng.permutation(spec.n_classes) for _ in range(spec.n_speakers)]

    sep_t, sep_a, sep_v = spec.separability
    utterances: list[Utterance] = []
    for spk in range(spec.n_speakers):
        speaker_id = f"spk{spk}"
        for j in range(spec.utt_per_speaker):
            uid = f"{spec.name}_u{spk:02d}_{j:03d}"
            label = j % spec.n_classes

            # text payload: fillers come from a pool shared by all speakers,
            # with a speaker-biased offset, so unseen test speakers produce
            # familiar tokens in unfamiliar proportions (style, not new words)
            cls_t = _signal_class(rng, label, sep_t)
            tokens = []
            if cls_t is not None:
                if rng.random() < spec.speaker_confound:
                    marker = f"{spec.token_prefix}_s{spk}c{cls_t}"
                else:
                    marker = f"{spec.token_prefix}_cls{cls_t}"
                tokens = [marker] * min(spec.marker_repeats, spec.sentence_len)
            while len(tokens) < spec.sentence_len:
                idx = (2 * spk + int(rng.integers(6))) % 8
                tokens.append(f"{spec.token_prefix}_w{idx}")
            rng.shuffle(tokens)

            # audio payload: a vibrato sine with slow amplitude modulation
            # (so every descriptor channel has within-utterance variance and
            # survives standardization) whose voiced fraction, set by a
            # near-silent tail, carries the class level
            perm_a = speaker_audio_perm[spk] if rng.random() < spec.speaker_confound else None
            level_a = _signal_level(rng, label, sep_a, spec.n_classes, perm_a)
            if spec.invert_markers:
                level_a = (spec.n_classes - 1) - level_a
            freq = spec.audio_base_hz + spec.audio_step_hz * level_a
            t = np.arange(int(spec.audio_seconds * spec.sample_rate)) / spec.sample_rate
            freq_t = freq * (1.0 + 0.06 * np.sin(2 * np.pi * 3.0 * t))
            phase = 2 * np.pi * np.cumsum(freq_t) / spec.sample_rate
            amp = (0.25 + 0.1 * speaker_style[spk]) * (1.0 + 0.1 * (rng.random() - 0.5))
            tremolo = 1.0 + 0.3 * np.sin(2 * np.pi * 1.5 * t + rng.uniform(0, 2 * np.pi))
            wave_samples = amp * tremolo * np.sin(phase)
            wave_samples += rng.normal(0.0, 0.005, size=t.size)
            voiced_fraction = 1.0 - 0.5 * level_a / max(1, spec.n_classes - 1)
            wave_samples[int(voiced_fraction * t.size):] = 0.0
            clip = AudioClip(np.clip(wave_samples, -1, 1), spec.sample_rate)
            wav_name = f"{uid}.wav"
            write_wav(out_dir / wav_name, clip)

            # visual payload: bright band at a class-determined row
            perm_v = speaker_visual_perm[spk] if rng.random() < spec.speaker_confound else None
            level_v = _signal_level(rng, label, sep_v, spec.n_classes, perm_v)
            if spec.invert_markers:
                level_v = (spec.n_classes - 1) - level_v
            band_h = spec.frame_height // (spec.n_classes * 2)
            row = int(round(band_h // 2 + level_v * (spec.frame_height // spec.n_classes)))
            row = min(row, spec.frame_height - band_h)
            frame_names = []
            base = 0.05 + 0.05 * speaker_style[spk]
            for fidx in range(spec.n_frames):
                img = base + rng.uniform(0.0, 0.05, size=(spec.frame_height, spec.frame_width))
                img[row : row + band_h, 4 : spec.frame_width - 4] = 0.9
                name = f"{uid}_f{fidx}.pgm"
                write_pgm(out_dir / name, np.clip(img, 0, 1))
                frame_names.append(name)

            if spec.n_classes == 2:
                raw_label = class_names[label]
            else:
                raw_label = [class_names[label]] * 3  # unanimous votes
            utterances.append(Utterance(
                utterance_id=uid,
                speaker_id=speaker_id,
                label=raw_label,
                tokens=tokens,
                audio_path=wav_name,
                frames=frame_names,
            ))

    manifest = DatasetManifest(
        name=spec.name,
        language=spec.token_prefix,
        label_scheme=spec.label_scheme,
        utterances=utterances,
        root=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
