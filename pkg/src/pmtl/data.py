"""Dataset ingestion, alignment, scaling, batching, and synthetic data.

File contracts
--------------
features CSV      header ``id,f0,...,f{d-1}``, UTF-8, ``.`` decimal point.
features binary   magic ``PMTL``, version u16, n u32, d u32, then per id a
                  u16 byte length + UTF-8 bytes, then n*d float64 values
                  row-major; everything little-endian.
labels CSV        header ``id,Amusement,...,Triumph,age,country`` with the
                  ten emotion columns in the canonical order below; emotion
                  values in [0, 1], age an integer, country one of the four
                  exact tokens in COUNTRIES.
predictions CSV   same columns as labels, but age may be fractional.

Sample ids are unique; the canonical ordering everywhere is lexicographic
by id, so results never depend on file row order.
"""

from __future__ import annotations

import csv
import math
import struct
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, DataFormatError, ShapeError
from .rng import RngStream

EMOTIONS = (
    "Amusement", "Awe", "Awkwardness", "Distress", "Excitement",
    "Fear", "Horror", "Sadness", "Surprise", "Triumph",
)
COUNTRIES = ("USA", "China", "SouthAfrica", "Venezuela")
COUNTRY_TO_ID = {name: i for i, name in enumerate(COUNTRIES)}

LABEL_HEADER = ("id",) + EMOTIONS + ("age", "country")

FEATURE_MAGIC = b"PMTL"
FEATURE_VERSION = 1

STANDARDIZE_MODES = ("none", "zscore", "minmax")


def fmt_float(x: float) -> str:
    """Shortest decimal string that round-trips the float64 exactly."""
    return repr(float(x))


# -- tables -----------------------------------------------------------------


@dataclass(frozen=True)
class FeatureTable:
    ids: tuple[str, ...]
    features: np.ndarray  # (n, d) float64

    def __post_init__(self):
        if len(self.ids) != self.features.shape[0]:
            raise ShapeError("FeatureTable", (len(self.ids),), self.features.shape)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class LabelTable:
    ids: tuple[str, ...]
    emotion: np.ndarray   # (n, 10) in [0, 1]
    age: np.ndarray       # (n,) int64 years
    country: np.ndarray   # (n,) int64 class ids

    def __len__(self) -> int:
        return len(self.ids)

    def index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.ids)}


@dataclass(frozen=True)
class AgeScaler:
    """Standardization of age targets, fit on training labels only."""

    mean: float
    std: float

    def scale(self, years):
        return (np.asarray(years, dtype=np.float64) - self.mean) / self.std

    def descale(self, scaled):
        return np.asarray(scaled, dtype=np.float64) * self.std + self.mean

    @classmethod
    def fit(cls, years) -> "AgeScaler":
        years = np.asarray(years, dtype=np.float64)
        std = float(years.std())
        return cls(mean=float(years.mean()), std=std if std > 0.0 else 1.0)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine transform fit on the train split.

    zscore: (x - mean) / std; minmax: maps the train range onto [-1, 1].
    Zero-spread features are centered but not scaled and recorded in
    ``degenerate_columns``.
    """

    mode: str
    center: np.ndarray
    scale: np.ndarray
    degenerate_columns: tuple[int, ...] = ()

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale

    @classmethod
    def fit(cls, train_x: np.ndarray, mode: str) -> "Standardizer":
        if mode not in STANDARDIZE_MODES:
            raise ValueError(f"standardize mode must be one of {STANDARDIZE_MODES}")
        d = train_x.shape[1]
        if mode == "none":
            return cls(mode, np.zeros(d), np.ones(d))
        if mode == "zscore":
            center = train_x.mean(axis=0)
            spread = train_x.std(axis=0)
        else:  # minmax onto [-1, 1]
            lo = train_x.min(axis=0)
            hi = train_x.max(axis=0)
            center = (lo + hi) / 2.0
            spread = (hi - lo) / 2.0
        degenerate = spread == 0.0
        scale = np.where(degenerate, 1.0, spread)
        return cls(mode, center, scale, tuple(np.nonzero(degenerate)[0].tolist()))


@dataclass(frozen=True)
class SplitPart:
    """One aligned partition: features plus (optionally) labels."""

    ids: tuple[str, ...]
    x: np.ndarray
    y_emotion: np.ndarray | None
    y_age: np.ndarray | None
    y_country: np.ndarray | None

    @property
    def labeled(self) -> bool:
        return self.y_emotion is not None

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class SplitDataset:
    train: SplitPart
    val: SplitPart
    test: SplitPart | None
    age_scaler: AgeScaler
    standardizer: Standardizer | None = None

    @property
    def dim(self) -> int:
        return self.train.x.shape[1]


# -- CSV / binary loaders ---------------------------------------------------


def _parse_float(token: str, path, line_no, col):
    try:
        v = float(token)
    except ValueError:
        raise DataFormatError(f"column {col!r}: cannot parse {token!r} as float", path, line_no)
    if not math.isfinite(v):
        raise DataFormatError(f"column {col!r}: non-finite value {token!r}", path, line_no)
    return v


def load_features_csv(path) -> FeatureTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _read_features_csv(fh, str(path))


def _read_features_csv(fh, path) -> FeatureTable:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataFormatError("empty file", path, 1)
    if not header or header[0] != "id":
        raise DataFormatError(f"first header column must be 'id', got {header[:1]}", path, 1)
    d = len(header) - 1
    expected = ["id"] + [f"f{j}" for j in range(d)]
    if header != expected:
        raise DataFormatError(f"header must be id,f0..f{d - 1}", path, 1)

    ids: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise DataFormatError(f"expected {d + 1} fields, got {len(row)}", path, line_no)
        sid = row[0]
        if sid in seen:
            raise DataFormatError(f"duplicate id {sid!r}", path, line_no)
        seen.add(sid)
        ids.append(sid)
        rows.append([_parse_float(tok, path, line_no, f"f{j}") for j, tok in enumerate(row[1:])])
    features = np.array(rows, dtype=np.float64).reshape(len(ids), d)
    return FeatureTable(ids=tuple(ids), features=features)


def save_features_csv(table: FeatureTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{j}" for j in range(table.dim)])
        for sid, row in zip(table.ids, table.features):
            writer.writerow([sid] + [fmt_float(v) for v in row])


def save_features_binary(table: FeatureTable, path) -> None:
    n, d = table.features.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<HII", FEATURE_VERSION, n, d))
        for sid in table.ids:
            raw = sid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise DataError(f"id too long for binary format: {sid[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(np.ascontiguousarray(table.features, dtype="<f8").tobytes())


def load_features_binary(path) -> FeatureTable:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != FEATURE_MAGIC:
        raise DataFormatError(f"bad magic {blob[:4]!r}, expected {FEATURE_MAGIC!r}", path)
    try:
        version, n, d = struct.unpack_from("<HII", blob, 4)
    except struct.error:
        raise DataFormatError("truncated header", path)
    if version != FEATURE_VERSION:
        raise DataFormatError(f"unsupported version {version}", path)
    offset = 4 + 10
    ids = []
    seen = set()
    for _ in range(n):
        try:
            (length,) = struct.unpack_from("<H", blob, offset)
        except struct.error:
            raise DataFormatError("truncated id table", path)
        offset += 2
        if len(blob) < offset + length:
            raise DataFormatError("truncated id table", path)
        try:
            sid = blob[offset:offset + length].decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError("invalid UTF-8 in id table", path)
        offset += length
        if sid in seen:
            raise DataFormatError(f"duplicate id {sid!r}", path)
        seen.add(sid)
        ids.append(sid)
    payload = blob[offset:]
    expected = n * d * 8
    if len(payload) != expected:
        raise DataFormatError(f"payload is {len(payload)} bytes, expected {expected}", path)
    features = np.frombuffer(payload, dtype="<f8").reshape(n, d).astype(np.float64)
    if not np.isfinite(features).all():
        raise DataFormatError("non-finite feature values", path)
    return FeatureTable(ids=tuple(ids), features=features)


def load_features(path) -> FeatureTable:
    """Dispatch on content: binary blob if the magic matches, else CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == FEATURE_MAGIC:
        return load_features_binary(path)
    return load_features_csv(path)


def load_labels_csv(path) -> LabelTable:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", path, 1)
        if tuple(header) != LABEL_HEADER:
            raise DataFormatError(f"header must be {','.join(LABEL_HEADER)}", path, 1)
        ids, emotions, ages, countries = [], [], [], []
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise DataFormatError(
                    f"expected {len(LABEL_HEADER)} fields, got {len(row)}", path, line_no
                )
            sid = row[0]
            if sid in seen:
                raise DataFormatError(f"duplicate id {sid!r}", path, line_no)
            seen.add(sid)
            emo = [_parse_float(tok, path, line_no, name) for tok, name in zip(row[1:11], EMOTIONS)]
            bad = [v for v in emo if not 0.0 <= v <= 1.0]
            if bad:
                raise DataFormatError(f"emotion value {bad[0]} outside [0, 1]", path, line_no)
            try:
                age = int(row[11])
            except ValueError:
                raise DataFormatError(f"age {row[11]!r} is not an integer", path, line_no)
            if row[12] not in COUNTRY_TO_ID:
                raise DataFormatError(
                    f"country {row[12]!r} not in {COUNTRIES}", path, line_no
                )
            ids.append(sid)
            emotions.append(emo)
            ages.append(age)
            countries.append(COUNTRY_TO_ID[row[12]])
    return LabelTable(
        ids=tuple(ids),
        emotion=np.array(emotions, dtype=np.float64).reshape(len(ids), len(EMOTIONS)),
        age=np.array(ages, dtype=np.int64),
        country=np.array(countries, dtype=np.int64),
    )


def save_labels_csv(table: LabelTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_HEADER)
        for i, sid in enumerate(table.ids):
            writer.writerow(
                [sid]
                + [fmt_float(v) for v in table.emotion[i]]
                + [str(int(table.age[i])), COUNTRIES[int(table.country[i])]]
            )


def save_predictions_csv(ids, emotion, age_years, country_ids, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LABEL_HEADER)
        for i, sid in enumerate(ids):
            writer.writerow(
                [sid]
                + [fmt_float(v) for v in emotion[i]]
                + [fmt_float(age_years[i]), COUNTRIES[int(country_ids[i])]]
            )


def load_predictions_csv(path):
    """Predictions file: same columns as labels but fractional age allowed.

    Returns (ids, emotion (n,10), age_years (n,), country_ids (n,)).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", path, 1)
        if tuple(header) != LABEL_HEADER:
            raise DataFormatError(f"header must be {','.join(LABEL_HEADER)}", path, 1)
        ids, emotions, ages, countries = [], [], [], []
        seen = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(LABEL_HEADER):
                raise DataFormatError(
                    f"expected {len(LABEL_HEADER)} fields, got {len(row)}", path, line_no
                )
            sid = row[0]
            if sid in seen:
                raise DataFormatError(f"duplicate id {sid!r}", path, line_no)
            seen.add(sid)
            ids.append(sid)
            emotions.append([_parse_float(t, path, line_no, c) for t, c in zip(row[1:11], EMOTIONS)])
            ages.append(_parse_float(row[11], path, line_no, "age"))
            if row[12] not in COUNTRY_TO_ID:
                raise DataFormatError(f"country {row[12]!r} not in {COUNTRIES}", path, line_no)
            countries.append(COUNTRY_TO_ID[row[12]])
    return (
        tuple(ids),
        np.array(emotions, dtype=np.float64).reshape(len(ids), len(EMOTIONS)),
        np.array(ages, dtype=np.float64),
        np.array(countries, dtype=np.int64),
    )


# -- joining and scaling ----------------------------------------------------


def build_part(features: FeatureTable, labels: LabelTable | None, split: str,
                require_labels: bool) -> SplitPart:
    order = np.argsort(np.array(features.ids, dtype=object))
    ids = tuple(features.ids[i] for i in order)
    x = features.features[order]
    label_index = labels.index() if labels is not None else {}
    missing = [sid for sid in ids if sid not in label_index]
    if missing:
        if require_labels:
            preview = ", ".join(missing[:10])
            more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
            raise DataError(f"{split} split: no label for ids [{preview}]{more}")
        return SplitPart(ids=ids, x=x, y_emotion=None, y_age=None, y_country=None)
    rows = np.array([label_index[sid] for sid in ids], dtype=np.int64)
    return SplitPart(
        ids=ids,
        x=x,
        y_emotion=labels.emotion[rows],
        y_age=labels.age[rows].astype(np.float64),
        y_country=labels.country[rows],
    )


def join_splits(features: dict[str, FeatureTable], labels: LabelTable) -> SplitDataset:
    """Align features with labels per split, in lexicographic id order.

    Train and val ids must all be labeled. A test split is optional and
    may be entirely unlabeled (prediction-only); the age scaler is fit on
    the train labels.
    """
    for required in ("train", "val"):
        if required not in features:
            raise DataError(f"missing {required!r} feature table")
    dims = {name: tbl.dim for name, tbl in features.items()}
    if len(set(dims.values())) != 1:
        raise DataError(f"feature dimensionality differs across splits: {dims}")
    counts = Counter(sid for tbl in features.values() for sid in tbl.ids)
    dup = sorted(sid for sid, c in counts.items() if c > 1)
    if dup:
        raise DataError(f"splits share ids: {dup[:10]}")

    train = build_part(features["train"], labels, "train", require_labels=True)
    val = build_part(features["val"], labels, "val", require_labels=True)
    test = None
    if "test" in features:
        test = build_part(features["test"], labels, "test", require_labels=False)
    return SplitDataset(
        train=train, val=val, test=test, age_scaler=AgeScaler.fit(train.y_age)
    )


def standardize(ds: SplitDataset, mode: str) -> SplitDataset:
    """Fit feature standardization on the train split and apply everywhere."""
    if len(ds.train) == 0:
        raise DataError("cannot standardize: empty train split")
    std = Standardizer.fit(ds.train.x, mode)

    def apply(part: SplitPart | None):
        if part is None:
            return None
        return replace(part, x=std.apply(part.x))

    return replace(ds, train=apply(ds.train), val=apply(ds.val), test=apply(ds.test),
                   standardizer=std)


def batches(n: int, batch_size: int, rng: RngStream) -> list[np.ndarray]:
    """Shuffled minibatch index lists for one epoch; the last batch may be
    short. A batch size larger than n yields a single full batch."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# -- synthetic data ---------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Planted-structure dataset: all three label sets are monotone
    functions of a shared low-rank latent, so they are learnable from the
    features by construction."""

    n_train: int = 2000
    n_val: int = 500
    n_test: int = 0
    dim: int = 64
    rank: int = 8
    seed: int = 0
    feature_noise: float = 0.05
    emotion_noise: float = 0.1
    age_noise: float = 0.5
    country_noise: float = 0.3

    def __post_init__(self):
        if self.rank > self.dim:
            raise ValueError(f"rank {self.rank} exceeds dim {self.dim}")
        if min(self.n_train, self.n_val) < 2 or self.n_test < 0:
            raise ValueError("need n_train, n_val >= 2 and n_test >= 0")
        for name in ("feature_noise", "emotion_noise", "age_noise", "country_noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_train": self.n_train, "n_val": self.n_val, "n_test": self.n_test,
            "dim": self.dim, "rank": self.rank, "seed": self.seed,
            "feature_noise": self.feature_noise, "emotion_noise": self.emotion_noise,
            "age_noise": self.age_noise, "country_noise": self.country_noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)


AGE_MIN, AGE_MAX = 20, 39


def synth_tables(spec: SynthSpec) -> tuple[dict[str, FeatureTable], LabelTable]:
    """Generate per-split feature tables and one combined label table.

    Per sample: latent z ~ N(0, I_rank); features = z A + noise. Emotion is
    a sigmoid of z W_e (plus pre-squash noise, clipped into [0, 1]); age is
    an affine readout of z rounded and clamped into [20, 39]; country is
    the argmax of four noisy linear scores.
    """
    rng = RngStream(spec.seed)
    r, d = spec.rank, spec.dim
    mix = rng.normal_matrix(r, d) / math.sqrt(r)
    w_emotion = rng.normal_matrix(r, len(EMOTIONS)) * 1.2
    w_age = rng.normal(r) / math.sqrt(r)
    w_country = rng.normal_matrix(r, len(COUNTRIES)) * 1.5

    features: dict[str, FeatureTable] = {}
    ids_all: list[str] = []
    emotion_all, age_all, country_all = [], [], []
    counts = (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test))
    for split, n in counts:
        if n == 0:
            continue
        z = rng.normal_matrix(n, r)
        x = z @ mix + spec.feature_noise * rng.normal_matrix(n, d)
        emo_logits = z @ w_emotion + spec.emotion_noise * rng.normal_matrix(n, len(EMOTIONS))
        emotion = np.clip(1.0 / (1.0 + np.exp(-emo_logits)), 0.0, 1.0)
        age_raw = 29.5 + 4.5 * (z @ w_age) + spec.age_noise * rng.normal(n)
        age = np.clip(np.round(age_raw), AGE_MIN, AGE_MAX).astype(np.int64)
        scores = z @ w_country + spec.country_noise * rng.normal_matrix(n, len(COUNTRIES))
        country = np.argmax(scores, axis=1).astype(np.int64)

        ids = tuple(f"{split}_{i:05d}" for i in range(n))
        features[split] = FeatureTable(ids=ids, features=x)
        ids_all.extend(ids)
        emotion_all.append(emotion)
        age_all.append(age)
        country_all.append(country)

    labels = LabelTable(
        ids=tuple(ids_all),
        emotion=np.concatenate(emotion_all, axis=0),
        age=np.concatenate(age_all),
        country=np.concatenate(country_all),
    )
    return features, labels


def synth_dataset(spec: SynthSpec) -> SplitDataset:
    features, labels = synth_tables(spec)
    return join_splits(features, labels)
