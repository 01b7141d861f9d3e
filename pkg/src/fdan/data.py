"""Labeled feature domains: file formats, synthetic generation and splitting.

Binary feature file layout (all integers little-endian)::

    "FDFX"  magic, 4 ASCII bytes
    u32     version (1)
    u32     n, d_in, C
    u8      modality tag (0 visual, 1 acoustic)
    f32     n x d_in features, row-major
    u32     n class indices in [0, C)

CSV files hold one sample per row: ``d_in`` reals followed by an integer
class index, with an optional header line.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, FormatError, LabelError, ParameterError
from .fileutil import atomic_write
from .kernels import check_one_hot

MAGIC = b"FDFX"
VERSION = 1
MODALITIES = ("visual", "acoustic")
_HEADER = struct.Struct("<4sIIIIB")


class LengthError(FormatError):
    pass


@dataclass
class FeatureDomain:
    features: np.ndarray
    labels: np.ndarray
    class_names: list[str] = field(default_factory=list)
    modality: str = "visual"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ParameterError("features and labels must be 2-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ParameterError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")
        if self.modality not in MODALITIES:
            raise ParameterError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        check_one_hot(self.labels)
        if not self.class_names:
            self.class_names = [str(c) for c in range(self.labels.shape[1])]
        if len(self.class_names) != self.labels.shape[1]:
            raise ParameterError(
                f"{len(self.class_names)} class names for {self.labels.shape[1]} classes")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> int:
        return self.labels.shape[1]

    @property
    def label_indices(self) -> np.ndarray:
        return self.labels.argmax(axis=1)

    def subset(self, idx) -> FeatureDomain:
        return FeatureDomain(self.features[idx], self.labels[idx],
                             list(self.class_names), self.modality)

    @classmethod
    def from_indices(cls, features, indices, classes: int,
                     modality: str = "visual", class_names=None) -> FeatureDomain:
        return cls(features, one_hot(indices, classes), list(class_names or []), modality)


def one_hot(indices, classes: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    bad = np.flatnonzero((indices < 0) | (indices >= classes))
    if bad.size:
        i = int(bad[0])
        raise LabelError(f"row {i}: label {indices[i]} outside [0, {classes})")
    out = np.zeros((indices.size, classes))
    out[np.arange(indices.size), indices] = 1.0
    return out


# -- binary format ----------------------------------------------------------

def feature_file_bytes(domain: FeatureDomain) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, domain.n, domain.d_in, domain.classes,
                        MODALITIES.index(domain.modality))
    feats = np.ascontiguousarray(domain.features, dtype="<f4").tobytes()
    labels = domain.label_indices.astype("<u4").tobytes()
    return head + feats + labels


def parse_feature_file(blob: bytes) -> FeatureDomain:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise FormatError("bad magic: not an FDFX feature file")
    if len(blob) < _HEADER.size:
        raise LengthError(f"file truncated: {len(blob)} bytes, header needs {_HEADER.size}")
    _, version, n, d, C, tag = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise FormatError(f"unsupported feature file version {version}")
    if tag >= len(MODALITIES):
        raise FormatError(f"unknown modality tag {tag}")
    if C < 1:
        raise FormatError("class count must be >= 1")
    expected = _HEADER.size + 4 * n * d + 4 * n
    if len(blob) != expected:
        raise LengthError(f"expected {expected} bytes for n={n}, d={d}, got {len(blob)}")
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_HEADER.size)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=_HEADER.size + 4 * n * d)
    return FeatureDomain(feats.astype(np.float64).reshape(n, d),
                         one_hot(labels.astype(np.int64), C), [], MODALITIES[tag])


def write_feature_file(domain: FeatureDomain, path) -> None:
    atomic_write(path, feature_file_bytes(domain))


def read_feature_file(path) -> FeatureDomain:
    with open(path, "rb") as fh:
        return parse_feature_file(fh.read())


# -- CSV --------------------------------------------------------------------

def read_csv(path, modality: str = "visual", classes: int | None = None) -> FeatureDomain:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header
    if not rows:
        raise FormatError(f"{path}: no samples")
    width = len(rows[0])
    if width < 2:
        raise FormatError(f"{path}: rows need at least one feature and a label")
    feats, labels = [], []
    for i, r in enumerate(rows):
        if len(r) != width:
            raise FormatError(f"{path}: row {i} has {len(r)} fields, expected {width}")
        try:
            feats.append([float(c) for c in r[:-1]])
            lab = float(r[-1])
        except ValueError as exc:
            raise FormatError(f"{path}: row {i}: {exc}") from None
        if lab != int(lab):
            raise LabelError(f"row {i}: label {r[-1]!r} is not an integer")
        labels.append(int(lab))
    C = classes if classes is not None else max(labels) + 1
    return FeatureDomain.from_indices(np.array(feats), labels, C, modality)


def write_csv(domain: FeatureDomain, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{j}" for j in range(domain.d_in)] + ["label"])
    for x, y in zip(domain.features, domain.label_indices):
        w.writerow([repr(float(v)) for v in x] + [int(y)])
    atomic_write(path, buf.getvalue())


def load_feature_file(path, modality: str | None = None,
                      classes: int | None = None) -> FeatureDomain:
    """Read a binary feature file, or a CSV file when the name ends in .csv.

    For binary files ``modality`` is only checked against the stored tag.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return read_csv(path, modality or "visual", classes)
    dom = read_feature_file(path)
    if classes is not None and classes != dom.classes:
        raise ConfigError(f"{path}: has {dom.classes} classes, expected {classes}")
    return dom


def concat_domains(domains: Sequence[FeatureDomain]) -> FeatureDomain:
    """Stack several files of one modality into a single source domain."""
    if not domains:
        raise ConfigError("no domains to concatenate")
    first = domains[0]
    for dom in domains[1:]:
        if dom.class_names != first.class_names:
            raise ConfigError(
                f"class lists differ: {first.class_names} vs {dom.class_names}")
        if dom.d_in != first.d_in:
            raise ConfigError(f"feature widths differ: {first.d_in} vs {dom.d_in}")
        if dom.modality != first.modality:
            raise ConfigError(f"modalities differ: {first.modality} vs {dom.modality}")
    return FeatureDomain(np.vstack([d.features for d in domains]),
                         np.vstack([d.labels for d in domains]),
                         list(first.class_names), first.modality)


def stratified_split(domain: FeatureDomain, train_fraction: float = 0.8,
                     seed: int = 0) -> tuple[FeatureDomain, FeatureDomain]:
    """Per-class seeded split into (train, test).

    Each class with support s sends round((1 - train_fraction) * s) samples to
    test, at least one, and keeps at least one for training when s >= 2.
    """
    if not 0 < train_fraction < 1:
        raise ConfigError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    labels = domain.label_indices
    test_idx = []
    for c in range(domain.classes):
        members = np.flatnonzero(labels == c)
        s = members.size
        if s == 0:
            continue
        n_test = max(1, int(np.floor((1.0 - train_fraction) * s + 0.5)))
        if s >= 2:
            n_test = min(n_test, s - 1)
        test_idx.extend(rng.permutation(members)[:n_test].tolist())
    is_test = np.zeros(domain.n, dtype=bool)
    is_test[test_idx] = True
    return domain.subset(np.flatnonzero(~is_test)), domain.subset(np.flatnonzero(is_test))


# -- synthetic domains ------------------------------------------------------

@dataclass
class SynthSpec:
    classes: int = 3
    d_in: int = 16
    samples_per_class: int = 60
    center_scale: float = 2.0
    rotation: float = 0.5
    shift: float = 2.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError("synthetic spec needs at least 2 classes")
        if self.samples_per_class < 2 or self.d_in < 2:
            raise ConfigError("synthetic spec needs d_in >= 2 and >= 2 samples per class")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")


def class_centers(spec: SynthSpec) -> np.ndarray:
    """Scaled simplex vertices: class c sits at ``scale * e_c`` (coordinates
    wrap around when there are more classes than dimensions)."""
    centers = np.zeros((spec.classes, spec.d_in))
    for c in range(spec.classes):
        centers[c, c % spec.d_in] += spec.center_scale
    return centers


def synth_domains(spec: SynthSpec) -> tuple[FeatureDomain, FeatureDomain]:
    """A visual and an acoustic domain with the same classes and a rotation
    plus shift between them."""
    rng = np.random.default_rng(spec.seed)
    centers = class_centers(spec)
    c, s = np.cos(spec.rotation), np.sin(spec.rotation)
    rot = np.eye(spec.d_in)
    rot[:2, :2] = [[c, -s], [s, c]]
    offset = np.full(spec.d_in, spec.shift / np.sqrt(spec.d_in))
    acoustic_centers = centers @ rot.T + offset

    labels = np.repeat(np.arange(spec.classes), spec.samples_per_class)
    n = labels.size
    xv = centers[labels] + spec.noise_std * rng.standard_normal((n, spec.d_in))
    xa = acoustic_centers[labels] + spec.noise_std * rng.standard_normal((n, spec.d_in))
    visual = FeatureDomain.from_indices(xv, labels, spec.classes, "visual")
    acoustic = FeatureDomain.from_indices(xa, labels, spec.classes, "acoustic")
    return visual, acoustic
