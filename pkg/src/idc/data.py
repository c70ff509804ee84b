"""Datasets, synthetic domain-shift generation, and file persistence.

A dataset is a flat list of records, each a labeled source sample or an
unlabeled target sample. Target ground-truth labels, when known, live in a
separate evaluation-only mapping so nothing on the training path can see
them. Two file formats are owned here: the embedding CSV (the public data
contract, also produced by external feature exporters) and the JSON model
file.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    CorruptFile,
    DimensionMismatch,
    DuplicateId,
    FormatError,
    InvalidSpec,
    LabelOutOfRange,
    MissingEvalLabels,
    VersionMismatch,
)
from .memory import MemoryBankSet
from .nets import DenseLayer, Mlp
from .seeding import rng_stream
from .training import TrainConfig, TrainedModel

EMBEDDINGS_MAGIC = "idc-embeddings"
EMBEDDINGS_VERSION = "v1"
MODEL_FORMAT_VERSION = 1

DOMAIN_SOURCE = "source"
DOMAIN_TARGET = "target"


@dataclass
class SampleRecord:
    """One sample; target records always carry the -1 label sentinel."""

    id: str
    domain: str
    label: int
    feature: np.ndarray


class Dataset:
    """Immutable-by-convention container of samples plus hidden eval labels."""

    def __init__(self, records, n_classes: int, eval_labels=None):
        if n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        self.n_classes = int(n_classes)
        self.records = list(records)
        self._eval_labels = dict(eval_labels or {})
        self._by_id = {}
        for rec in self.records:
            if not rec.id or "," in rec.id or "\n" in rec.id:
                raise ValueError(f"sample id {rec.id!r} is empty or not CSV-safe")
            if rec.id in self._by_id:
                raise DuplicateId(f"duplicate sample id {rec.id!r}")
            if rec.domain not in (DOMAIN_SOURCE, DOMAIN_TARGET):
                raise ValueError(f"unknown domain {rec.domain!r}")
            rec.feature = np.asarray(rec.feature, dtype=np.float64)
            if rec.feature.ndim != 1:
                raise DimensionMismatch("features must be 1-d vectors")
            if rec.feature.shape[0] != self.records[0].feature.shape[0]:
                raise DimensionMismatch("all features must share one dimension")
            if rec.domain == DOMAIN_SOURCE:
                if not 0 <= rec.label < self.n_classes:
                    raise LabelOutOfRange(
                        f"source label {rec.label} outside [0, {self.n_classes})"
                    )
            elif rec.label != -1:
                raise LabelOutOfRange("target records must carry label -1")
            self._by_id[rec.id] = rec
        for sample_id, label in self._eval_labels.items():
            rec = self._by_id.get(sample_id)
            if rec is None or rec.domain != DOMAIN_TARGET:
                raise ValueError(
                    f"eval label given for {sample_id!r}, which is not a target sample"
                )
            if not 0 <= int(label) < self.n_classes:
                raise LabelOutOfRange(
                    f"eval label {label} outside [0, {self.n_classes})"
                )
        self._sources = [r for r in self.records if r.domain == DOMAIN_SOURCE]
        self._targets = [r for r in self.records if r.domain == DOMAIN_TARGET]

    @property
    def feature_dim(self) -> int:
        if not self.records:
            raise ValueError("empty dataset has no feature dimension")
        return self.records[0].feature.shape[0]

    @property
    def source_records(self):
        return list(self._sources)

    @property
    def target_records(self):
        return list(self._targets)

    def record(self, sample_id: str) -> SampleRecord:
        if sample_id not in self._by_id:
            raise KeyError(f"no sample with id {sample_id!r}")
        return self._by_id[sample_id]

    def source_features(self) -> np.ndarray:
        return np.array([r.feature for r in self._sources], dtype=np.float64)

    def source_labels(self) -> np.ndarray:
        return np.array([r.label for r in self._sources], dtype=np.int64)

    def source_ids(self):
        return [r.id for r in self._sources]

    def target_features(self) -> np.ndarray:
        return np.array([r.feature for r in self._targets], dtype=np.float64)

    def target_ids(self):
        return [r.id for r in self._targets]

    @property
    def has_eval_labels(self) -> bool:
        return bool(self._targets) and all(
            r.id in self._eval_labels for r in self._targets
        )

    def target_eval_labels(self) -> np.ndarray:
        """Ground-truth labels aligned with target_records; evaluation only."""
        labels = []
        for rec in self._targets:
            if rec.id not in self._eval_labels:
                raise MissingEvalLabels(
                    f"no evaluation label stored for target {rec.id!r}"
                )
            labels.append(self._eval_labels[rec.id])
        return np.array(labels, dtype=np.int64)

    def eval_label(self, sample_id: str):
        return self._eval_labels.get(sample_id)

    def subset_sources(self, keep_ids) -> "Dataset":
        """New dataset with only the given source ids; targets unchanged."""
        keep = set(keep_ids)
        unknown = keep - {r.id for r in self._sources}
        if unknown:
            raise KeyError(f"ids not in the source set: {sorted(unknown)[:5]}")
        records = [
            r
            for r in self.records
            if r.domain == DOMAIN_TARGET or r.id in keep
        ]
        return Dataset(records, self.n_classes, self._eval_labels)


@dataclass
class SyntheticShiftSpec:
    """Recipe for a two-domain Gaussian classification problem.

    Class means sit on a circle in the first two feature dimensions; the
    target domain is the same mixture pushed through rotate/scale/translate.
    A fraction of samples in both domains is drawn from another class's
    Gaussian while keeping its label, creating irreducible confusion.

    `mean_angles_deg` places the class means on the circle; the default ()
    spaces them equally. `sigma` is either one scale for every class or a
    per-class sequence (short sequences repeat around the circle).
    """

    n_classes: int = 8
    input_dim: int = 16
    n_source_per_class: int = 200
    n_target_per_class: int = 200
    radius: float = 3.0
    sigma: object = 1.0
    mean_angles_deg: tuple = ()
    rotation: float = math.radians(30.0)
    scale: float = 1.2
    translation: tuple = ()
    overlap: float = 0.1
    seed: int = 0

    def class_sigmas(self) -> np.ndarray:
        """Per-class noise scales; scalars broadcast, short cycles repeat."""
        if np.isscalar(self.sigma):
            return np.full(self.n_classes, float(self.sigma))
        values = np.asarray(self.sigma, dtype=np.float64)
        if values.ndim != 1 or len(values) == 0:
            raise InvalidSpec("sigma must be a scalar or a 1-d sequence")
        if self.n_classes % len(values) != 0:
            raise InvalidSpec(
                "sigma sequence length must divide the class count"
            )
        return np.tile(values, self.n_classes // len(values))

    def class_angles(self) -> np.ndarray:
        """Mean placement angles in radians; default is equal spacing."""
        if not len(self.mean_angles_deg):
            return 2.0 * np.pi * np.arange(self.n_classes) / self.n_classes
        angles = np.asarray(self.mean_angles_deg, dtype=np.float64)
        if angles.shape != (self.n_classes,):
            raise InvalidSpec("mean_angles_deg needs one angle per class")
        if not np.all(np.isfinite(angles)):
            raise InvalidSpec("mean angles must be finite")
        return np.radians(angles)

    def validate(self) -> None:
        if self.n_classes < 2:
            raise InvalidSpec("need at least two classes")
        if self.input_dim < 2:
            raise InvalidSpec("need at least two feature dimensions")
        if self.n_source_per_class < 1 or self.n_target_per_class < 1:
            raise InvalidSpec("per-class sample counts must be >= 1")
        if self.radius <= 0:
            raise InvalidSpec("radius must be positive")
        if np.any(self.class_sigmas() <= 0):
            raise InvalidSpec("sigma values must be positive")
        self.class_angles()
        if not 0.0 <= self.rotation < 2.0 * math.pi:
            raise InvalidSpec("rotation must lie in [0, 2*pi)")
        if self.scale <= 0:
            raise InvalidSpec("scale must be positive")
        if self.translation and len(self.translation) != self.input_dim:
            raise InvalidSpec("translation length must equal input_dim")
        if not 0.0 <= self.overlap <= 1.0:
            raise InvalidSpec("overlap must lie in [0, 1]")
        if self.seed < 0:
            raise InvalidSpec("seed must be >= 0")


BENCHMARK_MEAN_ANGLES = (0.0, 70.8, 141.6, 212.4, 283.2, 285.2, 287.2, 289.2)
BENCHMARK_SIGMA = 0.6


def default_benchmark_spec(seed: int = 0) -> SyntheticShiftSpec:
    """The overlap-heavy desk benchmark used by the acceptance suite.

    Four classes sit alone on wide arcs, so after the rotate/scale shift each
    of their target clusters is still nearest its own source cluster and
    adapts cleanly. The other four share a tight arc and stay genuinely
    confusable, which is what makes rejection and selection effects visible.
    """
    return SyntheticShiftSpec(
        seed=seed,
        sigma=BENCHMARK_SIGMA,
        mean_angles_deg=BENCHMARK_MEAN_ANGLES,
    )


def _class_means(spec: SyntheticShiftSpec) -> np.ndarray:
    means = np.zeros((spec.n_classes, spec.input_dim))
    angles = spec.class_angles()
    means[:, 0] = spec.radius * np.cos(angles)
    means[:, 1] = spec.radius * np.sin(angles)
    return means


def _draw_class_block(rng, spec, means, class_id, count):
    """Features for one class; a fraction comes from other classes' Gaussians."""
    sigmas = spec.class_sigmas()
    noise = rng.standard_normal((count, spec.input_dim))
    swap = rng.random(count) < spec.overlap
    others = rng.integers(0, spec.n_classes - 1, size=count)
    others = others + (others >= class_id)
    drawn_from = np.where(swap, others, class_id)
    return means[drawn_from] + sigmas[drawn_from][:, None] * noise


def _target_transform(spec: SyntheticShiftSpec, x: np.ndarray) -> np.ndarray:
    out = x.copy()
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    out[:, 0] = c * x[:, 0] - s * x[:, 1]
    out[:, 1] = s * x[:, 0] + c * x[:, 1]
    out *= spec.scale
    if spec.translation:
        out += np.asarray(spec.translation, dtype=np.float64)
    return out


def generate(spec: SyntheticShiftSpec) -> Dataset:
    """Deterministic synthetic dataset; target truth goes to eval labels only."""
    spec.validate()
    rng = rng_stream(spec.seed, "data")
    means = _class_means(spec)
    records = []
    eval_labels = {}
    counter = 0
    for c in range(spec.n_classes):
        block = _draw_class_block(rng, spec, means, c, spec.n_source_per_class)
        for row in block:
            records.append(
                SampleRecord(f"src-c{c:02d}-{counter:05d}", DOMAIN_SOURCE, c, row)
            )
            counter += 1
    counter = 0
    for c in range(spec.n_classes):
        block = _draw_class_block(rng, spec, means, c, spec.n_target_per_class)
        block = _target_transform(spec, block)
        for row in block:
            sample_id = f"tgt-{counter:05d}"
            records.append(SampleRecord(sample_id, DOMAIN_TARGET, -1, row))
            eval_labels[sample_id] = c
            counter += 1
    return Dataset(records, spec.n_classes, eval_labels)


def save_embeddings(dataset: Dataset, path) -> None:
    """Write the embedding CSV; target rows carry the eval label when known."""
    dim = dataset.feature_dim
    lines = [
        f"{EMBEDDINGS_MAGIC},{EMBEDDINGS_VERSION},C={dataset.n_classes},D={dim}",
        "id,domain,label," + ",".join(f"f{i}" for i in range(dim)),
    ]
    for rec in dataset.records:
        if rec.domain == DOMAIN_TARGET:
            label = dataset.eval_label(rec.id)
            label = -1 if label is None else int(label)
        else:
            label = rec.label
        feats = ",".join(f"{v:.17g}" for v in rec.feature)
        lines.append(f"{rec.id},{rec.domain},{label},{feats}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(line: str):
    parts = line.strip().split(",")
    if len(parts) != 4 or parts[0] != EMBEDDINGS_MAGIC:
        raise FormatError(1, f"not an embedding file header: {line.strip()!r}")
    if parts[1] != EMBEDDINGS_VERSION:
        raise VersionMismatch(
            f"unsupported embedding format version {parts[1]!r}"
        )
    try:
        if not parts[2].startswith("C=") or not parts[3].startswith("D="):
            raise ValueError
        n_classes = int(parts[2][2:])
        dim = int(parts[3][2:])
    except ValueError:
        raise FormatError(1, f"malformed C/D fields in header: {line.strip()!r}")
    if n_classes < 1 or dim < 1:
        raise FormatError(1, "C and D must be positive")
    return n_classes, dim


def load_embeddings(path) -> Dataset:
    """Parse an embedding CSV into a Dataset; errors carry 1-based line numbers."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(1, "empty file")
    n_classes, dim = _parse_header(lines[0])
    expected_columns = "id,domain,label," + ",".join(f"f{i}" for i in range(dim))
    if len(lines) < 2 or lines[1] != expected_columns:
        raise FormatError(2, "column header does not match the declared dimension")
    records = []
    eval_labels = {}
    seen = set()
    for line_number, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3 + dim:
            raise FormatError(
                line_number, f"expected {3 + dim} fields, got {len(parts)}"
            )
        sample_id, domain, label_text = parts[0], parts[1], parts[2]
        if not sample_id:
            raise FormatError(line_number, "empty sample id")
        if sample_id in seen:
            raise DuplicateId(f"duplicate sample id {sample_id!r}")
        seen.add(sample_id)
        if domain not in (DOMAIN_SOURCE, DOMAIN_TARGET):
            raise FormatError(line_number, f"unknown domain {domain!r}")
        try:
            label = int(label_text)
        except ValueError:
            raise FormatError(line_number, f"non-integer label {label_text!r}")
        try:
            feature = np.array([float(tok) for tok in parts[3:]], dtype=np.float64)
        except ValueError:
            raise FormatError(line_number, "non-numeric feature value")
        if domain == DOMAIN_SOURCE:
            if not 0 <= label < n_classes:
                raise LabelOutOfRange(
                    f"line {line_number}: source label {label} outside "
                    f"[0, {n_classes})"
                )
            records.append(SampleRecord(sample_id, domain, label, feature))
        else:
            if label != -1:
                if not 0 <= label < n_classes:
                    raise LabelOutOfRange(
                        f"line {line_number}: target label {label} outside "
                        f"[0, {n_classes})"
                    )
                eval_labels[sample_id] = label
            records.append(SampleRecord(sample_id, domain, -1, feature))
    return Dataset(records, n_classes, eval_labels)


def _mlp_to_dict(net: Mlp) -> dict:
    return {
        "layers": [
            {
                "activation": layer.activation,
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ]
    }


def _mlp_from_dict(obj: dict) -> Mlp:
    layers = [
        DenseLayer(
            np.array(entry["weights"], dtype=np.float64),
            np.array(entry["bias"], dtype=np.float64),
            entry["activation"],
        )
        for entry in obj["layers"]
    ]
    return Mlp(layers)


def save_model(model: TrainedModel, path, config_hash: str | None = None) -> None:
    """Serialize a trained model (nets, banks, config) as versioned JSON."""
    banks = []
    for bank in model.banks.banks:
        slots = []
        for i in range(bank.size):
            slots.append(
                {
                    "provenance": bank.provenance[i],
                    "age": int(bank.ages[i]),
                    "value": float(bank.values[i]),
                    "write_seq": int(bank.write_seq[i]),
                    "adam_m": float(bank.adam_m[i]),
                    "adam_v": float(bank.adam_v[i]),
                    "adam_t": int(bank.adam_t[i]),
                    "key": bank.keys[i].tolist(),
                }
            )
        banks.append(
            {
                "class_id": bank.class_id,
                "capacity": bank.capacity,
                "feature_dim": bank.feature_dim,
                "write_counter": bank._write_counter,
                "slots": slots,
            }
        )
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "config_hash": config_hash,
        "config": asdict(model.config),
        "read_top_k": model.banks.read_top_k,
        "encoder": _mlp_to_dict(model.encoder),
        "fc_head": _mlp_to_dict(model.fc_head),
        "discriminator": _mlp_to_dict(model.discriminator),
        "banks": banks,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    """Rebuild a TrainedModel from JSON; loss history is not persisted."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"cannot parse model file: {exc}")
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CorruptFile("model file lacks a format_version field")
    if payload["format_version"] != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"model format {payload['format_version']} unsupported "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        config = TrainConfig(**payload["config"])
        encoder = _mlp_from_dict(payload["encoder"])
        fc_head = _mlp_from_dict(payload["fc_head"])
        discriminator = _mlp_from_dict(payload["discriminator"])
        bank_objs = payload["banks"]
        first = bank_objs[0]
        bankset = MemoryBankSet(
            n_classes=len(bank_objs),
            capacity=int(first["capacity"]),
            feature_dim=int(first["feature_dim"]),
            read_top_k=int(payload["read_top_k"]),
        )
        for obj, bank in zip(bank_objs, bankset.banks):
            if obj["class_id"] != bank.class_id:
                raise CorruptFile("bank class ids out of order")
            bank._write_counter = int(obj["write_counter"])
            for i, slot in enumerate(obj["slots"]):
                key = np.array(slot["key"], dtype=np.float64)
                if key.shape != (bank.feature_dim,):
                    raise CorruptFile(f"bad key shape in bank {bank.class_id}")
                bank.keys[i] = key
                bank.key_norms[i] = float(np.linalg.norm(key))
                bank.values[i] = float(slot["value"])
                bank.ages[i] = int(slot["age"])
                bank.provenance[i] = slot["provenance"]
                bank.write_seq[i] = int(slot["write_seq"])
                bank.adam_m[i] = float(slot["adam_m"])
                bank.adam_v[i] = float(slot["adam_v"])
                bank.adam_t[i] = int(slot["adam_t"])
            bank.size = len(obj["slots"])
    except CorruptFile:
        raise
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise CorruptFile(f"model file is structurally invalid: {exc}")
    return TrainedModel(
        encoder=encoder,
        fc_head=fc_head,
        discriminator=discriminator,
        banks=bankset,
        config=config,
        history=[],
    )
