"""Folder scanning, feature extraction, and embedding-CSV writing.

The output file follows the embedding CSV contract consumed by the idc
package: line 1 `idc-embeddings,v1,C=<int>,D=<int>`, line 2 the column
header, then one row per image with id = path relative to its root,
domain `source`/`target`, the class label (−1 for targets), and D feature
values printed with full float64 round-trip precision.
"""

import os
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .backbone import FEATURE_DIM, Backbone, preprocess
from .errors import EmptyClassFolder, UnreadableImageWarning

EMBEDDINGS_MAGIC = "idc-embeddings"
EMBEDDINGS_VERSION = "v1"
IMAGE_EXTENSIONS = {
    ".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp",
}


@dataclass
class ExportJob:
    """One export run: where to read images, where to write the CSV."""

    source_root: str
    target_root: str
    out_path: str
    feature_dim: int = FEATURE_DIM
    batch_size: int = 16

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be >= 1")


@dataclass
class ExportResult:
    written: int
    skipped: int
    class_names: list

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _image_files(root):
    """Sorted POSIX-style paths of images under root, relative to it."""
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in filenames:
            if os.path.splitext(name)[1].lower() not in IMAGE_EXTENSIONS:
                continue
            rel = os.path.relpath(os.path.join(dirpath, name), root)
            rel = rel.replace(os.sep, "/")
            if "," in rel or "\n" in rel:
                warnings.warn(
                    f"skipping {rel!r}: path is not CSV-safe",
                    UnreadableImageWarning,
                    stacklevel=2,
                )
                continue
            found.append(rel)
    return sorted(found)


def scan_source(root):
    """Sorted class names plus (relative id, label) pairs for every image."""
    if not os.path.isdir(root):
        raise EmptyClassFolder(f"source root {root!r} is not a directory")
    class_names = sorted(
        entry for entry in os.listdir(root)
        if os.path.isdir(os.path.join(root, entry))
    )
    if not class_names:
        raise EmptyClassFolder(f"no class folders under {root!r}")
    entries = []
    for label, name in enumerate(class_names):
        files = _image_files(os.path.join(root, name))
        if not files:
            raise EmptyClassFolder(f"class folder {name!r} has no images")
        entries.extend((f"{name}/{rel}", label) for rel in files)
    return class_names, entries


def scan_target(root):
    """Sorted relative ids of every image under the target root."""
    if not os.path.isdir(root):
        raise EmptyClassFolder(f"target root {root!r} is not a directory")
    return _image_files(root)


def _extract_features(backbone, batch_size, items):
    """items: (id, absolute path) pairs → (kept ids, features, skipped).

    The tail batch is padded by repeating its last image (extras dropped
    afterwards), so the network always sees one batch shape and a row's
    values cannot depend on where in the file list it landed.
    """
    kept, arrays, skipped = [], [], 0
    for sample_id, path in items:
        try:
            with Image.open(path) as img:
                arrays.append(preprocess(img))
        except Exception as exc:
            warnings.warn(
                f"skipping unreadable image {path!r}: {exc}",
                UnreadableImageWarning,
                stacklevel=2,
            )
            skipped += 1
            continue
        kept.append(sample_id)
    if not kept:
        return kept, np.zeros((0, backbone.feature_dim)), skipped
    chunks = []
    for start in range(0, len(arrays), batch_size):
        chunk = arrays[start:start + batch_size]
        pad = batch_size - len(chunk)
        stacked = np.stack(chunk + [chunk[-1]] * pad)
        chunks.append(backbone.extract(stacked)[: len(chunk)])
    return kept, np.concatenate(chunks), skipped


def _write_csv(path, n_classes, dim, rows) -> None:
    lines = [
        f"{EMBEDDINGS_MAGIC},{EMBEDDINGS_VERSION},C={n_classes},D={dim}",
        "id,domain,label," + ",".join(f"f{i}" for i in range(dim)),
    ]
    for sample_id, domain, label, feats in rows:
        text = ",".join(f"{v:.17g}" for v in feats)
        lines.append(f"{sample_id},{domain},{label},{text}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export(job: ExportJob, backbone=None) -> ExportResult:
    """Run the backbone over both roots and write the embedding CSV."""
    job.validate()
    class_names, source_entries = scan_source(job.source_root)
    target_files = scan_target(job.target_root)
    if backbone is None:
        backbone = Backbone()
    if backbone.feature_dim != job.feature_dim:
        raise ValueError(
            f"backbone produces {backbone.feature_dim}-dim features, "
            f"job declares {job.feature_dim}"
        )
    labels = dict(source_entries)
    src_items = [
        (sample_id, os.path.join(job.source_root, sample_id))
        for sample_id, _ in source_entries
    ]
    tgt_items = [
        (sample_id, os.path.join(job.target_root, sample_id))
        for sample_id in target_files
    ]
    src_ids, src_feats, src_skipped = _extract_features(
        backbone, job.batch_size, src_items
    )
    tgt_ids, tgt_feats, tgt_skipped = _extract_features(
        backbone, job.batch_size, tgt_items
    )
    rows = [
        (sample_id, "source", labels[sample_id], src_feats[i])
        for i, sample_id in enumerate(src_ids)
    ]
    rows.extend(
        (sample_id, "target", -1, tgt_feats[i])
        for i, sample_id in enumerate(tgt_ids)
    )
    _write_csv(job.out_path, len(class_names), job.feature_dim, rows)
    return ExportResult(
        written=len(rows),
        skipped=src_skipped + tgt_skipped,
        class_names=class_names,
    )
