"""Fixtures for exporter tests: a shared frozen backbone, a three-class
toy image tree, and one canonical export of it."""

import shutil
import warnings

import pytest

from idc_export.backbone import Backbone
from idc_export.export import ExportJob, export

from imagegen import save_image

CLASS_NAMES = ("cat", "dog", "owl")
SIZES = ((48, 36), (64, 64), (31, 57), (224, 224), (300, 200), (16, 16), (80, 45))


@pytest.fixture(scope="session")
def backbone():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Backbone()


@pytest.fixture(scope="session")
def toy_tree(tmp_path_factory):
    """Source root with 3 classes x 7 images, target root with 9 images."""
    root = tmp_path_factory.mktemp("toy")
    source, target = root / "source", root / "target"
    for c, name in enumerate(CLASS_NAMES):
        folder = source / name
        folder.mkdir(parents=True)
        for i, size in enumerate(SIZES):
            path = folder / f"img{i:02d}.png"
            mode = "RGB"
            if name == "dog" and i == 3:
                (folder / "more").mkdir(exist_ok=True)
                path = folder / "more" / f"img{i:02d}.png"
            if name == "cat" and i == 5:
                path = folder / f"img{i:02d}.jpg"
            if name == "cat" and i == 6:
                path = folder / f"img{i:02d}.bmp"
            if name == "owl" and i == 0:
                mode = "L"
            if name == "owl" and i == 1:
                mode = "RGBA"
            save_image(path, seed=100 * c + i, size=size, mode=mode)
    shutil.copyfile(source / "owl" / "img05.png", source / "owl" / "img06.png")
    target.mkdir()
    for i in range(8):
        save_image(target / f"t{i}.png", seed=900 + i, size=SIZES[i % len(SIZES)])
    (target / "extra").mkdir()
    save_image(target / "extra" / "t8.png", seed=990)
    return root


@pytest.fixture(scope="session")
def exported(toy_tree, backbone, tmp_path_factory):
    out = tmp_path_factory.mktemp("export-out") / "embeddings.csv"
    job = ExportJob(
        source_root=str(toy_tree / "source"),
        target_root=str(toy_tree / "target"),
        out_path=str(out),
        batch_size=8,
    )
    result = export(job, backbone=backbone)
    return job, result, out
