"""Frozen image backbone and its fixed preprocessing.

Features are the penultimate activations (the 2048-wide pooled output
before the classification layer) of a ResNet-50. ImageNet weights are
used when they can be fetched; on machines without model-zoo access the
same architecture is instantiated with seeded random weights and a
warning is emitted, so exports stay deterministic either way.

Preprocessing is fixed to resize-to-256 / center-crop-224 with standard
ImageNet channel normalization; no stochastic augmentation ever runs, so
identical image files always produce identical feature rows.
"""

import warnings

import numpy as np
from PIL import Image

RESIZE_TO = 256
CROP_TO = 224
CHANNEL_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
CHANNEL_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)
FALLBACK_SEED = 900913
FEATURE_DIM = 2048


def preprocess(image) -> np.ndarray:
    """PIL image → normalized (3, 224, 224) float32 array."""
    rgb = image.convert("RGB").resize((RESIZE_TO, RESIZE_TO), Image.BILINEAR)
    offset = (RESIZE_TO - CROP_TO) // 2
    cropped = rgb.crop((offset, offset, offset + CROP_TO, offset + CROP_TO))
    arr = np.asarray(cropped, dtype=np.float32) / 255.0
    arr = (arr - CHANNEL_MEAN) / CHANNEL_STD
    return arr.transpose(2, 0, 1)


class Backbone:
    """ResNet-50 feature extractor, frozen in eval mode."""

    def __init__(self):
        import torch
        from torchvision import models

        try:
            net = models.resnet50(weights=models.ResNet50_Weights.DEFAULT)
            self.pretrained = True
        except Exception as exc:
            warnings.warn(
                f"pretrained weights unavailable ({type(exc).__name__}); "
                "falling back to seeded random weights; features stay "
                "deterministic but carry no ImageNet semantics",
                stacklevel=2,
            )
            torch.manual_seed(FALLBACK_SEED)
            net = models.resnet50(weights=None)
            self.pretrained = False
        net.fc = torch.nn.Identity()
        net.eval()
        for parameter in net.parameters():
            parameter.requires_grad_(False)
        self._torch = torch
        self.net = net
        self.feature_dim = FEATURE_DIM

    def extract(self, batch: np.ndarray) -> np.ndarray:
        """(N, 3, 224, 224) preprocessed batch → (N, 2048) float64."""
        with self._torch.no_grad():
            out = self.net(self._torch.from_numpy(batch))
        return out.numpy().astype(np.float64)
