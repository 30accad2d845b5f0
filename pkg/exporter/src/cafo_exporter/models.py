"""Model backends behind a common interface.

The "stub" family needs no weights and is fully deterministic, so the export
format contract can be exercised in CI.  Real backbones (torchvision) are
optional and only loaded when requested by name.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


class UnknownModelError(ValueError):
    """Requested a model identifier with no registered backend."""


class StubDetector:
    """Bright connected components as detections.

    Thresholds the grayscale patch and reports one box per connected
    component, with a confidence proportional to the component's mean
    brightness.
    """

    def __init__(self, threshold: float = 0.5, min_area: int = 4):
        self.threshold = threshold
        self.min_area = min_area

    def detect(self, gray: np.ndarray) -> list[tuple[int, int, int, int, int, float]]:
        """(x0, y0, x1, y1, category, score) per component, largest first."""
        fg = gray > self.threshold
        labels, n = ndimage.label(fg)
        out = []
        for idx in range(1, n + 1):
            ys, xs = np.nonzero(labels == idx)
            if ys.size < self.min_area:
                continue
            score = float(np.clip(gray[ys, xs].mean(), 0.0, 1.0))
            out.append((int(xs.min()), int(ys.min()),
                        int(xs.max()) + 1, int(ys.max()) + 1, 0, round(score, 4)))
        out.sort(key=lambda b: -(b[2] - b[0]) * (b[3] - b[1]))
        return out


class StubSegmenter:
    """Box-conditioned thresholding: the mask is the bright region clipped
    to the prompting box."""

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def segment(self, gray: np.ndarray,
                box: tuple[int, int, int, int]) -> np.ndarray:
        x0, y0, x1, y1 = box
        mask = np.zeros(gray.shape, dtype=np.uint8)
        window = gray[y0:y1, x0:x1] > self.threshold
        mask[y0:y1, x0:x1] = window.astype(np.uint8)
        return mask


class StubBackbone:
    """Strided block averaging followed by a fixed random projection.

    Output shape is (ceil(H/stride), ceil(W/stride), dim); the projection
    matrix is drawn once from a fixed seed so runs are reproducible.
    """

    def __init__(self, dim: int = 16, seed: int = 1234):
        self.dim = dim
        self.proj = np.random.default_rng(seed).standard_normal((1, dim))

    def features(self, gray: np.ndarray, stride: int) -> np.ndarray:
        h, w = gray.shape
        gh = -(-h // stride)
        gw = -(-w // stride)
        pooled = np.zeros((gh, gw))
        for i in range(gh):
            for j in range(gw):
                block = gray[i * stride:(i + 1) * stride,
                             j * stride:(j + 1) * stride]
                pooled[i, j] = block.mean()
        return pooled[:, :, None] * self.proj


def _torchvision_backbone(name: str, dim: int):
    import torch
    import torchvision.models as tvm

    net = getattr(tvm, name)(weights="DEFAULT")
    net = torch.nn.Sequential(*list(net.children())[:-2]).eval()

    class TorchBackbone:
        def features(self, gray: np.ndarray, stride: int) -> np.ndarray:
            x = torch.from_numpy(np.stack([gray] * 3)[None]).float()
            with torch.no_grad():
                fm = net(x)[0].numpy()
            return np.transpose(fm, (1, 2, 0))

    return TorchBackbone()


def build_detector(name: str) -> StubDetector:
    if name == "stub":
        return StubDetector()
    raise UnknownModelError(f"unknown detector: {name!r}")


def build_segmenter(name: str) -> StubSegmenter:
    if name == "stub":
        return StubSegmenter()
    raise UnknownModelError(f"unknown segmenter: {name!r}")


def build_backbone(name: str, dim: int = 16):
    if name == "stub":
        return StubBackbone(dim=dim)
    if name.startswith("torchvision:"):
        return _torchvision_backbone(name.split(":", 1)[1], dim)
    raise UnknownModelError(f"unknown backbone: {name!r}")
