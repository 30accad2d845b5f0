"""Bridge from detector/segmenter/backbone models to cafokit file formats."""

from .export import ExportFailedError, ExportJob, export
from .models import (StubBackbone, StubDetector, StubSegmenter,
                     UnknownModelError, build_backbone, build_detector,
                     build_segmenter)

__all__ = [
    "ExportJob", "export", "ExportFailedError",
    "StubDetector", "StubSegmenter", "StubBackbone",
    "build_detector", "build_segmenter", "build_backbone",
    "UnknownModelError",
]
