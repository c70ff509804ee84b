"""Image-folder to embedding-CSV exporter.

Bridges real image datasets to the idc toolchain: a frozen backbone maps
every image under a class-labeled source root and an unlabeled target
root to its penultimate-layer features, written in the embedding CSV
format the idc loader consumes.
"""

from .backbone import Backbone, preprocess
from .errors import EmptyClassFolder, ExportError, UnreadableImageWarning
from .export import ExportJob, ExportResult, export, scan_source, scan_target

__all__ = [
    "Backbone",
    "EmptyClassFolder",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "UnreadableImageWarning",
    "export",
    "preprocess",
    "scan_source",
    "scan_target",
]
