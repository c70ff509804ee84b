"""Errors and warnings raised by the export pipeline."""


class ExportError(Exception):
    """Base class for fatal export failures."""


class EmptyClassFolder(ExportError):
    """A source class folder (or the whole root) contains no images."""


class UnreadableImageWarning(UserWarning):
    """An image file could not be decoded and was skipped."""
