"""Exception types raised across the package."""


class IdcError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(IdcError):
    pass


class ZeroNormVector(IdcError):
    pass


class EmptyInput(IdcError):
    pass


class LabelOutOfRange(IdcError):
    pass


class StaleCache(IdcError):
    pass


class ShapeMismatch(IdcError):
    pass


class EmptyBank(IdcError):
    def __init__(self, class_id, message=None):
        self.class_id = class_id
        super().__init__(message or f"memory bank for class {class_id} is empty")


class IndexOutOfRange(IdcError):
    pass


class SingleClass(IdcError):
    pass


class ZeroNormKey(IdcError):
    pass


class EmptyTargetSet(IdcError):
    pass


class InvalidSpec(IdcError):
    pass


class ConfigInvalid(IdcError):
    pass


class FormatError(IdcError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class DuplicateId(IdcError):
    pass


class MissingEvalLabels(IdcError):
    pass


class VersionMismatch(IdcError):
    pass


class CorruptFile(IdcError):
    pass
