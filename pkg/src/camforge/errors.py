"""Exception types shared across camforge modules."""


class CamforgeError(Exception):
    """Base class for all package errors."""


class InfeasibleSpec(CamforgeError):
    pass


class EmptyScene(CamforgeError):
    pass


class DegenerateSensor(CamforgeError):
    pass


class InsufficientData(CamforgeError):
    pass


class AllClipped(CamforgeError):
    pass


class ImagesMismatch(CamforgeError):
    pass


class EmptyBatch(CamforgeError):
    pass


class EmptyCatalog(CamforgeError):
    pass


class ParseError(CamforgeError):
    def __init__(self, message, row=None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class InvariantViolation(CamforgeError):
    def __init__(self, message, offending=()):
        self.offending = tuple(offending)
        super().__init__(message)


class ConfigError(CamforgeError):
    pass


class EvaluationFailed(CamforgeError):
    def __init__(self, genome_id, cause):
        self.genome_id = genome_id
        self.cause = cause
        super().__init__(f"evaluation of genome {genome_id} failed: {cause!r}")
