"""Exception hierarchy. Every domain error derives from CascadeError."""


class CascadeError(Exception):
    """Base class for all errors raised by this package."""


# --- dataset construction ---------------------------------------------------

class EmptyDataset(CascadeError):
    pass


class CannotFormNegative(CascadeError):
    pass


class InsufficientDistractors(CascadeError):
    pass


class DegenerateSplit(CascadeError):
    pass


# --- predictor ---------------------------------------------------------------

class EmptyInput(CascadeError):
    pass


class DegenerateLabels(CascadeError):
    pass


class ModelNotTrained(CascadeError):
    pass


# --- uncertainty -------------------------------------------------------------

class EmptyValidation(CascadeError):
    pass


class InvalidObservationCount(CascadeError):
    pass


class CalibrationContamination(CascadeError):
    pass


class OracleUnavailable(CascadeError):
    pass


# --- case bank ---------------------------------------------------------------

class CaseAnalysisEmpty(CascadeError):
    pass


# --- retrieval ---------------------------------------------------------------

class EmbedderError(CascadeError):
    pass


class DimensionMismatch(CascadeError):
    pass


class ZeroVector(CascadeError):
    pass


class EmptyBank(CascadeError):
    pass


# --- prompting ---------------------------------------------------------------

class NoCasesProvided(CascadeError):
    pass


class PromptTooLong(CascadeError):
    pass


class ParseError(CascadeError):
    """Raised when a model response carries no extractable result.

    The offending response text is kept on ``raw`` so callers can log it
    and fall back to the small model's answer.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


# --- gateway -----------------------------------------------------------------

class GatewayError(CascadeError):
    pass


class ProtocolError(CascadeError):
    pass


# --- config ------------------------------------------------------------------

class ConfigError(CascadeError):
    pass
