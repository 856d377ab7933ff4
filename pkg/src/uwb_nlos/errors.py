"""Exception types raised across the package.

Every error carries a short ``code`` so the command line can emit a single
machine-parsable line (``error <code>: <message>``).
"""


class NlosError(ValueError):
    code = "error"


class InvalidWaveformError(NlosError):
    code = "invalid_waveform"


class EmptyWindowError(NlosError):
    code = "empty_window"

    def __init__(self, message="empty window"):
        super().__init__(message)


class DiagnosticsError(NlosError):
    code = "invalid_diagnostics"


class DegenerateSignalError(NlosError):
    code = "degenerate_signal"


class NoPathDetectedError(NlosError):
    code = "no_path_detected"

    def __init__(self, message="no path detected"):
        super().__init__(message)


class FeatureError(NlosError):
    """A single feature failed; ``index`` follows the 1..10 feature numbering."""

    code = "feature_error"

    def __init__(self, index, name, cause):
        self.index = index
        self.name = name
        self.cause = cause
        super().__init__(f"feature {index} ({name}): {cause}")


class ConfigError(NlosError):
    code = "invalid_config"


class DegenerateLabelsError(NlosError):
    code = "degenerate_labels"


class ModelFormatError(NlosError):
    code = "model_format"


class DatasetError(NlosError):
    code = "dataset"

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class SplitError(NlosError):
    code = "split"
