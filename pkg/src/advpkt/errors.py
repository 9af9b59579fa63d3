"""Exception types shared across the package."""


class AdvPktError(Exception):
    """Base class for all package errors."""


class FormatError(AdvPktError):
    """Input file is not in a supported format (e.g. pcapng, bad magic)."""


class ConfigError(AdvPktError):
    """Invalid configuration: bad rules, unknown keys, impossible request."""


class TrainingError(AdvPktError):
    """Model training cannot proceed or diverged (single-class data, NaN loss)."""


class InputDimensionError(AdvPktError):
    """A vector of the wrong dimension was passed to a trained model."""


class UndefinedMetricError(AdvPktError):
    """A metric's denominator is empty (e.g. ASR with zero true positives)."""


class MissingArtifactError(AdvPktError):
    """A pipeline stage requires an artifact that an earlier stage produces."""

    def __init__(self, artifact: str, producing_stage: str):
        self.artifact = artifact
        self.producing_stage = producing_stage
        super().__init__(
            f"missing artifact {artifact!r}: run stage {producing_stage!r} first"
        )
