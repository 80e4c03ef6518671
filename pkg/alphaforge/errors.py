class AlphaForgeError(Exception):
    """Base class for every failure the pipeline reports to the user"""

    exit_code = 1


class ConfigError(AlphaForgeError):
    """Config file or command-line knob is unknown or invalid"""

    exit_code = 2


class DataError(AlphaForgeError):
    """Input data, factor file or stage artifact is unusable"""

    exit_code = 3


class NumericalError(AlphaForgeError):
    """Training or scoring produced a non-finite number"""

    exit_code = 4


class PanelValidationError(DataError):
    pass


class FactorSyntaxError(DataError):
    """Factor expression does not parse

    Carries the 1-based line and column of the offending token.
    """

    def __init__(self, message, line=1, column=1):
        self.line = line
        self.column = column
        super().__init__(f"{message} at line {line}, column {column}")


class FactorReferenceError(DataError):
    pass


class FactorCycleError(DataError):
    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cyclic factor reference: " + " -> ".join(self.cycle + self.cycle[:1]))


class DatasetError(DataError):
    pass


class MissingArtifactError(DataError):
    def __init__(self, artifact, path=None):
        self.artifact = artifact
        where = f" (expected at {path})" if path else ""
        super().__init__(f"missing stage input {artifact}{where}")


class FactorMismatchError(DataError):
    pass


class GridCapacityError(DataError):
    pass


class GradientError(NumericalError):
    pass
