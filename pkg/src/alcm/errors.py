"""Exception hierarchy shared across the package.

Grouped by failure class so the CLI can map them to distinct exit codes:
input/output problems, numerical failures, and LLM-client failures.
"""


class AlcmError(Exception):
    """Base class for all package-specific errors."""


# --- input / output -------------------------------------------------------

class DataError(AlcmError):
    """Problems with input files or their contents."""


class MissingFile(DataError):
    pass


class RaggedRow(DataError):
    def __init__(self, row_index: int):
        super().__init__(f"row {row_index} has the wrong number of fields")
        self.row_index = row_index


class EmptyDataset(DataError):
    pass


class AllRowsDropped(DataError):
    pass


class UnknownNode(DataError):
    def __init__(self, name):
        super().__init__(f"unknown node: {name!r}")
        self.name = name


class CycleInGroundTruth(DataError):
    pass


class DuplicateEdge(DataError):
    pass


class MalformedDocument(DataError):
    pass


# --- graph structure ------------------------------------------------------

class GraphError(AlcmError):
    """Violations of graph-structure preconditions."""


class SelfLoop(GraphError):
    pass


class NotADag(GraphError):
    pass


class NodeSetMismatch(GraphError):
    pass


# --- numerics -------------------------------------------------------------

class NumericError(AlcmError):
    """Failures inside the numerical engines."""


class TooFewSamples(NumericError):
    pass


class SingularCorrelation(NumericError):
    pass


class NotDiscrete(NumericError):
    pass


class MixedPair(NumericError):
    pass


class NotWhitened(NumericError):
    pass


class ZeroDiagonal(NumericError):
    pass


class SingularDesign(NumericError):
    pass


class DiscreteColumns(NumericError):
    pass


class ShapeMismatch(NumericError):
    pass


class NonFinite(NumericError):
    pass


class NonFiniteInput(NumericError):
    pass


class EmptyCorpus(NumericError):
    pass


# --- prompts --------------------------------------------------------------

class PromptError(AlcmError):
    """Prompt construction and rendering failures."""


class UnknownVariable(PromptError):
    def __init__(self, name):
        super().__init__(f"unknown variable: {name!r}")
        self.name = name


class EmptyBlock(PromptError):
    pass


# --- LLM client -----------------------------------------------------------

class ClientError(AlcmError):
    """Failures talking to or interpreting an LLM backend."""


class AuthError(ClientError):
    pass


class RateLimited(ClientError):
    pass


class Timeout(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


class Unparseable(ClientError):
    pass


class ClientFailure(ClientError):
    """Raised by the refiner after client retries are exhausted.

    Carries the partial refinement log accumulated before the failure.
    """

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log
