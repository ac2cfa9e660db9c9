from typing import Any, Optional


class CommunityError(ValueError):
    """Base class for input and domain errors raised by the library."""


class GraphFormatError(CommunityError):
    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class EmptyGraphError(CommunityError):
    pass


class InvalidNodeError(CommunityError):
    pass


class DuplicateMemberError(CommunityError):
    pass


class DegenerateClusterError(CommunityError):
    """The score is undefined for this cluster (empty, whole graph, zero volume)."""


class DisconnectedGraphError(CommunityError):
    pass


class IsolatedNodeError(CommunityError):
    pass


class CapacityOverflowError(CommunityError):
    pass


class OracleLimitError(CommunityError):
    pass


class FlowCertificateError(RuntimeError):
    """Max-flow value and cut capacity disagree. Always a solver bug."""


class ConvergenceError(CommunityError):
    def __init__(self, message: str, result: Optional[Any] = None):
        super().__init__(message)
        self.result = result
