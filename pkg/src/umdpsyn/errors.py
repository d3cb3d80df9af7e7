"""Exception types shared across the toolkit."""


class UmdpsynError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(UmdpsynError):
    """Invalid run configuration; message names the offending key path."""


class MisalignedRegion(UmdpsynError):
    """A region-of-interest boundary does not fall on a grid line."""


class IndivisibleBlocks(UmdpsynError):
    """Grid dimensions are not divisible by the coarse block shape."""


class ParseError(UmdpsynError):
    """Malformed input file (samples CSV, DFA JSON, abstraction file)."""


class DimensionMismatch(UmdpsynError):
    """Data dimension disagrees with the declared dimension."""


class InsufficientSamples(UmdpsynError):
    """Too few samples for the requested support-learning confidence."""


class InfeasibleGamma(UmdpsynError):
    """The uncertainty set is empty; indicates corrupted transition bounds."""


class LpInfeasible(UmdpsynError):
    """The LP adversary found no feasible distribution."""


class NondeterministicEdge(UmdpsynError):
    """Two DFA edges from one state match the same label set."""


class IncompleteTransition(UmdpsynError):
    """A DFA state has no edge for some label set and no else-edge."""


class UnknownProposition(UmdpsynError):
    """A trace label uses an atomic proposition outside the DFA alphabet."""
