"""Exception hierarchy.

``UsageError`` subclasses map to CLI exit code 1, ``DataError`` subclasses
to exit code 2.
"""


class SkyMineError(Exception):
    """Base class for all errors raised by skymine."""


class UsageError(SkyMineError):
    """Bad parameters or arguments supplied by the caller."""


class DataError(SkyMineError):
    """Input data is malformed or inconsistent."""


class DimensionMismatch(UsageError):
    pass


# catalog
class MissingColumn(DataError):
    pass


class TypeMismatch(DataError):
    def __init__(self, line: int, column: str, value: str = ""):
        self.line = line
        self.column = column
        super().__init__(f"line {line}: column {column!r}: cannot parse {value!r}")


class UnitMismatch(DataError):
    def __init__(self, column: str, msg: str = ""):
        self.column = column
        super().__init__(f"column {column!r}: {msg or 'unit mismatch'}")


class PositionOutOfRange(DataError):
    def __init__(self, line: int, msg: str = ""):
        self.line = line
        super().__init__(f"line {line}: {msg or 'position out of range'}")


class PageOverflow(DataError):
    pass


class CorruptHeader(DataError):
    pass


class SchemaError(DataError):
    pass


# warehouse
class UnknownLevel(UsageError):
    pass


class UnknownDimension(UsageError):
    pass


class NonNumericMeasure(DataError):
    pass


class EmptyGroup(DataError):
    pass


class HierarchyError(DataError):
    pass


# htm
class LevelTooDeep(UsageError):
    pass


class BadRadius(UsageError):
    pass


# kdtree / rtree
class BadWindow(UsageError):
    pass


class EmptyTree(UsageError):
    pass


# bulkload
class EmptyRun(UsageError):
    pass


class NoSplitNeeded(UsageError):
    pass


class RankOutOfRange(UsageError):
    pass


class CountInfeasible(DataError):
    pass


# cluster / svc
class BadParams(UsageError):
    pass


class TooFewSubclusters(UsageError):
    pass


class SampleTooLarge(UsageError):
    pass


class InfeasibleC(UsageError):
    pass


class NoConvergence(SkyMineError):
    pass


class ConfigError(UsageError):
    pass
