"""Exception hierarchy shared by all modules."""


class PclfMpcError(Exception):
    """Base class for library errors."""


# geometry
class GeometryError(PclfMpcError):
    pass


class EmptySet(GeometryError):
    pass


class UnboundedSet(GeometryError):
    pass


class DegenerateSet(GeometryError):
    pass


class Unsupported(PclfMpcError):
    pass


# solvers
class SolverError(PclfMpcError):
    pass


class IterLimit(SolverError):
    pass


class Infeasible(SolverError):
    pass


class Unbounded(SolverError):
    pass


# pclf / terminal
class NotControlledInvariant(PclfMpcError):
    pass


class EmptyDoa(PclfMpcError):
    pass


class SingularSector(PclfMpcError):
    pass


class OutsideDoa(PclfMpcError):
    pass


class NotStabilizable(PclfMpcError):
    pass


class ZeroTerminalSet(PclfMpcError):
    pass


class DimensionMismatch(PclfMpcError):
    pass


class ConfigError(PclfMpcError):
    pass
