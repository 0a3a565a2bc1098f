"""Exception hierarchy. Every error carries enough context to act on."""


class GeometryError(Exception):
    """Base class for all package errors."""


class OutOfDomain(GeometryError):
    pass


class NotSPD(GeometryError):
    pass


class SingularMetric(GeometryError):
    pass


class ResidualTooLarge(GeometryError):
    pass


class DegeneratePlane(GeometryError):
    pass


class AmbiguousSpectrum(GeometryError):
    """A curvature eigenvalue sits inside the ambiguity band of a threshold."""


class LeftAtlas(GeometryError):
    def __init__(self, message, t_exit=None, chart=None, point=None):
        super().__init__(message)
        self.t_exit = t_exit
        self.chart = chart
        self.point = point


class StepUnderflow(GeometryError):
    pass


class WitnessNotFlat(GeometryError):
    pass


class SingularExpMap(GeometryError):
    pass


class InfeasibleRamp(GeometryError):
    def __init__(self, message, feasible=None):
        super().__init__(message)
        self.feasible = feasible


class GluingNotIsometric(GeometryError):
    pass


class DanglingBoundary(GeometryError):
    pass


class MixedRegion(GeometryError):
    pass


class ConfigError(GeometryError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class UnknownSeries(GeometryError):
    pass
