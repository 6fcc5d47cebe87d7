"""Exception hierarchy shared by every iRaaS module.

Each error carries a module-qualified ``code`` (e.g. ``"metric.WeightSumViolation"``)
and an ``exit_code`` used by the CLI: 1 validation, 2 runtime pipeline, 3 I/O.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class IraasError(Exception):
    module = "iraas"
    exit_code = EXIT_RUNTIME

    @property
    def code(self) -> str:
        return f"{self.module}.{type(self).__name__}"


class ValidationError(IraasError):
    exit_code = EXIT_VALIDATION


class PipelineError(IraasError):
    exit_code = EXIT_RUNTIME


class IOFailure(IraasError):
    exit_code = EXIT_IO


# graph-model
class GraphError(ValidationError):
    module = "graph"


class EmptyInput(GraphError):
    pass


class DuplicateController(GraphError):
    pass


class InvalidDesignated(GraphError):
    pass


class NegativeCost(GraphError):
    pass


class NotSimpleGraph(GraphError):
    pass


# metric-engine
class MetricError(ValidationError):
    module = "metric"


class WeightSumViolation(MetricError):
    pass


class EmptyAttributeSet(MetricError):
    pass


class UnknownAttribute(MetricError):
    pass


class PresetMismatch(MetricError):
    pass


class MissingAttribute(MetricError):
    pass


class NonFiniteInput(MetricError):
    pass


class WindowTooShort(MetricError):
    pass


class MissingLinkSample(PipelineError):
    module = "metric"


# route-engine
class RouteError(PipelineError):
    module = "route"


class ChecksumMismatch(ValidationError):
    module = "route"


class UnknownAlgorithm(ValidationError):
    module = "route"


class BadCutoff(ValidationError):
    module = "route"


class GraphTooLarge(RouteError):
    pass


class ForestGraphMismatch(RouteError):
    pass


class UnknownLink(RouteError):
    pass


class UnknownNode(RouteError):
    pass


class NoRoute(RouteError):
    pass


class PreconditionViolation(ValidationError):
    module = "route"


# iraas-client
class ClientError(PipelineError):
    module = "client"


class DuplicateIntentId(ValidationError):
    module = "client"


class NoControllers(ValidationError):
    module = "client"


class MalformedIntent(ValidationError):
    module = "client"


class AllControllersUnreachable(ClientError):
    pass


class MalformedTopologyDocument(ClientError):
    def __init__(self, controller_id: str, detail: str = "") -> None:
        super().__init__(f"{controller_id}: {detail}" if detail else controller_id)
        self.controller_id = controller_id


class ControllerUnreachable(ClientError):
    pass


class ServerUnreachable(ClientError):
    pass


class RequestTimeout(ClientError):
    pass


class ResponseValidationFailed(ClientError):
    pass


class UnknownControllerForNode(ClientError):
    pass


# shellmon
class TelemetryError(PipelineError):
    module = "shellmon"


class ParseError(ValidationError):
    module = "shellmon"


class DuplicateSourceId(ValidationError):
    module = "shellmon"


class UnknownMode(ValidationError):
    module = "shellmon"


class HostUnreachable(TelemetryError):
    pass


class MalformedBatch(TelemetryError):
    pass


class BusUnreachable(TelemetryError):
    pass


class DeviceReadFailure(TelemetryError):
    pass


# netsim
class SimError(PipelineError):
    module = "netsim"


class BadSpec(ValidationError):
    module = "netsim"


class ClockRegression(SimError):
    pass


class UnknownController(SimError):
    pass


class UnknownDevice(SimError):
    pass


# cli
class UnknownPair(ValidationError):
    module = "cli"


class UnknownSource(ValidationError):
    module = "cli"


def _all_subclasses(cls: type) -> list[type]:
    out = []
    for sub in cls.__subclasses__():
        out.append(sub)
        out.extend(_all_subclasses(sub))
    return out


def error_from_code(code: str, detail: str = "") -> IraasError:
    """Rebuild an error from its module-qualified code (used across the HTTP boundary)."""
    for cls in _all_subclasses(IraasError):
        if f"{cls.module}.{cls.__name__}" == code:
            try:
                return cls(detail)
            except TypeError:
                break
    err = PipelineError(detail)
    return err
