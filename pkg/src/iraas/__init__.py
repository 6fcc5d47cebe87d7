"""Routing-as-a-Service for hybrid SDN: topology fusion, route ranking and telemetry."""

from .errors import IraasError

__version__ = "0.1.0"

__all__ = ["IraasError", "__version__"]
