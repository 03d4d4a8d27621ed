"""Forecast response-time spikes in a microservice from its own and its upstream nodes' telemetry."""

__version__ = "0.1.0"
