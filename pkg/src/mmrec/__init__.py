"""Metamodel concept recommendation: corpus tooling, model, evaluation, service."""

__version__ = "0.1.0"
