"""Discrete-event simulation of cognitive-radio SU channel aggregation with queueing."""

__version__ = "0.1.0"
