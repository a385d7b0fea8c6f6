"""Workload applications driven by simulated clients."""

from .coloring import ColoringParams, ColoringWorkload
from .conjunctive import ConjunctiveParams, ConjunctiveWorkload
from .graph import Graph, generate_powerlaw_graph, preprocess_high_degree
from .weather import WeatherParams, WeatherWorkload

__all__ = [
    "ColoringParams", "ColoringWorkload", "ConjunctiveParams", "ConjunctiveWorkload",
    "Graph", "WeatherParams", "WeatherWorkload", "generate_powerlaw_graph", "preprocess_high_degree",
]
