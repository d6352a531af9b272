"""Leaderless concurrent atomic broadcast over regular overlay digraphs."""

from allconcur.digraph import (
    Digraph,
    build_binomial,
    build_complete,
    build_gs,
    diameter,
    vertex_connectivity,
)
from allconcur.protocol import Mode, Server

__all__ = [
    "Digraph",
    "Mode",
    "Server",
    "build_binomial",
    "build_complete",
    "build_gs",
    "diameter",
    "vertex_connectivity",
]
