"""Simulation and analysis toolkit for memory-synchronized two-photon interference."""

from .errors import QMemHOMError
from .eventsim import ProtocolConfig, SimReport, SourceConfig, compare_modes, run_protocol, simulate_sources
from .interference import (BeamSplitter, DetectionWindow, SourceDistinguishability, coincidence_density,
                           fourfold_rate, hom_dip_scan, visibility)
from .memory import MemoryChannel, aligned_roundtrip, roundtrip
from .tagio import TimeTagStream, parse_tags, write_tags
from .tagproc import coincidences, conditional_g2, fourfold_count
from .wavepacket import PhaseProgram, TemporalWavepacket, TimeGrid, make_gaussian_wavepacket

__version__ = "0.1.0"

__all__ = [
    "BeamSplitter", "DetectionWindow", "MemoryChannel", "PhaseProgram", "ProtocolConfig", "QMemHOMError",
    "SimReport", "SourceConfig", "SourceDistinguishability", "TemporalWavepacket", "TimeGrid", "TimeTagStream",
    "aligned_roundtrip", "coincidence_density", "coincidences", "compare_modes", "conditional_g2",
    "fourfold_count", "fourfold_rate", "hom_dip_scan", "make_gaussian_wavepacket", "parse_tags", "roundtrip",
    "run_protocol", "simulate_sources", "visibility", "write_tags",
]
