"""End-to-end pipelines behind the command-line scenarios.

Each pipeline returns a :class:`ScenarioResult`: a flat summary plus named
tables whose first column is the independent variable.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import eventsim
from .config import RunConfig
from .histogram import CoincidenceHistogram
from .interference import (BeamSplitter, DetectionWindow, SourceDistinguishability, analytic_visibility,
                           beat_period, beat_profile, calibrate_mode_overlap, hom_dip_scan, step_phase_ratios,
                           visibility)
from .memory import MemoryChannel, aligned_roundtrip
from .tagio import AS1, AS1_HBT, AS2, AS2_HBT, DET_B, DET_C, S1, S2, concat, iter_tags
from .tagproc import CoincidenceAccumulator, coincidences, conditional_g2, fourfold_count
from .wavepacket import (PhaseProgram, TimeGrid, apply_phase, frequency_offset_mhz, likeness,
                         make_gaussian_wavepacket)


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple]

    @classmethod
    def from_histogram(cls, hist: CoincidenceHistogram, x: str, y: str, err: str = "error") -> Table:
        header = (x, y) if hist.errors is None else (x, y, err)
        return cls(header, hist.rows())


@dataclass
class ScenarioResult:
    scenario: str
    summary: dict
    tables: dict[str, Table] = field(default_factory=dict)


# --- shared builders ---------------------------------------------------------

def _grid(cfg: RunConfig) -> TimeGrid:
    g = cfg.grid
    return TimeGrid(g.start_ns, g.step_ns, g.count)


def source_packets(cfg: RunConfig):
    """The two source photons; the second is offset so |O|^2 matches ``overlap_sq``."""
    src = cfg.source
    grid = _grid(cfg)
    offset = src.fwhm_ns * math.sqrt(-math.log(src.overlap_sq) / (2 * math.log(2))) if src.overlap_sq > 0 \
        else 6 * src.fwhm_ns
    w1 = make_gaussian_wavepacket(grid, src.center_ns, src.fwhm_ns)
    w2 = make_gaussian_wavepacket(grid, src.center_ns + offset, src.fwhm_ns)
    return w1, w2


def _beamsplitter(cfg: RunConfig) -> BeamSplitter:
    bs = cfg.beamsplitter
    return BeamSplitter(bs.transmission, bs.reflection)


def _memory(cfg: RunConfig) -> MemoryChannel:
    return MemoryChannel(cfg.memory.efficiency, max(cfg.memory.lifetime_us, 1e-9))


def _delays(cfg: RunConfig) -> np.ndarray:
    d = cfg.windows.delays
    n = int(math.floor((d.stop_ns - d.start_ns) / d.step_ns + 1e-9)) + 1
    return d.start_ns + d.step_ns * np.arange(n)


def _source_config(cfg: RunConfig) -> eventsim.SourceConfig:
    src = cfg.source
    sc = eventsim.SourceConfig(
        pairs_per_window=src.pairs_per_window,
        window_length_us=src.window_length_us,
        repetition_rate_hz=src.repetition_rate_hz,
        herald_efficiency=src.herald_efficiency,
        as_detection_efficiency=src.as_detection_efficiency,
        two_pair_ratio=src.two_pair_ratio or 0.0,
        wavepacket_center_ns=src.emission_delay_ns,
        wavepacket_fwhm_ns=src.fwhm_ns,
    )
    if src.two_pair_ratio is None:
        sc = eventsim.tune_two_pair_ratio(sc, src.target_g2, cfg.windows.coincidence_window_ns)
    return sc


# --- scenarios ---------------------------------------------------------------

def run_hom_dip(cfg: RunConfig) -> ScenarioResult:
    """Conventional and memory-synchronized dips from the fourfold-rate expression."""
    w1, w2 = source_packets(cfg)
    bs = _beamsplitter(cfg)
    delays = _delays(cfg)
    conv_dist = SourceDistinguishability(cfg.source.mode_overlap, cfg.source.gbar2)
    conv = hom_dip_scan(w1, w2, bs, conv_dist, delays)
    w2m = aligned_roundtrip(w2, _memory(cfg), 0.0)
    sync_dist = SourceDistinguishability(cfg.memory.readout_likeness * cfg.source.mode_overlap, cfg.memory.gbar2)
    sync = hom_dip_scan(w1, w2m, bs, sync_dist, delays)
    o2 = likeness(w1, w2)
    summary = {
        "overlap_sq": o2,
        "visibility_conventional": visibility(conv),
        "visibility_synchronized": visibility(sync),
        "visibility_conventional_analytic": analytic_visibility(o2, bs, conv_dist),
        "visibility_synchronized_analytic": analytic_visibility(o2, bs, sync_dist, w1.energy, w2m.energy),
        "memory_output_energy": w2m.energy,
    }
    tables = {
        "hom_dip_conventional": Table.from_histogram(conv, "delay_ns", "fourfold_rate"),
        "hom_dip_synchronized": Table.from_histogram(sync, "delay_ns", "fourfold_rate"),
    }
    return ScenarioResult(cfg.scenario, summary, tables)


def run_step_phase(cfg: RunConfig) -> ScenarioResult:
    """Early/late half-window coincidences with a pi phase step on the stored photon."""
    ph, bs = cfg.phase, _beamsplitter(cfg)
    w1, w2 = source_packets(cfg)
    step = PhaseProgram.step(ph.transition_ns, 0.0, ph.step_rad)
    margin = cfg.windows.exclusion_margin_ns if cfg.windows else 25.0
    ideal = step_phase_ratios(w1, apply_phase(w1, step), ph.transition_ns, margin, bs)
    w2m = aligned_roundtrip(w2, _memory(cfg).with_read_phase(step), 0.0)
    if ph.target_same_ratio is not None:
        lam = calibrate_mode_overlap(w1, w2m, ph.transition_ns, ph.target_same_ratio, margin, bs)
    else:
        lam = cfg.memory.readout_likeness * cfg.source.mode_overlap
    dist = SourceDistinguishability(lam)
    real = step_phase_ratios(w1, w2m, ph.transition_ns, margin, bs, dist)
    profile = beat_profile(w1, w2m, bs, dist, binwidth=ph.binwidth_ns)
    summary = {
        "same_ratio_ideal": ideal["same"],
        "cross_ratio_ideal": ideal["cross"],
        "mode_overlap_calibrated": lam,
        "same_ratio": real["same"],
        "cross_ratio": real["cross"],
        "transition_ns": ph.transition_ns,
        "exclusion_margin_ns": margin,
    }
    tables = {"step_phase_profile": Table.from_histogram(profile, "delay_ns", "coincidence_probability")}
    return ScenarioResult(cfg.scenario, summary, tables)


def run_linear_phase(cfg: RunConfig) -> ScenarioResult:
    """Beat between a photon and a copy carrying a linear phase ramp."""
    ph, bs = cfg.phase, _beamsplitter(cfg)
    w1, _ = source_packets(cfg)
    ramp = PhaseProgram.linear(ph.ramp_start_ns, ph.ramp_span_rad, ph.ramp_duration_ns)
    w2 = apply_phase(w1, ramp)
    binwidth, span = cfg.windows.binwidth_ns, cfg.windows.span_ns
    profile = beat_profile(w1, w2, bs, binwidth=binwidth)
    window = (ph.ramp_start_ns + 10.0, ph.ramp_start_ns + ph.ramp_duration_ns - 10.0)
    summary = {
        "beat_period_ns": beat_period(profile),
        "frequency_offset_mhz": frequency_offset_mhz(w2, w1, window=window),
        "binwidth_ns": binwidth,
    }
    tables = {"beat_profile": Table.from_histogram(profile, "delay_ns", "coincidence_probability")}
    if ph.simulated_trials > 0:
        clicks = eventsim.simulate_interferometer(w1, w2, ph.simulated_trials, cfg.seeds.base, bs)
        counts = coincidences(clicks, DET_B, DET_C, binwidth, span)
        counts = replace(counts, errors=np.sqrt(counts.counts))
        summary["beat_period_simulated_ns"] = beat_period(counts)
        summary["simulated_coincidences"] = int(counts.total)
        tables["beat_counts"] = Table.from_histogram(counts, "delay_ns", "counts")
    return ScenarioResult(cfg.scenario, summary, tables)


def run_sync_rates(cfg: RunConfig) -> ScenarioResult:
    """Monte Carlo fourfold rates with and without memory, plus heralded g2."""
    sim, win, memc = cfg.simulation, cfg.windows, cfg.memory
    sc = _source_config(cfg)
    seed = cfg.seeds.base
    mem = _memory(cfg)
    stream = eventsim.simulate_sources(sc, sc, seed, n_windows=sim.n_windows)
    proto = eventsim.ProtocolConfig(memory=mem, coincidence_window=win.coincidence_window_ns,
                                    readout_delay_step=win.readout_delay_step_ns, seed=seed)
    conv, memr = eventsim.compare_modes(stream, proto)
    oracle = eventsim.expected_counts(sc, sc, proto)
    summary = {
        "n_windows": sim.n_windows,
        "elapsed_sim_time_s": conv.elapsed_sim_time,
        "fourfold_count_conventional": conv.fourfold_count,
        "fourfold_count_memory": memr.fourfold_count,
        "fourfold_rate_conventional_per_s": conv.fourfold_rate,
        "fourfold_rate_memory_per_s": memr.fourfold_rate,
        "improvement_factor": memr.improvement_factor,
        "improvement_factor_expected": oracle["improvement_factor"],
        "two_pair_ratio": sc.two_pair_ratio,
    }
    rows = []
    for k, life in enumerate(sim.lifetimes_us):
        p = replace(proto, memory=replace(mem, lifetime_us=life))
        c, m = eventsim.compare_modes(stream, p)
        gain = m.improvement_factor
        err = gain * math.sqrt(1 / max(c.fourfold_count, 1) + 1 / max(m.fourfold_count, 1))
        rows.append((float(life), gain, err))
    tables = {"improvement_vs_lifetime": Table(("lifetime_us", "improvement_factor", "error"), rows)}
    if sim.g2_windows > 0:
        hbt = eventsim.simulate_sources(sc, sc, seed + 1, n_windows=sim.g2_windows, hbt=True)
        gate = win.coincidence_window_ns
        g_src = conditional_g2(hbt, S1, AS1, AS1_HBT, gate)
        surv = float(mem.survival(memc.storage_ns))
        noise = memc.readout_noise
        if noise is None:
            noise = eventsim.tune_readout_noise(sc, surv, memc.target_g2, gate)
        out = eventsim.memory_output_stream(hbt, mem, memc.storage_ns, noise, sc.as_detection_efficiency,
                                            gate, seed=seed)
        g_mem = conditional_g2(out, S2, AS2, AS2_HBT, gate, delay=memc.storage_ns)
        summary.update({
            "g2_source": g_src.g2,
            "g2_source_stderr": g_src.stderr,
            "g2_memory": g_mem.g2,
            "g2_memory_stderr": g_mem.stderr,
            "readout_noise": noise,
        })
    return ScenarioResult(cfg.scenario, summary, tables)


def run_analyze_tags(cfg: RunConfig) -> ScenarioResult:
    """Coincidence histogram, heralded g2 and fourfold count of a tag file."""
    win = cfg.windows
    acc = CoincidenceAccumulator(DET_B, DET_C, win.binwidth_ns, win.span_ns)
    chunks = list(iter_tags(cfg.input.tag_file))
    for chunk in chunks:
        acc.update(chunk)
    stream = concat(chunks) if chunks else None
    summary: dict = {"records": 0, "counts_by_channel": {}}
    gate = win.coincidence_window_ns
    if stream is not None:
        summary["records"] = len(stream)
        summary["counts_by_channel"] = stream.counts_by_channel()
        for label, (h, a, b) in {"g2_as1": (S1, AS1, AS1_HBT), "g2_as2": (S2, AS2, AS2_HBT)}.items():
            est = conditional_g2(stream, h, a, b, gate)
            summary[label] = est.g2
            summary[label + "_insufficient_statistics"] = est.insufficient_statistics
        h = win.readout_delay_step_ns / 2
        windows = [DetectionWindow(S2, -h, h), DetectionWindow(DET_B, -h, gate + h),
                   DetectionWindow(DET_C, -h, gate + h)]
        summary["fourfold_count"] = fourfold_count(stream, windows, S1, win.exclusion_margin_ns,
                                                   win.transition_ns).count
    else:
        summary["fourfold_count"] = 0
    hist = acc.result()
    tables = {"coincidences": Table.from_histogram(hist, "delay_ns", "counts")}
    summary["coincidences_total"] = int(hist.total)
    return ScenarioResult(cfg.scenario, summary, tables)


PIPELINES = {
    "hom-dip": run_hom_dip,
    "step-phase": run_step_phase,
    "linear-phase": run_linear_phase,
    "sync-rates": run_sync_rates,
    "analyze-tags": run_analyze_tags,
}


def run_scenario(cfg: RunConfig) -> ScenarioResult:
    return PIPELINES[cfg.scenario](cfg)


# --- output ------------------------------------------------------------------

def write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def table_bytes(table: Table) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def summary_bytes(result: ScenarioResult, seed: int) -> bytes:
    doc = {"scenario": result.scenario, "seed": seed, **_clean(result.summary)}
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def write_result(result: ScenarioResult, out_dir, seed: int) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in result.tables.items():
        path = out / f"{name}.csv"
        write_atomic(path, table_bytes(table))
        written.append(path)
    path = out / "summary.json"
    write_atomic(path, summary_bytes(result, seed))
    written.append(path)
    return written
