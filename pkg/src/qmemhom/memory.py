"""EIT memory: store a photon in a spin wave, read it out with a shaped control.

The readout field copies the stored envelope and picks up the control phase,
``psi_r(u) = S(u) * sqrt(eta_read) * exp(-i[phi_r(u) + phi_s0])`` in the
readout frame ``u = t - t_r``. Loss is split evenly between write and read.
Storage decay uses an energy survival of ``exp(-dt / lifetime)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .wavepacket import (
    NORM_TOL,
    ControlEnvelope,
    PhaseProgram,
    TemporalWavepacket,
    TimeGrid,
    retime,
)


class StorageLifetimeWarning(UserWarning):
    """Readout requested after the memory's storage lifetime."""


@dataclass(frozen=True)
class EnsembleParams:
    coupling: float = 1.0       # g, rad/ns per unit collective amplitude
    atom_number: int = 400

    def __post_init__(self):
        if not self.coupling > 0:
            raise ValueError("coupling g must be positive")
        if self.atom_number < 1:
            raise ValueError("atom number must be >= 1")

    @property
    def collective_coupling(self) -> float:
        return self.coupling * math.sqrt(self.atom_number)


def mixing_angle(ensemble: EnsembleParams, omega_c: float) -> float:
    """Dark-state mixing angle, tan(theta) = g sqrt(N) / Omega_c."""
    if omega_c < 0:
        raise ValueError("control Rabi frequency must be non-negative")
    return math.atan2(ensemble.collective_coupling, omega_c)


@dataclass(frozen=True)
class MemoryChannel:
    efficiency: float = 0.86
    lifetime_us: float = 5.0
    global_phase: float = 0.0
    control: ControlEnvelope = field(default_factory=lambda: ControlEnvelope(1.0))
    ensemble: EnsembleParams = field(default_factory=EnsembleParams)
    shape_amplitude: bool = False

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not self.lifetime_us > 0:
            raise ValueError("storage lifetime must be positive")

    @property
    def lifetime_ns(self) -> float:
        return self.lifetime_us * 1e3

    def survival(self, storage_ns) -> np.ndarray | float:
        """Round-trip energy survival eta * exp(-t / lifetime)."""
        return self.efficiency * np.exp(-np.asarray(storage_ns, dtype=float) / self.lifetime_ns)

    def with_read_phase(self, program: PhaseProgram) -> MemoryChannel:
        return replace(self, control=replace(self.control, read_phase=program))


@dataclass(frozen=True, eq=False)
class SpinWave:
    grid: TimeGrid
    amplitude: np.ndarray
    stored_at: float

    def __post_init__(self):
        amp = np.array(self.amplitude, dtype=complex)
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)
        if self.energy > 1 + NORM_TOL:
            raise ValueError("spin-wave norm exceeds 1")

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.grid.step)


def store(input: TemporalWavepacket, mem: MemoryChannel, t_store: float = 0.0) -> SpinWave:
    """Map the photon envelope onto the spin wave with write efficiency sqrt(eta).

    The physical spin wave is (g / Omega_w) psi; it is kept here in
    photon-equivalent units so its norm is the stored excitation probability.
    """
    if not input.grid.start <= t_store <= input.grid.end:
        raise ValueError(f"t_store {t_store} outside input grid [{input.grid.start}, {input.grid.end}]")
    write = math.sqrt(math.sqrt(mem.efficiency))
    return SpinWave(input.grid, input.amplitude * write, t_store)


def readout(s: SpinWave, mem: MemoryChannel, t_r: float) -> TemporalWavepacket:
    """Release the spin wave at ``t_r``; output is delayed by ``t_r - stored_at``."""
    dt = t_r - s.stored_at
    if dt < 0:
        raise ValueError("readout time precedes storage time")
    if dt > mem.lifetime_ns:
        warnings.warn(
            f"readout after {dt:.0f} ns exceeds storage lifetime {mem.lifetime_ns:.0f} ns",
            StorageLifetimeWarning,
            stacklevel=2,
        )
    u = s.grid.times - s.stored_at
    phase = mem.control.read_phase.evaluate(u) + mem.global_phase
    factor = math.sqrt(math.sqrt(mem.efficiency)) * math.exp(-dt / (2 * mem.lifetime_ns))
    amp = s.amplitude * factor * np.exp(-1j * phase)
    if mem.shape_amplitude:
        amp = amp * (mem.control.read_amplitude(u) / mem.control.write_amplitude)
    return TemporalWavepacket(s.grid.shifted(dt), amp)


def roundtrip(input: TemporalWavepacket, mem: MemoryChannel, delay: float,
              t_store: float | None = None) -> TemporalWavepacket:
    """Store at ``t_store`` (default: grid start) and read out ``delay`` ns later."""
    if delay < 0:
        raise ValueError("storage delay must be non-negative")
    if t_store is None:
        t_store = input.grid.start
    return readout(store(input, mem, t_store), mem, t_store + delay)


def aligned_roundtrip(input: TemporalWavepacket, mem: MemoryChannel, delay: float,
                      t_store: float | None = None) -> TemporalWavepacket:
    """Roundtrip expressed back on the input's grid.

    This is the readout as seen in a frame that moves with the readout
    trigger, which is how a synchronized photon meets its partner.
    """
    out = roundtrip(input, mem, delay, t_store)
    return retime(out, -delay).on_grid(input.grid)
