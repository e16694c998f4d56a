"""Complex temporal wavepackets and control-phase programs on uniform grids.

Times are in ns and amplitudes in ns^-1/2, so ``sum(|a|^2) * step`` is the
photon-number weight of a packet. All time integrals are Riemann sums over
the grid; for pulses confined to the grid interior this coincides with the
trapezoid rule because the end samples vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.special import erfc

from .errors import GridMismatchError, SupportError

NORM_TOL = 1e-9
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class TimeGrid:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 2:
            raise ValueError(f"grid needs at least 2 samples, got {self.count}")
        object.__setattr__(self, "count", int(self.count))

    @property
    def times(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def end(self) -> float:
        """Time of the last sample."""
        return self.start + self.step * (self.count - 1)

    def shifted(self, dt: float) -> TimeGrid:
        return TimeGrid(self.start + dt, self.step, self.count)

    def matches(self, other: TimeGrid) -> bool:
        return (
            self.count == other.count
            and math.isclose(self.step, other.step, rel_tol=1e-12)
            and abs(self.start - other.start) <= 1e-9 * self.step
        )


DEFAULT_GRID = TimeGrid(0.0, 2.0, 1000)


def require_same_grid(a: TemporalWavepacket, b: TemporalWavepacket) -> TimeGrid:
    if not a.grid.matches(b.grid):
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")
    return a.grid


@dataclass(frozen=True, eq=False)
class TemporalWavepacket:
    grid: TimeGrid
    amplitude: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amp = np.array(self.amplitude, dtype=complex)
        if amp.ndim != 1 or amp.size != self.grid.count:
            raise ValueError(f"amplitude has {amp.size} samples, grid has {self.grid.count}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitude", amp)
        if self.normalized and abs(self.energy - 1.0) > NORM_TOL:
            raise ValueError(f"packet marked normalized has norm {self.energy!r}")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.grid.step)

    def normalize(self) -> TemporalWavepacket:
        e = self.energy
        if e <= 0:
            raise ValueError("cannot normalize a zero wavepacket")
        return TemporalWavepacket(self.grid, self.amplitude / math.sqrt(e), normalized=True)

    def scaled(self, factor: complex) -> TemporalWavepacket:
        return TemporalWavepacket(self.grid, self.amplitude * factor)

    def on_grid(self, grid: TimeGrid) -> TemporalWavepacket:
        """Relabel onto an equivalent grid (absorbs float drift in ``start``)."""
        if not self.grid.matches(grid):
            raise GridMismatchError(f"grids differ: {self.grid} vs {grid}")
        return TemporalWavepacket(grid, self.amplitude, self.normalized)


@dataclass(frozen=True)
class PhaseProgram:
    """Control-laser phase as a function of time (rad).

    Build instances with the ``constant``/``step``/``linear``/``piecewise``
    constructors. ``offset`` delays the whole program, ``p.delayed(d)(t) ==
    p(t - d)``, and ``p1 + p2`` is evaluated pointwise.
    """

    kind: Literal["constant", "step", "linear", "piecewise", "sum"]
    phi0: float = 0.0
    t_step: float = 0.0
    phi_low: float = 0.0
    phi_high: float = 0.0
    ramp_start: float = 0.0
    ramp_rate: float = 0.0
    span: float = 0.0
    breakpoints: tuple[tuple[float, float], ...] = ()
    terms: tuple[PhaseProgram, ...] = field(default=())
    offset: float = 0.0

    def __post_init__(self):
        if self.kind == "piecewise":
            if len(self.breakpoints) < 1:
                raise ValueError("piecewise program needs at least one breakpoint")
            ts = [t for t, _ in self.breakpoints]
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ValueError("piecewise breakpoints must be strictly increasing in time")
        elif self.kind == "linear":
            if self.ramp_rate == 0 and self.span != 0:
                raise ValueError("linear program with nonzero span needs nonzero ramp rate")
            if self.ramp_rate != 0 and self.span / self.ramp_rate < 0:
                raise ValueError("linear span and ramp rate must share a sign")
        elif self.kind not in ("constant", "step", "sum"):
            raise ValueError(f"unknown phase program kind {self.kind!r}")

    @classmethod
    def constant(cls, phi0: float = 0.0) -> PhaseProgram:
        return cls("constant", phi0=phi0)

    @classmethod
    def step(cls, t_step: float, phi_low: float = 0.0, phi_high: float = math.pi) -> PhaseProgram:
        return cls("step", t_step=t_step, phi_low=phi_low, phi_high=phi_high)

    @classmethod
    def linear(cls, start: float, span: float, duration: float | None = None,
               rate: float | None = None) -> PhaseProgram:
        """Ramp from 0 at ``start`` to ``span``, then hold.

        Give either the ramp ``duration`` (rate becomes span/duration) or the
        ``rate`` in rad/ns.
        """
        if (duration is None) == (rate is None):
            raise ValueError("give exactly one of duration or rate")
        if duration is not None:
            if duration <= 0:
                raise ValueError("ramp duration must be positive")
            rate = span / duration
        return cls("linear", ramp_start=start, ramp_rate=rate, span=span)

    @classmethod
    def piecewise(cls, breakpoints: Sequence[tuple[float, float]]) -> PhaseProgram:
        """Linear interpolation between (time, phase) breakpoints, held outside."""
        return cls("piecewise", breakpoints=tuple((float(t), float(p)) for t, p in breakpoints))

    @property
    def ramp_duration(self) -> float:
        return self.span / self.ramp_rate if self.ramp_rate else 0.0

    def delayed(self, dt: float) -> PhaseProgram:
        return replace(self, offset=self.offset + dt)

    def __add__(self, other: PhaseProgram) -> PhaseProgram:
        return PhaseProgram("sum", terms=(self, other))

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(t)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float) - self.offset
        if self.kind == "constant":
            return np.full_like(t, self.phi0)
        if self.kind == "step":
            return np.where(t < self.t_step, self.phi_low, self.phi_high)
        if self.kind == "linear":
            if self.ramp_rate == 0:
                return np.zeros_like(t)
            u = np.clip(t - self.ramp_start, 0.0, self.ramp_duration)
            return self.ramp_rate * u
        if self.kind == "piecewise":
            ts, ps = zip(*self.breakpoints)
            return np.interp(t, ts, ps)
        return sum((term.evaluate(t) for term in self.terms), np.zeros_like(t))


@dataclass(frozen=True)
class ControlEnvelope:
    """Control-laser Rabi envelope for write and read (rad/ns).

    The read amplitude is given by piecewise-linear samples in readout time;
    with no samples it stays at ``write_amplitude``.
    """

    write_amplitude: float
    read_times: tuple[float, ...] = ()
    read_values: tuple[float, ...] = ()
    read_phase: PhaseProgram = PhaseProgram.constant(0.0)

    def __post_init__(self):
        if not self.write_amplitude > 0:
            raise ValueError("write amplitude must be positive")
        if len(self.read_times) != len(self.read_values):
            raise ValueError("read_times and read_values differ in length")
        if any(v < 0 for v in self.read_values):
            raise ValueError("read amplitude must be non-negative")
        if any(b <= a for a, b in zip(self.read_times, self.read_times[1:])):
            raise ValueError("read_times must be strictly increasing")

    def read_amplitude(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self.read_times:
            return np.full_like(t, self.write_amplitude)
        return np.interp(t, self.read_times, self.read_values)


def make_gaussian_wavepacket(grid: TimeGrid, center: float, fwhm: float) -> TemporalWavepacket:
    """Normalized real Gaussian whose *intensity* has the given FWHM."""
    if not fwhm > 0:
        raise ValueError("fwhm must be positive")
    sigma = fwhm / FWHM_PER_SIGMA
    clipped = 0.5 * erfc((center - grid.start) / (math.sqrt(2) * sigma)) \
        + 0.5 * erfc((grid.end - center) / (math.sqrt(2) * sigma))
    if clipped > 1e-6:
        raise SupportError(
            f"Gaussian (center {center}, fwhm {fwhm}) loses {clipped:.2e} of its norm "
            f"outside grid [{grid.start}, {grid.end}]"
        )
    amp = np.exp(-((grid.times - center) ** 2) / (4 * sigma**2))
    return TemporalWavepacket(grid, amp).normalize()


def overlap(a: TemporalWavepacket, b: TemporalWavepacket) -> complex:
    """<a|b> = sum(conj(a) * b) * step."""
    grid = require_same_grid(a, b)
    return complex(np.vdot(a.amplitude, b.amplitude) * grid.step)


def likeness(a: TemporalWavepacket, b: TemporalWavepacket) -> float:
    """Phase-blind waveform similarity: squared overlap of root intensities."""
    grid = require_same_grid(a, b)
    s = float(np.sum(np.abs(a.amplitude) * np.abs(b.amplitude)) * grid.step)
    return s * s


def apply_phase(w: TemporalWavepacket, p: PhaseProgram) -> TemporalWavepacket:
    """Multiply by exp(-i phi(t)) sample by sample."""
    phi = p.evaluate(w.times)
    if not np.any(phi):
        return TemporalWavepacket(w.grid, w.amplitude, w.normalized)
    return TemporalWavepacket(w.grid, w.amplitude * np.exp(-1j * phi), w.normalized)


def retime(w: TemporalWavepacket, dt: float) -> TemporalWavepacket:
    """Same samples, time labels moved later by ``dt``."""
    return TemporalWavepacket(w.grid.shifted(dt), w.amplitude, w.normalized)


def shift(w: TemporalWavepacket, delta: float) -> TemporalWavepacket:
    """Translate the packet later by ``delta`` on its own grid (zero fill).

    Whole-sample shifts are exact; fractional ones interpolate linearly.
    """
    n = delta / w.grid.step
    k = round(n)
    amp = w.amplitude
    if abs(n - k) < 1e-9:
        out = np.zeros_like(amp)
        if k >= 0:
            if k < amp.size:
                out[k:] = amp[: amp.size - k]
        elif -k < amp.size:
            out[:k] = amp[-k:]
        return TemporalWavepacket(w.grid, out)
    return resample(retime(w, delta), w.grid)


def resample(w: TemporalWavepacket, grid: TimeGrid) -> TemporalWavepacket:
    """Linear interpolation of the complex amplitude onto ``grid`` (zero outside)."""
    src = w.times
    t = grid.times
    re = np.interp(t, src, w.amplitude.real, left=0.0, right=0.0)
    im = np.interp(t, src, w.amplitude.imag, left=0.0, right=0.0)
    return TemporalWavepacket(grid, re + 1j * im)


def intensity_fwhm(w: TemporalWavepacket) -> float:
    """FWHM of |a|^2, with linear interpolation at the half-maximum crossings."""
    inten = w.intensity
    t = w.times
    peak = int(np.argmax(inten))
    half = inten[peak] / 2
    above = np.nonzero(inten >= half)[0]
    lo, hi = above[0], above[-1]

    def cross(i0, i1):
        y0, y1 = inten[i0], inten[i1]
        if y1 == y0:
            return t[i0]
        return t[i0] + (half - y0) * (t[i1] - t[i0]) / (y1 - y0)

    left = cross(lo - 1, lo) if lo > 0 else t[0]
    right = cross(hi, hi + 1) if hi < inten.size - 1 else t[-1]
    return float(right - left)


def intensity_centroid(w: TemporalWavepacket) -> float:
    inten = w.intensity
    return float(np.sum(inten * w.times) / np.sum(inten))


def frequency_offset_mhz(w: TemporalWavepacket, reference: TemporalWavepacket | None = None,
                         window: tuple[float, float] | None = None,
                         threshold: float = 1e-3) -> float:
    """Frequency offset of ``w`` relative to ``reference`` in MHz.

    Least-squares slope of the unwrapped relative phase over samples whose
    intensity exceeds ``threshold`` of the peak (and lie in ``window`` if
    given). Sign convention follows exp(-i phi): a rising control phase gives
    a positive offset.
    """
    amp = w.amplitude
    if reference is not None:
        require_same_grid(w, reference)
        amp = amp * np.conj(reference.amplitude)
    t = w.times
    mag = np.abs(amp)
    mask = mag**2 >= threshold * np.max(mag) ** 2
    if window is not None:
        mask &= (t >= window[0]) & (t <= window[1])
    idx = np.nonzero(mask)[0]
    if idx.size < 2:
        raise ValueError("too few samples to estimate a frequency offset")
    phase = np.unwrap(np.angle(amp[idx]))
    slope = np.polyfit(t[idx], phase, 1)[0]
    return float(-slope / (2 * math.pi) * 1e3)
