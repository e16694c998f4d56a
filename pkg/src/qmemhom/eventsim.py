"""Discrete-event Monte Carlo of two heralded sources and memory synchronization.

Each experimental window holds a Poisson number of pair emissions at uniform
times. A pair gives a Stokes herald (detected with ``herald_efficiency``) and
an anti-Stokes photon delayed from it by a draw from the Gaussian wavepacket
intensity. With probability ``two_pair_ratio`` the emission carries a second
anti-Stokes photon, which is what raises the heralded g2 above zero.

Windows are generated in blocks whose seeds derive from (seed, block), so a
run is reproducible regardless of how blocks are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .histogram import CoincidenceHistogram
from .interference import BeamSplitter, SourceDistinguishability, fourfold_rate
from .memory import MemoryChannel
from .tagio import (AS1, AS1_HBT, AS2, AS2_HBT, DET_B, DET_C, S1, S2, StreamMetadata, TimeTagStream,
                    concat)
from .tagproc import pair_delays
from .wavepacket import FWHM_PER_SIGMA, TemporalWavepacket

BLOCK_WINDOWS = 10_000


@dataclass(frozen=True)
class SourceConfig:
    pairs_per_window: float = 24.0
    window_length_us: float = 300.0
    repetition_rate_hz: float = 50.0
    herald_efficiency: float = 0.3
    as_detection_efficiency: float = 0.3
    two_pair_ratio: float = 0.0
    wavepacket_center_ns: float = 320.0
    wavepacket_fwhm_ns: float = 320.0

    def __post_init__(self):
        if self.pairs_per_window < 0:
            raise ValueError("pairs_per_window must be non-negative")
        for name in ("herald_efficiency", "as_detection_efficiency"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.two_pair_ratio <= 1.0:
            raise ValueError("two_pair_ratio must lie in [0, 1]")
        if self.window_length_us <= 0 or self.repetition_rate_hz <= 0:
            raise ValueError("window length and repetition rate must be positive")
        if self.window_length_us * 1e-6 * self.repetition_rate_hz > 1.0:
            raise ValueError("windows overlap: window_length * repetition_rate exceeds 1")
        if self.wavepacket_fwhm_ns <= 0:
            raise ValueError("wavepacket FWHM must be positive")

    @property
    def window_ns(self) -> float:
        return self.window_length_us * 1e3

    @property
    def sigma_ns(self) -> float:
        return self.wavepacket_fwhm_ns / FWHM_PER_SIGMA

    @property
    def herald_rate(self) -> float:
        """Detected heralds per ns inside a window."""
        return self.pairs_per_window * self.herald_efficiency / self.window_ns

    def gate_fraction(self, gate_ns: float) -> float:
        """Probability that the anti-Stokes photon lands in [0, gate] after its herald."""
        c, s = self.wavepacket_center_ns, self.sigma_ns
        return float(norm.cdf((gate_ns - c) / s) - norm.cdf(-c / s))

    def background_mean(self, gate_ns: float) -> float:
        """Mean number of other pairs' anti-Stokes photons inside one gate."""
        return self.pairs_per_window * (1 + self.two_pair_ratio) * gate_ns / self.window_ns


def _source_block(cfg: SourceConfig, rng: np.random.Generator, first_window: int, n_windows: int,
                  period_ns: float, herald_ch: int, as_ch: int, hbt_ch: int | None):
    n = rng.poisson(cfg.pairs_per_window, size=n_windows)
    total = int(n.sum())
    win = np.repeat(np.arange(first_window, first_window + n_windows), n)
    emit = rng.random(total) * cfg.window_ns
    base = win * period_ns
    herald = rng.random(total) < cfg.herald_efficiency
    t_h = base[herald] + emit[herald]

    extra = rng.random(total) < cfg.two_pair_ratio
    src = np.concatenate([np.arange(total), np.nonzero(extra)[0]])
    delay = rng.normal(cfg.wavepacket_center_ns, cfg.sigma_ns, size=src.size)
    detected = rng.random(src.size) < cfg.as_detection_efficiency
    t_as = base[src] + emit[src] + delay
    keep = detected & (t_as >= base[src])
    t_as = t_as[keep]
    as_chan = np.full(t_as.size, as_ch, dtype=np.uint8)
    if hbt_ch is not None:
        as_chan[rng.random(t_as.size) < 0.5] = hbt_ch
    chans = np.concatenate([np.full(t_h.size, herald_ch, np.uint8), as_chan])
    return chans, np.concatenate([t_h, t_as])


def _quantize(t: np.ndarray, resolution: int) -> np.ndarray:
    return (np.floor(t / resolution) * resolution).astype(np.int64)


def simulate_sources(cfg1: SourceConfig, cfg2: SourceConfig, seed: int, duration: float | None = None,
                     n_windows: int | None = None, hbt: bool = False,
                     resolution_ns: int = 2) -> TimeTagStream:
    """Tags on s1/as1/s2/as2 for ``duration`` seconds (or ``n_windows`` windows).

    With ``hbt`` each detected anti-Stokes photon is routed 50:50 to its
    source's as and as_hbt channels, as behind a Hanbury Brown-Twiss splitter.
    """
    if (cfg1.window_length_us, cfg1.repetition_rate_hz) != (cfg2.window_length_us, cfg2.repetition_rate_hz):
        raise ValueError("both sources must share the experimental window timing")
    if n_windows is None:
        if duration is None or duration <= 0:
            raise ValueError("duration must be positive")
        n_windows = int(round(duration * cfg1.repetition_rate_hz))
    period = 1e9 / cfg1.repetition_rate_hz
    md = StreamMetadata(window_length_ns=cfg1.window_ns, repetition_rate_hz=cfg1.repetition_rate_hz,
                        n_windows=n_windows, resolution_ns=resolution_ns)
    blocks = []
    for b, first in enumerate(range(0, n_windows, BLOCK_WINDOWS)):
        nw = min(BLOCK_WINDOWS, n_windows - first)
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        c1, t1 = _source_block(cfg1, rng, first, nw, period, S1, AS1, AS1_HBT if hbt else None)
        c2, t2 = _source_block(cfg2, rng, first, nw, period, S2, AS2, AS2_HBT if hbt else None)
        ch = np.concatenate([c1, c2])
        ts = _quantize(np.concatenate([t1, t2]), resolution_ns)
        order = np.lexsort((ch, ts))
        blocks.append(TimeTagStream(ch[order], ts[order], md))
    return concat(blocks, md)


@dataclass(frozen=True)
class ProtocolConfig:
    mode: Literal["conventional", "memory_assisted"] = "memory_assisted"
    memory: MemoryChannel = field(default_factory=MemoryChannel)
    coincidence_window: float = 640.0
    readout_delay_step: float = 150.0
    delay: float = 0.0
    seed: int = 0
    acceptance: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.mode not in ("conventional", "memory_assisted"):
            raise ValueError(f"unknown protocol mode {self.mode!r}")
        if not self.coincidence_window > 0:
            raise ValueError("coincidence_window must be positive")
        if not self.readout_delay_step > 0:
            raise ValueError("readout_delay_step must be positive")

    def accept(self, dt: np.ndarray) -> np.ndarray:
        if self.acceptance is None:
            return np.full(np.shape(dt), 0.5)
        return np.asarray(self.acceptance(np.asarray(dt, dtype=float)), dtype=float)


@dataclass(frozen=True)
class SimReport:
    mode: str
    fourfold_count: int
    elapsed_sim_time: float
    improvement_factor: float | None = None

    @property
    def fourfold_rate(self) -> float:
        return self.fourfold_count / self.elapsed_sim_time if self.elapsed_sim_time > 0 else 0.0

    def to_text(self) -> str:
        rows = {
            "mode": self.mode,
            "fourfold_count": self.fourfold_count,
            "elapsed_sim_time_s": repr(self.elapsed_sim_time),
            "fourfold_rate_per_s": repr(self.fourfold_rate),
        }
        if self.improvement_factor is not None:
            rows["improvement_factor"] = repr(self.improvement_factor)
        return "".join(f"{k}={v}\n" for k, v in rows.items())

    @classmethod
    def from_text(cls, text: str) -> SimReport:
        kv = dict(line.split("=", 1) for line in text.splitlines() if line)
        imp = kv.get("improvement_factor")
        return cls(kv["mode"], int(kv["fourfold_count"]), float(kv["elapsed_sim_time_s"]),
                   float(imp) if imp is not None else None)


def hom_acceptance(w1: TemporalWavepacket, w2: TemporalWavepacket, bs: BeamSplitter = BeamSplitter(),
                   dist: SourceDistinguishability = SourceDistinguishability(),
                   span: float = 4000.0) -> Callable[[np.ndarray], np.ndarray]:
    """Beam-splitter coincidence probability versus as-photon delay.

    Tabulates the fourfold rate without its multi-pair term, which the
    simulation produces explicitly, and interpolates.
    """
    step = w1.grid.step
    lattice = np.arange(-span, span + step / 2, step)
    clean = replace(dist, gbar2=0.0)
    table = np.array([fourfold_rate(w1, w2, d, bs, clean) for d in lattice])
    far = bs.transmission**2 * w1.energy + bs.reflection**2 * w2.energy
    return lambda dt: np.interp(dt, lattice, table, left=far, right=far)


def _first_in_gate(t_h: np.ndarray, t_x: np.ndarray, gate: float) -> tuple[np.ndarray, np.ndarray]:
    """Index of the first t_x in [t_h, t_h + gate) and whether one exists."""
    idx = np.searchsorted(t_x, t_h, side="left")
    ok = idx < t_x.size
    ok[ok] = t_x[idx[ok]] < t_h[ok] + gate
    return idx, ok


@dataclass(frozen=True, eq=False)
class _Events:
    i1: np.ndarray        # s1 herald index
    i2: np.ndarray        # s2 herald index
    dt_as: np.ndarray     # as2 - as1 delay fed to the beam splitter
    storage: np.ndarray   # storage time in the memory (0 for passive)
    survival: np.ndarray


def _candidates(s: TimeTagStream, proto: ProtocolConfig):
    t_s1, t_s2 = s.select(S1), s.select(S2)
    t_as1, t_as2 = s.select(AS1), s.select(AS2)
    gate = proto.coincidence_window
    a1, ok1 = _first_in_gate(t_s1, t_as1, gate)
    a2, ok2 = _first_in_gate(t_s2, t_as2, gate)
    h, d = proto.readout_delay_step / 2, proto.delay

    # passive: t_s2 - t_s1 in [d - h, d + h)
    dd, i1, i2 = pair_delays(np.arange(t_s1.size), t_s1, np.arange(t_s2.size), t_s2, d - h, d + h)
    passive = _Events(i1, i2, dd.astype(float), np.zeros(dd.size), np.ones(dd.size))
    events = [passive]
    if proto.mode == "memory_assisted":
        mem = proto.memory
        passive = replace(passive, survival=np.full(dd.size, mem.efficiency))
        events = [passive]
        # stored: the herald right before s1 is an s2 and needs storage in (h, lifetime]
        lab = np.concatenate([np.zeros(t_s1.size, np.int8), np.ones(t_s2.size, np.int8)])
        idx = np.concatenate([np.arange(t_s1.size), np.arange(t_s2.size)])
        tt = np.concatenate([t_s1, t_s2])
        order = np.lexsort((lab, tt))
        lab, idx, tt = lab[order], idx[order], tt[order]
        k = np.nonzero((lab[1:] == 0) & (lab[:-1] == 1))[0] + 1
        period = s.metadata.window_period_ns
        same_window = (tt[k] // period) == (tt[k - 1] // period)
        k = k[same_window]
        x = (tt[k] + d - tt[k - 1]).astype(float)
        sel = (x > h) & (x <= mem.lifetime_ns)
        k, x = k[sel], x[sel]
        events.append(_Events(idx[k], idx[k - 1], np.full(x.size, d, dtype=float), x, mem.survival(x)))
    ev = _Events(*(np.concatenate([getattr(e, f) for e in events])
                   for f in ("i1", "i2", "dt_as", "storage", "survival")))
    present = ok1[ev.i1] & ok2[ev.i2]
    ev = _Events(*(getattr(ev, f)[present] for f in ("i1", "i2", "dt_as", "storage", "survival")))
    return ev, (t_s1, t_s2, t_as1, t_as2, a1, a2)


def run_protocol(stream: TimeTagStream, proto: ProtocolConfig, emit: bool = False):
    """Count fourfold events for one protocol setting.

    Returns a :class:`SimReport`, or ``(report, output_stream)`` with
    ``emit=True``; the output holds s1, s2 and the two beam-splitter clicks
    (det_b, det_c) of every accepted event.
    """
    ts = stream.timestamps
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        from .errors import UnsortedStreamError
        raise UnsortedStreamError("stream must be sorted by timestamp")
    ev, (t_s1, t_s2, t_as1, t_as2, a1, a2) = _candidates(stream, proto)
    code = 0 if proto.mode == "conventional" else 1
    rng = np.random.default_rng(np.random.SeedSequence([proto.seed, code]))
    u = rng.random(ev.i1.size)
    accepted = u < ev.survival * proto.accept(ev.dt_as)
    report = SimReport(proto.mode, int(accepted.sum()), stream.metadata.duration_s)
    if not emit:
        return report
    i1, i2, stor = ev.i1[accepted], ev.i2[accepted], ev.storage[accepted]
    t_a1 = t_as1[a1[i1]]
    t_a2 = t_as2[a2[i2]] + stor.astype(np.int64)
    swap = rng.random(i1.size) < 0.5
    b = np.where(swap, t_a2, t_a1)
    c = np.where(swap, t_a1, t_a2)
    n = i1.size
    ch = np.concatenate([np.full(n, S1), np.full(n, S2), np.full(n, DET_B), np.full(n, DET_C)]).astype(np.uint8)
    tt = np.concatenate([t_s1[i1], t_s2[i2], b, c])
    order = np.lexsort((ch, tt))
    return report, TimeTagStream(ch[order], tt[order], stream.metadata)


def compare_modes(stream: TimeTagStream, proto: ProtocolConfig) -> tuple[SimReport, SimReport]:
    """Run both modes on one stream; both reports carry the memory/conventional ratio."""
    conv = run_protocol(stream, replace(proto, mode="conventional"))
    mem = run_protocol(stream, replace(proto, mode="memory_assisted"))
    gain = mem.fourfold_count / conv.fourfold_count if conv.fourfold_count else math.inf
    return replace(conv, improvement_factor=gain), replace(mem, improvement_factor=gain)


def sweep_storage_time(stream: TimeTagStream, proto: ProtocolConfig, delays) -> CoincidenceHistogram:
    """Fourfold counts per programmed as2-as1 delay (memory readout offset or post-selection bin)."""
    delays = np.asarray(delays, dtype=float)
    counts = np.array([
        run_protocol(stream, replace(proto, delay=float(d), seed=proto.seed + 7919 * (k + 1))).fourfold_count
        for k, d in enumerate(delays)
    ], dtype=np.int64)
    return CoincidenceHistogram.from_centers(delays, counts, errors=np.sqrt(counts))


# --- analytic expectations ------------------------------------------------

def presence_probability(cfg: SourceConfig, gate_ns: float) -> float:
    """P(at least one detected anti-Stokes tag in the gate after a herald)."""
    eps, f = cfg.as_detection_efficiency, cfg.gate_fraction(gate_ns)
    miss = (1 - eps * f) * (1 - eps * cfg.two_pair_ratio * f) * math.exp(-eps * cfg.background_mean(gate_ns))
    return 1 - miss


def expected_counts(cfg1: SourceConfig, cfg2: SourceConfig, proto: ProtocolConfig,
                    acceptance: float = 0.5) -> dict[str, float]:
    """Expected fourfold counts per window for both modes at delay 0.

    Heralds are Poisson processes on [0, W]. Conventional: pairs with
    |t_s2 - t_s1| <= h. Memory: the same pairs with survival eta, plus s1
    heralds whose preceding herald is an s2 at lag x in (h, lifetime], with
    survival eta exp(-x / lifetime) and no herald in between.
    """
    W = cfg1.window_ns
    r1, r2 = cfg1.herald_rate, cfg2.herald_rate
    h = proto.readout_delay_step / 2
    tau = proto.memory.lifetime_ns
    eta = proto.memory.efficiency
    gate = proto.coincidence_window
    weight = presence_probability(cfg1, gate) * presence_probability(cfg2, gate) * acceptance
    conv = r1 * r2 * (2 * h * W - h * h) * weight
    stored = 0.0
    if tau > h:
        kappa = r1 + r2 + 1 / tau
        c = r2 * eta / kappa
        f_tau = c * (math.exp(-kappa * h) - math.exp(-kappa * tau))
        ramp = c * ((tau - h) * math.exp(-kappa * h) - (math.exp(-kappa * h) - math.exp(-kappa * tau)) / kappa)
        stored = r1 * ((W - tau) * f_tau + ramp) * weight
    mem = eta * conv + stored
    return {"conventional": conv, "memory_assisted": mem, "improvement_factor": mem / conv if conv else math.inf}


# --- photon statistics -----------------------------------------------------

def heralded_g2(detection_efficiency: float, two_pair_ratio: float, background_mean: float,
                gate_fraction: float = 1.0, survival: float = 1.0, noise_probability: float = 0.0) -> float:
    """Closed-form heralded HBT g2 of the source model.

    Photons in a herald's gate: the partner (prob f), a two-pair extra
    (prob r f) and Poisson background (mean b), each passing ``survival``,
    plus a noise photon (prob p). Every photon reaches A or B with
    probability eps/2 each. With M(x) the probability of no click when each
    photon clicks with probability x,
    g2 = (1 - 2 M(eps/2) + M(eps)) / (1 - M(eps/2))^2.
    """
    eps, r, b, f, s, p = (detection_efficiency, two_pair_ratio, background_mean, gate_fraction,
                          survival, noise_probability)

    def miss(x):
        return (1 - f * s * x) * (1 - r * f * s * x) * math.exp(-b * s * x) * (1 - p * x)

    ma, mab = miss(eps / 2), miss(eps)
    pa = 1 - ma
    return (1 - 2 * ma + mab) / (pa * pa)


def source_g2(cfg: SourceConfig, gate_ns: float = 640.0) -> float:
    return heralded_g2(cfg.as_detection_efficiency, cfg.two_pair_ratio, cfg.background_mean(gate_ns),
                       cfg.gate_fraction(gate_ns))


def tune_two_pair_ratio(cfg: SourceConfig, target_g2: float, gate_ns: float = 640.0) -> SourceConfig:
    """Source config whose closed-form heralded g2 equals ``target_g2``."""
    def f(r):
        return source_g2(replace(cfg, two_pair_ratio=r), gate_ns) - target_g2
    if f(0.0) > 0 or f(1.0) < 0:
        raise ValueError(f"g2 target {target_g2} outside reachable range")
    return replace(cfg, two_pair_ratio=brentq(f, 0.0, 1.0, xtol=1e-12))


def memory_g2(cfg: SourceConfig, survival: float, noise_probability: float, gate_ns: float = 640.0) -> float:
    return heralded_g2(cfg.as_detection_efficiency, cfg.two_pair_ratio, cfg.background_mean(gate_ns),
                       cfg.gate_fraction(gate_ns), survival, noise_probability)


def tune_readout_noise(cfg: SourceConfig, survival: float, target_g2: float, gate_ns: float = 640.0) -> float:
    """Readout noise probability that lifts the stored photon's g2 to ``target_g2``."""
    def f(p):
        return memory_g2(cfg, survival, p, gate_ns) - target_g2
    if f(0.0) > 0 or f(1.0) < 0:
        raise ValueError(f"g2 target {target_g2} outside reachable range")
    return brentq(f, 0.0, 1.0, xtol=1e-12)


def memory_output_stream(stream: TimeTagStream, mem: MemoryChannel, storage_ns: float,
                         noise_probability: float, detection_efficiency: float, gate_ns: float = 640.0,
                         seed: int = 0) -> TimeTagStream:
    """Source-2 HBT tags after a fixed-delay storage.

    Every as2/as2_hbt tag survives with eta exp(-storage / lifetime) and is
    delayed by ``storage_ns``. Each s2 herald's readout adds a noise photon
    with ``noise_probability``, uniform in the delayed gate and detected like
    a signal photon. Thinning detected tags is equivalent to thinning before
    detection because both are independent per photon.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D656D]))
    res = stream.metadata.resolution_ns
    shift = int(round(storage_ns / res)) * res
    t_s2 = stream.select(S2)
    parts_c, parts_t = [np.full(t_s2.size, S2, np.uint8)], [t_s2]
    surv = float(mem.survival(storage_ns))
    for ch in (AS2, AS2_HBT):
        t = stream.select(ch)
        t = t[rng.random(t.size) < surv] + shift
        parts_c.append(np.full(t.size, ch, np.uint8))
        parts_t.append(t)
    noisy = rng.random(t_s2.size) < noise_probability * detection_efficiency
    tn = t_s2[noisy] + shift + _quantize(rng.random(int(noisy.sum())) * gate_ns, res)
    cn = np.where(rng.random(tn.size) < 0.5, AS2, AS2_HBT).astype(np.uint8)
    parts_c.append(cn)
    parts_t.append(tn)
    ch = np.concatenate(parts_c)
    tt = np.concatenate(parts_t)
    order = np.lexsort((ch, tt))
    return TimeTagStream(ch[order], tt[order], stream.metadata)


# --- interferometer output sampling -------------------------------------

def simulate_interferometer(w1: TemporalWavepacket, w2: TemporalWavepacket, n_trials: int, seed: int,
                            bs: BeamSplitter = BeamSplitter(),
                            dist: SourceDistinguishability = SourceDistinguishability(),
                            trial_period_ns: int = 10_000, resolution_ns: int = 2) -> TimeTagStream:
    """Detector clicks behind the beam splitter for repeated two-photon trials.

    Coincidences are drawn from the joint density; bunched trials give a
    single click (no photon-number resolution) at the earlier photon time.
    """
    from .interference import bunching_density, coincidence_density

    G = coincidence_density(w1, w2, bs, dist)
    Bu = bunching_density(w1, w2, bs, dist)
    p_coinc = G.total()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x484F4D]))
    step, t0, n = w1.grid.step, w1.grid.start, w1.grid.count
    is_coinc = rng.random(n_trials) < p_coinc
    nc, nb = int(is_coinc.sum()), int((~is_coinc).sum())

    def draw(values, k):
        flat = values.ravel()
        cells = rng.choice(flat.size, size=k, p=flat / flat.sum())
        i, j = np.divmod(cells, n)
        jit = rng.random((2, k)) - 0.5
        return t0 + (i + jit[0]) * step, t0 + (j + jit[1]) * step

    trials = np.arange(n_trials, dtype=np.int64) * trial_period_ns
    span = (w1.grid.end - t0) + step
    base = trials - int(math.floor(t0)) + int(span)  # keep all times positive
    tc1, tc2 = draw(G.values, nc)
    tb1, tb2 = draw(Bu.values, nb)
    cb = base[is_coinc]
    bb = base[~is_coinc]
    port = np.where(rng.random(nb) < 0.5, DET_B, DET_C)
    ch = np.concatenate([np.full(nc, DET_B), np.full(nc, DET_C), port]).astype(np.uint8)
    tt = np.concatenate([cb + tc1, cb + tc2, bb + np.minimum(tb1, tb2)])
    tt = _quantize(tt, resolution_ns)
    order = np.lexsort((ch, tt))
    return TimeTagStream(ch[order], tt[order], StreamMetadata(n_windows=n_trials, resolution_ns=resolution_ns))
