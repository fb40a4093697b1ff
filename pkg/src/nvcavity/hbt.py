"""Hanbury Brown-Twiss coincidence simulation from trajectory jump records.

A single continuous quantum trajectory is run over a pulse train; every
cavity photon-emission jump is routed to detector A or B by a seeded
beamsplitter draw, and the correlation histogram accumulates signed delays
``t_B - t_A`` between every A-B pair inside a +/- ``window_periods`` pulse
window.  Detection is ideal by default (unit efficiency, no dark counts,
no dead time); efficiency and dark-count hooks exist but are off.

Antibunching shows up as a suppressed zero-delay peak: with at most one
photon per trigger there is nothing for the zero-delay bin to pair.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .mcsolve import TrajectoryRecord, run_trajectory
from .model import SystemModel, kappa_from_q

__all__ = [
    "HBTConfig",
    "CorrelationHistogram",
    "PhotonCountStats",
    "HBTResult",
    "simulate_hbt",
    "photon_number_per_trigger",
]

_CAVITY_TAGS = ("cavity-out", "cavity-loss")


@dataclass(frozen=True)
class HBTConfig:
    """Pulse-train and detector parameters for one coincidence run."""

    rep_rate: float
    total_time: float
    bin_width: float = 10e-12
    splitter_ratio: float = 0.5
    seed: int = 0
    window_periods: int = 10
    detector_efficiency: float = 1.0
    dark_count_rate: float = 0.0

    def __post_init__(self):
        if self.rep_rate <= 0:
            raise ValueError("repetition rate must be positive")
        if self.bin_width <= 0:
            raise ValueError("bin width must be positive")
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ValueError("splitter ratio must be strictly between 0 and 1")
        if self.total_time < 1.0 / self.rep_rate:
            raise ValueError("total time must cover at least one pulse period")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ValueError("detector efficiency must be in (0, 1]")

    @property
    def rep_period(self) -> float:
        return 1.0 / self.rep_rate

    @property
    def n_pulses(self) -> int:
        return int(math.floor(self.total_time / self.rep_period + 1e-9))


@dataclass
class CorrelationHistogram:
    """Signed-delay coincidence counts, symmetric about zero in expectation."""

    delays: np.ndarray
    counts: np.ndarray
    rep_period: float

    def peak_areas(self, window_periods: int) -> dict[int, int]:
        """Total counts within half a period of each expected peak position."""
        out = {}
        for k in range(-window_periods, window_periods + 1):
            center = k * self.rep_period
            mask = np.abs(self.delays - center) <= self.rep_period / 2
            out[k] = int(self.counts[mask].sum())
        return out

    def zero_delay_ratio(self, window_periods: int = 10) -> float:
        """Zero-delay peak area over the mean side-peak area (0 when empty).

        The outermost peaks are clipped by the delay window, so only the
        interior side peaks enter the mean.
        """
        areas = self.peak_areas(window_periods)
        sides = [v for k, v in areas.items() if k != 0 and abs(k) < window_periods]
        mean_side = float(np.mean(sides)) if sides else 0.0
        if mean_side == 0.0:
            return 0.0 if areas.get(0, 0) == 0 else math.inf
        return areas[0] / mean_side


@dataclass(frozen=True)
class PhotonCountStats:
    """Empirical per-trigger photon-number distribution with binomial errors."""

    n_pulses: int
    probabilities: dict[int, float]
    std_errors: dict[int, float]

    @property
    def single_photon_probability(self) -> float:
        return self.probabilities.get(1, 0.0)

    @property
    def multi_photon_probability(self) -> float:
        return sum(p for n, p in self.probabilities.items() if n >= 2)

    def observed_multi_photon_events(self) -> int:
        return round(self.multi_photon_probability * self.n_pulses)


@dataclass
class HBTResult:
    histogram: CorrelationHistogram
    per_trigger: PhotonCountStats
    zero_delay_ratio: float
    n_detected: int
    detector_a: np.ndarray
    detector_b: np.ndarray
    record: TrajectoryRecord
    config: HBTConfig


def per_trigger_from_jump_file(path, rep_period: float, n_pulses: int) -> PhotonCountStats:
    """Per-trigger photon statistics straight from a trajectory jump-record CSV."""
    from .mcsolve import load_jump_records

    times = np.array(
        [t for _, _, t, tag in load_jump_records(path) if tag.startswith(_CAVITY_TAGS)]
    )
    return photon_number_per_trigger(times, rep_period, n_pulses)


def photon_number_per_trigger(records, rep_period: float, n_pulses: int) -> PhotonCountStats:
    """Count cavity-emission jumps per excitation period.

    ``records`` may be trajectory records or a flat array of jump times.
    Each jump is assigned to the period containing it; the returned
    distribution covers every photon number observed (and 0).
    """
    if isinstance(records, TrajectoryRecord):
        records = [records]
    if len(records) > 0 and isinstance(records[0], TrajectoryRecord):
        times = np.concatenate(
            [
                np.array([t for t, tag in rec.jumps if tag.startswith(_CAVITY_TAGS)])
                for rec in records
            ]
            or [np.array([])]
        )
    else:
        times = np.asarray(records, dtype=float)
    if n_pulses < 1:
        raise ValueError("need at least one pulse")
    periods = np.floor(times / rep_period).astype(int)
    periods = periods[(periods >= 0) & (periods < n_pulses)]
    per_period = np.bincount(periods, minlength=n_pulses)
    ns, counts = np.unique(per_period, return_counts=True)
    probs = {int(n): float(c) / n_pulses for n, c in zip(ns, counts)}
    errs = {
        n: math.sqrt(p * (1.0 - p) / n_pulses) for n, p in probs.items()
    }
    return PhotonCountStats(n_pulses=n_pulses, probabilities=probs, std_errors=errs)


def _emission_lifetime_estimate(model: SystemModel) -> float:
    """Crude 1/e timescale of the cavity-mediated emission, for overlap warnings."""
    kappa = kappa_from_q(model.cavity)
    g = max(model.coupling.couplings)
    if kappa <= 0 or g <= 0:
        return math.inf
    disc = kappa * kappa / 16.0 - g * g
    slow = kappa / 4.0 - math.sqrt(disc) if disc > 0 else kappa / 4.0
    return 1.0 / (2.0 * slow)


def simulate_hbt(model: SystemModel, cfg: HBTConfig) -> HBTResult:
    """Run the pulse train as one continuous trajectory and histogram coincidences.

    The model's pump must repeat at ``cfg.rep_rate``.  All randomness (jump
    thresholds, channel draws, beamsplitter routing) derives from
    ``cfg.seed``, so runs are reproducible bit-for-bit.
    """
    if model.pump.rep_period is None or not math.isclose(
        model.pump.rep_period, cfg.rep_period, rel_tol=1e-12
    ):
        raise ValueError(
            "model pump repetition period must equal 1/rep_rate "
            f"(got {model.pump.rep_period}, need {cfg.rep_period})"
        )
    if model.has_waveguide():
        raise ValueError(
            "coincidence runs need n_waveguide = 0: a truncated waveguide mode "
            "fills up and silently suppresses later detection events"
        )
    lifetime = _emission_lifetime_estimate(model)
    if cfg.rep_period < 5.0 * lifetime:
        warnings.warn(
            f"repetition period {cfg.rep_period:.3e}s is within 5 emission lifetimes "
            f"({lifetime:.3e}s); photon pulses will overlap neighbouring periods",
            stacklevel=2,
        )

    record = run_trajectory(model, t_final=cfg.total_time, seed=cfg.seed)
    times = record.jump_times("cavity")

    route_rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xB5,)))
    )
    if cfg.detector_efficiency < 1.0:
        times = times[route_rng.random(len(times)) < cfg.detector_efficiency]
    to_a = route_rng.random(len(times)) < cfg.splitter_ratio
    det_a = times[to_a]
    det_b = times[~to_a]
    if cfg.dark_count_rate > 0.0:
        for arr_name in ("det_a", "det_b"):
            n_dark = route_rng.poisson(cfg.dark_count_rate * cfg.total_time)
            dark = np.sort(route_rng.random(n_dark) * cfg.total_time)
            if arr_name == "det_a":
                det_a = np.sort(np.concatenate([det_a, dark]))
            else:
                det_b = np.sort(np.concatenate([det_b, dark]))

    window = cfg.window_periods * cfg.rep_period
    m = int(round(window / cfg.bin_width))
    edges = (np.arange(-m, m + 2) - 0.5) * cfg.bin_width
    centers = np.arange(-m, m + 1) * cfg.bin_width
    counts = np.zeros(len(centers), dtype=np.int64)
    half_edge = edges[-1]
    for a in det_a:
        lo = np.searchsorted(det_b, a - half_edge, side="left")
        hi = np.searchsorted(det_b, a + half_edge, side="right")
        if hi > lo:
            c, _ = np.histogram(det_b[lo:hi] - a, bins=edges)
            counts += c

    hist = CorrelationHistogram(delays=centers, counts=counts, rep_period=cfg.rep_period)
    per_trigger = photon_number_per_trigger(times, cfg.rep_period, cfg.n_pulses)
    return HBTResult(
        histogram=hist,
        per_trigger=per_trigger,
        zero_delay_ratio=hist.zero_delay_ratio(cfg.window_periods),
        n_detected=int(len(times)),
        detector_a=det_a,
        detector_b=det_b,
        record=record,
        config=cfg,
    )
