"""Closed-form design formulas, pulse-parameter sweeps and emission spectra.

The photon-number bounds for a top-hat incoherent trigger follow from the
two-state picture of a resonantly coupled emitter whose ground amplitude is
drained by the pump at rate ``r0``: the probability of absorbing no quantum
during a pulse of width ``T`` is ``exp(-r0 T)`` (a lower bound on emitting
zero photons once losses are restored), and the probability of exactly one
absorption is

    P1 = 2 exp(-r0 T) { exp(r0 T / 2) [r0^2 cosh(eta T / 2) - 16 g^2] / eta^2 - 1 }

with ``eta = sqrt(r0^2 - 16 g^2)`` and ``g`` the cavity coupling matrix
element (an upper bound on the single-photon probability).  ``eta`` turns
imaginary for ``r0 < 4 g``; the implementation evaluates one complex-safe,
overflow-free factorization covering both branches and the degenerate point.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhotonStats",
    "SweepPoint",
    "SpectrumResult",
    "closed_form_stats",
    "approx_single_photon_large_pump",
    "pulse_param_sweep",
    "emission_spectrum",
    "overall_damping_rate",
]


@dataclass(frozen=True)
class PhotonStats:
    """Zero-, one- and multi-photon probabilities per trigger pulse.

    ``p_multi`` is defined as the remainder ``1 - p0 - p1`` so the three
    always sum to one exactly.
    """

    p0: float
    p1: float

    @property
    def p_multi(self) -> float:
        return 1.0 - self.p0 - self.p1

    @property
    def n_bar(self) -> float:
        """Mean photon number per pulse when orders above two are negligible."""
        return self.p1 + 2.0 * self.p_multi


def closed_form_stats(pump_rate: float, pulse_width: float, coupling: float) -> PhotonStats:
    """Photon-number bounds for a top-hat trigger of rate ``pump_rate`` and
    width ``pulse_width`` on a transition with cavity coupling ``coupling``.

    Total on the domain ``pump_rate, pulse_width, coupling >= 0`` and
    continuous across the degenerate point ``pump_rate = 4 * coupling``:
    the single complex evaluation covers real and imaginary ``eta`` alike,
    with a short series taking over only as ``|eta| T -> 0``.
    """
    if pump_rate < 0 or pulse_width < 0 or coupling < 0:
        raise ValueError("pump rate, pulse width and coupling must be non-negative")
    x = pump_rate * pulse_width
    p0 = math.exp(-x)
    if x == 0.0:
        return PhotonStats(p0=1.0, p1=0.0)

    eta = cmath.sqrt(complex(pump_rate * pump_rate - 16.0 * coupling * coupling))
    z = eta * pulse_width / 2.0
    # p1 = 2 e^{-x/2} - 2 e^{-x} + (r0^2/eta^2)[e^{z-x/2} + e^{-z-x/2} - 2 e^{-x/2}];
    # Re(z) <= x/2 always, so every exponent has non-positive real part and
    # nothing overflows even deep into the saturated-pump regime.
    half = (pump_rate * pulse_width / 2.0) ** 2  # = (r0^2/eta^2) * z^2
    if abs(z) < 1e-3:
        z2 = z * z
        series = 0.5 + z2 / 24.0 + z2 * z2 / 720.0  # (cosh z - 1)/z^2
        coupled = 2.0 * half * series * math.exp(-x / 2.0)
    else:
        coupled = (half / (z * z)) * (
            cmath.exp(z - x / 2.0) + cmath.exp(-z - x / 2.0) - 2.0 * math.exp(-x / 2.0)
        )
    p1c = 2.0 * math.exp(-x / 2.0) - 2.0 * p0 + coupled
    if abs(p1c.imag) > 1e-12 * max(1.0, abs(p1c.real)):
        raise FloatingPointError(f"closed-form P1 acquired an imaginary part: {p1c}")
    p1 = min(max(p1c.real, 0.0), 1.0 - p0)
    return PhotonStats(p0=p0, p1=p1)


def approx_single_photon_large_pump(
    pump_rate: float, pulse_width: float, coupling: float
) -> float:
    """Second-order large-pump trend estimate of the single-photon probability.

    Diagnostic only: ``exp(-4 g^2 T / r0) - (2 - exp(-4 g^2 T / r0)) exp(-r0 T)``
    captures how re-excitation erodes P1 as the pulse widens, but its
    accuracy regime is not characterized; use :func:`closed_form_stats` for
    quantitative work.
    """
    if pump_rate <= 0:
        raise ValueError("large-pump estimate needs a positive pump rate")
    lead = math.exp(-4.0 * coupling * coupling * pulse_width / pump_rate)
    return lead - (2.0 - lead) * math.exp(-pump_rate * pulse_width)


@dataclass(frozen=True)
class SweepPoint:
    pulse_width: float
    pump_rate: float
    stats: PhotonStats


def pulse_param_sweep(
    pulse_widths,
    pump_rates,
    coupling: float,
    mark: tuple[float, float] | None = None,
) -> tuple[list[SweepPoint], SweepPoint | None]:
    """Evaluate :func:`closed_form_stats` over a (width, rate) grid.

    ``mark`` optionally singles out one operating point (width, rate) that is
    reported separately alongside the grid.
    """
    widths = [float(w) for w in pulse_widths]
    rates = [float(r) for r in pump_rates]
    if not widths or not rates:
        raise ValueError("sweep grids must be non-empty")
    grid = [
        SweepPoint(w, r, closed_form_stats(r, w, coupling)) for w in widths for r in rates
    ]
    marked = None
    if mark is not None:
        w, r = mark
        marked = SweepPoint(w, r, closed_form_stats(r, w, coupling))
    return grid, marked


@dataclass(frozen=True)
class SpectrumResult:
    """One-sided emission spectrum around the carrier.

    ``frequencies`` are offsets from the carrier in Hz; ``power`` is the
    squared magnitude of the transform in arbitrary units.
    """

    frequencies: np.ndarray
    power: np.ndarray
    center_wavelength: float
    fwhm_frequency: float
    fwhm_wavelength: float
    peak_frequency: float
    convention: str


def emission_spectrum(
    times,
    intensity,
    center_wavelength: float,
    convention: str = "intensity",
    pad_factor: int = 64,
) -> SpectrumResult:
    """Spectrum of the emitted pulse from its temporal intensity profile.

    ``convention`` selects what is Fourier transformed: the intensity
    profile itself (``"intensity"``) or its square root as a field-amplitude
    proxy (``"amplitude"``, the natural-linewidth convention for exponential
    decay).  The reported width is the half-maximum width of the transform's
    squared magnitude, converted to wavelength via
    ``d_lambda = lambda^2 d_f / c``.

    Raises:
        ValueError: the series has not decayed (horizon shorter than a few
            emission lifetimes) or is identically zero.
    """
    from scipy.constants import c as c_light

    t = np.asarray(times, dtype=float)
    y = np.asarray(intensity, dtype=float)
    if t.ndim != 1 or t.shape != y.shape or len(t) < 8:
        raise ValueError("need matching 1-d time/intensity series")
    if np.any(y < -1e-12 * max(1.0, float(np.max(np.abs(y))))):
        raise ValueError("intensity must be non-negative")
    y = np.clip(y, 0.0, None)
    if convention not in ("intensity", "amplitude"):
        raise ValueError(f"unknown spectrum convention {convention!r}")
    peak = float(np.max(y))
    if peak <= 0.0:
        raise ValueError("intensity series is identically zero")
    if y[-1] > 1e-3 * peak:
        raise ValueError(
            "intensity has not decayed by the end of the record; "
            "extend the horizon to several emission lifetimes"
        )

    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        n = len(t)
        uniform = np.linspace(t[0], t[-1], n)
        y = np.interp(uniform, t, y)
        t = uniform
        dt = np.diff(t)
    step = float(dt[0])

    signal = y if convention == "intensity" else np.sqrt(y)
    nfft = 1 << int(math.ceil(math.log2(len(signal) * max(1, pad_factor))))
    transform = np.fft.fftshift(np.fft.fft(signal, nfft)) * step
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, step))
    power = np.abs(transform) ** 2

    ipk = int(np.argmax(power))
    half = power[ipk] / 2.0
    lo = ipk
    while lo > 0 and power[lo] > half:
        lo -= 1
    hi = ipk
    while hi < len(power) - 1 and power[hi] > half:
        hi += 1
    if power[lo] > half or power[hi] > half:
        raise ValueError("spectral peak is not resolved inside the frequency window")

    def cross(i, j):
        return freqs[i] + (half - power[i]) * (freqs[j] - freqs[i]) / (power[j] - power[i])

    f_lo = cross(lo, lo + 1)
    f_hi = cross(hi, hi - 1)
    fwhm = float(f_hi - f_lo)
    return SpectrumResult(
        frequencies=freqs,
        power=power,
        center_wavelength=center_wavelength,
        fwhm_frequency=fwhm,
        fwhm_wavelength=center_wavelength**2 * fwhm / c_light,
        peak_frequency=float(freqs[ipk]),
        convention=convention,
    )


def overall_damping_rate(
    gamma_g0g1: float,
    gamma_gmgn: float,
    coupling: float,
    omega_c: float,
    quality_factor: float,
) -> float:
    """Relaxation rate of a single excitation on a phonon-line-coupled cavity.

    Weak-coupling (order coupling^2) expression

        gamma = gamma_g0g1 + 2 g^2 / (omega_c / (2 Q) + gamma_gmgn - 2 gamma_g0g1)

    valid for ``g`` well below ``kappa + gamma_gmgn``.  With both phonon
    rates zero it reduces to the bare Purcell rate ``2 g^2 / kappa``.

    Raises:
        ValueError: non-positive denominator (outside the validity regime).
    """
    if quality_factor <= 0:
        raise ValueError("quality factor must be positive")
    kappa = omega_c / (2.0 * quality_factor)
    denom = kappa + gamma_gmgn - 2.0 * gamma_g0g1
    if denom <= 0:
        raise ValueError(
            f"damping-rate formula outside its regime: kappa + gamma_gmgn - 2 gamma_g0g1 = {denom:g} <= 0"
        )
    return gamma_g0g1 + 2.0 * coupling * coupling / denom
