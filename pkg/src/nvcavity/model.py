"""Physical model of a vibronic colour centre coupled to a lossy optical cavity.

The emitter is treated as a single electronic excited state ``e`` above a
ladder of vibrational ground sublevels ``g0..g_{n-2}`` (``g0`` is the true
ground state, the ``e``-``g0`` line is the zero-phonon line).  The cavity is a
single mode; an optional explicit "waveguide" mode collects the photons the
cavity emits, so that the outcoupled-photon population is directly readable
from the state.

Coupling convention
-------------------
``couplings[i]`` is the single-photon coupling *matrix element* between
``|e, n>`` and ``|g_i, n+1>`` (rad/s):

    H_int = sum_i couplings[i] * (a^dag |g_i><e| + a |e><g_i|)

With this convention the vacuum-Rabi population period of a lossless
resonant two-level reduction is ``pi / coupling``, the Purcell-regime
amplitude damping rate is ``2 coupling^2 / kappa``, and the closed-form
pulse statistics in :mod:`nvcavity.analysis` take the coupling directly.

Dissipation channels (each a Lindblad term ``rate * L[O]``):

* ``radiative:<i>PL`` -- spontaneous decay ``|e> -> |g_i>`` at
  ``radiative_rates[i]``; the rates sum to ``1 / lifetime_pl``.
* ``pump`` -- incoherent excitation ``|g0> -> |e>`` at the time-dependent
  top-hat rate ``r(t)``.
* ``phonon:<i>`` -- vibrational relaxation ``|g_{i+1}> -> |g_i>``.
* ``cavity-out`` -- ``b^dag a``: moves one quantum from the cavity to the
  waveguide at ``kappa = omega_c / (2 Q)``.  When no waveguide mode is kept
  (``n_waveguide = 0``) this degrades to plain photon loss ``a`` with tag
  ``cavity-loss``.

All rates and frequencies are stored in SI (1/s, rad/s, m); the config
loader (:mod:`nvcavity.config`) converts human units at the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c as _c_light
from scipy.constants import epsilon_0 as _eps0
from scipy.constants import hbar as _hbar

from .quantum import (
    HilbertSpace,
    Operator,
    annihilator,
    kron_embed,
    number_op,
    transition,
)

__all__ = [
    "NVLevelScheme",
    "CavityConfig",
    "CouplingSpec",
    "PumpPulse",
    "Truncation",
    "SystemModel",
    "Channel",
    "kappa_from_q",
    "purcell_factor",
    "spontaneous_coupling_beta",
    "coupling_from_dipole",
    "dipole_from_coupling",
    "build_hamiltonian",
    "build_channels",
    "two_level_model",
    "full_model",
    "reduced_phonon_model",
    "DEFAULT_LIFETIME_PL",
    "DEFAULT_ZPL_WAVELENGTH",
]

DEFAULT_LIFETIME_PL = 11.6e-9
DEFAULT_ZPL_WAVELENGTH = 638e-9
DEFAULT_REFRACTIVE_INDEX = 2.4


@dataclass(frozen=True)
class NVLevelScheme:
    """Level energies and intrinsic decay rates of the emitter.

    Args:
        ground_energies: energies of ``g0..g_{n-2}`` in rad/s, strictly
            increasing (``g0`` conventionally at 0).
        excited_energy: energy of ``e`` in rad/s, above every ground level.
        radiative_rates: spontaneous rates ``|e> -> |g_i>`` in 1/s, one per
            ground sublevel; their sum defines the photoluminescence lifetime.
        phonon_rates: vibrational relaxation rates ``|g_{i+1}> -> |g_i>`` in
            1/s, one per adjacent ground pair.
    """

    ground_energies: tuple[float, ...]
    excited_energy: float
    radiative_rates: tuple[float, ...]
    phonon_rates: tuple[float, ...]

    def __post_init__(self):
        ng = len(self.ground_energies)
        if ng < 1:
            raise ValueError("need at least one ground sublevel")
        if len(self.radiative_rates) != ng:
            raise ValueError("one radiative rate per ground sublevel required")
        if len(self.phonon_rates) != max(ng - 1, 0):
            raise ValueError("one phonon rate per adjacent ground pair required")
        if any(r < 0 for r in self.radiative_rates + self.phonon_rates):
            raise ValueError("rates must be non-negative")
        diffs = np.diff(self.ground_energies)
        if ng > 1 and not np.all(diffs > 0):
            raise ValueError("ground energies must be strictly increasing")
        if self.excited_energy <= self.ground_energies[-1]:
            raise ValueError("excited energy must lie above the ground manifold")

    @property
    def n_atomic(self) -> int:
        return len(self.ground_energies) + 1

    @property
    def lifetime_pl(self) -> float:
        """Photoluminescence lifetime 1 / sum(radiative rates); inf if radiatively dark."""
        total = sum(self.radiative_rates)
        return math.inf if total == 0 else 1.0 / total

    def transition_frequency(self, i: int) -> float:
        """Frequency of the ``e``-``g_i`` line in rad/s."""
        return self.excited_energy - self.ground_energies[i]


@dataclass(frozen=True)
class CavityConfig:
    """Single-mode cavity parameters.

    ``quality_factor`` may be ``math.inf`` for a lossless cavity (used by
    closed-system oracles).  ``mode_volume`` is in m^3.
    """

    wavelength: float = DEFAULT_ZPL_WAVELENGTH
    quality_factor: float = 36500.0
    mode_volume: float = DEFAULT_ZPL_WAVELENGTH**3
    refractive_index: float = DEFAULT_REFRACTIVE_INDEX
    resonant_transition: int = 0

    def __post_init__(self):
        if self.quality_factor <= 0:
            raise ValueError("quality factor must be positive")
        if self.mode_volume <= 0:
            raise ValueError("mode volume must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def angular_frequency(self) -> float:
        return 2 * math.pi * _c_light / self.wavelength


def kappa_from_q(cavity: CavityConfig) -> float:
    """Cavity outcoupling rate omega_c / (2 Q) in 1/s."""
    return cavity.angular_frequency / (2.0 * cavity.quality_factor)


def purcell_factor(cavity: CavityConfig) -> float:
    """Emission enhancement into the cavity mode: 3 (lambda/n)^3 Q / (4 pi^2 V)."""
    lam_med = cavity.wavelength / cavity.refractive_index
    return 3.0 * lam_med**3 / (4.0 * math.pi**2) * cavity.quality_factor / cavity.mode_volume


def spontaneous_coupling_beta(cavity: CavityConfig) -> float:
    """Fraction of emission entering the cavity mode, F_p / (1 + F_p)."""
    fp = purcell_factor(cavity)
    return fp / (1.0 + fp)


def coupling_from_dipole(dipole_moment: float, cavity: CavityConfig) -> float:
    """Coupling matrix element d * sqrt(omega_c / (2 hbar eps0 V)) in rad/s."""
    if dipole_moment < 0:
        raise ValueError("dipole moment must be non-negative")
    return dipole_moment * math.sqrt(
        cavity.angular_frequency / (2.0 * _hbar * _eps0 * cavity.mode_volume)
    )


def dipole_from_coupling(coupling: float, cavity: CavityConfig) -> float:
    """Inverse of :func:`coupling_from_dipole`."""
    return coupling / math.sqrt(
        cavity.angular_frequency / (2.0 * _hbar * _eps0 * cavity.mode_volume)
    )


@dataclass(frozen=True)
class CouplingSpec:
    """Cavity coupling matrix elements, one per ground sublevel (rad/s).

    All-zero couplings are allowed and describe a bare emitter next to an
    uncoupled cavity (useful as a limiting case).
    """

    couplings: tuple[float, ...]

    def __post_init__(self):
        if any(om < 0 for om in self.couplings):
            raise ValueError("couplings must be non-negative")

    @classmethod
    def from_dipoles(cls, dipoles, cavity: CavityConfig) -> "CouplingSpec":
        return cls(tuple(coupling_from_dipole(d, cavity) for d in dipoles))


@dataclass(frozen=True)
class PumpPulse:
    """Top-hat incoherent trigger: r(t) = rate on [t_start, t_start + width].

    With ``rep_period`` set the pulse repeats with that period; otherwise it
    is single-shot.
    """

    rate: float
    width: float
    t_start: float = 0.0
    rep_period: float | None = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("pump rate must be non-negative")
        if self.width <= 0:
            raise ValueError("pulse width must be positive")
        if self.rep_period is not None and self.rep_period <= 0:
            raise ValueError("repetition period must be positive")

    def rate_at(self, t: float) -> float:
        if self.rate == 0.0:
            return 0.0
        tau = t - self.t_start
        if self.rep_period is not None:
            if tau < 0:
                return 0.0
            tau = tau % self.rep_period
        return self.rate if 0.0 <= tau <= self.width else 0.0

    def edges_between(self, t0: float, t1: float) -> list[float]:
        """Pulse on/off switching times strictly inside (t0, t1), sorted.

        Integrators restart at these times so the discontinuous rate never
        straddles a step.
        """
        if self.rate == 0.0:
            return []
        edges: list[float] = []
        if self.rep_period is None:
            candidates = [self.t_start, self.t_start + self.width]
        else:
            k0 = math.floor((t0 - self.t_start) / self.rep_period) - 1
            k1 = math.ceil((t1 - self.t_start) / self.rep_period) + 1
            candidates = []
            for k in range(int(k0), int(k1) + 1):
                base = self.t_start + k * self.rep_period
                candidates += [base, base + self.width]
        for e in candidates:
            if t0 < e < t1:
                edges.append(e)
        return sorted(set(edges))


@dataclass(frozen=True)
class Truncation:
    """Fock cutoffs and optional atomic-level reduction.

    ``n_cavity`` keeps cavity Fock states ``0..n_cavity``; ``n_waveguide = 0``
    removes the waveguide factor entirely (cavity photons are then simply
    lost).  ``atomic_subset`` lists retained level labels (``"g0".."g9"``,
    ``"e"``); reduced models keep the retained levels' rates unchanged.
    """

    n_cavity: int = 1
    n_waveguide: int = 1
    atomic_subset: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.n_cavity < 1:
            raise ValueError("cavity needs at least one excitation state")
        if self.n_waveguide < 0:
            raise ValueError("waveguide cutoff must be >= 0")


@dataclass(frozen=True)
class SystemModel:
    """Complete description from which H and the channel list are built."""

    scheme: NVLevelScheme
    cavity: CavityConfig
    coupling: CouplingSpec
    pump: PumpPulse
    truncation: Truncation = field(default_factory=Truncation)

    def __post_init__(self):
        if len(self.coupling.couplings) != len(self.scheme.ground_energies):
            raise ValueError("one coupling per ground sublevel required")
        if not 0 <= self.cavity.resonant_transition < len(self.scheme.ground_energies):
            raise ValueError("resonant transition index out of range")
        self.retained_levels()  # validate any atomic_subset

    def atomic_labels(self) -> tuple[str, ...]:
        n_ground = len(self.scheme.ground_energies)
        return tuple(f"g{i}" for i in range(n_ground)) + ("e",)

    def retained_levels(self) -> tuple[str, ...]:
        labels = self.atomic_labels()
        subset = self.truncation.atomic_subset
        if subset is None:
            return labels
        unknown = set(subset) - set(labels)
        if unknown:
            raise ValueError(f"unknown atomic levels in subset: {sorted(unknown)}")
        if "e" not in subset:
            raise ValueError("reduced models must retain the excited state")
        if "g0" not in subset:
            raise ValueError("reduced models must retain the ground state g0")
        return tuple(lab for lab in labels if lab in subset)

    def space(self) -> HilbertSpace:
        factors = [("atom", len(self.retained_levels()))]
        factors.append(("cavity", self.truncation.n_cavity + 1))
        if self.truncation.n_waveguide > 0:
            factors.append(("waveguide", self.truncation.n_waveguide + 1))
        return HilbertSpace(tuple(factors))

    def has_waveguide(self) -> bool:
        return self.truncation.n_waveguide > 0

    def atom_index(self, label: str) -> int:
        return self.retained_levels().index(label)

    def retained_ground(self) -> list[tuple[int, int]]:
        """Pairs (original sublevel index, retained atomic index) for ground levels."""
        out = []
        for pos, lab in enumerate(self.retained_levels()):
            if lab != "e":
                out.append((int(lab[1:]), pos))
        return out

    def kappa(self) -> float:
        return kappa_from_q(self.cavity) if math.isfinite(self.cavity.quality_factor) else 0.0

    def resonant_frequency(self) -> float:
        return self.scheme.transition_frequency(self.cavity.resonant_transition)

    def with_quality_factor(self, q: float) -> "SystemModel":
        return replace(self, cavity=replace(self.cavity, quality_factor=q))


def build_hamiltonian(model: SystemModel, rotating_frame: bool = True) -> Operator:
    """Assemble the multi-level Jaynes-Cummings Hamiltonian on the composite space.

    In the rotating frame (default) the frame co-rotates with the cavity
    frequency: photon-mode diagonals vanish and the excited level sits at
    its detuning from the resonant transition, so only physical beat
    frequencies remain.  In the lab frame absolute energies are kept.

    The excitation-conserving coupling uses the matrix-element convention
    documented in the module docstring.
    """
    space = model.space()
    levels = model.retained_levels()
    na = len(levels)
    e_idx = levels.index("e")
    scheme = model.scheme

    omega_c = model.resonant_frequency()
    h_atom = np.zeros((na, na), dtype=complex)
    for pos, lab in enumerate(levels):
        if lab == "e":
            energy = scheme.excited_energy - (omega_c if rotating_frame else 0.0)
        else:
            energy = scheme.ground_energies[int(lab[1:])]
        h_atom[pos, pos] = energy

    h = kron_embed(h_atom, "atom", space).mat
    if not rotating_frame:
        h = h + omega_c * kron_embed(number_op(space.dim_of("cavity")), "cavity", space).mat
        if model.has_waveguide():
            h = h + omega_c * kron_embed(
                number_op(space.dim_of("waveguide")), "waveguide", space
            ).mat

    a = kron_embed(annihilator(space.dim_of("cavity")), "cavity", space).mat
    for orig_i, pos in model.retained_ground():
        g = model.coupling.couplings[orig_i]
        if g == 0.0:
            continue
        lower = kron_embed(transition(na, pos, e_idx), "atom", space).mat  # |g_i><e|
        term = g * (a.conj().T @ lower)
        h = h + term + term.conj().T
    return Operator(space, h)


@dataclass(frozen=True)
class Channel:
    """One Lindblad dissipator: rate(t) * L[op].

    ``rate`` is the constant rate for most channels; the pump channel carries
    the pulse and evaluates its rate at integration time.
    """

    op: Operator
    rate: float
    tag: str
    pump: PumpPulse | None = None

    def rate_at(self, t: float) -> float:
        return self.pump.rate_at(t) if self.pump is not None else self.rate

    @property
    def time_dependent(self) -> bool:
        return self.pump is not None


EMISSION_TAGS_PREFIXES = ("cavity-out", "cavity-loss", "radiative:")


def is_emission_tag(tag: str) -> bool:
    """True for channels whose quanta leave as photons (cavity or radiative)."""
    return tag.startswith(EMISSION_TAGS_PREFIXES)


def build_channels(model: SystemModel) -> list[Channel]:
    """Construct every nonzero-rate Lindblad channel of the model.

    Returns radiative decays, the (time-dependent) pump, phononic ground
    relaxations and the cavity outcoupling, in that order.  The list is a
    deterministic function of the model.
    """
    space = model.space()
    levels = model.retained_levels()
    na = len(levels)
    e_idx = levels.index("e")
    channels: list[Channel] = []

    for orig_i, pos in model.retained_ground():
        rate = model.scheme.radiative_rates[orig_i]
        if rate > 0:
            op = kron_embed(transition(na, pos, e_idx), "atom", space)
            channels.append(Channel(op, rate, f"radiative:{orig_i}PL"))

    if model.pump.rate > 0:
        g0 = levels.index("g0")
        op = kron_embed(transition(na, e_idx, g0), "atom", space)
        channels.append(Channel(op, model.pump.rate, "pump", pump=model.pump))

    retained = dict(model.retained_ground())  # original index -> position
    for i in range(len(model.scheme.ground_energies) - 1):
        rate = model.scheme.phonon_rates[i]
        if rate > 0 and i in retained and (i + 1) in retained:
            op = kron_embed(transition(na, retained[i], retained[i + 1]), "atom", space)
            channels.append(Channel(op, rate, f"phonon:{i}"))

    kappa = model.kappa()
    if kappa > 0:
        a = kron_embed(annihilator(space.dim_of("cavity")), "cavity", space)
        if model.has_waveguide():
            b_dag = kron_embed(
                annihilator(space.dim_of("waveguide")).conj().T, "waveguide", space
            )
            channels.append(Channel(b_dag @ a, kappa, "cavity-out"))
        else:
            channels.append(Channel(a, kappa, "cavity-loss"))
    return channels


def total_excitation_operator(model: SystemModel) -> Operator:
    """Atomic excitation + cavity quanta + waveguide quanta (conserved by H)."""
    space = model.space()
    levels = model.retained_levels()
    n = kron_embed(
        transition(len(levels), levels.index("e"), levels.index("e")), "atom", space
    ).mat
    n = n + kron_embed(number_op(space.dim_of("cavity")), "cavity", space).mat
    if model.has_waveguide():
        n = n + kron_embed(number_op(space.dim_of("waveguide")), "waveguide", space).mat
    return Operator(space, n)


def _scheme_two_level(lifetime_pl: float, zpl_wavelength: float) -> NVLevelScheme:
    omega_zpl = 2 * math.pi * _c_light / zpl_wavelength
    rate = 0.0 if math.isinf(lifetime_pl) else 1.0 / lifetime_pl
    return NVLevelScheme(
        ground_energies=(0.0,),
        excited_energy=omega_zpl,
        radiative_rates=(rate,),
        phonon_rates=(),
    )


def two_level_model(
    coupling: float,
    pump: PumpPulse,
    quality_factor: float = 36500.0,
    n_cavity: int = 1,
    n_waveguide: int = 1,
    lifetime_pl: float = DEFAULT_LIFETIME_PL,
    zpl_wavelength: float = DEFAULT_ZPL_WAVELENGTH,
    mode_volume: float | None = None,
) -> SystemModel:
    """Two-level emitter resonant with the cavity on the zero-phonon line."""
    cavity = CavityConfig(
        wavelength=zpl_wavelength,
        quality_factor=quality_factor,
        mode_volume=mode_volume if mode_volume is not None else zpl_wavelength**3,
        resonant_transition=0,
    )
    return SystemModel(
        scheme=_scheme_two_level(lifetime_pl, zpl_wavelength),
        cavity=cavity,
        coupling=CouplingSpec((coupling,)),
        pump=pump,
        truncation=Truncation(n_cavity=n_cavity, n_waveguide=n_waveguide),
    )


def full_model(
    branching_ratios,
    pump: PumpPulse,
    coupling_resonant: float,
    quality_factor: float = 36500.0,
    vibrational_quantum: float = 9.1e13,
    phonon_rate: float = 1e11,
    n_cavity: int = 1,
    n_waveguide: int = 1,
    lifetime_pl: float = DEFAULT_LIFETIME_PL,
    zpl_wavelength: float = DEFAULT_ZPL_WAVELENGTH,
    resonant_transition: int = 0,
) -> SystemModel:
    """Eleven-level emitter (10 vibrational ground sublevels + ``e``).

    ``branching_ratios`` distributes ``1 / lifetime_pl`` over the radiative
    lines; they are mandatory inputs because no authoritative table ships
    with the package.  The harmonic ladder spacing and the (fast) phonon
    relaxation rate are likewise configuration, defaulting to illustrative
    magnitudes only.
    """
    br = np.asarray(branching_ratios, dtype=float)
    if br.ndim != 1 or br.size != 10:
        raise ValueError("need exactly 10 branching ratios")
    if np.any(br < 0) or not math.isclose(float(br.sum()), 1.0, rel_tol=1e-6):
        raise ValueError("branching ratios must be non-negative and sum to 1 (within 1e-6)")
    br = br / br.sum()
    total = 0.0 if math.isinf(lifetime_pl) else 1.0 / lifetime_pl
    omega_zpl = 2 * math.pi * _c_light / zpl_wavelength
    ground = tuple(i * vibrational_quantum for i in range(10))
    scheme = NVLevelScheme(
        ground_energies=ground,
        excited_energy=omega_zpl + ground[0],
        radiative_rates=tuple(total * b for b in br),
        phonon_rates=tuple(phonon_rate for _ in range(9)),
    )
    cavity = CavityConfig(
        wavelength=2 * math.pi * _c_light / scheme.transition_frequency(resonant_transition),
        quality_factor=quality_factor,
        mode_volume=zpl_wavelength**3,
        resonant_transition=resonant_transition,
    )
    couplings = [0.0] * 10
    couplings[resonant_transition] = coupling_resonant
    return SystemModel(
        scheme=scheme,
        cavity=cavity,
        coupling=CouplingSpec(tuple(couplings)),
        pump=pump,
        truncation=Truncation(n_cavity=n_cavity, n_waveguide=n_waveguide),
    )


def reduced_phonon_model(
    coupling: float,
    quality_factor: float,
    phonon_rate: float,
    vibrational_quantum: float = 9.1e13,
    zpl_wavelength: float = DEFAULT_ZPL_WAVELENGTH,
) -> SystemModel:
    """Three levels (e, g0, g1) with the cavity resonant on the first phonon line.

    No radiative decay and no pump: the model isolates the competition
    between cavity outcoupling and the vibrational relaxation g1 -> g0 that
    degrades the phonon-line Purcell enhancement.
    """
    omega_zpl = 2 * math.pi * _c_light / zpl_wavelength
    scheme = NVLevelScheme(
        ground_energies=(0.0, vibrational_quantum),
        excited_energy=omega_zpl,
        radiative_rates=(0.0, 0.0),
        phonon_rates=(phonon_rate,),
    )
    cavity = CavityConfig(
        wavelength=2 * math.pi * _c_light / scheme.transition_frequency(1),
        quality_factor=quality_factor,
        mode_volume=zpl_wavelength**3,
        resonant_transition=1,
    )
    return SystemModel(
        scheme=scheme,
        cavity=cavity,
        coupling=CouplingSpec((0.0, coupling)),
        pump=PumpPulse(rate=0.0, width=1.0),
        truncation=Truncation(n_cavity=1, n_waveguide=0),
    )
