"""
Transmon level ladder and equilibrium populations.

Energies are carried in frequency units (GHz, i.e. E/h) with the ground state
pinned at zero. Temperatures are in mK throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import constants as c

__all__ = [
    "LevelLadder",
    "PopulationDistribution",
    "DeviceParams",
    "transmon_ladder",
    "ladder_from_transitions",
    "boltzmann_populations",
    "effective_temperature",
    "predicted_pexp",
    "pexp_from_populations",
    "capacitance_from_charging_energy",
    "normal_resistance",
    "critical_current",
]

#: Bracket and tolerance for the effective-temperature inversion.
T_BRACKET_MK = (1.0, 1000.0)
T_TOL_MK = 0.01
#: Warn when the highest level of a truncated ladder holds more than this.
TRUNCATION_WARN_POP = 1e-3


@dataclass(frozen=True)
class LevelLadder:
    """Energies of the lowest qubit levels in GHz, ground state at 0."""

    energies: tuple[float, ...]

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        if len(energies) < 2:
            raise ValueError("a ladder needs at least two levels")
        if energies[0] != 0.0:
            raise ValueError("ground-state energy must be exactly 0")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ValueError("level energies must be strictly increasing")
        object.__setattr__(self, "energies", energies)

    def __len__(self):
        return len(self.energies)

    @property
    def transitions(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.energies, self.energies[1:]))

    @property
    def f_ge(self) -> float:
        return self.energies[1]

    @property
    def f_ef(self) -> float | None:
        return self.transitions[1] if len(self) > 2 else None


@dataclass(frozen=True)
class PopulationDistribution:
    """Normalized occupation probabilities, index 0 = |g>."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) < 2:
            raise ValueError("need at least two levels")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError(f"probabilities must lie in [0, 1]: {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1 (got {math.fsum(probs)!r})")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def normalized(cls, weights: Sequence[float]) -> "PopulationDistribution":
        """Build from non-negative weights, rescaling so they sum to one."""
        w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        total = math.fsum(w)
        if total <= 0:
            raise ValueError("weights must not all be zero")
        p = w / total
        # push the rounding residue onto the largest entry so fsum is exactly 1
        p[int(np.argmax(p))] += 1.0 - math.fsum(p)
        return cls(tuple(p))

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, i):
        return self.probs[i]

    @property
    def pg(self) -> float:
        return self.probs[0]

    @property
    def pe(self) -> float:
        return self.probs[1]

    @property
    def pf(self) -> float:
        return self.probs[2] if len(self.probs) > 2 else 0.0


@dataclass(frozen=True)
class DeviceParams:
    """
    Junction and circuit parameters of the qubit.

    ``C`` and ``RN`` are derived from ``EC`` and ``(gap, EJ)`` unless given
    explicitly (e.g. the rounded 80 fF / 9.5 kOhm values).

    Attributes
    ----------
    EJ, EC : float
        Josephson and charging energies, GHz.
    gap : float
        Superconducting gap Delta, ueV.
    T1 : float
        Measured relaxation time, us.
    """

    EJ: float = 14.07
    EC: float = 0.24
    gap: float = 170.0
    T1: float = 80.0
    C_override: float | None = field(default=None, repr=False)
    RN_override: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.EJ <= 0 or self.EC <= 0 or self.gap <= 0 or self.T1 <= 0:
            raise ValueError("device parameters must be positive")
        if self.EJ / self.EC <= 1:
            raise ValueError("EJ/EC must exceed 1 (transmon regime)")

    @property
    def C(self) -> float:
        """Qubit capacitance in fF."""
        if self.C_override is not None:
            return self.C_override
        return capacitance_from_charging_energy(self.EC)

    @property
    def RN(self) -> float:
        """Junction normal-state resistance in kOhm."""
        if self.RN_override is not None:
            return self.RN_override
        return normal_resistance(self.gap, self.EJ)


def transmon_ladder(EJ: float, EC: float, n_levels: int = 4) -> LevelLadder:
    """
    Level ladder from the asymptotic (large EJ/EC) transmon spectrum.

    E_n = -EJ + sqrt(8 EJ EC)(n + 1/2) - (EC/12)(6n^2 + 6n + 3), shifted so
    that E_0 = 0. Successive transitions shrink by exactly EC.
    """
    if EJ <= 0 or EC <= 0:
        raise ValueError("EJ and EC must be positive")
    if n_levels < 2:
        raise ValueError("n_levels must be >= 2")
    n = np.arange(n_levels, dtype=float)
    plasma = math.sqrt(8.0 * EJ * EC)
    energies = -EJ + plasma * (n + 0.5) - EC / 12.0 * (6 * n**2 + 6 * n + 3)
    return LevelLadder(tuple(energies - energies[0]))


def ladder_from_transitions(transitions: Sequence[float]) -> LevelLadder:
    """Ladder from measured successive transition frequencies (GHz)."""
    transitions = [float(t) for t in transitions]
    if not transitions:
        raise ValueError("at least one transition frequency is required")
    if any(t <= 0 for t in transitions):
        raise ValueError("transition frequencies must be positive")
    energies = [0.0]
    for t in transitions:
        energies.append(energies[-1] + t)
    return LevelLadder(tuple(energies))


def _boltzmann_weights(energies: Sequence[float], T: float) -> np.ndarray:
    x = c.H * np.asarray(energies) * c.GHZ / (c.KB * T * c.MK)
    return np.exp(-(x - x[0]))


def boltzmann_populations(ladder: LevelLadder, T: float, *, warn: bool = True) -> PopulationDistribution:
    """
    Maxwell-Boltzmann occupation of each level (unit degeneracy) at ``T`` mK.

    Emits a ``RuntimeWarning`` if the top level of the truncated ladder holds
    more than 1e-3, i.e. the truncation is no longer safe.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    pop = PopulationDistribution.normalized(_boltzmann_weights(ladder.energies, T))
    if warn and pop.probs[-1] > TRUNCATION_WARN_POP:
        warnings.warn(
            f"top level of the {len(ladder)}-level ladder holds {pop.probs[-1]:.2e} at {T} mK; "
            "consider more levels",
            RuntimeWarning,
            stacklevel=2,
        )
    return pop


def _pe_at(ladder: LevelLadder, T: float) -> float:
    w = _boltzmann_weights(ladder.energies, T)
    return float(w[1] / w.sum())


def effective_temperature(ladder: LevelLadder, Pe: float) -> float:
    """
    Temperature (mK) at which the equilibrium ladder has excited population ``Pe``.

    Solved by bisection on [1, 1000] mK down to 0.01 mK. P_e(T) is strictly
    increasing, so the bracket is unique.
    """
    lo, hi = T_BRACKET_MK
    # high-temperature limit of P_e for the ladder
    limit = 1.0 / len(ladder)
    if not 0.0 < Pe < limit:
        raise ValueError(f"Pe={Pe!r} is outside the attainable range (0, {limit:.4g})")
    f_lo, f_hi = _pe_at(ladder, lo) - Pe, _pe_at(ladder, hi) - Pe
    if f_lo > 0 or f_hi < 0:
        raise ValueError(f"Pe={Pe!r} is not reached for T in [{lo}, {hi}] mK")
    while hi - lo > T_TOL_MK / 4:
        mid = 0.5 * (lo + hi)
        if _pe_at(ladder, mid) < Pe:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def pexp_from_populations(pop: PopulationDistribution) -> float:
    """Ratio the two-amplitude protocol measures: (Pe-Pf) / ((Pe-Pf) + (Pg-Pf))."""
    sig = pop.pe - pop.pf
    ref = pop.pg - pop.pf
    return sig / (sig + ref)


def predicted_pexp(ladder: LevelLadder, T: float) -> float:
    """Equilibrium value of the measured ratio at ``T`` mK (theory curve)."""
    return pexp_from_populations(boltzmann_populations(ladder, T, warn=False))


def capacitance_from_charging_energy(EC: float) -> float:
    """C = e^2 / (2 h EC), EC in GHz, result in fF."""
    if EC <= 0:
        raise ValueError("EC must be positive")
    return c.E_CHARGE**2 / (2.0 * c.ghz_to_joule(EC)) / c.FF


def critical_current(EJ: float) -> float:
    """Junction critical current in A from EJ (GHz): Ic = 2 pi h EJ / Phi0."""
    return 2.0 * math.pi * c.ghz_to_joule(EJ) / c.PHI0


def normal_resistance(gap: float, EJ: float) -> float:
    """
    Ambegaokar-Baratoff normal-state resistance in kOhm.

    R_N = (pi/4)(2 Delta / e) / Ic, with Delta in ueV and EJ in GHz.
    """
    if gap <= 0 or EJ <= 0:
        raise ValueError("gap and EJ must be positive")
    gap_volts = c.ueV_to_joule(gap) / c.E_CHARGE
    return math.pi * gap_volts / (2.0 * critical_current(EJ)) / c.KOHM
