"""Hot-quasiparticle model: density <-> excited population, and induced decay rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import constants as c
from .qubit_model import DeviceParams

__all__ = ["QpState", "pe_from_qp", "qp_from_pe", "gamma_qp", "t1_qp", "gap_ratio"]

# Wenner et al., PRL 110, 150502 (2013)
PE_PREFACTOR = 2.17
PE_EXPONENT = 3.65
# Catelani et al., PRB 84, 064517 (2011); sqrt(2) prefactor for a transmon
GAMMA_PREFACTOR = math.sqrt(2.0)
GAMMA_EXPONENT = 1.5


@dataclass(frozen=True)
class QpState:
    density_ratio: float  # n_qp / n_cp

    def __post_init__(self):
        if self.density_ratio < 0:
            raise ValueError("density ratio must be non-negative")


def gap_ratio(gap: float, Ege: float) -> float:
    """Delta / E_ge with gap in ueV and E_ge in GHz; must exceed 1."""
    if gap <= 0 or Ege <= 0:
        raise ValueError("gap and Ege must be positive")
    r = c.ueV_to_joule(gap) / c.ghz_to_joule(Ege)
    if r <= 1.0:
        raise ValueError(f"gap ({gap} ueV) must exceed the level splitting ({Ege} GHz)")
    return r


def pe_from_qp(density_ratio: float, gap: float, Ege: float) -> float:
    """Excited-state population sustained by a hot-quasiparticle density."""
    if density_ratio < 0:
        raise ValueError("density ratio must be non-negative")
    return PE_PREFACTOR * density_ratio * gap_ratio(gap, Ege) ** PE_EXPONENT


def qp_from_pe(Pe: float, gap: float, Ege: float) -> float:
    """Quasiparticle density (per Cooper pair) that would alone produce ``Pe``."""
    if Pe < 0:
        raise ValueError("Pe must be non-negative")
    return Pe / (PE_PREFACTOR * gap_ratio(gap, Ege) ** PE_EXPONENT)


def gamma_qp(params: DeviceParams, Ege: float, density_ratio: float) -> float:
    """
    Quasiparticle-induced relaxation rate in kHz.

    Uses ``params.RN`` (kOhm), ``params.C`` (fF) and ``params.gap`` (ueV).
    """
    RN, C = params.RN, params.C
    if RN <= 0 or C <= 0:
        raise ValueError("RN and C must be positive")
    if density_ratio < 0:
        raise ValueError("density ratio must be non-negative")
    rate = (
        GAMMA_PREFACTOR
        / (RN * c.KOHM * C * c.FF)
        * gap_ratio(params.gap, Ege) ** GAMMA_EXPONENT
        * density_ratio
    )
    return rate / c.KHZ


def t1_qp(gamma_khz: float) -> float:
    """Relaxation time in us for a rate in kHz; ``inf`` for a zero rate."""
    if gamma_khz == 0:
        return math.inf
    return 1.0 / (gamma_khz * c.KHZ) / c.US
