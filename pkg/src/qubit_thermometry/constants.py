"""Physical constants (CODATA via scipy) and unit conversions shared by every module."""

from scipy import constants as _c

H = _c.h  # J s
KB = _c.k  # J / K
E_CHARGE = _c.e  # C
PHI0 = _c.physical_constants["mag. flux quantum"][0]  # Wb

GHZ = 1e9
MHZ = 1e6
KHZ = 1e3
MK = 1e-3
US = 1e-6
UEV = 1e-6 * E_CHARGE  # J
FF = 1e-15
KOHM = 1e3


def ghz_to_joule(f_ghz):
    return H * f_ghz * GHZ


def ueV_to_joule(energy_ueV):
    return energy_ueV * UEV
