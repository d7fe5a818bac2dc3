"""Displaced Black-Scholes (BS++) ATM term structure and shift bootstrap.

With volatility sigma0 + phi(t) deterministic and piecewise constant, the
log price stays lognormal and the ATM implied vol at tenor tau is

    sigma_BS(tau) = sigma0 * sqrt( V(tau) / tau ),
    V(tau) = <Phi_tilde_2, DeltaT_1> = sum_k (1 + a_k/sigma0)^2 (tau_{k+1} - tau_k),

i.e. the shift-weighted integrated variance.  Inverting the recursion tenor
by tenor extracts (sigma0, a_1, ..., a_{n-1}) directly from market ATM vols:
sigma0 is the shortest-tenor vol and

    a_k = -sigma0 + sqrt( (sigma_{k+1}^2 tau_{k+1} - sigma_k^2 tau_k) / (tau_{k+1} - tau_k) ).

A negative radicand is exactly a calendar-arbitrage violation (total implied
variance must be non-decreasing), reported with the offending tenor pair.
The bootstrap output seeds every displaced model's calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cf_edgeworth import Displacement

__all__ = [
    "AtmTermStructure",
    "CalendarArbitrageError",
    "bspp_atm_vol",
    "calibrate_shift_from_atm",
    "shift_weighted_variance",
]

# radicand noise floor: values in (-1e-12, 0) on flat structures are
# floating-point artifacts, not arbitrage
_RADICAND_CLAMP = -1e-12


class CalendarArbitrageError(ValueError):
    """Total implied variance decreases between two listed tenors."""


@dataclass(frozen=True)
class AtmTermStructure:
    """Market ATM implied vols on an increasing tenor grid (year fractions)."""

    tenors: tuple
    atm_vols: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "tenors", tuple(float(t) for t in self.tenors))
        object.__setattr__(self, "atm_vols", tuple(float(v) for v in self.atm_vols))
        if len(self.tenors) != len(self.atm_vols):
            raise ValueError(
                f"{len(self.tenors)} tenors vs {len(self.atm_vols)} vols"
            )
        if len(self.tenors) == 0:
            raise ValueError("term structure is empty")
        arr = np.asarray(self.tenors)
        if arr[0] <= 0.0 or np.any(np.diff(arr) <= 0.0):
            raise ValueError("tenors must be strictly increasing and positive")
        if any(v <= 0.0 for v in self.atm_vols):
            raise ValueError("ATM vols must be positive")


def shift_weighted_variance(sigma0: float, displacement: Displacement, tau: float) -> float:
    """V(tau) = sum over segments of (1 + a_k/sigma0)^2 * segment length.

    Time units (divide by tau for the variance ratio).  Off-grid tau is an
    extra breakpoint carrying the prevailing shift level.
    """
    if not sigma0 > 0.0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    bounds, seg = displacement.segments_to(tau)
    widths = np.diff(np.concatenate([[0.0], bounds]))
    return float(np.sum((1.0 + seg / sigma0) ** 2 * widths))


def bspp_atm_vol(tau: float, sigma0: float, displacement: Displacement) -> float:
    """BS++ ATM implied vol at tenor tau: sigma0 * sqrt(V(tau)/tau).

    Equals sigma0 exactly below the first displacement tenor (zero shift
    there by construction).
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if not sigma0 > 0.0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    if tau <= displacement.tenors[0]:
        return sigma0
    v = shift_weighted_variance(sigma0, displacement, tau)
    return sigma0 * math.sqrt(v / tau)


def calibrate_shift_from_atm(ts: AtmTermStructure):
    """Extract (sigma0, shifts) from market ATM vols by the tenor recursion.

    sigma0 is the shortest-tenor ATM vol; each shift comes from the forward
    total variance between consecutive tenors.  Raises
    :class:`CalendarArbitrageError` (naming the tenor pair) when total
    implied variance decreases; radicands within 1e-12 of zero are clamped
    to zero.

    Returns ``(sigma0, shifts)`` with ``len(shifts) == len(ts.tenors) - 1``;
    pair with ``Displacement(tenors=ts.tenors, shifts=shifts)``.
    """
    sigma0 = ts.atm_vols[0]
    shifts = []
    for k in range(len(ts.tenors) - 1):
        t0, t1 = ts.tenors[k], ts.tenors[k + 1]
        v0, v1 = ts.atm_vols[k], ts.atm_vols[k + 1]
        radicand = (v1 * v1 * t1 - v0 * v0 * t0) / (t1 - t0)
        if radicand < 0.0:
            if radicand > _RADICAND_CLAMP:
                radicand = 0.0
            else:
                raise CalendarArbitrageError(
                    f"total implied variance decreases between tau={t0} "
                    f"({v0 * v0 * t0:.6e}) and tau={t1} ({v1 * v1 * t1:.6e}): "
                    "calendar arbitrage"
                )
        shifts.append(-sigma0 + math.sqrt(radicand))
    return sigma0, tuple(shifts)
