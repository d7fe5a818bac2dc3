"""Second-order characteristic-function expansion for ultra-short-tenor returns.

The continuous part of the log price is standardized as

    Z_tau = (X_tau - X_0 - mu_0*tau) / (sigma0*sqrt(tau)),   mu_0 = r_0 - sigma0**2/2,

and its characteristic function is expanded to second order in sqrt(tau) around
the Gaussian e^{-u^2/2}.  The expansion is driven by the time-0 values of the
volatility dynamics (spot vol sigma0, vol-of-vol beta_tilde0, leverage rho0,
vol-of-vol-of-vol eta0, combined drift alpha_prime0) plus an optional
deterministic piecewise-constant displacement phi(t) added to the volatility
path.  Price jumps are compound Poisson with Gaussian sizes and enter as a
multiplicative factor.

Three evaluation routes are provided and kept deliberately independent:

* :func:`psi_c_no_shift` -- closed form, no displacement.
* :func:`psi_c_piecewise` -- closed form in the inner products between powers
  of the shifted-volatility ratio and tenor-power increments.
* :func:`psi_c_quadrature` -- direct numerical quadrature of every nested
  integral of phi_tilde(s) = 1 + phi(s)/sigma0; supports arbitrary bounded
  displacements and serves as the oracle for the closed forms.

All operations are pure functions, vectorized over the frequency argument, and
accept complex frequencies (needed by the Fourier pricer's shifted argument).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "EdgeworthParams",
    "Displacement",
    "TenorMatrices",
    "build_tenor_matrices",
    "psi_c_no_shift",
    "psi_c_piecewise",
    "psi_c_quadrature",
    "psi_jump",
    "psi_full",
]

# exp(x) underflows to exactly 0.0 below roughly -745; n.b. the damped product
# is what every consumer integrates, so returning exact zero there is correct.
_UNDERFLOW_LOG = -745.0

# Real exponents above this overflow float64; used to reject degenerate
# jump-compensator regimes instead of silently producing inf/NaN.
_OVERFLOW_LOG = 700.0


@dataclass(frozen=True)
class EdgeworthParams:
    """Time-0 parameter vector of the expansion-based model.

    Parameters
    ----------
    sigma0 : float
        Spot volatility (annualized), > 0.
    beta_tilde0 : float
        Spot vol-of-vol (annualized).
    rho0 : float
        Spot leverage correlation, in [-1, 1].
    eta0 : float
        Vol-of-vol-of-vol loading on the price Brownian (annualized).
    alpha_prime0 : float
        Combined volatility/price drift parameter (alpha0 + delta0)/2.
    lambda0 : float
        Jump intensity per year, >= 0.
    mu_J, sigma_J : float
        Mean and standard deviation (>= 0) of the Gaussian log jump size.
    """

    sigma0: float
    beta_tilde0: float = 0.0
    rho0: float = 0.0
    eta0: float = 0.0
    alpha_prime0: float = 0.0
    lambda0: float = 0.0
    mu_J: float = 0.0
    sigma_J: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma0 > 0.0:
            raise ValueError(f"sigma0 must be > 0, got {self.sigma0}")
        if self.sigma_J < 0.0:
            raise ValueError(f"sigma_J must be >= 0, got {self.sigma_J}")
        if self.lambda0 < 0.0:
            raise ValueError(f"lambda0 must be >= 0, got {self.lambda0}")
        if not -1.0 <= self.rho0 <= 1.0:
            raise ValueError(f"rho0 must lie in [-1, 1], got {self.rho0}")

    @property
    def spot_vol(self) -> float:
        """Annualized instantaneous volatility at time 0 (pricing anchor)."""
        return self.sigma0

    @property
    def beta0(self) -> float:
        """Loading on the price Brownian: beta_tilde0 * rho0."""
        return self.beta_tilde0 * self.rho0

    @property
    def beta0_perp(self) -> float:
        """Loading on the orthogonal Brownian: beta_tilde0 * sqrt(1 - rho0^2)."""
        return self.beta_tilde0 * math.sqrt(max(0.0, 1.0 - self.rho0 * self.rho0))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EdgeworthParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parameter fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Displacement:
    """Piecewise-constant volatility displacement on a tenor grid.

    phi(t) = sum_k a_k * 1[tau_k <= t < tau_{k+1}) with tau_0 = 0 and a_0 = 0:
    ``tenors`` are the grid points tau_1 < ... < tau_n (year fractions) and
    ``shifts`` the levels a_1, ..., a_{n-1} applying from tau_1 onward.  Beyond
    tau_n the last level is carried forward.
    """

    tenors: tuple
    shifts: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "tenors", tuple(float(t) for t in self.tenors))
        object.__setattr__(self, "shifts", tuple(float(a) for a in self.shifts))
        if len(self.tenors) == 0:
            raise ValueError("displacement needs at least one tenor")
        if len(self.shifts) != len(self.tenors) - 1:
            raise ValueError(
                f"expected {len(self.tenors) - 1} shifts for {len(self.tenors)} "
                f"tenors, got {len(self.shifts)}"
            )
        arr = np.asarray(self.tenors)
        if arr[0] <= 0.0 or np.any(np.diff(arr) <= 0.0):
            raise ValueError("tenors must be strictly increasing and positive")

    @property
    def levels(self) -> tuple:
        """Shift level on each grid segment [tau_k, tau_{k+1}), k = 0..n-1."""
        return (0.0,) + self.shifts

    def phi(self, t):
        """Evaluate the displacement, vectorized; constant beyond the grid."""
        t = np.asarray(t, dtype=float)
        lev = np.asarray(self.levels)
        idx = np.searchsorted(np.asarray(self.tenors), t, side="right")
        out = lev[np.minimum(idx, len(lev) - 1)]
        return out if out.ndim else float(out)

    def segments_to(self, tau: float):
        """Segment boundaries and levels covering [0, tau].

        Returns ``(bounds, seg_levels)`` where ``bounds`` ends exactly at tau
        (inserted as an extra breakpoint when tau is off the grid, carrying the
        prevailing level) and ``seg_levels[k]`` applies on
        [bounds[k-1], bounds[k]) with bounds[-1] := 0.
        """
        if not tau > 0.0:
            raise ValueError(f"tau must be > 0, got {tau}")
        ten = np.asarray(self.tenors)
        lev = np.asarray(self.levels)
        bounds = np.append(ten[ten < tau], tau)
        if len(bounds) <= len(lev):
            seg = lev[: len(bounds)]
        else:
            seg = np.append(lev, lev[-1])
        return bounds, seg

    def to_dict(self) -> dict:
        return {"tenors": list(self.tenors), "shifts": list(self.shifts)}

    @classmethod
    def from_dict(cls, d: dict) -> "Displacement":
        return cls(tenors=tuple(d["tenors"]), shifts=tuple(d["shifts"]))


@dataclass(frozen=True, eq=False)
class TenorMatrices:
    """Power matrices of a displacement grid.

    ``delta_t[j-1, k]`` holds tau_{k+1}^j - tau_k^j and ``phi_tilde[j-1, k]``
    holds (1 + a_k/sigma0)^j, for j = 1..m and k = 0..n-1 (tau_0 = a_0 = 0).
    """

    delta_t: np.ndarray
    phi_tilde: np.ndarray


def _phi_tilde_column(seg_levels, sigma0: float) -> np.ndarray:
    col = 1.0 + np.asarray(seg_levels) / sigma0
    if np.any(col <= 0.0):
        k = int(np.argmax(col <= 0.0))
        raise ValueError(
            f"shift level {seg_levels[k]} makes the shifted volatility "
            f"non-positive for sigma0={sigma0}"
        )
    return col


def build_tenor_matrices(
    displacement: Displacement, sigma0: float, max_power: int = 4
) -> TenorMatrices:
    """Build the m x n tenor-power and shift-power matrices of a displacement.

    Rows are powers j = 1..max_power; columns are grid segments.  Requires
    sigma0 > 0 and a displacement whose shifted volatility stays positive.
    """
    if not sigma0 > 0.0:
        raise ValueError(f"sigma0 must be > 0, got {sigma0}")
    if max_power < 1:
        raise ValueError(f"max_power must be >= 1, got {max_power}")
    taus = np.concatenate([[0.0], np.asarray(displacement.tenors)])
    j = np.arange(1, max_power + 1)[:, None]
    delta_t = taus[None, 1:] ** j - taus[None, :-1] ** j
    phi_tilde = _phi_tilde_column(displacement.levels, sigma0)[None, :] ** j
    return TenorMatrices(delta_t=delta_t, phi_tilde=phi_tilde)


def _as_freq(u):
    """Common frequency-argument handling: complex array + scalar flag."""
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    return uu, scalar


def _damped(lead_exponent: np.ndarray, bracket: np.ndarray, scalar: bool):
    """exp(lead) * bracket with exact zero where the damping underflows."""
    safe = np.where(lead_exponent.real < _UNDERFLOW_LOG, -np.inf, lead_exponent)
    damp = np.exp(safe)
    out = np.where(damp == 0.0, 0.0 + 0.0j, damp * bracket)
    return complex(out[0]) if scalar else out


def psi_c_no_shift(u, tau: float, params: EdgeworthParams):
    """Characteristic function of the standardized continuous return, no shift.

    Closed second-order form around the Gaussian::

        e^{-u^2/2} ( 1 - iu^3 (beta_tilde0 rho0 / 2 sigma0) sqrt(tau)
                       - u^2 ((alpha0+delta0)/2sigma0 + beta_tilde0^2/4sigma0^2) tau
                       + (beta_tilde0^2/24sigma0^2) u^2 (4u^2 - rho0^2 u^2 (3u^2-8)) tau
                       + (eta0/6sigma0) u^4 tau )

    with alpha0 + delta0 = 2*alpha_prime0.  Accepts scalar or array ``u``,
    real or complex.
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    uu, scalar = _as_freq(u)
    u2 = uu * uu
    u4 = u2 * u2
    s0 = params.sigma0
    bt = params.beta_tilde0
    rho = params.rho0
    bracket = (
        1.0
        - 1j * u2 * uu * (bt * rho / (2.0 * s0)) * math.sqrt(tau)
        - u2 * (params.alpha_prime0 / s0 + bt * bt / (4.0 * s0 * s0)) * tau
        + (bt * bt / (24.0 * s0 * s0)) * u2 * (4.0 * u2 - rho * rho * u2 * (3.0 * u2 - 8.0)) * tau
        + (params.eta0 / (6.0 * s0)) * u4 * tau
    )
    return _damped(-0.5 * u2, bracket, scalar)


def _inner_products(bounds: np.ndarray, seg_levels: np.ndarray, sigma0: float) -> np.ndarray:
    """4x4 matrix of inner products ip[p-1, j-1] = <Phi_tilde_p, DeltaT_j>."""
    taus = np.concatenate([[0.0], bounds])
    j = np.arange(1, 5)[:, None]
    dt = taus[None, 1:] ** j - taus[None, :-1] ** j
    ph = _phi_tilde_column(seg_levels, sigma0)[None, :] ** j
    return ph @ dt.T


def psi_c_piecewise(
    u,
    tau_k: float,
    params: EdgeworthParams,
    displacement: Displacement,
    strict_grid: bool = False,
):
    """Closed-form characteristic function under a piecewise-constant shift.

    The leading Gaussian factor uses the shift-weighted variance
    <Phi_tilde_2, DeltaT_1>/tau_k and the bracket collects the skew, drift,
    eta and vol-of-vol corrections through inner products of shift powers
    with tenor-power increments, truncated to the segments below tau_k.

    tau_k is normally one of the displacement tenors.  Off-grid tau is
    evaluated by inserting tau as an extra breakpoint carrying the prevailing
    level (the displacement is constant on each segment); pass
    ``strict_grid=True`` to reject off-grid tenors instead.
    """
    if not tau_k > 0.0:
        raise ValueError(f"tau must be > 0, got {tau_k}")
    if strict_grid and not any(
        math.isclose(tau_k, t, rel_tol=1e-12) for t in displacement.tenors
    ):
        raise ValueError(f"tau={tau_k} is not on the displacement grid")
    bounds, seg = displacement.segments_to(tau_k)
    ip = _inner_products(bounds, seg, params.sigma0)

    uu, scalar = _as_freq(u)
    u2 = uu * uu
    u4 = u2 * u2
    s0 = params.sigma0
    bt = params.beta_tilde0
    rho = params.rho0
    t = tau_k

    lead = -0.5 * u2 * (ip[1, 0] / t)
    bracket = (
        1.0
        - 1j * u2 * uu * (bt * rho / (2.0 * s0 * t**1.5)) * ip[1, 1]
        - u2 * (params.alpha_prime0 / (s0 * t)) * ip[0, 1]
        + u4 * (params.eta0 / (6.0 * s0 * t * t)) * ip[0, 2]
        - (bt * bt * rho * rho / (8.0 * s0 * s0 * t))
        * u2
        * (
            2.0 * t * t
            + 2.0 * u2 * ip[1, 1]
            - (4.0 * u2 / t) * ip[1, 2]
            - (12.0 * u2 / t) * (ip[1, 2] / 6.0 - (u2 / (12.0 * t)) * ip[3, 3])
        )
        - (bt * bt * (1.0 - rho * rho) / (2.0 * s0 * s0 * t))
        * u2
        * (0.5 * t * t - (u2 / (3.0 * t)) * ip[1, 2])
    )
    return _damped(lead, bracket, scalar)


def _sample_phi_tilde(
    fn: Callable, s: np.ndarray, first_dup: np.ndarray, eps: float, sigma0: float
) -> np.ndarray:
    """phi_tilde on the doubled grid, taking left limits at duplicated nodes."""
    vals = np.asarray(fn(s), dtype=float)
    if vals.shape != s.shape:  # plain scalar callable
        vals = np.array([float(fn(x)) for x in s])
    if first_dup.size:
        left = np.array([float(fn(x - eps)) for x in s[first_dup]])
        vals = vals.copy()
        vals[first_dup] = left
    if not np.all(np.isfinite(vals)):
        raise ValueError("displacement function produced non-finite samples")
    return 1.0 + vals / sigma0


def psi_c_quadrature(
    u,
    tau: float,
    params: EdgeworthParams,
    phi,
    node_count: int = 20_000,
    breakpoints: Sequence[float] = (),
):
    """Quadrature oracle for the standardized continuous-return CF.

    Evaluates the general-displacement expansion directly: every nested
    integral of phi_tilde(s) = 1 + phi(s)/sigma0 is computed by a composite
    trapezoid rule with running cumulative sums on a uniform grid whose node
    set includes all supplied breakpoints (each inserted twice so that jump
    discontinuities are integrated exactly).  The drift split uses
    alpha0 = delta0 = alpha_prime0.

    Parameters
    ----------
    phi : callable or Displacement
        Deterministic displacement with phi(0) = 0.  Passing a
        :class:`Displacement` supplies its own breakpoints.
    node_count : int
        Uniform base-grid size (the two per-breakpoint duplicates are extra).
    breakpoints : sequence of float
        Known jump locations of a callable ``phi``; ignored outside (0, tau).
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if node_count < 2:
        raise ValueError("node_count must be >= 2")
    if isinstance(phi, Displacement):
        breakpoints = phi.tenors
        fn = phi.phi
    else:
        fn = phi

    base = np.linspace(0.0, tau, node_count)
    brk = np.asarray([b for b in breakpoints if 0.0 < b < tau], dtype=float)
    s = np.sort(np.concatenate([base, brk, brk]))
    # First occurrence of each duplicated breakpoint closes the left segment,
    # so it must carry the left limit of phi_tilde.
    first_dup = np.searchsorted(s, brk, side="left") if brk.size else np.array([], dtype=int)
    eps = tau / (8.0 * (node_count - 1))
    v = _sample_phi_tilde(fn, s, first_dup, eps, params.sigma0)

    ds = np.diff(s)

    def cum(f: np.ndarray) -> np.ndarray:
        out = np.empty_like(f)
        out[0] = 0.0
        np.cumsum(0.5 * (f[1:] + f[:-1]) * ds, out=out[1:])
        return out

    F = cum(v)            # int_0^s phi_tilde
    G = cum(F)            # int_0^s F
    H = cum(v * F)        # int_0^s phi_tilde * F
    K1 = cum(s * v)       # int_0^s s1 * phi_tilde
    M = cum(v * H)        # int_0^s phi_tilde * H

    i_var = cum(v * v)[-1]
    i_skew = H[-1]
    i_delta = G[-1]
    i_alpha = K1[-1]
    i_eta = cum(G)[-1]
    i_b3 = M[-1]
    i_m1 = cum(v * K1)[-1]
    i_m2 = cum(v * M)[-1]

    uu, scalar = _as_freq(u)
    u2 = uu * uu
    s0 = params.sigma0
    b0 = params.beta0
    b0p = params.beta0_perp
    a0 = d0 = params.alpha_prime0
    t = tau

    lead = -0.5 * u2 * (i_var / t)
    bracket = (
        1.0
        - 1j * u2 * uu * (b0 / (s0 * t**1.5)) * i_skew
        - u2 * (d0 / (s0 * t)) * i_delta
        - u2 * (a0 / (s0 * t)) * i_alpha
        + u2 * u2 * (params.eta0 / (s0 * t * t)) * i_eta
        - (b0 * b0 * u2 / (8.0 * s0 * s0 * t))
        * (
            2.0 * t * t
            + 4.0 * u2 * i_skew
            - (24.0 * u2 / t) * i_b3
            - (12.0 * u2 / t) * (i_m1 - (2.0 * u2 / t) * i_m2)
        )
        - (b0p * b0p * u2 / (2.0 * s0 * s0 * t)) * (0.5 * t * t - (2.0 * u2 / t) * i_m1)
    )
    return _damped(lead, bracket, scalar)


def psi_jump(u, tau: float, params: EdgeworthParams):
    """Characteristic function of the standardized compensated jump component.

    exp{ tau*lambda0 * ( e^{iu mu_J/(sigma0 sqrt(tau)) - u^2 sigma_J^2/(2 sigma0^2 tau)}
                         - 1 - iu*mu_bar ) }

    with mu_bar = (e^{mu_J + sigma_J^2/2} - 1) / (sigma0 sqrt(tau)): the
    exponential-moment compensator of a single jump, rescaled to standardized
    units.  Evaluated at u = -i*sigma0*sqrt(tau) the exponent cancels exactly,
    so the jump factor never disturbs the forward (E[e^X] = 1 to machine
    precision for any jump size).  Raises OverflowError when the compensator
    exponent mu_J + sigma_J^2/2 exceeds float64 range.
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    uu, scalar = _as_freq(u)
    if params.lambda0 == 0.0:
        out = np.ones_like(uu)
        return complex(out[0]) if scalar else out
    st = params.sigma0 * math.sqrt(tau)
    m = params.mu_J / st
    v = params.sigma_J**2 / (2.0 * params.sigma0**2 * tau)
    comp = params.mu_J + 0.5 * params.sigma_J**2
    if comp > _OVERFLOW_LOG:
        raise OverflowError(
            f"jump compensator exponent {comp:.1f} exceeds float64 range"
        )
    mu_bar = math.expm1(comp) / st
    out = np.exp(params.lambda0 * tau * (np.exp(1j * uu * m - uu * uu * v) - 1.0 - 1j * uu * mu_bar))
    return complex(out[0]) if scalar else out


def psi_full(u, tau: float, params: EdgeworthParams, displacement: Displacement | None = None):
    """Product of the continuous-part and jump-part characteristic functions.

    Uses :func:`psi_c_piecewise` when a displacement is given, otherwise
    :func:`psi_c_no_shift`.
    """
    if displacement is None:
        psi_c = psi_c_no_shift(u, tau, params)
    else:
        psi_c = psi_c_piecewise(u, tau, params, displacement)
    return psi_c * psi_jump(u, tau, params)
