"""Benchmark model characteristic functions: affine Heston-Merton variants
(one or two variance factors, self-exciting jump intensity, optional variance
displacement) and rough Heston (fractional kernel, piecewise forward-variance
curve, optional Merton jumps).

Both CFs are for the raw log return X_tau - X_0 over [0, tau] at zero rate,
with the martingale drift built in: CF(-i) = 1 exactly along the flow, which
the tests exploit.  Wrapping into standardized-return form for the Fourier
pricer happens in the registry.

The affine CF integrates the Riccati system for (A, B1, B2) with an embedded
Dormand-Prince 5(4) pair, vectorized across the whole frequency grid with a
shared adaptive step.  The rough CF solves the fractional Riccati equation
D^alpha psi = F(u, psi), alpha = H + 1/2, with the Adams
predictor-corrector, then integrates F against the forward-variance curve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from math import gamma

import numpy as np

from .cf_edgeworth import Displacement

__all__ = [
    "HestonMertonParams",
    "RoughHestonParams",
    "RiccatiExplosionError",
    "JumpTransformPoleError",
    "heston_merton_cf",
    "rough_heston_cf",
]

# For real or pricer-shifted frequencies the transform denominator stays O(1)
# (Re B1 <= 0); values this small only occur on the approach to the pole
# during moment-explosion probes, so report them as the pole they signal.
_POLE_TOL = 1e-4
_EXPLOSION_NORM = 1e6


class RiccatiExplosionError(RuntimeError):
    """Riccati state blew up (moment explosion) at time-to-go ``t``."""

    def __init__(self, message: str, t: float):
        super().__init__(message)
        self.t = t


class JumpTransformPoleError(RuntimeError):
    """The exponential variance-jump transform hit its pole 1 = m_v(iu rho0 + B1)."""


@dataclass(frozen=True)
class HestonMertonParams:
    """Affine one/two-factor stochastic-variance model with self-exciting jumps.

    Variance factors dv_i = kappa_i(theta_i - v_i)dt + zeta_i sqrt(v_i)dW_i,
    corr(dW_spot, dW_i) = rho_i.  Jumps arrive with intensity
    c_t = c0 + c1 v_1 + c2 v_2; the variance jump (factor 1) is Exp(m_v) and
    the log-price jump is Gaussian(mu_x + rho_jump * Z_v, sigma_x^2)
    conditional on the variance jump Z_v.  ``shifts`` adds a deterministic
    piecewise-constant displacement to the factor-1 variance (the ++
    variants); it feeds both the spot-variance and the intensity terms.
    """

    v1_0: float
    kappa1: float
    theta1: float
    zeta1: float
    rho1: float
    v2_0: float = 0.0
    kappa2: float = 0.0
    theta2: float = 0.0
    zeta2: float = 0.0
    rho2: float = 0.0
    rho_jump: float = 0.0
    mu_x: float = 0.0
    sigma_x: float = 0.0
    m_v: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    factor_count: int = 1
    feller_enforced: bool = False
    shifts: Displacement | None = None

    def __post_init__(self) -> None:
        if self.factor_count not in (1, 2):
            raise ValueError(f"factor_count must be 1 or 2, got {self.factor_count}")
        for name in ("v1_0", "v2_0", "theta1", "theta2", "c0", "c1", "c2", "m_v"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("rho1", "rho2"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1], got {getattr(self, name)}")
        if self.sigma_x < 0.0:
            raise ValueError(f"sigma_x must be >= 0, got {self.sigma_x}")
        if self.m_v * self.rho_jump >= 1.0:
            raise ValueError(
                f"m_v*rho_jump = {self.m_v * self.rho_jump} >= 1: the price-jump "
                "compensator E[e^Zx] diverges"
            )
        if self.feller_enforced:
            factors = [(self.kappa1, self.theta1, self.zeta1)]
            if self.factor_count == 2:
                factors.append((self.kappa2, self.theta2, self.zeta2))
            for i, (k, th, z) in enumerate(factors, start=1):
                if 2.0 * k * th < z * z:
                    raise ValueError(
                        f"Feller condition violated on factor {i}: "
                        f"2*kappa*theta = {2 * k * th:.6g} < zeta^2 = {z * z:.6g}"
                    )

    @property
    def spot_variance(self) -> float:
        return self.v1_0 + self.v2_0

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = v.to_dict() if isinstance(v, Displacement) else v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HestonMertonParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parameter fields: {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("shifts"), dict):
            d["shifts"] = Displacement.from_dict(d["shifts"])
        return cls(**d)


@dataclass(frozen=True)
class RoughHestonParams:
    """Rough-volatility model with fractional kernel and forward-variance curve.

    xi_levels[k] is the forward variance on [xi_tenors[k-1], xi_tenors[k])
    (first tenor from 0; the last level extends beyond the grid), so
    xi_levels[0] is the spot variance.  Optional Merton jumps (lambda_j,
    mu_j, sigma_j) are independent Gaussian, not self-exciting.
    """

    hurst: float
    nu: float
    rho: float
    xi_tenors: tuple
    xi_levels: tuple
    lambda_j: float = 0.0
    mu_j: float = 0.0
    sigma_j: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "xi_tenors", tuple(float(t) for t in self.xi_tenors))
        object.__setattr__(self, "xi_levels", tuple(float(x) for x in self.xi_levels))
        if not 0.0 < self.hurst <= 0.5:
            raise ValueError(f"hurst must lie in (0, 0.5], got {self.hurst}")
        if not self.nu > 0.0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if len(self.xi_tenors) == 0 or len(self.xi_levels) != len(self.xi_tenors):
            raise ValueError("xi curve needs one level per tenor (>= 1 tenor)")
        arr = np.asarray(self.xi_tenors)
        if arr[0] <= 0.0 or np.any(np.diff(arr) <= 0.0):
            raise ValueError("xi tenors must be strictly increasing and positive")
        if any(x <= 0.0 for x in self.xi_levels):
            raise ValueError("xi levels must be positive")
        if self.lambda_j < 0.0 or self.sigma_j < 0.0:
            raise ValueError("lambda_j and sigma_j must be >= 0")

    @property
    def spot_variance(self) -> float:
        return self.xi_levels[0]

    def xi(self, t):
        """Forward-variance curve, vectorized; constant beyond the grid."""
        t = np.asarray(t, dtype=float)
        lev = np.asarray(self.xi_levels)
        idx = np.searchsorted(np.asarray(self.xi_tenors), t, side="right")
        out = lev[np.minimum(idx, len(lev) - 1)]
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "RoughHestonParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown parameter fields: {sorted(unknown)}")
        d = dict(d)
        for key in ("xi_tenors", "xi_levels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4), vectorized over the frequency grid with a shared step
# ---------------------------------------------------------------------------

_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)


def _dopri45(f, y0, t0, t1, rtol=1e-10, atol=1e-12, norm_cap=_EXPLOSION_NORM):
    """Integrate y' = f(t, y) from t0 to t1; y complex of any shape.

    One shared adaptive step for the whole array (error = max over entries).
    FSAL: the 7th stage of an accepted step seeds the next.  Raises
    :class:`RiccatiExplosionError` when the state norm passes ``norm_cap``
    (callers scale it with the forcing so that smooth high-frequency states
    are not mistaken for blow-up) or on step collapse.
    """
    span = t1 - t0
    t = t0
    y = y0.astype(np.complex128)
    h = span / 100.0
    k = [None] * 7
    k[0] = f(t, y)
    while t < t1 - 1e-14 * span:
        h = min(h, t1 - t)
        for i in range(1, 7):
            yi = y + h * sum(a * k[j] for j, a in enumerate(_DP_A[i]))
            k[i] = f(t + h * _DP_C[i], yi)
        y5 = y + h * sum(b * k[i] for i, b in enumerate(_DP_B5) if b)
        y4 = y + h * sum(b * k[i] for i, b in enumerate(_DP_B4) if b)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
        err = float(np.max(np.abs(y5 - y4) / scale))
        if not math.isfinite(err):
            raise RiccatiExplosionError(
                f"non-finite Riccati state at t={t + h:.6g}", t=t + h
            )
        if err <= 1.0:
            t += h
            y = y5
            if np.max(np.abs(y)) > norm_cap:
                raise RiccatiExplosionError(
                    f"Riccati state norm exceeded {norm_cap:g} at t={t:.6g} "
                    "(moment explosion)", t=t
                )
            k[0] = k[6]  # FSAL
        h *= min(5.0, max(0.2, 0.9 * err ** -0.2)) if err > 0 else 5.0
        if h < span * 1e-12:
            raise RiccatiExplosionError(
                f"step size collapsed at t={t:.6g} (moment explosion)", t=t
            )
    return y


# ---------------------------------------------------------------------------
# Affine Heston-Merton CF
# ---------------------------------------------------------------------------

def _shift_segments_time_to_go(displacement: Displacement | None, tau: float):
    """(s_lo, s_hi, level) pieces of phi_v(tau - s) for s in [0, tau]."""
    if displacement is None:
        return [(0.0, tau, 0.0)]
    bounds, levels = displacement.segments_to(tau)
    lows = np.concatenate([[0.0], bounds[:-1]])
    out = []
    for lo, hi, lev in zip(lows, bounds, levels):
        out.append((tau - hi, tau - lo, float(lev)))
    return sorted(out)


def heston_merton_cf(u, tau: float, params: HestonMertonParams):
    """CF of the raw log return under the affine Heston-Merton model.

    Integrates the coupled Riccati system backward in time-to-go s:

        B_i' = -(u^2+iu)/2 + (iu rho_i zeta_i - kappa_i) B_i
               + zeta_i^2 B_i^2 / 2 - iu kbar c_i + c_i (J(u, B1) - 1)
        A'   = kappa1 theta1 B1 + kappa2 theta2 B2 - iu kbar c0 + c0 (J - 1)
               + phi_v(tau - s) [-(u^2+iu)/2 - iu kbar c1 + c1 (J - 1)]

    with the jump transform J(u, B1) = e^{iu mu_x - u^2 sigma_x^2/2} /
    (1 - m_v (iu rho_jump + B1)), compensator kbar = E[e^{Zx}] - 1, and
    CF = exp(A + B1 v1_0 + B2 v2_0).  The displacement term keeps the system
    affine: the shifted variance multiplies the same spot-variance and
    intensity loadings as factor 1.  Accepts complex u (the pricer's shifted
    argument).
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    p = params

    kbar = math.exp(p.mu_x + 0.5 * p.sigma_x**2) / (1.0 - p.m_v * p.rho_jump) - 1.0
    quad = -0.5 * (uu * uu + 1j * uu)
    jump_num = np.exp(1j * uu * p.mu_x - 0.5 * uu * uu * p.sigma_x**2)

    def transform(b1):
        if p.m_v == 0.0:
            return jump_num
        denom = 1.0 - p.m_v * (1j * uu * p.rho_jump + b1)
        if np.min(np.abs(denom)) < _POLE_TOL:
            raise JumpTransformPoleError(
                "variance-jump transform pole: |1 - m_v(iu rho_jump + B1)| "
                f"< {_POLE_TOL:g}"
            )
        return jump_num / denom

    def make_rhs(phi_level: float):
        def rhs(s, y):
            a, b1, b2 = y
            j_term = transform(b1) - 1.0
            db1 = (
                quad + (1j * uu * p.rho1 * p.zeta1 - p.kappa1) * b1
                + 0.5 * p.zeta1**2 * b1 * b1
                - 1j * uu * kbar * p.c1 + p.c1 * j_term
            )
            db2 = (
                quad + (1j * uu * p.rho2 * p.zeta2 - p.kappa2) * b2
                + 0.5 * p.zeta2**2 * b2 * b2
                - 1j * uu * kbar * p.c2 + p.c2 * j_term
            )
            da = (
                p.kappa1 * p.theta1 * b1 + p.kappa2 * p.theta2 * b2
                - 1j * uu * kbar * p.c0 + p.c0 * j_term
                + phi_level * (quad - 1j * uu * kbar * p.c1 + p.c1 * j_term)
            )
            return np.stack([da, db1, db2])
        return rhs

    # a smoothly integrated B is bounded by the forcing scale |quad|*tau;
    # only growth far beyond that marks a genuine moment explosion
    norm_cap = _EXPLOSION_NORM * max(1.0, float(np.max(np.abs(quad))) * tau)
    y = np.zeros((3, uu.size), dtype=np.complex128)
    for s_lo, s_hi, level in _shift_segments_time_to_go(p.shifts, tau):
        y = _dopri45(make_rhs(level), y, s_lo, s_hi, norm_cap=norm_cap)

    out = np.exp(y[0] + y[1] * p.v1_0 + y[2] * p.v2_0)
    return complex(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Rough Heston CF (fractional Adams predictor-corrector)
# ---------------------------------------------------------------------------

def _fractional_adams(outer, linear, quad_coef, alpha: float, tau: float, n_steps: int):
    """Solve D^alpha psi = P + L psi + Q psi^2, psi(0) = 0, vectorized over u.

    Returns F values f_j = F(u, psi(s_j)) on the uniform grid s_j = j h,
    which is all the CF integral needs.  P=outer, L=linear, Q=quad_coef are
    arrays over the frequency grid.
    """
    h = tau / n_steps
    n_u = outer.shape[0]
    f_hist = np.empty((n_steps + 1, n_u), dtype=np.complex128)
    f_hist[0] = outer  # psi(0) = 0

    m = np.arange(n_steps + 1, dtype=float)
    b_w = (m + 1.0) ** alpha - m ** alpha                    # predictor weights
    c_w = (m + 2.0) ** (alpha + 1.0) + m ** (alpha + 1.0) - 2.0 * (m + 1.0) ** (alpha + 1.0)
    pred_scale = h**alpha / gamma(alpha + 1.0)
    corr_scale = h**alpha / gamma(alpha + 2.0)

    def f_of(psi):
        return outer + linear * psi + quad_coef * psi * psi

    # overflow in the intermediate arithmetic is caught by the finiteness
    # guard below and reported as divergence; silence the raw numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            # predictor: weights b_{n-j} for j = 0..n
            psi_p = pred_scale * (b_w[n::-1] @ f_hist[: n + 1])
            # corrector history: j = 0 gets the boundary weight, j >= 1 get c_{n-j}
            w0 = n ** (alpha + 1.0) - (n - alpha) * (n + 1.0) ** alpha
            hist = w0 * f_hist[0]
            if n >= 1:
                hist = hist + c_w[n - 1 :: -1] @ f_hist[1 : n + 1]
            psi_next = corr_scale * (f_of(psi_p) + hist)
            if not np.all(np.isfinite(psi_next)):
                raise RuntimeError(
                    f"fractional Riccati solver diverged at step {n + 1}/{n_steps}"
                )
            f_hist[n + 1] = f_of(psi_next)
    return f_hist


def _xi_weighted_integral(f_hist, params: RoughHestonParams, tau: float):
    """∫₀^τ F(u, psi(s)) xi0(tau - s) ds, exact per xi segment.

    Uses the cumulative trapezoid of F on the solver grid with linear
    interpolation at segment boundaries (F is continuous; xi0 is the
    piecewise-constant factor).
    """
    n_steps = f_hist.shape[0] - 1
    h = tau / n_steps
    ds = np.full(n_steps, h)
    cum = np.empty_like(f_hist)
    cum[0] = 0.0
    np.cumsum(0.5 * (f_hist[1:] + f_hist[:-1]) * ds[:, None], axis=0, out=cum[1:])

    def cum_at(s: float):
        x = min(max(s / h, 0.0), float(n_steps))
        j = min(int(x), n_steps - 1)
        frac = x - j
        return cum[j] + frac * (cum[j + 1] - cum[j])

    # xi segments on [0, tau] in forward time t, then mapped to s = tau - t
    bounds = [t for t in params.xi_tenors if t < tau] + [tau]
    levels = list(params.xi_levels[: len(bounds)])
    if len(levels) < len(bounds):
        levels += [params.xi_levels[-1]] * (len(bounds) - len(levels))
    total = np.zeros(f_hist.shape[1], dtype=np.complex128)
    t_lo = 0.0
    for t_hi, lev in zip(bounds, levels):
        total += lev * (cum_at(tau - t_lo) - cum_at(tau - t_hi))
        t_lo = t_hi
    return total


def rough_heston_cf(u, tau: float, params: RoughHestonParams, n_steps: int = 256):
    """CF of the raw log return under rough Heston with forward-variance curve.

    Solves D^alpha psi = -(u^2+iu)/2 + iu rho nu psi + nu^2 psi^2 / 2,
    alpha = hurst + 1/2, and returns exp(∫ F(u, psi(s)) xi0(tau - s) ds),
    times the compensated Merton factor when jumps are configured.  At
    hurst = 0.5 this is classical Heston with zero variance drift.
    """
    if not tau > 0.0:
        raise ValueError(f"tau must be > 0, got {tau}")
    if n_steps < 8:
        raise ValueError(f"n_steps must be >= 8, got {n_steps}")
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    p = params

    alpha = p.hurst + 0.5
    outer = -0.5 * (uu * uu + 1j * uu)
    linear = 1j * uu * p.rho * p.nu
    quad_coef = 0.5 * p.nu * p.nu * np.ones_like(uu)
    f_hist = _fractional_adams(outer, linear, quad_coef, alpha, tau, n_steps)
    exponent = _xi_weighted_integral(f_hist, p, tau)

    if p.lambda_j > 0.0:
        kbar = math.exp(p.mu_j + 0.5 * p.sigma_j**2) - 1.0
        exponent = exponent + tau * p.lambda_j * (
            np.exp(1j * uu * p.mu_j - 0.5 * uu * uu * p.sigma_j**2) - 1.0 - 1j * uu * kbar
        )

    out = np.exp(exponent)
    return complex(out[0]) if scalar else out
