"""Independent oracle computations whose outputs are frozen into the tests.

Every non-trivial expected value in the test suite is produced here by a
route independent of the library implementation (arbitrary-precision
arithmetic, brute-force Monte Carlo, classical closed forms, or dense
quadrature written from scratch).  Run directly to reprint all frozen values:

    python3 tests/oracles.py
"""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np

mp.mp.dps = 50


# ---------------------------------------------------------------------------
# Gaussian-expansion CF, no displacement: arbitrary-precision evaluation
# ---------------------------------------------------------------------------

def cf_expansion_highprec(u, tau, sigma0, beta_tilde0, rho0, eta0, alpha_prime0):
    """50-digit evaluation of the no-shift second-order CF polynomial."""
    u = mp.mpf(u)
    tau = mp.mpf(tau)
    s0 = mp.mpf(sigma0)
    bt = mp.mpf(beta_tilde0)
    rho = mp.mpf(rho0)
    eta = mp.mpf(eta0)
    ap = mp.mpf(alpha_prime0)
    u2 = u * u
    bracket = (
        1
        - mp.mpc(0, 1) * u2 * u * (bt * rho / (2 * s0)) * mp.sqrt(tau)
        - u2 * (ap / s0 + bt**2 / (4 * s0**2)) * tau
        + (bt**2 / (24 * s0**2)) * u2 * (4 * u2 - rho**2 * u2 * (3 * u2 - 8)) * tau
        + (eta / (6 * s0)) * u2 * u2 * tau
    )
    return mp.e ** (-u2 / 2) * bracket


# ---------------------------------------------------------------------------
# Compensated compound-Poisson jump CF: brute-force Monte Carlo
# ---------------------------------------------------------------------------

def jump_cf_mc(u, tau, sigma0, lam, mu_j, sigma_j, n_draws=1_000_000, seed=20240811):
    """MC estimate of E[e^{iu * J/(sigma0 sqrt(tau))}] * e^{-iu*lam*tau*mu_bar}.

    J is a compound Poisson sum of N(mu_j, sigma_j^2) sizes over [0, tau];
    mu_bar is the single-jump exponential-moment compensator E[e^x] - 1
    rescaled to standardized units (divide by sigma0*sqrt(tau)), which is the
    drift that keeps e^{X} a martingale.  Returns (value, se).
    """
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam * tau, n_draws)
    totals = mu_j * counts + sigma_j * np.sqrt(counts) * rng.standard_normal(n_draws)
    st = sigma0 * math.sqrt(tau)
    phases = np.exp(1j * u * totals / st)
    mu_bar = math.expm1(mu_j + 0.5 * sigma_j**2) / st
    est = phases.mean() * np.exp(-1j * u * lam * tau * mu_bar)
    se = phases.std(ddof=1) / math.sqrt(n_draws)
    return complex(est), float(se)


# ---------------------------------------------------------------------------
# Classical Heston with zero variance drift (kappa = 0): closed-form Riccati
# ---------------------------------------------------------------------------

def heston_k0_cf(u, tau, v0, nu, rho):
    """Log-return CF of classical Heston with kappa = 0, theta irrelevant.

    B' = P + Q B + R B^2, B(0) = 0, P = -(u^2+iu)/2, Q = iu rho nu,
    R = nu^2/2; closed form B(t) = r_minus (1 - e^{-dt}) / (1 - g e^{-dt})
    with d = sqrt(Q^2 - 4 R P), r_pm = (-Q ± d)/(2R), g = r_minus/r_plus.
    CF = exp(v0 * B(tau)) (the A-equation vanishes with kappa = 0).
    """
    u = np.atleast_1d(np.asarray(u, dtype=np.complex128))
    zero = u == 0.0
    u_safe = np.where(zero, 1.0, u)
    P = -0.5 * (u_safe * u_safe + 1j * u_safe)
    Q = 1j * u_safe * rho * nu
    R = 0.5 * nu * nu
    d = np.sqrt(Q * Q - 4.0 * R * P)
    r_minus = (-Q - d) / (2.0 * R)
    r_plus = (-Q + d) / (2.0 * R)
    g = r_minus / r_plus
    e = np.exp(-d * tau)
    B = r_minus * (1.0 - e) / (1.0 - g * e)
    return np.where(zero, 1.0 + 0.0j, np.exp(v0 * B))


def heston_k0_cf_ode(u_scalar, tau, v0, nu, rho):
    """Same CF by direct numerical integration (independent validation route)."""
    from scipy.integrate import solve_ivp

    P = -0.5 * (u_scalar * u_scalar + 1j * u_scalar)
    Q = 1j * u_scalar * rho * nu
    R = 0.5 * nu * nu
    sol = solve_ivp(
        lambda t, y: np.array([P + Q * y[0] + R * y[0] * y[0]]),
        (0.0, tau),
        np.array([0.0 + 0.0j]),
        method="DOP853",
        rtol=1e-12,
        atol=1e-14,
    )
    return complex(np.exp(v0 * sol.y[0, -1]))


# ---------------------------------------------------------------------------
# Black-Scholes: arbitrary-precision closed form
# ---------------------------------------------------------------------------

def bs_price_highprec(spot, strike, rate, tau, sigma, is_call=True):
    """50-digit Black-Scholes price."""
    S = mp.mpf(spot)
    K = mp.mpf(strike)
    r = mp.mpf(rate)
    t = mp.mpf(tau)
    v = mp.mpf(sigma)
    d1 = (mp.log(S / K) + (r + v**2 / 2) * t) / (v * mp.sqrt(t))
    d2 = d1 - v * mp.sqrt(t)
    if is_call:
        return S * mp.ncdf(d1) - K * mp.e ** (-r * t) * mp.ncdf(d2)
    return K * mp.e ** (-r * t) * mp.ncdf(-d2) - S * mp.ncdf(-d1)


if __name__ == "__main__":
    print("== cf_expansion_highprec: sigma0=0.2 beta=0.4 rho=-0.7 eta=0.1 ap=0, "
          "u=2, tau=5.5/(24*365) ==")
    val = cf_expansion_highprec(2, mp.mpf("5.5") / (24 * 365), "0.2", "0.4", "-0.7", "0.1", 0)
    print(f"  {complex(val)!r}")

    print("== jump_cf_mc: lam=20 mu_J=-0.01 sigma_J=0.02 sigma0=0.2 tau=1/252 u=3 ==")
    est, se = jump_cf_mc(3.0, 1.0 / 252.0, 0.2, 20.0, -0.01, 0.02)
    print(f"  {est!r}  se={se:.3e}")

    print("== bs_price_highprec: S=100 K=100 r=0.02 tau=7/365 sigma=0.2 call ==")
    print(f"  {float(bs_price_highprec(100, 100, '0.02', mp.mpf(7)/365, '0.2')):.15g}")
    print("== bs_price_highprec: S=100 K=95 r=0 tau=1 sigma=0.2 put ==")
    print(f"  {float(bs_price_highprec(100, 95, 0, 1, '0.2', is_call=False)):.15g}")

    print("== heston_k0_cf closed form vs ODE route (v0=0.04 nu=0.3 rho=-0.65 tau=2/365) ==")
    for uu in (1.0, 3.0, 10.0, 30.0, -7.5):
        a = complex(heston_k0_cf(uu, 2.0 / 365.0, 0.04, 0.3, -0.65))
        b = heston_k0_cf_ode(uu, 2.0 / 365.0, 0.04, 0.3, -0.65)
        print(f"  u={uu}: closed={a!r}  |closed-ode|={abs(a - b):.3e}")

    one_12 = mp.mpf(1) / 12
    print("== bs_price_highprec: S=K=100 r=0 tau=1/12 sigma=0.2 call ==")
    print(f"  {float(bs_price_highprec(100, 100, 0, one_12, '0.2')):.15g}")
    print("== bs_price_highprec: S=100 K=120 r=0 tau=1/12 sigma=0.2 call ==")
    print(f"  {float(bs_price_highprec(100, 120, 0, one_12, '0.2')):.15g}")
    print("== bs_price_highprec: S=100 K=80 r=0 tau=1/12 sigma=0.2 put ==")
    print(f"  {float(bs_price_highprec(100, 80, 0, one_12, '0.2', is_call=False)):.15g}")
    print("== bs_price_highprec: S=K=100 r=0 tau=1 sigma=0.2 call ==")
    print(f"  {float(bs_price_highprec(100, 100, 0, 1, '0.2')):.15g}")
