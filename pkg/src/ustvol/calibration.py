"""Surface calibration: the vol-points RMSE objective, fit diagnostics and a
derivative-free box-constrained optimizer with restarts.

The objective is the nested average of squared implied-vol errors -- per
tenor first, then across tenors -- rooted and quoted in vol points (x100).
Market IVs come from mid premiums and are computed once per calibration;
model IVs are re-priced every evaluation through per-tenor CF caches, so
the cost per evaluation is one CF grid per tenor plus one root-find per
quote (contracts within a tenor are evaluated in vectorized batches).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .bspp_bootstrap import AtmTermStructure, CalendarArbitrageError, calibrate_shift_from_atm
from .fourier_pricer import (
    ArbitrageBoundsError,
    PricingRequest,
    QuadratureConfig,
    _TenorCache,
    implied_vol,
)
from .market_data import Surface, bucket_of
from .registry import ModelSpec, get_model

__all__ = [
    "ParamBounds",
    "CalibrationResult",
    "rmse",
    "bid_ask_fraction",
    "bucket_rmse",
    "calibrate",
]

_PENALTY = 1e6
_IV_BRACKET = (1e-6, 10.0)
_STAGNATION_TOL = 1e-4  # vol points


@dataclass(frozen=True)
class ParamBounds:
    """Per-parameter (lower, upper) box constraints."""

    bounds: tuple

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        )
        for i, (lo, hi) in enumerate(self.bounds):
            if not lo < hi:
                raise ValueError(f"bounds[{i}]: lower {lo} must be < upper {hi}")

    def __len__(self) -> int:
        return len(self.bounds)

    def clip(self, vector) -> np.ndarray:
        arr = np.asarray(vector, dtype=float)
        lo, hi = np.array(self.bounds).T
        return np.clip(arr, lo, hi)

    def widths(self) -> np.ndarray:
        arr = np.array(self.bounds)
        return arr[:, 1] - arr[:, 0]


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted vector with fit diagnostics and the optimizer's audit trail."""

    model_id: str
    params: tuple
    rmse: float
    bucket_rmse: dict = field(compare=False)
    bid_ask_fraction: float = 0.0
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = False
    trace: tuple = ()

    def __post_init__(self) -> None:
        if self.rmse < 0.0:
            raise ValueError("rmse must be >= 0")
        if not 0.0 <= self.bid_ask_fraction <= 1.0:
            raise ValueError("bid_ask_fraction must lie in [0, 1]")


# ---------------------------------------------------------------------------
# objective pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _SliceView:
    """Per-tenor market data frozen before optimization starts."""

    tau: float
    strikes: tuple
    is_call: tuple
    bids: tuple
    asks: tuple
    market_ivs: tuple
    buckets: tuple


def _market_view(surface: Surface, rate: float) -> list:
    views = []
    for sl in surface.slices:
        ivs = []
        for q in sl.quotes:
            try:
                ivs.append(implied_vol(
                    q.mid, surface.spot, q.strike, sl.tau, rate, is_call=q.is_call
                ))
            except ArbitrageBoundsError as exc:
                raise ValueError(
                    f"quote K={q.strike} tau={sl.tau} has no finite mid "
                    f"implied vol: {exc}"
                ) from exc
        views.append(_SliceView(
            tau=sl.tau,
            strikes=tuple(q.strike for q in sl.quotes),
            is_call=tuple(q.is_call for q in sl.quotes),
            bids=tuple(q.bid for q in sl.quotes),
            asks=tuple(q.ask for q in sl.quotes),
            market_ivs=tuple(ivs),
            buckets=tuple(bucket_of(m) for m in sl.moneyness),
        ))
    return views


def _slice_model_quotes(model, theta, view: _SliceView, spot, rate, quad):
    """Model premium (on each quote's side) and model IV per retained quote.

    IV inversion failures on the model side are clamped to the bracket edge
    nearer the price: a far-off parameter vector then scores a large finite
    error instead of poisoning the whole evaluation.
    """
    sigma0 = model.spot_vol(theta)
    cache = _TenorCache(
        lambda u, _t=view.tau: model.cf_standardized(u, _t, theta),
        sigma0, view.tau, quad,
    )
    prices, ivs = [], []
    for strike, is_call in zip(view.strikes, view.is_call):
        call = cache.call(PricingRequest(spot=spot, strike=strike, tau=view.tau,
                                         rate=rate))
        disc_k = strike * math.exp(-rate * view.tau)
        if is_call:
            price = call
        else:
            price = min(max(call - spot + disc_k, max(disc_k - spot, 0.0)), disc_k)
        prices.append(price)
        try:
            ivs.append(implied_vol(price, spot, strike, view.tau, rate, is_call))
        except ArbitrageBoundsError:
            intrinsic = max(spot - disc_k, 0.0) if is_call else max(disc_k - spot, 0.0)
            near_floor = abs(price - intrinsic) < abs(price - (spot if is_call else disc_k))
            ivs.append(_IV_BRACKET[0] if near_floor else _IV_BRACKET[1])
    return prices, ivs


def _rmse_from_views(views, model, theta, spot, rate, quad) -> float:
    per_tenor = []
    for view in views:
        if not view.strikes:
            raise ValueError(f"tenor {view.tau} has no quotes")
        _, ivs = _slice_model_quotes(model, theta, view, spot, rate, quad)
        err = np.asarray(ivs) - np.asarray(view.market_ivs)
        per_tenor.append(float(np.mean(err * err)))
    return 100.0 * math.sqrt(float(np.mean(per_tenor)))


def _resolve(model, params, tenors):
    """Accept either a native theta object or a flat parameter vector."""
    if isinstance(params, np.ndarray):
        return model.unpack(tuple(float(x) for x in params), tenors)
    if isinstance(params, (tuple, list)) and params and all(
        isinstance(x, (int, float, np.floating)) for x in params
    ):
        return model.unpack(tuple(float(x) for x in params), tenors)
    return params


def _as_model(model) -> ModelSpec:
    return get_model(model) if isinstance(model, str) else model


def rmse(surface: Surface, model, params, rate: float = 0.0,
         quad: QuadratureConfig | None = None) -> float:
    """Vol-points RMSE of model vs mid-market implied vols.

    100 x sqrt(mean over tenors of (mean squared IV error within tenor)).
    ``params`` may be the model's native theta or a flat vector.
    """
    model = _as_model(model)
    theta = _resolve(model, params, surface.tenors)
    views = _market_view(surface, rate)
    return _rmse_from_views(views, model, theta, surface.spot, rate,
                            quad or QuadratureConfig())


def bid_ask_fraction(surface: Surface, model, params, rate: float = 0.0,
                     quad: QuadratureConfig | None = None) -> float:
    """Share of retained quotes whose model premium lies inside [bid, ask].

    Works from premiums alone, so quotes whose mid has no finite implied
    vol still count (they simply score as misses unless the model lands
    inside their spread).
    """
    model = _as_model(model)
    theta = _resolve(model, params, surface.tenors)
    quad = quad or QuadratureConfig()
    hits = total = 0
    for sl in surface.slices:
        view = _SliceView(
            tau=sl.tau,
            strikes=tuple(q.strike for q in sl.quotes),
            is_call=tuple(q.is_call for q in sl.quotes),
            bids=(), asks=(), market_ivs=(), buckets=(),
        )
        prices, _ = _slice_model_quotes(model, theta, view, surface.spot, rate, quad)
        for price, q in zip(prices, sl.quotes):
            hits += q.bid <= price <= q.ask
            total += 1
    return hits / total


def bucket_rmse(surface: Surface, model, params, rate: float = 0.0,
                quad: QuadratureConfig | None = None) -> dict:
    """(tenor index, MoneynessBucket) -> vol-points RMSE over that cell."""
    model = _as_model(model)
    theta = _resolve(model, params, surface.tenors)
    quad = quad or QuadratureConfig()
    views = _market_view(surface, rate)
    out = {}
    for idx, view in enumerate(views):
        _, ivs = _slice_model_quotes(model, theta, view, surface.spot, rate, quad)
        cells: dict = {}
        for iv, miv, bucket in zip(ivs, view.market_ivs, view.buckets):
            cells.setdefault(bucket, []).append((iv - miv) ** 2)
        for bucket, errs in cells.items():
            out[(idx, bucket)] = 100.0 * math.sqrt(float(np.mean(errs)))
    return out


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def _bootstrap_start(model: ModelSpec, surface: Surface) -> np.ndarray:
    """Starting vector; BS++-bootstrapped sigma0 and shifts where they exist."""
    tenors = surface.tenors
    atm = surface.slices[0].atm_vol
    start = np.asarray(model.default_start(tenors, atm_vol=atm), dtype=float)
    if model.shift_style == "vol":
        try:
            sigma0, shifts = calibrate_shift_from_atm(AtmTermStructure(
                tenors=tenors, atm_vols=tuple(s.atm_vol for s in surface.slices)
            ))
        except CalendarArbitrageError:
            return start  # arbitrage in the ATM slice: fall back to defaults
        start[0] = sigma0
        if len(shifts):
            start[-len(shifts):] = shifts
    return start


def calibrate(
    surface: Surface,
    model_id: str,
    bounds: ParamBounds | None = None,
    seed_params=None,
    rate: float = 0.0,
    quad: QuadratureConfig | None = None,
    budget: int = 20_000,
    restarts: int = 3,
    rng_seed: int = 0,
) -> CalibrationResult:
    """Fit ``model_id`` to a filtered surface by derivative-free search.

    Nelder-Mead under the parameter box, restarted ``restarts`` times from
    seeded perturbations of the incumbent; when restarts stagnate with
    budget left, a seeded differential-evolution sweep followed by a final
    polish spends the remainder.  Evaluations that raise (invalid
    parameters, CF blow-ups) score a large penalty.  Deterministic for
    fixed inputs and ``rng_seed``.  If the evaluation budget runs out while
    the objective is still improving, the best-so-far vector is returned
    with ``converged=False``.
    """
    t_start = time.perf_counter()
    model = get_model(model_id)
    if not surface.slices or not any(s.quotes for s in surface.slices):
        raise ValueError("cannot calibrate an empty surface")
    tenors = surface.tenors
    expected = model.param_count(len(tenors))
    box = bounds or ParamBounds(model.default_bounds(len(tenors)))
    if len(box) != expected:
        raise ValueError(
            f"{model_id} on {len(tenors)} tenors needs {expected} bounds, "
            f"got {len(box)}"
        )
    quad = quad or QuadratureConfig()
    views = _market_view(surface, rate)

    if seed_params is not None:
        start = np.asarray(seed_params, dtype=float)
        if start.size != expected:
            raise ValueError(f"seed_params needs {expected} entries, got {start.size}")
        start = box.clip(start)
    else:
        start = box.clip(_bootstrap_start(model, surface))

    evals = 0
    best_val = math.inf
    best_vec = start.copy()
    trace: list = []

    def objective(vec) -> float:
        nonlocal evals, best_val, best_vec
        evals += 1
        try:
            theta = model.unpack(tuple(float(x) for x in vec), tenors)
            val = _rmse_from_views(views, model, theta, surface.spot, rate, quad)
        except Exception:
            val = _PENALTY
        if val < best_val:
            best_val = val
            best_vec = np.asarray(vec, dtype=float).copy()
            trace.append(val)
        return val

    rng = np.random.default_rng(rng_seed)
    scipy_bounds = list(box.bounds)
    per_run = max(budget // (restarts + 2), 50)

    def run_nm(x0, maxfev) -> None:
        optimize.minimize(
            objective, x0, method="Nelder-Mead", bounds=scipy_bounds,
            options={"maxfev": maxfev, "xatol": 1e-7, "fatol": 1e-9,
                     "adaptive": len(x0) > 8},
        )

    run_nm(start, per_run)
    stagnated = False
    for _ in range(restarts):
        before = best_val
        jitter = rng.normal(0.0, 0.05, size=expected) * box.widths()
        run_nm(box.clip(best_vec + jitter), per_run)
        if before - best_val < _STAGNATION_TOL:
            stagnated = True
            break
        if evals >= budget:
            break

    remaining = budget - evals
    if stagnated and best_val > _STAGNATION_TOL and remaining >= 20 * expected:
        # restarts have flattened out on a non-trivial objective: sweep the
        # box with a seeded population, then polish the winner
        popsize = 6
        gens = max(remaining // (2 * popsize * expected), 2)
        optimize.differential_evolution(
            objective, scipy_bounds, maxiter=gens, popsize=popsize,
            seed=rng_seed, polish=False, init="sobol", tol=1e-10,
        )
        run_nm(best_vec, max(budget - evals, 50))

    theta = model.unpack(tuple(float(x) for x in best_vec), tenors)
    final_rmse = _rmse_from_views(views, model, theta, surface.spot, rate, quad)
    result = CalibrationResult(
        model_id=model_id,
        params=tuple(float(x) for x in best_vec),
        rmse=final_rmse,
        bucket_rmse=bucket_rmse(surface, model, theta, rate, quad),
        bid_ask_fraction=bid_ask_fraction(surface, model, theta, rate, quad),
        iterations=evals,
        wall_time=time.perf_counter() - t_start,
        converged=stagnated or best_val <= _STAGNATION_TOL,
        trace=tuple(trace),
    )
    return result
