"""Round-trip calibration on a synthetic quote surface.

Generates bid/ask quotes from a known displaced-lognormal truth, pushes them
through the ingestion filter, calibrates the same model back, and reports the
fit quality against the known parameters.

    python3 examples_gallery/calibrate_synthetic_surface.py [--budget N]
"""

import argparse
import math
import time

import numpy as np

from ustvol import (
    Displacement,
    IngestConfig,
    OptionQuote,
    QuadratureConfig,
    bspp_atm_vol,
    bs_price,
    calibrate,
    filter_surface,
)

SPOT = 100.0
TENORS = (1 / 365, 2 / 365, 3 / 365, 5 / 365)
TRUTH_SIGMA0 = 0.2
TRUTH_SHIFTS = (0.03, -0.01, 0.005)


def make_quotes(rng, half_spread=0.002):
    disp = Displacement(tenors=TENORS, shifts=TRUTH_SHIFTS)
    quotes = []
    for tau in TENORS:
        vol = bspp_atm_vol(tau, TRUTH_SIGMA0, disp)
        for m in np.linspace(-2.0, 1.5, 12):
            strike = SPOT * math.exp(m * vol * math.sqrt(tau))
            for is_call in (True, False):
                mid = bs_price(SPOT, strike, tau, 0.0, vol, is_call=is_call)
                jitter = 1.0 + rng.uniform(-0.1, 0.1)
                quotes.append(OptionQuote(
                    strike=strike, tenor=tau,
                    bid=max(mid - half_spread * jitter, 0.0),
                    ask=mid + half_spread * jitter, is_call=is_call))
    return quotes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--budget", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    surface = filter_surface(make_quotes(rng), SPOT, IngestConfig())
    print(f"kept {sum(len(s.quotes) for s in surface.slices)} quotes "
          f"across {len(surface.slices)} tenors; drops: "
          f"{ {k: v for k, v in surface.drop_counts.items() if v} }")

    t0 = time.time()
    res = calibrate(surface, "bs_pp", quad=QuadratureConfig(node_count=1024),
                    budget=args.budget, rng_seed=args.seed)
    print(f"calibrated in {time.time() - t0:.1f}s, {res.iterations} evals, "
          f"rmse {res.rmse:.4f} vol points")
    print(f"sigma0: fitted {res.params[0]:.4f} vs truth {TRUTH_SIGMA0}")
    for i, (got, want) in enumerate(zip(res.params[1:], TRUTH_SHIFTS)):
        print(f"shift_{i + 1}: fitted {got:+.4f} vs truth {want:+.4f}")


if __name__ == "__main__":
    main()
