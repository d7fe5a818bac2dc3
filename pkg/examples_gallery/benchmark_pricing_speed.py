"""Compare surface-pricing cost across model families.

Times the 3-contracts-per-tenor fixture (ATM put, OTM call, OTM put at six
tenors out to one week) for the expansion model against the two-factor affine
and rough-volatility benchmarks, all at the same Fourier node count.

    python3 examples_gallery/benchmark_pricing_speed.py [--trials N]
"""

import argparse

from ustvol import BENCH_TENORS, get_model, timing_bench

MODEL_IDS = ("edgeworth_pp", "heston_merton_2f", "rough_heston_pp")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--nodes", type=int, default=2000)
    args = ap.parse_args()

    entries = []
    for mid in MODEL_IDS:
        m = get_model(mid)
        entries.append((mid, m.unpack(m.default_start(BENCH_TENORS),
                                      tenors=BENCH_TENORS)))
    rep = timing_bench(entries, trials=args.trials, node_count=args.nodes)

    print(f"{'model':24} {'0dte slice':>14} {'full surface':>14}")
    for row in rep.rows:
        print(f"{row.model_id:24} {1e3 * row.dte0_mean:10.2f} ms "
              f"{1e3 * row.surface_mean:10.2f} ms")
    base = rep.rows[0].surface_mean
    for row in rep.rows[1:]:
        print(f"surface ratio {row.model_id} / {rep.rows[0].model_id}: "
              f"{row.surface_mean / base:.0f}x")


if __name__ == "__main__":
    main()
