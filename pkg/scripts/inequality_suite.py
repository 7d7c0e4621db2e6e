"""Product inequalities and time-convolution growth laws, one line per check."""
import argparse

from anisomhd import inequalities as ineq


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--agmon-samples", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    samples, box = ineq.agmon_samples(args.agmon_samples, args.seed)
    results = [ineq.check_agmon_1d(samples, box)]
    trip, box3 = ineq.product_samples(12, 3, args.seed)
    results.append(ineq.check_triple_product(trip, box3))
    quad, box3 = ineq.product_samples(12, 4, args.seed + 1)
    results.append(ineq.check_quadruple_product(quad, box3))
    results += ineq.convolution_sweep("ID") + ineq.convolution_sweep("ED")
    for r in results:
        extra = f" exponent {r.detail['exponent']:.4f} target {r.detail['target']:.4f}" if r.detail else ""
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<28} {r.worst_ratio:.4f} <= {r.threshold:.4f}{extra}")


if __name__ == "__main__":
    main()
