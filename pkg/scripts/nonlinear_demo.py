"""Run the nonlinear solver from small random data and print the energy ledger at a few times."""
import argparse

import numpy as np

from anisomhd.diagnostics import EnergyLedger, energy_ledger_update, sobolev_norm
from anisomhd.kernel import PhysicalParams
from anisomhd.solver import Grid, divergence_residual, init_random_smooth, integrate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=32)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--t-final", type=float, default=1.0)
    ap.add_argument("--amplitude", type=float, default=1e-3)
    ap.add_argument("--mu", type=float, default=1.0)
    ap.add_argument("--eta", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    p = PhysicalParams(args.mu, args.eta)
    state = init_random_smooth(Grid.cube(args.grid), args.seed, args.amplitude)
    ledger = energy_ledger_update(EnergyLedger(p), state)
    worst_div = [divergence_residual(state)]

    def observe(st):
        energy_ledger_update(ledger, st)
        worst_div.append(divergence_residual(st))

    integrate(state, p, args.dt, args.t_final, callback=observe, monitor=lambda st: sobolev_norm(st, 3))
    t, res = ledger.times, ledger.balance_residual
    print(f"{'t':>7} {'|(u,b)|^2':>12} {'H3':>12} {'balance':>10}")
    for j in np.linspace(0, t.size - 1, 11).astype(int):
        print(f"{t[j]:7.3f} {ledger.l2_sq[j]:12.5e} {ledger.h3[j]:12.5e} {res[j]:10.2e}")
    print(f"max divergence residual {max(worst_div):.2e}; max |balance| {np.abs(res).max():.2e}")


if __name__ == "__main__":
    main()
