"""Late-time decay rate of a single Fourier mode against the linearised prediction.

For rho(theta) = 1 + a cos(m theta) the oscillation energy should decay like
exp(-2 (m^4 - m^2) t / rho_inf^4) with rho_inf = L0 / 2pi.
"""

import argparse
import math

from curvediff.diagnostics import fit_decay, linearized_rate
from curvediff.flow import FlowConfig, FlowState, evolve
from curvediff.scenarios import make_curve


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--modes", default="2,3,4")
    parser.add_argument("--amplitude", type=float, default=0.02)
    parser.add_argument("--n", type=int, default=256)
    args = parser.parse_args()

    print(f"{'m':>3} {'predicted':>12} {'K_osc rate':>12} {'r2':>10} {'||k_ss|| rate':>14} {'r2':>10} {'rel err':>9}")
    for m in (int(x) for x in args.modes.split(",")):
        curve = make_curve("fourier_circle", {"r": 1.0, "modes": [(m, args.amplitude, 0.0)]}, args.n)
        traj = evolve(FlowState.start(curve), FlowConfig(n=args.n, t_end=5.0))
        rho = traj.final_state.L0 / (2 * math.pi)
        predicted = linearized_rate(m, rho)
        k = fit_decay(traj.records, "K_osc")
        s = fit_decay(traj.records, "nkss2")
        print(f"{m:>3} {predicted:>12.4f} {k.rate:>12.4f} {k.r_squared:>10.7f} {s.rate:>14.4f} {s.r_squared:>10.7f} "
              f"{abs(k.rate - predicted) / predicted:>9.2e}")


if __name__ == "__main__":
    main()
