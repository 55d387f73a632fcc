"""Temporal convergence: fixed-step order of the integrator and identity residuals under step halving."""

import argparse
import math

import numpy as np

from curvediff.flow import FlowConfig, FlowState, evolve, step
from curvediff.scenarios import SCENARIOS, get_scenario


def fixed_step_order(curve, t_end, counts):
    cfg = FlowConfig(n=curve.n)
    finals = []
    for count in counts:
        state = FlowState.start(curve)
        for _ in range(count):
            state = step(state, cfg, t_end / count)
        finals.append(state.curve.points)
    errors = [float(np.max(np.abs(a - b))) for a, b in zip(finals, finals[1:])]
    return errors, [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default="thm1_mode2")
    parser.add_argument("--t-end", type=float, default=0.1)
    args = parser.parse_args()

    curve = SCENARIOS[args.scenario].initial_curve()
    errors, orders = fixed_step_order(curve, 0.02, [40, 80, 160, 320])
    print("fixed-step differences:", ", ".join(f"{e:.2e}" for e in errors))
    print("observed orders:", ", ".join(f"{o:.2f}" for o in orders))

    base = get_scenario(args.scenario, {"t_end": args.t_end, "kosc_stop": 0.0}).config
    previous = None
    for sigma in (base.sigma, base.sigma / 2, base.sigma / 4):
        cfg = get_scenario(args.scenario, {"t_end": args.t_end, "kosc_stop": 0.0, "sigma": sigma}).config
        traj = evolve(FlowState.start(curve), cfg)
        worst = {n: max(getattr(r, n) for r in traj.records[1:]) for n in ("r_iii", "r_iv", "r_v", "r_vi")}
        line = f"sigma={sigma:<8.4g} steps={traj.final_state.step:<6d} " + " ".join(
            f"{n[2:]}={v:.3e}" for n, v in worst.items())
        if previous:
            line += "  ratios " + " ".join(f"{previous[n] / worst[n]:.2f}" for n in worst)
        print(line)
        previous = worst


if __name__ == "__main__":
    main()
