"""Propagation of chaos on the reflection-gap scenario.

Runs the coupled particle/limit experiment over a range of N and prints the
sup-over-particles error next to the rate envelope M_N, then the fitted
log-log slope (expected near -1/2 for d = 1, eps = 2).

    python demos/poc_rate.py [--replicas R]
"""
import argparse

from graphonmf.experiments import poc_experiment
from graphonmf.scenario import load_builtin

ap = argparse.ArgumentParser()
ap.add_argument("--replicas", type=int, default=16)
args = ap.parse_args()

sc = load_builtin("poc_reflection")
rep = poc_experiment(sc, n_list=[50, 100, 200, 400, 800], replicas=args.replicas)

print(f"{'N':>5} {'sup_i E sup_t |dX|^2':>22} {'stderr':>10} {'M_N':>8} {'ratio':>8}")
for e in rep.entries:
    if e["statistic"] == "poc_error":
        print(f"{e['N']:5d} {e['value']:22.5e} {e['stderr']:10.2e} {e['m_n']:8.4f} {e['ratio']:8.4f}")
fit = rep.slopes["poc_error"]
print(f"\nslope {fit['slope']:.3f}  (R^2 {fit['r_squared']:.3f})")
