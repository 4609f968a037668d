"""Law of large numbers on the power-law graphon W(u, v) = (uv)^p.

The graphon is not bounded below, so only the averaged error is expected to
vanish; the sup-over-particles statistic is not available here and the
experiment refuses to run it.

    python demos/lln_powerlaw.py
"""
from graphonmf.errors import AssumptionFailure
from graphonmf.experiments import lln_experiment, poc_experiment
from graphonmf.graphon import validate_assumptions
from graphonmf.scenario import load_builtin

sc = load_builtin("powerlaw_lln")
print("assumptions:", validate_assumptions(sc.graphon).verdicts)

rep = lln_experiment(sc, secondary=False)
n, v, se = rep.series("lln_error")
for a, b, c in zip(n, v, se):
    print(f"N={a:5d}  (1/N) sum_i E sup_t |dX|^2 = {b:.3e} +- {c:.1e}")

try:
    poc_experiment(sc)
except AssumptionFailure as exc:
    print("poc refused:", exc)
