"""Where does the spine spend its time as the population grows?

With two particles the answer is an exact rational number. As the population
grows, the spine's occupation law approaches the stationary law of the chain
conditioned never to be absorbed. This sweep is a small version of the
convergence table produced by ``fvspine sweep``.
"""

from fractions import Fraction
from pathlib import Path

from fvspine import load_model, spine_marginal
from fvspine.experiments import sweep

model = load_model(Path(__file__).with_name("example_model.json"))
exact2 = spine_marginal(model).state[0]
print(f"two particles, exact spine occupancy of state 1: {Fraction(exact2).limit_denominator(1000)} = {exact2:.4f}")
print("limit as N grows: 4/7 =", round(4 / 7, 4))

rows = sweep(model, [2, 10, 100], [5000.0, 1000.0, 600.0], [1, 2, 2], seed=11)
print("\n   N   estimate    95% CI              tv to limit")
for r in rows:
    print(f"{r['N']:4d}   {r['estimate']:.4f}    ({r['ci_low']:.4f}, {r['ci_high']:.4f})    {r['tv_to_qprocess_stationary']:.4f}")
