"""Exact quantities for two particles on a three-state chain.

The chain has one cemetery and two interior states. With two particles the
genealogy is simple enough to solve exactly: the pair is a Markov chain on
four states, and the spine at a fixed time follows whichever particle's
descendants outlive the other's. Here we compute the pair's stationary law,
the race probabilities and the resulting spine marginal, and set them next
to the quasi-stationary law and the law of the chain conditioned never to die.
"""

from fractions import Fraction
from pathlib import Path

from fvspine import fixed_n_gap_report, load_model, product_generator, qsd

model = load_model(Path(__file__).with_name("example_model.json"))
print("generator:\n", model.Q)

pair = product_generator(model)
print("\npair rate matrix over", pair.pairs)
print(pair.A_pair)

report = fixed_n_gap_report(model)


def frac(x):
    return str(Fraction(x).limit_denominator(1000))


print("\nstationary law of the pair:", {k: frac(v) for k, v in report["pi"].items()})
print("probability the second copy dies first, f(x, y):", report["f"])
print("spine in state 1 (two particles):", frac(report["state1"]["spine"]))
print("quasi-stationary law:", [frac(v) for v in report["qsd"]["nu"]], "decay rate", report["qsd"]["lambda_inf"])
print("never-absorbed chain, stationary law:", [frac(v) for v in report["qprocess_stationary"]])
print("total-variation gaps:", {k: round(v, 4) for k, v in report["gaps"].items()})

# the spine of two particles sits strictly between the two limits
q = qsd(model)
print(f"\nbranching rate of one particle at equilibrium: {q.lambda_inf:g}; along the spine it doubles")
