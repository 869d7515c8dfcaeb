"""Trees hanging off the spine.

Every spine branching leaves a second particle whose descendants eventually
die out. Their family tree is a side branch. Far from the start these trees
look like a critical binary branching version of the chain: each individual
moves like the chain, dies if it is absorbed, and splits at the equilibrium
killing rate. We compare tree sizes from a simulated population with
simulated branching trees and with the exact size law.
"""

from pathlib import Path

import numpy as np

from fvspine import extract_spine, load_model, simulate_fv, simulate_v_tree
from fvspine.experiments import harvest_side_trees, sidebranch_comparison
from fvspine.sidebranch import extract_z_tree, side_branch_anchors, side_tree_sizes

model = load_model(Path(__file__).with_name("example_model.json"))
rng = np.random.default_rng(3)

run = simulate_fv(model, rng.choice([1, 2], size=300, p=[2 / 3, 1 / 3]), 400.0, rng)
spine = extract_spine(run)
anchors = side_branch_anchors(run, 1.0)
print(f"{len(anchors)} side branches before the common ancestor at t = {spine.mrca_time:.1f}")

# pick a side branch with a few generations
_, node_counts, _ = side_tree_sizes(run, 1.0)
tree = extract_z_tree(run, anchors[int(np.argmax(node_counts == 7))])
print(f"one of them: {tree.size} individuals, born at t = {tree.root.birth:.2f}")
for beta, nd in sorted(tree.nodes.items())[:5]:
    print("  ", "".join(map(str, beta)), f"[{nd.birth:.2f}, {nd.death:.2f})", "splits" if nd.a else "dies")

v = simulate_v_tree(model, 3.0, 0.0, 1, 10_000, rng)
print(f"\na branching tree started in state 1 has {v.size} individuals")

sizes, truncated, lifetimes = harvest_side_trees(run)
rep = sidebranch_comparison(sizes, truncated, model, 2000, 10_000, 3, z_lifetimes=lifetimes)
print("\nsize classes", rep["classes"])
print("side branches:  ", rep["z_counts"])
print("branching trees:", rep["v_counts"])
print("exact law:      ", np.round(rep["exact_probabilities"], 4).tolist())
print(f"two-sample p-value {rep['homogeneity']['pvalue']:.3f}, lifetime-quartile p-value {rep['lifetimes']['pvalue']:.3f}")
