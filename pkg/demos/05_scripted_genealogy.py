"""Genealogy of a hand-written event log.

Four particles, five resampling events. We replay the log, print the labels
that record each particle's ancestry, trace one particle's historical path
back to time zero and read off the spine and the single side branch.
"""

from pathlib import Path

from fvspine import assemble_run, dhp, extract_spine, extract_z_tree, label_of, load_model

model = load_model(Path(__file__).with_name("example_model.json"))

# (time, killed particle, donor)
events = [(1.0, 0, 3), (2.0, 1, 0), (3.0, 0, 3), (4.0, 1, 3), (4.5, 2, 3)]
run = assemble_run(model, [1, 2, 1, 2], 6.0, jumps=[(1, 2.5, 1)], events=events)

for t in (0.5, 2.5, 6.0):
    print(f"labels at t={t}:")
    for i in range(run.N):
        print("   particle", i, label_of(run, i, t).pairs)

h = dhp(run, 1, 2.5)
print("\nparticle 1 at t=2.5 traces back through particles", h.chi_particles.tolist(), "switching at", h.chi_times.tolist())
print("its historical path:", h.path.segments)

spine = extract_spine(run)
print(f"\nall particles share an ancestor until t = {spine.mrca_time}; spine path {spine.path.segments}")
tree = extract_z_tree(run, (0, 1.0))
print("side branch left at t=1 by particle 0:")
for beta, nd in sorted(tree.nodes.items()):
    print("  ", "".join(map(str, beta)), f"[{nd.birth}, {nd.death})", nd.path.segments)
