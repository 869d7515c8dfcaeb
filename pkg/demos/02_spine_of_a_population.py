"""Follow the common ancestor of a Fleming-Viot population.

A few hundred particles run the chain; a particle that dies jumps onto a
uniformly chosen survivor. Looking back from the end of the run, all
particles descend from a single line, the spine. We extract it, time how long
ago the particles last shared an ancestor, and measure how often the spine
branches and where it spends its time.
"""

from pathlib import Path

import numpy as np

from fvspine import extract_spine, load_model, qprocess_generator, qsd, simulate_fv, spine_window

model = load_model(Path(__file__).with_name("example_model.json"))
nu = qsd(model).nu
rng = np.random.default_rng(1)

N, horizon = 200, 200.0
init = rng.choice([1, 2], size=N, p=nu)
run = simulate_fv(model, init, horizon, rng)
print(f"{N} particles over [0, {horizon:g}]: {run.n_events} resampling events")

spine = extract_spine(run)
print(f"most recent common ancestor at t = {spine.mrca_time:.2f} (horizon {horizon:g})")
print(f"spine branch points: {spine.branch_times.size}")

w = spine_window(run)
print(f"\nafter a burn-in, the spine branches {w.branch_count} times in {w.exposure:.1f} time units")
print(f"rate {w.branch_count / w.exposure:.2f}; a typical particle branches at rate {qsd(model).lambda_inf:g}")
print("spine occupancy of states 1, 2:", np.round(w.occupancy / w.exposure, 3))
print("never-absorbed chain, stationary law:", np.round(qprocess_generator(model).stationary, 3))
print("quasi-stationary law:", np.round(nu, 3))
