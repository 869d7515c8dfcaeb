"""Seeded simulation campaigns and their summaries.

Every replicate draws from its own stream derived from ``(seed, replicate,
role)``, so results do not depend on the order in which replicates run.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ._rng import Draws, derive_seed_sequence
from .ctmc import FiniteChainModel, as_distribution, qprocess_generator, qsd
from .errors import InvalidInitialState, NodeCapExceeded
from .fv import FvRun, simulate_fv
from .genealogy import extract_spine, spine_window
from .sidebranch import side_tree_lifetimes, side_tree_sizes, simulate_v_tree, v_tree_size_distribution
from .stats import chisq_gof, chisq_homogeneity, pool_classes, poisson_rate_ci, tv_distance

ROLE_INIT = 0
ROLE_FV = 1
ROLE_VTREE = 2

SIZE_CLASSES = (1, 3, 5, 7, 9)
BATCHES = 20
"""Lower edges of the tree-size classes {1}, {3}, {5}, {7}, {9, 11, ...}."""


def parse_init(init, model: FiniteChainModel) -> np.ndarray:
    """Initial law over F from ``"delta:x"``, ``"qsd"``, a comma list or a sequence."""
    n = model.n
    if isinstance(init, str):
        s = init.strip()
        if s.startswith("delta:"):
            try:
                x = int(s[6:])
            except ValueError:
                raise InvalidInitialState(f"bad state in {init!r}") from None
            if not 1 <= x <= n:
                raise InvalidInitialState(f"state {x} is not in 1..{n}")
            d = np.zeros(n)
            d[x - 1] = 1.0
            return d
        if s == "qsd":
            return qsd(model).nu.copy()
        try:
            init = [float(v) for v in s.strip("[]").split(",")]
        except ValueError:
            raise InvalidInitialState(f"cannot parse initial law {init!r}") from None
    try:
        return as_distribution(init, n)
    except ValueError as exc:
        raise InvalidInitialState(str(exc)) from None


def draw_initial_states(dist, N: int, rng) -> np.ndarray:
    """``N`` i.i.d. interior states (1-based) from ``dist``."""
    return rng.choice(np.arange(1, len(dist) + 1), size=N, p=dist)


def replicate_run(model: FiniteChainModel, N: int, horizon: float, init, seed: int, replicate: int) -> FvRun:
    """One Fleming-Viot replicate with the per-replicate streams."""
    dist = init if isinstance(init, np.ndarray) else parse_init(init, model)
    g0 = np.random.default_rng(derive_seed_sequence(seed, replicate, ROLE_INIT))
    states = draw_initial_states(dist, N, g0)
    return simulate_fv(model, states, horizon, np.random.default_rng(derive_seed_sequence(seed, replicate, ROLE_FV)))


@dataclass(frozen=True)
class SpineSummary:
    replicate: int
    N: int
    horizon: float
    n_events: int
    mrca_time: float
    window_start: float
    window_end: float
    branch_count: int
    occupancy: tuple
    batch_occupancy: tuple = ()
    """Occupancy on each of :data:`BATCHES` equal-time pieces of the window."""

    @property
    def exposure(self) -> float:
        return self.window_end - self.window_start

    def as_row(self) -> dict:
        row = asdict(self)
        row["occupancy"] = list(self.occupancy)
        row["batch_occupancy"] = [list(b) for b in self.batch_occupancy]
        return row


def summarize_spine(run: FvRun, replicate: int = 0, burn_in: float | None = None) -> SpineSummary:
    spine = extract_spine(run)
    w = spine_window(run, burn_in)
    batches = ()
    if w.exposure > 0:
        cuts = np.linspace(w.start, w.end, BATCHES + 1)
        n = run.model.n
        batches = tuple(
            tuple(float(v) for v in spine.path.restrict(a, b).occupancy(n + 1)[1:]) for a, b in zip(cuts[:-1], cuts[1:])
        )
    return SpineSummary(
        replicate,
        run.N,
        run.horizon,
        run.n_events,
        spine.mrca_time,
        w.start,
        w.end,
        w.branch_count,
        tuple(float(v) for v in w.occupancy),
        batches,
    )


@dataclass(frozen=True)
class SpineAggregate:
    replicates: int
    events: int
    exposure: float
    rate: float
    rate_low: float
    rate_high: float
    occupancy: tuple
    """Pooled fraction of spine time in each interior state."""
    occupancy_se: tuple
    """Batch-means standard error of the pooled fractions."""
    mrca_times: tuple


def aggregate_spine(summaries, level: float = 0.95) -> SpineAggregate:
    """Pool spine windows across replicates (exposure-weighted)."""
    summaries = list(summaries)
    events = sum(s.branch_count for s in summaries)
    exposure = sum(s.exposure for s in summaries)
    occ = np.array([s.occupancy for s in summaries])
    tot = occ.sum(axis=0)
    frac = tot / tot.sum() if tot.sum() > 0 else np.full(occ.shape[1], np.nan)
    se = np.full(occ.shape[1], np.nan)
    units = np.array([b for s in summaries for b in s.batch_occupancy]).reshape(-1, occ.shape[1])
    expo = units.sum(axis=1)
    ok = expo > 0
    if ok.sum() >= 2:
        # ratio-estimator standard error over batches of every replicate
        per = units[ok] / expo[ok, None]
        w = expo[ok] / expo[ok].sum()
        m = ok.sum()
        se = np.sqrt(m / (m - 1) * np.sum((w[:, None] * (per - frac)) ** 2, axis=0))
    if exposure > 0:
        est = poisson_rate_ci(events, exposure, level)
        rate, lo, hi = est.rate, est.ci_low, est.ci_high
    else:
        rate = lo = hi = math.nan
    return SpineAggregate(
        len(summaries),
        events,
        exposure,
        rate,
        lo,
        hi,
        tuple(float(v) for v in frac),
        tuple(float(v) for v in se),
        tuple(s.mrca_time for s in summaries),
    )


def spine_campaign(model, N, horizon, replicates, seed, init="qsd", burn_in=None, on_run=None):
    """Run ``replicates`` replicates and return their spine summaries.

    ``on_run(replicate, run)`` is called on each run before it is dropped, so
    callers can harvest further statistics without holding every run in
    memory.
    """
    dist = parse_init(init, model)
    out = []
    for r in range(replicates):
        run = replicate_run(model, N, horizon, dist, seed, r)
        out.append(summarize_spine(run, r, burn_in))
        if on_run is not None:
            on_run(r, run)
        del run
    return out


def sweep(model, Ns, horizons, replicates, seed, init="qsd", burn_in=None):
    """Spine occupancy table over particle numbers.

    ``horizons`` and ``replicates`` are per-N sequences or scalars. Each row
    has the pooled occupancy of state 1, its standard error and the
    total-variation distance of the pooled occupancy to the Q-process
    stationary law.
    """
    Ns = list(Ns)
    horizons = [horizons] * len(Ns) if np.isscalar(horizons) else list(horizons)
    replicates = [replicates] * len(Ns) if np.isscalar(replicates) else list(replicates)
    target = qprocess_generator(model).stationary
    rows = []
    for N, H, R in zip(Ns, horizons, replicates):
        agg = aggregate_spine(spine_campaign(model, N, H, R, seed, init, burn_in))
        occ = np.array(agg.occupancy)
        rows.append(
            {
                "N": N,
                "horizon": H,
                "replicates": R,
                "exposure": agg.exposure,
                "occupancy": occ.tolist(),
                "estimate": float(occ[0]),
                "se": agg.occupancy_se[0],
                "ci_low": float(occ[0] - 1.96 * agg.occupancy_se[0]),
                "ci_high": float(occ[0] + 1.96 * agg.occupancy_se[0]),
                "branch_rate": agg.rate,
                "tv_to_qprocess_stationary": tv_distance(occ, target),
            }
        )
    return rows


# ----------------------------------------------------------------------------
# side branches


def v_tree_samples(model, rate, root_dist, count, node_cap, seed, replicate=0):
    """Sizes and lifetimes of ``count`` V-trees with constant branching rate.

    A cap hit is recorded as size ``-1`` and lifetime ``inf``.
    """
    draws = Draws(np.random.default_rng(derive_seed_sequence(seed, replicate, ROLE_VTREE)))
    cdf = np.cumsum(root_dist)
    sizes = np.empty(count, dtype=np.int64)
    lifetimes = np.empty(count)
    for i in range(count):
        x = int(np.searchsorted(cdf, draws.uniform(), side="right")) + 1
        x = min(x, len(root_dist))
        try:
            tree = simulate_v_tree(model, rate, 0.0, x, node_cap, draws)
        except NodeCapExceeded:
            sizes[i], lifetimes[i] = -1, math.inf
            continue
        sizes[i] = tree.size
        lifetimes[i] = max(nd.death for nd in tree.nodes.values())
    return sizes, lifetimes


def v_tree_sizes(model, rate, root_dist, count, node_cap, seed, replicate=0):
    """Sizes of ``count`` V-trees with constant branching rate; ``-1`` marks a cap hit."""
    return v_tree_samples(model, rate, root_dist, count, node_cap, seed, replicate)[0]


def lifetime_quartile_test(z_lifetimes, v_lifetimes) -> dict:
    """Two-sample chi-square over the quartile classes of the V lifetimes."""
    finite = v_lifetimes[np.isfinite(v_lifetimes)]
    edges = np.quantile(finite, [0.25, 0.5, 0.75])
    z_counts = np.bincount(np.searchsorted(edges, z_lifetimes), minlength=4)
    v_counts = np.bincount(np.searchsorted(edges, v_lifetimes), minlength=4)
    stat, p = chisq_homogeneity(z_counts, v_counts)
    return {
        "quartiles": edges.tolist(),
        "z_counts": z_counts.tolist(),
        "v_counts": v_counts.tolist(),
        "statistic": stat,
        "pvalue": p,
    }


def sidebranch_comparison(
    z_sizes, z_truncated, model, v_count, node_cap, seed, classes=SIZE_CLASSES, z_lifetimes=None
) -> dict:
    """Compare empirical side-tree sizes with V-trees at the stationary regime.

    The V-trees branch at the QSD decay rate and start from the Q-process
    stationary law. Reports a two-sample chi-square over size classes, a
    goodness-of-fit of each sample against the exact V size law, and the
    fraction of truncated empirical trees (excluded from the tests). With
    ``z_lifetimes`` a two-sample test over lifetime quartiles is added.
    """
    z_sizes = np.asarray(z_sizes)
    z_truncated = np.asarray(z_truncated, dtype=bool)
    lam = qsd(model).lambda_inf
    root = qprocess_generator(model).stationary
    v, v_life = v_tree_samples(model, lam, root, v_count, node_cap, seed)
    z_ok = z_sizes[~z_truncated]
    v_ok = np.where(v < 0, node_cap + 1, v)
    z_counts = pool_classes(classes, z_ok)
    v_counts = pool_classes(classes, v_ok)
    exact = v_tree_size_distribution(model, lam, root, classes[-1] - 2)
    probs = np.append(exact[[(c - 1) // 2 for c in classes[:-1]]], 1.0 - exact.sum())
    stat, p = chisq_homogeneity(z_counts, v_counts)
    zs, zp = chisq_gof(z_counts, probs)
    vs, vp = chisq_gof(v_counts, probs)
    report = {
        "classes": [f"{c}" for c in classes[:-1]] + [f">={classes[-1]}"],
        "branching_rate": lam,
        "root_law": root.tolist(),
        "z_trees": int(z_sizes.size),
        "z_truncated": int(z_truncated.sum()),
        "truncation_fraction": float(z_truncated.mean()) if z_sizes.size else 0.0,
        "v_trees": int(v.size),
        "v_cap_hits": int((v < 0).sum()),
        "z_counts": z_counts.tolist(),
        "v_counts": v_counts.tolist(),
        "exact_probabilities": probs.tolist(),
        "homogeneity": {"statistic": stat, "pvalue": p},
        "z_vs_exact": {"statistic": zs, "pvalue": zp},
        "v_vs_exact": {"statistic": vs, "pvalue": vp},
    }
    if z_lifetimes is not None:
        report["lifetimes"] = lifetime_quartile_test(np.asarray(z_lifetimes)[~z_truncated], v_life)
    return report


def harvest_side_trees(run: FvRun, burn_in: float | None = None):
    """Side-tree sizes, truncation flags and lifetimes after the burn-in."""
    spine = extract_spine(run)
    start = min(1.0, spine.mrca_time / 4.0) if burn_in is None else burn_in
    _, sizes, trunc = side_tree_sizes(run, start)
    return sizes, trunc, side_tree_lifetimes(run, start)
