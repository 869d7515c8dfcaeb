"""Side-branch trees: the limiting branching process V and empirical trees Z.

Individuals of a tree are indexed by binary tuples starting with ``0``; the
offspring of ``beta`` are ``beta + (0,)`` and ``beta + (1,)``. An individual
lives on ``[birth, death)``; ``a = 1`` means it ended by branching into two
offspring that start from its final state, ``a = 0`` that it was killed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import Draws, as_generator
from .ctmc import FiniteChainModel, Path, _gillespie, _jump_tables, lambda_t
from .errors import NodeCapExceeded, NotABranchTime, SpineSideRequested
from .fv import FvRun
from .genealogy import extract_spine, label_forest
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "TreeNode",
    "BranchingTree",
    "TreeStatistics",
    "ConstantRate",
    "ConditionedKillingRate",
    "simulate_v_tree",
    "v_tree_size_distribution",
    "extract_z_tree",
    "side_branch_anchors",
    "side_tree_lifetimes",
    "side_tree_sizes",
    "tree_statistics",
]


@dataclass(frozen=True, eq=False)
class TreeNode:
    birth: float
    death: float
    path: Path
    a: int
    alive: bool = False
    """Still alive when the observation stopped (death is then the cut-off time)."""


@dataclass(eq=False)
class BranchingTree:
    nodes: dict = field(default_factory=dict)
    truncated: bool = False

    @property
    def root(self) -> TreeNode:
        return self.nodes[(0,)]

    @property
    def size(self) -> int:
        return len(self.nodes)

    def population(self, t: float) -> int:
        """Number of individuals alive at time ``t``."""
        return sum(1 for nd in self.nodes.values() if nd.birth <= t < nd.death or (nd.alive and nd.death == t))

    def check(self) -> None:
        """Assert the parent/offspring gluing rules."""
        for beta, nd in self.nodes.items():
            kids = [beta + (0,) in self.nodes, beta + (1,) in self.nodes]
            if nd.a == 1:
                assert all(kids), beta
                for c in (beta + (0,), beta + (1,)):
                    child = self.nodes[c]
                    assert child.birth == nd.death, beta
                    assert child.path.states[0] == nd.path.states[-1], beta
            else:
                assert not any(kids), beta
            assert np.all(nd.path.states > 0), beta

    def to_json(self) -> dict:
        nodes = {}
        for beta in sorted(self.nodes, key=lambda b: (len(b), b)):
            nd = self.nodes[beta]
            nodes["".join(map(str, beta))] = {
                "s": nd.birth,
                "t": nd.death,
                "a": nd.a,
                "alive": nd.alive,
                "path": [[float(t), int(x)] for t, x in zip(nd.path.times, nd.path.states)],
            }
        return {"truncated": self.truncated, "nodes": nodes}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ----------------------------------------------------------------------------
# branching-rate profiles


class ConstantRate:
    def __init__(self, rate: float):
        if rate < 0:
            raise ValueError("rate must be non-negative")
        self.rate = float(rate)

    def __call__(self, t: float) -> float:
        return self.rate

    def bound(self, t0: float) -> float:
        return self.rate


class ConditionedKillingRate:
    """``t -> lambda_t`` for the chain started from ``mu0`` and conditioned to survive.

    The thinning bound is the maximum over a coarse grid of ``[0, t_max]``
    (log-spaced) and the limit ``lambda_inf``, times the policy safety factor.
    """

    def __init__(self, model: FiniteChainModel, mu0, t_max: float = 50.0, policy: NumericPolicy = DEFAULT_POLICY):
        from .ctmc import qsd

        self.model = model
        self.mu0 = np.asarray(mu0, dtype=float)
        self.policy = policy
        grid = np.concatenate([[0.0], np.geomspace(1e-3, t_max, policy.lambda_grid_points)])
        values = [lambda_t(model, self.mu0, t, policy) for t in grid]
        self._sup = max(max(values), qsd(model, policy).lambda_inf) * policy.lambda_bound_safety

    def __call__(self, t: float) -> float:
        return lambda_t(self.model, self.mu0, t, self.policy)

    def bound(self, t0: float) -> float:
        return self._sup


def _as_profile(lambda_profile):
    if isinstance(lambda_profile, (int, float)):
        return ConstantRate(lambda_profile)
    return lambda_profile


# ----------------------------------------------------------------------------
# V-tree simulation


def _branch_clock(profile, s: float, draws: Draws) -> float:
    if isinstance(profile, ConstantRate):
        return s + draws.exponential(profile.rate) if profile.rate > 0 else math.inf
    bound = profile.bound(s)
    if bound <= 0:
        return math.inf
    u = s
    while True:
        u += draws.exponential(bound)
        lam = profile(u)
        if lam > bound * (1 + 1e-9):
            raise ArithmeticError(f"branching rate {lam} exceeds thinning bound {bound} at t={u}")
        if draws.uniform() * bound < lam:
            return u


def simulate_v_tree(
    model: FiniteChainModel,
    lambda_profile,
    t1: float,
    x1: int,
    node_cap: int,
    rng=None,
    horizon: float = math.inf,
) -> BranchingTree:
    """Branching version of the driving chain with branching rate ``lambda_profile``.

    Each individual follows the chain from its birth state and dies at the
    earlier of absorption and an independent clock with hazard
    ``lambda_profile(t)`` (sampled by thinning for non-constant profiles). If
    the clock wins the individual splits into two offspring at its current
    state. Individuals still alive at ``horizon`` are cut there and the tree
    is marked truncated.

    Raises :class:`NodeCapExceeded` (with the partial tree attached) when
    growing the tree would need more than ``node_cap`` individuals.
    """
    if not 1 <= x1 <= model.n:
        raise ValueError(f"x1={x1} is not an interior state")
    if node_cap < 1:
        raise ValueError("node_cap must be at least 1")
    profile = _as_profile(lambda_profile)
    draws = rng if isinstance(rng, Draws) else Draws(as_generator(rng))
    tables = _jump_tables(model.Q)
    tree = BranchingTree()
    stack = [((0,), float(t1), int(x1))]
    while stack:
        beta, s, x = stack.pop()
        clock = _branch_clock(profile, s, draws)
        stop = min(clock, horizon)
        times, states = _gillespie(tables, x, s, stop, draws)
        if states[-1] == 0:
            tree.nodes[beta] = TreeNode(s, times[-1], Path(times[:-1], states[:-1], times[-1], check=False), 0)
            continue
        if clock > horizon:
            tree.nodes[beta] = TreeNode(s, horizon, Path(times, states, horizon, check=False), 0, alive=True)
            tree.truncated = True
            continue
        tree.nodes[beta] = TreeNode(s, clock, Path(times, states, clock, check=False), 1)
        if len(tree.nodes) + len(stack) + 2 > node_cap:
            tree.truncated = True
            raise NodeCapExceeded(node_cap, tree)
        y = states[-1]
        stack.append((beta + (1,), clock, y))
        stack.append((beta + (0,), clock, y))
    return tree


def v_tree_size_distribution(model: FiniteChainModel, rate: float, root_dist, max_size: int) -> np.ndarray:
    """Exact law of the node count of a V-tree with constant branching rate.

    Returns ``p`` with ``p[m] = P(size == 2m + 1)`` for ``2m + 1 <= max_size``.
    An individual born in state ``x`` is killed before branching with
    probability ``((rate I - Q_F)^-1 q_0)(x)`` and otherwise branches in state
    ``y`` with probability ``rate (rate I - Q_F)^-1 [x, y]``.
    """
    n = model.n
    G = np.linalg.inv(rate * np.eye(n) - model.Q_F)
    leaf = G @ model.killing_rates
    split = rate * G
    M = (max_size - 1) // 2 + 1
    p = np.zeros((M, n))  # p[m, x]: P(m branchings | root in x)
    p[0] = leaf
    for m in range(1, M):
        conv = np.einsum("ix,ix->x", p[:m], p[m - 1 :: -1])
        p[m] = split @ conv
    return np.asarray(root_dist, dtype=float) @ p.T


# ----------------------------------------------------------------------------
# empirical side branches


def side_branch_anchors(run: FvRun, start: float = 0.0):
    """``(particle, time)`` of the side branch at every resolved spine branch point.

    The spine's continuation at the MRCA event is not resolved by the run, so
    that event is skipped.
    """
    spine = extract_spine(run)
    forest = label_forest(run)
    N = run.N
    out = []
    for node in spine.nodes[1:]:
        e = int(forest.event[node]) - 1
        tau = float(run.event_tau[e])
        if tau < start:
            continue
        sibling = N + 2 * e + (1 - (node - N - 2 * e))
        out.append((int(forest.holder[sibling]), tau))
    return out


@njit(cache=True)
def _subtree_sizes(parent, fate, end):
    # children always carry larger ids than their parent
    size = np.ones(parent.size, dtype=np.int64)
    alive = fate == 0
    last = end.copy()
    for node in range(parent.size - 1, -1, -1):
        p = parent[node]
        if p >= 0:
            size[p] += size[node]
            alive[p] = alive[p] or alive[node]
            last[p] = max(last[p], last[node])
    return size, alive, last


def side_tree_sizes(run: FvRun, start: float = 0.0):
    """Node counts and truncation flags of every resolved side tree after ``start``.

    Same trees as :func:`extract_z_tree` over :func:`side_branch_anchors`,
    computed from subtree sizes of the label forest without decoding paths.
    Returns ``(times, sizes, truncated)``.
    """
    tau, size, alive, _ = _side_tree_table(run, start)
    return tau, size, alive


def side_tree_lifetimes(run: FvRun, start: float = 0.0) -> np.ndarray:
    """Time from birth to extinction of every resolved side tree after ``start``.

    Truncated trees report the time survived up to the horizon.
    """
    tau, _, _, last = _side_tree_table(run, start)
    return last - tau


def _side_tree_table(run: FvRun, start: float):
    spine = extract_spine(run)
    forest = label_forest(run)
    key = "subtree_sizes"
    if key not in run.cache:
        fate = np.asarray(forest.fate)
        end = np.full(fate.shape, float(run.horizon))
        dead = fate > 0
        end[dead] = run.event_tau[fate[dead] - 1]
        run.cache[key] = _subtree_sizes(forest.parent, fate, end)
    size, alive, last = run.cache[key]
    nodes = spine.nodes[1:]
    e = forest.event[nodes] - 1
    sib = run.N + 2 * e + (1 - (nodes - run.N - 2 * e))
    tau = run.event_tau[e]
    keep = tau >= start
    return tau[keep], size[sib[keep]], alive[sib[keep]], last[sib[keep]]


def extract_z_tree(run: FvRun, anchor, node_cap: int = 100_000) -> BranchingTree:
    """Tree of label-descendants of the side particle at a spine branch point.

    ``anchor`` is ``(j2, u_k)``: the particle that did not continue the spine
    and the branch time. Offspring indices follow a fixed rule: at each
    branching, the offspring held by the smaller particle index gets ``0``.
    """
    j2, u = anchor
    spine = extract_spine(run)
    k = int(np.searchsorted(run.event_tau, u))
    if k >= run.n_events or run.event_tau[k] != u or u >= spine.mrca_time:
        raise NotABranchTime(f"t={u} is not a resolved spine branch time")
    forest = label_forest(run)
    N = run.N
    if j2 == run.event_target[k]:
        root = N + 2 * k
    elif j2 == run.event_killed[k]:
        root = N + 2 * k + 1
    else:
        raise NotABranchTime(f"particle {j2} took no part in the event at t={u}")
    parent = forest.parent[root]
    if parent not in set(spine.nodes.tolist()):
        raise NotABranchTime(f"the event at t={u} is not on the spine")
    if root in set(spine.nodes.tolist()):
        raise SpineSideRequested(f"particle {j2} continues the spine at t={u}")

    tree = BranchingTree()
    stack = [((0,), root)]
    while stack:
        beta, node = stack.pop()
        holder = int(forest.holder[node])
        birth = float(run.event_tau[forest.event[node] - 1])
        fate = int(forest.fate[node])
        if fate == 0:
            death, a, alive = run.horizon, 0, True
            tree.truncated = True
        else:
            death, a, alive = float(run.event_tau[fate - 1]), int(forest.branched[node]), False
        t, s = run.piece(holder, birth, death)
        tree.nodes[beta] = TreeNode(birth, death, Path(t, s, death, check=False), a, alive)
        if a:
            if len(tree.nodes) + len(stack) + 2 > node_cap:
                tree.truncated = True
                raise NodeCapExceeded(node_cap, tree)
            kids = forest.children(node)
            kids = sorted(kids, key=lambda c: forest.holder[c])
            stack.append((beta + (1,), kids[1]))
            stack.append((beta + (0,), kids[0]))
    return tree


# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeStatistics:
    size: int
    lifetime: float
    occupancy: np.ndarray
    """Total individual-time spent in each interior state."""


def tree_statistics(tree: BranchingTree, n: int | None = None) -> TreeStatistics:
    if n is None:
        n = max(int(nd.path.states.max()) for nd in tree.nodes.values())
    occ = np.zeros(n)
    for nd in tree.nodes.values():
        occ += nd.path.occupancy(n + 1)[1:]
    root = tree.root
    lifetime = max(nd.death for nd in tree.nodes.values()) - root.birth
    return TreeStatistics(tree.size, lifetime, occ)
