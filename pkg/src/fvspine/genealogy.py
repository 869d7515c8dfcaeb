"""Genealogical labels, dynamical historical paths and the spine.

A label is a sequence of ``(particle, event)`` pairs. Every particle starts
with ``((i, 0),)``; at resample event ``k`` with killed particle ``i`` and
donor ``u``, the donor's label ``alpha`` is replaced by ``alpha + (u, k)`` and
the killed particle receives ``alpha + (i, k)``.

All labels ever issued form a forest: roots are the ``N`` initial labels and
event ``k`` attaches two children to the donor's label. Node ids are
``0..N-1`` for roots, ``N + 2(k-1)`` for the donor's new label at event ``k``
and ``N + 2(k-1) + 1`` for the killed particle's new label. A particle's
label at time ``s`` is the root-to-node path of its current node, so labels
are reconstructed from the event log on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .ctmc import Path, concat_pieces
from .fv import FvRun, _check_time

__all__ = [
    "Label",
    "LabelForest",
    "DhpRecord",
    "SpineRecord",
    "SpineWindow",
    "label_forest",
    "node_of",
    "nodes_at",
    "label_of",
    "dhp",
    "mrca_time",
    "extract_spine",
    "spine_branch_count",
    "spine_window",
    "default_burn_in",
]


@dataclass(frozen=True)
class Label:
    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if pairs:
            bs = [b for _, b in pairs]
            if bs[0] != 0 or any(b1 >= b2 for b1, b2 in zip(bs, bs[1:])):
                raise ValueError(f"event components must start at 0 and increase: {bs}")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __getitem__(self, i):
        return self.pairs[i]

    def __add__(self, pair):
        return Label(self.pairs + (tuple(pair),))

    def is_prefix_of(self, other: "Label") -> bool:
        return len(self) <= len(other) and other.pairs[: len(self)] == self.pairs

    def __repr__(self):
        return f"Label({self.pairs!r})"


@dataclass(frozen=True, eq=False)
class LabelForest:
    """Array form of every label issued during a run."""

    parent: np.ndarray
    holder: np.ndarray
    """Particle in the label's last pair."""
    event: np.ndarray
    """Event index in the label's last pair (0 for roots)."""
    depth: np.ndarray
    fate: np.ndarray
    """Event that ends the label's tenure (0: still held at the horizon)."""
    branched: np.ndarray
    """True if the tenure ended because the holder was the donor."""
    involvement_offsets: np.ndarray
    involvement_events: np.ndarray
    """Per particle, the 0-based indices of events it took part in, in time order."""

    def children(self, node: int):
        k = int(self.fate[node])
        if k == 0 or not self.branched[node]:
            return ()
        N = self.involvement_offsets.size - 1
        return (N + 2 * (k - 1), N + 2 * (k - 1) + 1)


@njit(cache=True)
def _build_forest(N, killed, target):
    K = killed.size
    M = N + 2 * K
    parent = np.full(M, -1, dtype=np.int64)
    holder = np.empty(M, dtype=np.int64)
    event = np.zeros(M, dtype=np.int64)
    depth = np.ones(M, dtype=np.int64)
    fate = np.zeros(M, dtype=np.int64)
    branched = np.zeros(M, dtype=np.bool_)
    cur = np.arange(N)
    for i in range(N):
        holder[i] = i
    for e in range(K):
        k = e + 1
        i = killed[e]
        u = target[e]
        pd = cur[u]
        fate[cur[i]] = k
        fate[pd] = k
        branched[pd] = True
        nd = N + 2 * e
        nk = nd + 1
        parent[nd] = pd
        parent[nk] = pd
        holder[nd] = u
        holder[nk] = i
        event[nd] = k
        event[nk] = k
        depth[nd] = depth[pd] + 1
        depth[nk] = depth[pd] + 1
        cur[u] = nd
        cur[i] = nk
    return parent, holder, event, depth, fate, branched


@njit(cache=True)
def _nodes_at(N, killed, target, upto):
    cur = np.arange(N)
    for e in range(upto):
        cur[target[e]] = N + 2 * e
        cur[killed[e]] = N + 2 * e + 1
    return cur


@njit(cache=True)
def _lca(parent, depth, nodes):
    c = nodes[0]
    for idx in range(1, nodes.size):
        a = c
        b = nodes[idx]
        while depth[a] > depth[b]:
            a = parent[a]
        while depth[b] > depth[a]:
            b = parent[b]
        while a != b:
            a = parent[a]
            b = parent[b]
            if a == -1 or b == -1:
                return -1
        c = a
    return c


@njit(cache=True)
def _ancestry(parent, depth, node):
    out = np.empty(depth[node], dtype=np.int64)
    i = depth[node] - 1
    while node != -1:
        out[i] = node
        node = parent[node]
        i -= 1
    return out


def label_forest(run: FvRun) -> LabelForest:
    """Label forest of ``run`` (built once and cached on the run)."""
    forest = run.cache.get("label_forest")
    if forest is None:
        N, K = run.N, run.n_events
        arrays = _build_forest(N, run.event_killed.astype(np.int64), run.event_target.astype(np.int64))
        part = np.concatenate([run.event_killed, run.event_target]).astype(np.int64)
        ev = np.concatenate([np.arange(K), np.arange(K)])
        order = np.lexsort((ev, part))
        offsets = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(part, minlength=N), out=offsets[1:])
        forest = LabelForest(*arrays, offsets, ev[order])
        run.cache["label_forest"] = forest
    return forest


def node_of(run: FvRun, i: int, s: float) -> int:
    """Forest node holding particle ``i``'s label at time ``s``."""
    forest = label_forest(run)
    lo, hi = forest.involvement_offsets[i], forest.involvement_offsets[i + 1]
    evs = forest.involvement_events[lo:hi]
    j = np.searchsorted(run.event_tau[evs], s, side="right") - 1
    if j < 0:
        return int(i)
    e = int(evs[j])
    return run.N + 2 * e + (1 if run.event_killed[e] == i else 0)


def nodes_at(run: FvRun, t: float) -> np.ndarray:
    """Current forest node of every particle at time ``t``."""
    return _nodes_at(run.N, run.event_killed, run.event_target, run.events_until(t))


def _label_of_node(forest: LabelForest, node: int) -> Label:
    chain = _ancestry(forest.parent, forest.depth, node)
    return Label(tuple(zip(forest.holder[chain].tolist(), forest.event[chain].tolist())))


def label_of(run: FvRun, i: int, s: float) -> Label:
    """Label of particle ``i`` at time ``s``."""
    _check_time(run, s)
    return _label_of_node(label_forest(run), node_of(run, i, s))


def _birth_time(run: FvRun, forest: LabelForest, node) -> np.ndarray:
    ev = np.asarray(forest.event[node])
    out = np.zeros(ev.shape)
    has = ev > 0
    out[has] = run.event_tau[ev[has] - 1]
    return out


def _decode(run: FvRun, forest: LabelForest, node: int, end: float):
    """Breakpoints and path of the historical path ending at ``node``, on ``[0, end]``."""
    chain = _ancestry(forest.parent, forest.depth, node)
    starts = _birth_time(run, forest, chain)
    who = forest.holder[chain]
    stops = np.append(starts[1:], end)
    pieces = [run.piece(int(a), float(s0), float(s1)) for a, s0, s1 in zip(who[:-1], starts[:-1], stops[:-1])]
    # last piece is closed at ``end`` so a jump exactly at ``end`` is kept
    a = int(who[-1])
    lo, hi = run.traj_offsets[a], run.traj_offsets[a + 1]
    times = run.traj_times[lo:hi]
    first = lo + np.searchsorted(times, starts[-1], side="right") - 1
    last = lo + np.searchsorted(times, end, side="right")
    t = run.traj_times[first:last].copy()
    t[0] = starts[-1]
    pieces.append((t, run.traj_states[first:last]))
    return starts, who, concat_pieces(pieces, end)


@dataclass(frozen=True, eq=False)
class DhpRecord:
    """Dynamical historical path of particle ``particle`` seen from ``eval_time``."""

    particle: int
    eval_time: float
    path: Path
    chi_times: np.ndarray
    chi_particles: np.ndarray
    label: Label

    def chi(self, s: float) -> int:
        """Particle whose trajectory the historical path follows at time ``s``."""
        if not 0 <= s <= self.eval_time:
            raise ValueError(f"s={s} outside [0, {self.eval_time}]")
        return int(self.chi_particles[np.searchsorted(self.chi_times, s, side="right") - 1])


def dhp(run: FvRun, n: int, t: float) -> DhpRecord:
    """Historical path ``s -> X^{chi(n,t,s)}_s`` on ``[0, t]``."""
    _check_time(run, t)
    forest = label_forest(run)
    node = node_of(run, n, t)
    starts, who, path = _decode(run, forest, node, t)
    return DhpRecord(int(n), float(t), path, starts, who, _label_of_node(forest, node))


def _mrca_node(run: FvRun, t: float) -> int:
    forest = label_forest(run)
    return int(_lca(forest.parent, forest.depth, nodes_at(run, t)))


def mrca_time(run: FvRun, t: float) -> float:
    """Last time at which all historical paths seen from ``t`` coincide (0 if never)."""
    _check_time(run, t)
    c = _mrca_node(run, t)
    if c < 0:
        return 0.0
    forest = label_forest(run)
    return float(run.event_tau[forest.fate[c] - 1])


@dataclass(frozen=True, eq=False)
class SpineRecord:
    """Spine of a run as resolved at ``eval_time``.

    ``path`` covers ``[0, mrca_time]`` and is ``None`` when the historical
    paths share no ancestor yet. ``nodes`` are the forest nodes of the common
    label prefix, root first.
    """

    eval_time: float
    mrca_time: float
    path: Path | None
    label: Label
    branch_times: np.ndarray
    chi_times: np.ndarray
    chi_particles: np.ndarray
    nodes: np.ndarray

    def chi(self, s: float) -> int:
        if self.path is None or not 0 <= s <= self.mrca_time:
            raise ValueError(f"s={s} outside the resolved spine [0, {self.mrca_time}]")
        return int(self.chi_particles[np.searchsorted(self.chi_times, s, side="right") - 1])


def extract_spine(run: FvRun, t: float | None = None) -> SpineRecord:
    """Common label prefix of all particles at ``t`` (default: the horizon).

    Branch times are the resample events ``tau_k <= mrca_time`` in which the
    spine's current particle was either killed or the donor.
    """
    if t is None:
        t = run.horizon
    _check_time(run, t)
    key = ("spine", float(t))
    if key in run.cache:
        return run.cache[key]
    forest = label_forest(run)
    c = _mrca_node(run, t)
    if c < 0:
        empty = np.empty(0)
        rec = SpineRecord(float(t), 0.0, None, Label(()), empty, empty, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    else:
        mrca = float(run.event_tau[forest.fate[c] - 1])
        starts, who, path = _decode(run, forest, c, mrca)
        kmax = run.events_until(mrca)
        tau = run.event_tau[:kmax]
        chi = who[np.searchsorted(starts, tau, side="right") - 1]
        hit = (run.event_killed[:kmax] == chi) | (run.event_target[:kmax] == chi)
        chain = _ancestry(forest.parent, forest.depth, c)
        rec = SpineRecord(float(t), mrca, path, _label_of_node(forest, c), tau[hit].copy(), starts, who, chain)
    run.cache[key] = rec
    return rec


def spine_branch_count(run: FvRun, t: float) -> np.ndarray:
    """Spine branch times up to ``min(t, mrca)``, using the spine resolved at the horizon."""
    _check_time(run, t)
    spine = extract_spine(run)
    return spine.branch_times[spine.branch_times <= min(t, spine.mrca_time)]


def default_burn_in(mrca: float) -> float:
    return min(1.0, mrca / 4.0)


@dataclass(frozen=True)
class SpineWindow:
    """Spine observables on the burn-in-trimmed window ``[start, end)``."""

    start: float
    end: float
    branch_count: int
    occupancy: np.ndarray
    """Time the spine spends in each interior state inside the window."""

    @property
    def exposure(self) -> float:
        return self.end - self.start


def spine_window(run: FvRun, burn_in: float | None = None) -> SpineWindow:
    """Branch count and state occupancy of the spine on ``[burn_in, mrca)``.

    The window is half-open: the branch event at the MRCA time itself is
    forced by the definition of the MRCA and is not counted.
    """
    spine = extract_spine(run)
    n = run.model.n
    mrca = spine.mrca_time
    start = default_burn_in(mrca) if burn_in is None else float(burn_in)
    if spine.path is None or start >= mrca:
        return SpineWindow(start, max(start, mrca), 0, np.zeros(n))
    bt = spine.branch_times
    count = int(np.count_nonzero((bt >= start) & (bt < mrca)))
    occ = spine.path.restrict(start, mrca).occupancy(n + 1)[1:]
    return SpineWindow(start, mrca, count, occ)
