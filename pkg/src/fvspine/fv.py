"""Event-driven simulation of the N-particle Fleming-Viot process.

Each particle runs an independent copy of the driving chain. When a particle
jumps to the cemetery it immediately adopts the current state of a donor
drawn uniformly from the other ``N - 1`` particles; that kill-and-adopt step
is a *resample event* and the donor is said to branch.

Particles are indexed ``0..N-1``. Resample events are numbered ``k = 1, 2, ...``
in time order; array position ``k - 1`` holds event ``k``.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
from numba import njit

from ._rng import as_generator
from .ctmc import FiniteChainModel, Path, validate_model
from .errors import InvalidInitialState, TimeOutOfRange

__all__ = [
    "ResampleEvent",
    "FvRun",
    "simulate_fv",
    "assemble_run",
    "empirical_measure",
    "branch_counts",
    "branch_counts_all",
    "write_bundle",
    "read_bundle",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ResampleEvent:
    k: int
    tau_k: float
    killed: int
    target: int
    adopted_state: int


@dataclass(frozen=True, eq=False)
class FvRun:
    """Immutable record of one simulation.

    Trajectories are stored in compressed-row form: particle ``i`` owns
    ``traj_times[traj_offsets[i]:traj_offsets[i+1]]`` (entry times, first one
    0) and the matching ``traj_states``. Trajectories never visit the cemetery;
    a kill shows up as a jump to the adopted state (or no jump at all if the
    donor happens to share the particle's pre-kill state).
    """

    model: FiniteChainModel
    N: int
    horizon: float
    initial_states: np.ndarray
    traj_offsets: np.ndarray
    traj_times: np.ndarray
    traj_states: np.ndarray
    event_tau: np.ndarray
    event_killed: np.ndarray
    event_target: np.ndarray
    event_adopted: np.ndarray
    rng_seed: object = None
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_events(self) -> int:
        return int(self.event_tau.size)

    def event(self, k: int) -> ResampleEvent:
        i = k - 1
        if not 0 <= i < self.n_events:
            raise IndexError(f"no event {k}")
        return ResampleEvent(
            k,
            float(self.event_tau[i]),
            int(self.event_killed[i]),
            int(self.event_target[i]),
            int(self.event_adopted[i]),
        )

    @property
    def events(self) -> list[ResampleEvent]:
        return [self.event(k) for k in range(1, self.n_events + 1)]

    def trajectory(self, i: int) -> Path:
        a, b = self.traj_offsets[i], self.traj_offsets[i + 1]
        return Path(self.traj_times[a:b], self.traj_states[a:b], self.horizon, check=False)

    @property
    def trajectories(self) -> list[Path]:
        return [self.trajectory(i) for i in range(self.N)]

    def piece(self, i: int, a: float, b: float):
        """Entry times and states of particle ``i`` on ``[a, b)``, first entry at ``a``."""
        lo, hi = self.traj_offsets[i], self.traj_offsets[i + 1]
        times = self.traj_times[lo:hi]
        first = lo + np.searchsorted(times, a, side="right") - 1
        last = lo + np.searchsorted(times, b, side="left")
        t = self.traj_times[first:last].copy()
        t[0] = a
        return t, self.traj_states[first:last]

    def state_of(self, i: int, t: float) -> int:
        lo, hi = self.traj_offsets[i], self.traj_offsets[i + 1]
        j = lo + np.searchsorted(self.traj_times[lo:hi], t, side="right") - 1
        return int(self.traj_states[j])

    def states_at(self, t: float) -> np.ndarray:
        """State of every particle at time ``t``."""
        return _states_at(self.traj_offsets, self.traj_times, self.traj_states, float(t))

    def events_until(self, t: float) -> int:
        """Number of resample events with ``tau_k <= t``."""
        return int(np.searchsorted(self.event_tau, t, side="right"))


# ----------------------------------------------------------------------------
# simulation kernel


def _jump_arrays(Q):
    size = Q.shape[0]
    rates = -np.diag(Q).astype(np.float64)
    width = max(1, size - 1)
    dest = np.zeros((size, width), dtype=np.int64)
    cdf = np.ones((size, width), dtype=np.float64)
    for x in range(1, size):
        ys = [y for y in range(size) if y != x and Q[x, y] > 0]
        c = np.cumsum([Q[x, y] for y in ys]) / rates[x]
        c[-1] = 1.0
        dest[x, : len(ys)] = ys
        cdf[x, : len(ys)] = c
    return rates, dest, cdf


@njit(cache=True)
def _grow(a, size):
    out = np.empty(size, dtype=a.dtype)
    out[: a.size] = a
    return out


@njit(cache=True)
def _fv_kernel(rates, dest, cdf, init, horizon, rng):
    # Random draws, in order: one exponential per particle for the initial
    # clocks (particle order); then per firing clock: a uniform picking the
    # destination, integer draws for the donor if the destination is the
    # cemetery (rejection of the killed index), and one exponential for the
    # particle's next clock.
    N = init.size
    state = init.copy()
    jcap = 1024
    jp = np.empty(jcap, dtype=np.int32)
    jt = np.empty(jcap, dtype=np.float64)
    js = np.empty(jcap, dtype=np.int32)
    nj = 0
    ecap = 1024
    et = np.empty(ecap, dtype=np.float64)
    ek = np.empty(ecap, dtype=np.int32)
    eu = np.empty(ecap, dtype=np.int32)
    ea = np.empty(ecap, dtype=np.int32)
    ne = 0

    heap = [(0.0, 0)]
    heap.pop()
    for i in range(N):
        heapq.heappush(heap, (rng.exponential(1.0) / rates[state[i]], i))
    last_t = 0.0
    while True:
        t, i = heapq.heappop(heap)
        if t > horizon:
            break
        x = state[i]
        if t <= last_t:
            # floating-point collision with the previous event: redraw this clock
            heapq.heappush(heap, (t + rng.exponential(1.0) / rates[x], i))
            continue
        u = rng.random()
        k = 0
        while cdf[x, k] < u:
            k += 1
        y = dest[x, k]
        if y == 0:
            j = i
            while j == i:
                j = rng.integers(0, N)
            y = state[j]
            if ne == ecap:
                ecap *= 2
                et = _grow(et, ecap)
                ek = _grow(ek, ecap)
                eu = _grow(eu, ecap)
                ea = _grow(ea, ecap)
            et[ne] = t
            ek[ne] = i
            eu[ne] = j
            ea[ne] = y
            ne += 1
        if y != x:
            if nj == jcap:
                jcap *= 2
                jp = _grow(jp, jcap)
                jt = _grow(jt, jcap)
                js = _grow(js, jcap)
            jp[nj] = i
            jt[nj] = t
            js[nj] = y
            nj += 1
            state[i] = y
        last_t = t
        heapq.heappush(heap, (t + rng.exponential(1.0) / rates[y], i))
    return jp[:nj], jt[:nj], js[:nj], et[:ne], ek[:ne], eu[:ne], ea[:ne]


@njit(cache=True)
def _states_at(offsets, times, states, t):
    N = offsets.size - 1
    out = np.empty(N, dtype=np.int64)
    for p in range(N):
        lo = offsets[p]
        hi = offsets[p + 1]
        j = lo + np.searchsorted(times[lo:hi], t, side="right") - 1
        out[p] = states[j]
    return out


def _pack(model, horizon, init, jp, jt, js, events, seed) -> FvRun:
    N = init.size
    part = np.concatenate([np.arange(N, dtype=np.int32), jp.astype(np.int32)])
    order = np.argsort(part, kind="stable")
    times = np.concatenate([np.zeros(N), jt])[order]
    states = np.concatenate([init, js]).astype(np.int8 if model.n < 127 else np.int64)[order]
    offsets = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(part, minlength=N), out=offsets[1:])
    et, ek, eu, ea = events
    arrays = [init, offsets, times, states, et, ek, eu, ea]
    for a in arrays:
        a.setflags(write=False)
    return FvRun(
        model,
        int(N),
        float(horizon),
        init,
        offsets,
        times,
        states,
        et,
        ek,
        eu,
        ea,
        seed,
    )


def assemble_run(model: FiniteChainModel, initial_states, horizon: float, jumps=(), events=()) -> FvRun:
    """Build a run from a scripted log.

    ``jumps`` are ``(particle, time, new_state)`` driver moves inside F;
    ``events`` are ``(tau, killed, target)`` resample events, the adopted
    state being read off the donor's trajectory. Used to replay hand-built
    genealogies.
    """
    init = np.asarray(initial_states, dtype=np.int64)
    jumps = sorted(jumps, key=lambda j: j[1])
    events = sorted(events)
    merged = [(t, 0, p, s) for p, t, s in jumps] + [(t, 1, i, u) for t, i, u in events]
    merged.sort()
    state = init.copy()
    jp, jt, js, ev = [], [], [], []
    for t, kind, a, b in merged:
        if kind == 0:
            state[a] = b
            jp.append(a), jt.append(t), js.append(b)
        else:
            if a == b:
                raise ValueError("killed particle cannot be its own donor")
            y = int(state[b])
            ev.append((t, a, b, y))
            if state[a] != y:
                state[a] = y
                jp.append(a), jt.append(t), js.append(y)
    et = np.array([e[0] for e in ev], dtype=float)
    ek = np.array([e[1] for e in ev], dtype=np.int32)
    eu = np.array([e[2] for e in ev], dtype=np.int32)
    ea = np.array([e[3] for e in ev], dtype=np.int32)
    if et.size > 1 and not np.all(np.diff(et) > 0):
        raise ValueError("event times must be strictly increasing")
    return _pack(
        model,
        horizon,
        init,
        np.array(jp, dtype=np.int32),
        np.array(jt, dtype=float),
        np.array(js, dtype=np.int32),
        (et, ek, eu, ea),
        None,
    )


def simulate_fv(model: FiniteChainModel, initial_states, horizon: float, rng=None) -> FvRun:
    """Exact simulation of the Fleming-Viot system on ``[0, horizon]``.

    Every particle carries an exponential clock with its state's exit rate,
    kept in a priority queue. A clock that sends its particle to the cemetery
    triggers a resample event; only the firing particle's clock is redrawn,
    which is exact by memorylessness.

    Parameters
    ----------
    model : FiniteChainModel
    initial_states : sequence of int
        Interior state of each particle at time 0; its length is ``N >= 2``.
    horizon : float
        Positive simulation horizon.
    rng : numpy Generator, int seed or None
        An integer seed is recorded on the run as ``rng_seed``; for a
        Generator the starting bit-generator state is recorded instead.
    """
    init = np.asarray(initial_states, dtype=np.int64).copy()
    if init.ndim != 1 or init.size < 2:
        raise InvalidInitialState("need at least two particles")
    bad = np.flatnonzero((init < 1) | (init > model.n))
    if bad.size:
        raise InvalidInitialState(f"particles {bad.tolist()} start outside F={{1..{model.n}}}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = as_generator(rng)
    if seed is None:
        seed = gen.bit_generator.state
    rates, dest, cdf = _jump_arrays(model.Q)
    jp, jt, js, *events = _fv_kernel(rates, dest, cdf, init, float(horizon), gen)
    return _pack(model, horizon, init, jp, jt, js, events, seed)


# ----------------------------------------------------------------------------
# observables


def _check_time(run: FvRun, t: float):
    if not 0 <= t <= run.horizon:
        raise TimeOutOfRange(f"t={t} outside [0, {run.horizon}]")


def empirical_measure(run: FvRun, t: float) -> np.ndarray:
    """Fraction of particles in each interior state at time ``t`` (length ``n``)."""
    _check_time(run, t)
    counts = np.bincount(run.states_at(t), minlength=run.model.n + 1)[1:]
    return counts / run.N


def branch_counts(run: FvRun, m: int, t: float) -> int:
    """Number of resample events up to ``t`` in which particle ``m`` was the donor."""
    _check_time(run, t)
    k = run.events_until(t)
    return int(np.count_nonzero(run.event_target[:k] == m))


def branch_counts_all(run: FvRun, t: float) -> np.ndarray:
    """:func:`branch_counts` for every particle at once."""
    _check_time(run, t)
    k = run.events_until(t)
    return np.bincount(run.event_target[:k], minlength=run.N)


# ----------------------------------------------------------------------------
# bundle I/O


def write_bundle(run: FvRun, directory, trajectories: bool = True) -> None:
    """Write ``events.csv``, ``trajectories.csv`` and ``meta.json`` into ``directory``."""
    d = FsPath(directory)
    d.mkdir(parents=True, exist_ok=True)
    k = np.arange(1, run.n_events + 1)
    with open(d / "events.csv", "w") as fh:
        fh.write("k,tau,killed,target,adopted_state\n")
        if run.n_events:
            np.savetxt(
                fh,
                np.column_stack([k, run.event_tau, run.event_killed, run.event_target, run.event_adopted]),
                fmt=["%d", "%.17g", "%d", "%d", "%d"],
                delimiter=",",
            )
    if trajectories:
        part = np.repeat(np.arange(run.N), np.diff(run.traj_offsets))
        with open(d / "trajectories.csv", "w") as fh:
            fh.write("particle,entry_time,state\n")
            np.savetxt(
                fh,
                np.column_stack([part, run.traj_times, run.traj_states]),
                fmt=["%d", "%.17g", "%d"],
                delimiter=",",
            )
    meta = {
        "schema_version": SCHEMA_VERSION,
        "model_hash": run.model.fingerprint(),
        "model": run.model.to_dict(),
        "N": run.N,
        "horizon": run.horizon,
        "seed": run.rng_seed if isinstance(run.rng_seed, (int, dict)) else None,
        "n_events": run.n_events,
        "initial_states": run.initial_states.tolist(),
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=int) + "\n")


def read_bundle(directory) -> FvRun:
    """Inverse of :func:`write_bundle` (requires ``trajectories.csv``)."""
    d = FsPath(directory)
    meta = json.loads((d / "meta.json").read_text())
    model = validate_model(meta["model"]["Q"])
    ev = np.loadtxt(d / "events.csv", delimiter=",", skiprows=1, ndmin=2)
    tr = np.loadtxt(d / "trajectories.csv", delimiter=",", skiprows=1, ndmin=2)
    init = np.asarray(meta["initial_states"], dtype=np.int64)
    N = int(meta["N"])
    part = tr[:, 0].astype(np.int64)
    offsets = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(part, minlength=N), out=offsets[1:])
    if ev.size == 0:
        ev = np.zeros((0, 5))
    return FvRun(
        model,
        N,
        float(meta["horizon"]),
        init,
        offsets,
        tr[:, 1].copy(),
        tr[:, 2].astype(np.int8 if model.n < 127 else np.int64),
        ev[:, 1].copy(),
        ev[:, 2].astype(np.int32),
        ev[:, 3].astype(np.int32),
        ev[:, 4].astype(np.int32),
        meta.get("seed"),
    )
