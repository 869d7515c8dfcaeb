"""Finite-state continuous-time Markov chains with an absorbing cemetery.

States are the integers ``0..n``; state ``0`` is the cemetery and
``F = {1, ..., n}`` is the interior. Distributions "over F" are length-``n``
arrays whose entry ``x - 1`` is the mass of state ``x``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np
from scipy.sparse.csgraph import connected_components

from ._rng import Draws, as_generator
from .errors import (
    ModelFileError,
    ModelValidationError,
    NegativeTimeError,
    NoConvergence,
    SingularSystem,
    VanishingSurvivalProbability,
)
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "FiniteChainModel",
    "Path",
    "QsdResult",
    "QProcess",
    "validate_model",
    "load_model",
    "dump_model",
    "expm_uniformized",
    "transition_matrix",
    "simulate_path",
    "survival_conditioned_dist",
    "qsd",
    "lambda_t",
    "qprocess_generator",
    "simulate_qprocess",
    "stationary_distribution",
    "as_distribution",
]


@dataclass(frozen=True, eq=False)
class FiniteChainModel:
    """Validated cemetery-augmented rate matrix. Build with :func:`validate_model`."""

    Q: np.ndarray

    @property
    def n(self) -> int:
        """Number of interior states."""
        return self.Q.shape[0] - 1

    @property
    def Q_F(self) -> np.ndarray:
        """Sub-generator restricted to the interior states."""
        return self.Q[1:, 1:]

    @property
    def killing_rates(self) -> np.ndarray:
        """Rate of jumping to the cemetery from each interior state."""
        return self.Q[1:, 0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.Q).copy()

    def to_dict(self) -> dict:
        return {"states": int(self.Q.shape[0]), "Q": self.Q.tolist()}

    def fingerprint(self) -> str:
        import hashlib

        payload = json.dumps(self.Q.tolist(), separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def __repr__(self):
        return f"FiniteChainModel(n={self.n})"


class Path:
    """Right-continuous piecewise-constant path on ``[start_time, end_time]``.

    ``times[i]`` is the time the path enters ``states[i]``; the state holds on
    ``[times[i], times[i+1])``. The cemetery may appear only as the last
    segment.
    """

    __slots__ = ("times", "states", "end_time")

    def __init__(self, times, states, end_time, check=True):
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=np.int64)
        end_time = float(end_time)
        if check:
            if times.ndim != 1 or times.shape != states.shape or times.size == 0:
                raise ValueError("times and states must be non-empty 1-d arrays of equal length")
            if times.size > 1 and not np.all(np.diff(times) > 0):
                raise ValueError("entry times must be strictly increasing")
            if end_time < times[-1]:
                raise ValueError("end_time precedes the last entry time")
            dead = np.flatnonzero(states == 0)
            if dead.size > 1 or (dead.size == 1 and dead[0] != states.size - 1):
                raise ValueError("the cemetery may only appear as the final segment")
        self.times = times
        self.states = states
        self.end_time = end_time

    @property
    def start_time(self) -> float:
        return float(self.times[0])

    @property
    def segments(self):
        return list(zip(self.times.tolist(), self.states.tolist()))

    @property
    def absorbed(self) -> bool:
        return bool(self.states[-1] == 0)

    @property
    def absorption_time(self) -> float:
        return float(self.times[-1]) if self.absorbed else math.inf

    @property
    def final_state(self) -> int:
        return int(self.states[-1])

    def __len__(self):
        return self.times.size

    def state_at(self, t: float) -> int:
        if t < self.times[0] or t > self.end_time:
            raise ValueError(f"t={t} outside [{self.start_time}, {self.end_time}]")
        return int(self.states[np.searchsorted(self.times, t, side="right") - 1])

    def states_at(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        return self.states[np.searchsorted(self.times, ts, side="right") - 1]

    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.end_time))

    def occupancy(self, n_states: int) -> np.ndarray:
        """Time spent in each state ``0..n_states-1``."""
        return np.bincount(self.states, weights=self.durations(), minlength=n_states)

    def restrict(self, a: float, b: float) -> "Path":
        """The path on ``[a, b]``."""
        if a < self.times[0] or b > self.end_time or a > b:
            raise ValueError(f"[{a}, {b}] not inside [{self.start_time}, {self.end_time}]")
        i = np.searchsorted(self.times, a, side="right") - 1
        j = np.searchsorted(self.times, b, side="right")
        times = self.times[i:j].copy()
        times[0] = a
        return Path(times, self.states[i:j].copy(), b, check=False)

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        return (
            self.end_time == other.end_time
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    def __repr__(self):
        return f"Path({self.segments!r}, end_time={self.end_time!r})"


def concat_pieces(pieces, end_time) -> Path:
    """Glue ``(times, states)`` pieces, dropping repeated states at the seams."""
    times = np.concatenate([p[0] for p in pieces])
    states = np.concatenate([p[1] for p in pieces])
    keep = np.ones(states.size, dtype=bool)
    keep[1:] = states[1:] != states[:-1]
    return Path(times[keep], states[keep], end_time, check=False)


# ----------------------------------------------------------------------------
# validation and I/O


def validate_model(Q, policy: NumericPolicy = DEFAULT_POLICY) -> FiniteChainModel:
    """Check a raw rate matrix and wrap it as a :class:`FiniteChainModel`.

    Raises :class:`ModelValidationError` listing every violated invariant.
    """
    try:
        Q = np.array(Q, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelValidationError([("NotSquare", f"not a numeric matrix: {exc}")]) from None
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ModelValidationError([("NotSquare", f"shape {Q.shape} is not square")])
    if Q.shape[0] < 2:
        raise ModelValidationError([("TooSmall", "need at least the cemetery and one interior state")])
    if not np.all(np.isfinite(Q)):
        raise ModelValidationError([("NonFinite", "matrix has non-finite entries")])

    issues = []
    size = Q.shape[0]
    off = ~np.eye(size, dtype=bool)
    for i, j in zip(*np.nonzero(off & (Q < 0))):
        issues.append(("NegativeOffDiagonal", f"Q[{i}][{j}] = {float(Q[i, j])!r} < 0"))
    scale = np.maximum(1.0, np.abs(Q).max(axis=1))
    for i in np.flatnonzero(np.abs(Q.sum(axis=1)) > policy.row_sum_tol * scale):
        issues.append(("NonZeroRowSum", f"row {i} sums to {Q[i].sum()!r}"))
    if np.any(Q[0] != 0):
        issues.append(("CemeteryNotAbsorbing", "row 0 must be identically zero"))

    adj = (Q > 0) & off
    n = size - 1
    if n > 1:
        ncomp, _ = connected_components(adj[1:, 1:].astype(np.int8), directed=True, connection="strong")
        if ncomp != 1:
            issues.append(("InteriorNotCommunicating", f"interior splits into {ncomp} communicating classes"))
    # states that can reach 0, by backwards search on the support graph
    reach = np.zeros(size, dtype=bool)
    reach[0] = True
    frontier = [0]
    while frontier:
        j = frontier.pop()
        for i in np.flatnonzero(adj[:, j] & ~reach):
            reach[i] = True
            frontier.append(i)
    stuck = [int(x) for x in np.flatnonzero(~reach[1:]) + 1]
    if stuck:
        issues.append(("CemeteryUnreachable", f"states {stuck} never reach the cemetery"))

    if issues:
        raise ModelValidationError(issues)
    Q.setflags(write=False)
    return FiniteChainModel(Q)


def load_model(path, policy: NumericPolicy = DEFAULT_POLICY) -> FiniteChainModel:
    """Read ``{"states": n+1, "Q": [[...], ...]}`` from a JSON file and validate it."""
    text = FsPath(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or "Q" not in doc:
        raise ModelFileError(f"{path}: expected an object with a 'Q' field")
    Q = doc["Q"]
    if "states" in doc:
        rows = len(Q) if isinstance(Q, list) else -1
        if doc["states"] != rows:
            raise ModelFileError(f"{path}: 'states' is {doc['states']} but Q has {rows} rows")
    return validate_model(Q, policy)


def dump_model(model: FiniteChainModel, path) -> None:
    FsPath(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def as_distribution(weights, size: int, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,):
        raise ValueError(f"distribution must have length {size}, got shape {w.shape}")
    if np.any(w < 0) or abs(w.sum() - 1.0) > policy.distribution_tol * max(1, size):
        raise ValueError("distribution must be non-negative and sum to one")
    return w


# ----------------------------------------------------------------------------
# matrix exponentials


def expm_uniformized(G, t: float, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """``exp(t G)`` for a (sub-)generator by uniformization.

    ``G`` must have non-negative off-diagonal entries and non-positive row
    sums. The Poisson-weighted series of the uniformized kernel is truncated
    once the remaining Poisson mass is below ``policy.expm_tail``; large
    ``rate * t`` is halved until it fits ``policy.uniformization_max_mass`` and
    the result squared back.
    """
    G = np.asarray(G, dtype=float)
    if t < 0:
        raise NegativeTimeError(f"t={t} < 0")
    size = G.shape[0]
    eye = np.eye(size)
    rate = float(np.max(-np.diag(G))) if size else 0.0
    if t == 0 or rate == 0:
        return eye
    mass = rate * t
    squarings = 0
    while mass > policy.uniformization_max_mass:
        mass /= 2.0
        squarings += 1
    P = eye + G / rate
    w = math.exp(-mass)
    term = eye
    out = w * term
    cum = w
    k = 0
    kmax = int(mass + 40.0 * math.sqrt(mass) + 100)
    while 1.0 - cum > policy.expm_tail and k < kmax:
        k += 1
        w *= mass / k
        term = term @ P
        out = out + w * term
        cum += w
    for _ in range(squarings):
        out = out @ out
    return out


def transition_matrix(model: FiniteChainModel, t: float, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Transition probabilities ``P_t = exp(tQ)`` over all of ``E``."""
    return expm_uniformized(model.Q, t, policy)


# ----------------------------------------------------------------------------
# path simulation


def _jump_tables(Q):
    """Per-state (exit rate, destinations, cumulative probabilities)."""
    tables = []
    for x in range(Q.shape[0]):
        rate = -Q[x, x]
        dest = np.array([y for y in range(Q.shape[0]) if y != x and Q[x, y] > 0], dtype=np.int64)
        if rate > 0:
            cdf = np.cumsum(Q[x, dest]) / rate
            cdf[-1] = 1.0
        else:
            cdf = np.empty(0)
        tables.append((float(rate), dest.tolist(), cdf.tolist()))
    return tables


def _gillespie(tables, x0, t0, horizon, draws, absorbing=0, offset=0):
    """Exact jump-chain simulation; returns lists of entry times and states.

    ``tables`` are indexed by matrix index; ``offset`` is added to matrix
    indices to produce state labels.
    """
    times = [t0]
    states = [x0 + offset]
    t = t0
    x = x0
    while True:
        rate, dest, cdf = tables[x]
        if rate == 0:
            break
        t += draws.exponential(rate)
        if t > horizon:
            break
        u = draws.uniform()
        k = 0
        while cdf[k] < u:
            k += 1
        x = dest[k]
        times.append(t)
        states.append(x + offset)
        if x + offset == absorbing:
            break
    return times, states


def simulate_path(model: FiniteChainModel, x0: int, horizon: float, rng=None) -> Path:
    """Exact path of ``Y`` from ``x0`` at time 0, stopped at absorption or ``horizon``."""
    if not 1 <= x0 <= model.n:
        raise ValueError(f"x0={x0} is not an interior state")
    if horizon < 0:
        raise NegativeTimeError(f"horizon={horizon} < 0")
    draws = rng if isinstance(rng, Draws) else Draws(as_generator(rng), block=256)
    times, states = _gillespie(_jump_tables(model.Q), x0, 0.0, horizon, draws)
    end = times[-1] if states[-1] == 0 else horizon
    return Path(times, states, end, check=False)


# ----------------------------------------------------------------------------
# conditioned laws


def survival_conditioned_dist(model: FiniteChainModel, mu0, t: float, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Law of ``Y_t`` given ``Y_0 ~ mu0`` and survival past ``t``, over ``F``."""
    mu0 = as_distribution(mu0, model.n, policy)
    if t < 0:
        raise NegativeTimeError(f"t={t} < 0")
    if t == 0:
        return mu0.copy()
    p = mu0 @ expm_uniformized(model.Q_F, t, policy)
    mass = p.sum()
    if not mass >= policy.survival_floor:
        raise VanishingSurvivalProbability(f"survival probability {mass!r} at t={t}")
    return p / mass


def lambda_t(model: FiniteChainModel, mu0, t: float, policy: NumericPolicy = DEFAULT_POLICY) -> float:
    """Killing rate of the survival-conditioned chain at time ``t``."""
    return float(survival_conditioned_dist(model, mu0, t, policy) @ model.killing_rates)


@dataclass(frozen=True, eq=False)
class QsdResult:
    nu: np.ndarray
    """Quasi-stationary distribution over F (sums to one)."""
    lambda_inf: float
    """Perron decay rate of the sub-generator."""
    phi: np.ndarray
    """Right Perron eigenvector over F, scaled to max entry one."""
    iterations: int = 0


def qsd(model: FiniteChainModel, policy: NumericPolicy = DEFAULT_POLICY) -> QsdResult:
    """Left/right Perron pair of ``Q_F`` by power iteration on ``exp(delta Q_F)``.

    ``delta = 1 / (2 max |Q_F[x, x]|)``; iteration stops when successive left
    and right iterates agree to ``policy.qsd_tol`` in the sup norm.
    """
    QF = model.Q_F
    n = model.n
    if n == 1:
        return QsdResult(np.ones(1), float(-QF[0, 0]), np.ones(1), 0)
    delta = 1.0 / (2.0 * np.max(np.abs(np.diag(QF))))
    K = expm_uniformized(QF, delta, policy)
    nu = np.full(n, 1.0 / n)
    phi = np.ones(n)
    for it in range(1, policy.qsd_max_iter + 1):
        nu_new = nu @ K
        nu_new /= nu_new.sum()
        phi_new = K @ phi
        phi_new /= phi_new.max()
        done = np.max(np.abs(nu_new - nu)) < policy.qsd_tol and np.max(np.abs(phi_new - phi)) < policy.qsd_tol
        nu, phi = nu_new, phi_new
        if done:
            break
    else:
        raise NoConvergence(f"power iteration did not settle in {policy.qsd_max_iter} steps")
    lam = float(-(nu @ QF).sum())
    return QsdResult(nu, lam, phi, it)


def stationary_distribution(A, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Solve ``pi A = 0``, ``sum(pi) = 1`` for an irreducible rate matrix.

    Dense LU with the normalization replacing the last balance equation.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    if m == 1:
        return np.ones(1)
    M = A.T.copy()
    M[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"balance equations are singular: {exc}") from None
    scale = max(1.0, np.abs(A).max())
    resid = np.max(np.abs(pi @ A)) / scale
    if not np.all(np.isfinite(pi)) or resid > policy.residual_tol or np.any(pi < -policy.residual_tol):
        raise SingularSystem(f"no unique stationary distribution (residual {resid:.3g})")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class QProcess:
    """Chain conditioned never to be absorbed, indexed over F."""

    generator: np.ndarray
    stationary: np.ndarray
    phi: np.ndarray


def qprocess_generator(model: FiniteChainModel, policy: NumericPolicy = DEFAULT_POLICY) -> QProcess:
    """Doob transform of ``Q_F`` by its right Perron vector ``phi``."""
    res = qsd(model, policy)
    phi = res.phi
    G = model.Q_F * phi[None, :] / phi[:, None]
    np.fill_diagonal(G, 0.0)
    np.fill_diagonal(G, -G.sum(axis=1))
    G.setflags(write=False)
    return QProcess(G, stationary_distribution(G, policy), phi)


def simulate_qprocess(model: FiniteChainModel, x0: int, horizon: float, rng=None, qprocess: QProcess | None = None) -> Path:
    """Path of the never-absorbed chain from ``x0``; states are labelled ``1..n``."""
    if not 1 <= x0 <= model.n:
        raise ValueError(f"x0={x0} is not an interior state")
    if horizon < 0:
        raise NegativeTimeError(f"horizon={horizon} < 0")
    qp = qprocess if qprocess is not None else qprocess_generator(model)
    draws = rng if isinstance(rng, Draws) else Draws(as_generator(rng), block=256)
    times, states = _gillespie(_jump_tables(qp.generator), x0 - 1, 0.0, horizon, draws, absorbing=-1, offset=1)
    return Path(times, states, horizon, check=False)
