"""Exact analysis of the two-particle Fleming-Viot system.

Pair states ``(x, y)`` with ``x, y`` in ``F = {1..n}`` are flattened
lexicographically: ``(x, y) -> (x - 1) * n + (y - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctmc import FiniteChainModel, qprocess_generator, qsd, stationary_distribution
from .errors import SingularSystem
from .policy import DEFAULT_POLICY, NumericPolicy

__all__ = [
    "PairModel",
    "RaceSolution",
    "SpineMarginal",
    "product_generator",
    "stationary",
    "race_harmonic",
    "spine_marginal",
    "fixed_n_gap_report",
]


@dataclass(frozen=True, eq=False)
class PairModel:
    base: FiniteChainModel
    A_pair: np.ndarray

    @property
    def n(self) -> int:
        return self.base.n

    def index(self, x: int, y: int) -> int:
        return (x - 1) * self.n + (y - 1)

    def pair(self, k: int) -> tuple[int, int]:
        return k // self.n + 1, k % self.n + 1

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [self.pair(k) for k in range(self.n * self.n)]


def product_generator(model: FiniteChainModel) -> PairModel:
    """Rate matrix of the pair: independent moves plus kill-and-adopt.

    A killed coordinate instantly takes the other coordinate's state, so the
    killing rate ``Q[x, 0]`` of the first coordinate sends ``(x, y)`` to
    ``(y, y)`` and symmetrically for the second.
    """
    n = model.n
    QF = model.Q_F
    q0 = model.killing_rates
    A = np.kron(QF, np.eye(n)) + np.kron(np.eye(n), QF)
    for x in range(n):
        for y in range(n):
            k = x * n + y
            A[k, y * n + y] += q0[x]
            A[k, x * n + x] += q0[y]
    np.fill_diagonal(A, 0.0)
    np.fill_diagonal(A, -A.sum(axis=1))
    A.setflags(write=False)
    return PairModel(model, A)


def stationary(A, policy: NumericPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Stationary law ``pi A = 0`` of an irreducible rate matrix."""
    return stationary_distribution(A, policy)


@dataclass(frozen=True, eq=False)
class RaceSolution:
    f: np.ndarray
    """``f[x-1, y-1]``: probability that the second of two independent copies
    started at ``(x, y)`` is absorbed first."""

    def __call__(self, x: int, y: int) -> float:
        return float(self.f[x - 1, y - 1])


def race_harmonic(model: FiniteChainModel, policy: NumericPolicy = DEFAULT_POLICY) -> RaceSolution:
    """Absorption race between two independent copies of the chain.

    Solves ``(Q_F (x) I + I (x) Q_F) f = -1 (x) q_0`` on ``F x F``; the boundary
    values are ``f(x, 0) = 1`` and ``f(0, y) = 0``. Simultaneous absorption has
    probability zero.
    """
    n = model.n
    QF = model.Q_F
    L = np.kron(QF, np.eye(n)) + np.kron(np.eye(n), QF)
    b = -np.tile(model.killing_rates, n)
    try:
        f = np.linalg.solve(L, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"race system is singular: {exc}") from None
    scale = max(1.0, np.abs(L).max())
    resid = np.max(np.abs(L @ f - b)) / scale
    if not np.all(np.isfinite(f)) or resid > policy.residual_tol:
        raise SingularSystem(f"race system residual {resid:.3g}")
    F = f.reshape(n, n)
    sym = np.max(np.abs(F + F.T - 1.0))
    if sym > 1e-8:
        raise SingularSystem(f"race solution violates f(x,y)+f(y,x)=1 by {sym:.3g}")
    F = np.clip(F, 0.0, 1.0)
    F.setflags(write=False)
    return RaceSolution(F)


@dataclass(frozen=True)
class SpineMarginal:
    state: np.ndarray
    """Stationary law of the spine state over F."""
    through_first: float
    """Stationary probability that the spine runs through particle 1."""


def spine_marginal(model: FiniteChainModel, policy: NumericPolicy = DEFAULT_POLICY) -> SpineMarginal:
    """Stationary spine law of the two-particle system.

    At a stationary time the spine follows particle 1 exactly when particle 2
    is absorbed first in the race of two independent copies from the current
    pair state, which gives
    ``P(J = z) = sum_{x,y} pi(x, y) [f(x, y) 1{x = z} + (1 - f(x, y)) 1{y = z}]``.
    """
    n = model.n
    pm = product_generator(model)
    pi = stationary(pm.A_pair, policy).reshape(n, n)
    f = race_harmonic(model, policy).f
    w = pi * f
    state = w.sum(axis=1) + (pi - w).sum(axis=0)
    return SpineMarginal(state / state.sum(), float(w.sum()))


def fixed_n_gap_report(model: FiniteChainModel, policy: NumericPolicy = DEFAULT_POLICY) -> dict:
    """Compare three laws on F: the two-particle spine, the QSD and the Q-process.

    The pairwise gaps are total-variation distances; the ``*_state1`` entries
    give the mass of state 1 under each law.
    """
    n = model.n
    pm = product_generator(model)
    pi = stationary(pm.A_pair, policy)
    race = race_harmonic(model, policy)
    sm = spine_marginal(model, policy)
    q = qsd(model, policy)
    qp = qprocess_generator(model, policy)
    laws = {"spine": sm.state, "qsd": q.nu, "qprocess": qp.stationary}
    names = list(laws)
    gaps = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            gaps[f"{a}-{b}"] = 0.5 * float(np.abs(laws[a] - laws[b]).sum())
    return {
        "n": n,
        "pi": {f"{x},{y}": float(pi[pm.index(x, y)]) for x, y in pm.pairs},
        "f": {f"{x},{y}": race(x, y) for x, y in pm.pairs},
        "spine_marginal": {
            "state": sm.state.tolist(),
            "through_first": sm.through_first,
        },
        "qsd": {"nu": q.nu.tolist(), "lambda_inf": q.lambda_inf, "phi": q.phi.tolist()},
        "qprocess_stationary": qp.stationary.tolist(),
        "state1": {"spine": float(sm.state[0]), "qsd": float(q.nu[0]), "qprocess": float(qp.stationary[0])},
        "gaps": gaps,
    }
