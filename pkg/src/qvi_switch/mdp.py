"""Finite discounted MDP data model.

State-action vectors use zero-based action-major indexing: the entry for
``(s, a)`` lives at ``a * num_states + s``.  Transitions are stored stacked
in the same order, ``P[a * S + s, s'] = P(s' | s, a)``, so ``P @ V`` lines up
with a Q-vector without any permutation.

Q-vectors and deterministic policies are plain numpy arrays (float64 of
length ``S * A`` and int of length ``S`` respectively); use
:func:`as_qvector` and :func:`as_policy` to check them against an MDP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadGamma, IndexOutOfRange, InputError, NonStochasticRow, RewardOutOfBounds

ROW_SUM_TOL = 1e-12


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True, eq=False)
class Mdp:
    """Validated MDP.  Build with :func:`validate`, not directly."""

    num_states: int
    num_actions: int
    gamma: float
    transitions: np.ndarray  # (S*A, S), action-major rows
    rewards: np.ndarray  # (S*A,), expected one-step reward

    @property
    def size(self) -> int:
        return self.num_states * self.num_actions

    def transition_blocks(self) -> np.ndarray:
        """Transitions reshaped to ``[action][from][to]``."""
        return self.transitions.reshape(self.num_actions, self.num_states, self.num_states)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mdp):
            return NotImplemented
        return (
            self.num_states == other.num_states
            and self.num_actions == other.num_actions
            and self.gamma == other.gamma
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.rewards, other.rewards)
        )

    __hash__ = None  # type: ignore[assignment]


def validate(num_states, num_actions, gamma, transitions, rewards) -> Mdp:
    """Check the standing assumptions and return an immutable :class:`Mdp`.

    ``transitions`` may be given stacked ``(S*A, S)`` or as ``(A, S, S)``.
    ``rewards`` is either the expected-reward vector ``(S*A,)`` or a full
    ``(A, S, S)`` tensor ``r(s, a, s')``; a tensor is bounds-checked entrywise
    and then contracted to ``R(s, a) = sum_s' P(s'|s,a) r(s,a,s')``.
    """
    if int(num_states) != num_states or int(num_actions) != num_actions:
        raise InputError("num_states and num_actions must be integers")
    S, A = int(num_states), int(num_actions)
    if S < 1 or A < 1:
        raise InputError(f"need at least one state and one action, got S={S}, A={A}")

    gamma = float(gamma)
    if not np.isfinite(gamma) or not 0.0 <= gamma < 1.0:
        raise BadGamma(f"discount must lie in [0, 1), got {gamma!r}")

    P = np.asarray(transitions, dtype=float)
    if P.shape == (A, S, S):
        P = P.reshape(A * S, S)
    if P.shape != (S * A, S):
        raise InputError(f"transitions have shape {P.shape}, expected ({A}, {S}, {S}) or ({S * A}, {S})")
    if not np.all(np.isfinite(P)):
        raise InputError("transitions contain non-finite entries")
    bad = np.flatnonzero((P < 0).any(axis=1) | (P > 1).any(axis=1))
    if bad.size:
        i = int(bad[0])
        raise NonStochasticRow(f"row (s={i % S}, a={i // S}) has an entry outside [0, 1]")
    dev = np.abs(P.sum(axis=1) - 1.0)
    if dev.max() > ROW_SUM_TOL:
        i = int(dev.argmax())
        raise NonStochasticRow(f"row (s={i % S}, a={i // S}) sums to {P[i].sum()!r}")

    r = np.asarray(rewards, dtype=float)
    if not np.all(np.isfinite(r)):
        raise InputError("rewards contain non-finite entries")
    if r.shape == (A, S, S):
        if np.abs(r).max() > 1.0:
            raise RewardOutOfBounds(f"max |r(s,a,s')| = {np.abs(r).max()!r} exceeds 1")
        r = np.einsum("ij,ij->i", P, r.reshape(A * S, S))
    elif r.shape != (S * A,):
        raise InputError(f"rewards have shape {r.shape}, expected ({S * A},) or ({A}, {S}, {S})")
    if np.abs(r).max() > 1.0:
        raise RewardOutOfBounds(f"max |R(s,a)| = {np.abs(r).max()!r} exceeds 1")

    return Mdp(S, A, gamma, _frozen(P), _frozen(r))


def flat_index(s: int, a: int, mdp: Mdp) -> int:
    if not (0 <= s < mdp.num_states and 0 <= a < mdp.num_actions):
        raise IndexOutOfRange(f"(s={s}, a={a}) outside {mdp.num_states} states x {mdp.num_actions} actions")
    return a * mdp.num_states + s


def qstar_norm_bound(mdp: Mdp) -> float:
    """Upper bound ``1 / (1 - gamma)`` on ``||Q*||_inf`` under unit-bounded rewards."""
    return 1.0 / (1.0 - mdp.gamma)


def as_qvector(q, mdp: Mdp) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (mdp.size,):
        raise InputError(f"Q-vector has shape {q.shape}, expected ({mdp.size},)")
    return q


def as_policy(pi, mdp: Mdp) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (mdp.num_states,) or not np.issubdtype(pi.dtype, np.integer):
        raise InputError(f"policy must be an integer array of length {mdp.num_states}")
    if pi.size and (pi.min() < 0 or pi.max() >= mdp.num_actions):
        raise IndexOutOfRange(f"policy uses an action outside 0..{mdp.num_actions - 1}")
    return pi.astype(np.intp, copy=False)


def q_table(q: np.ndarray, mdp: Mdp) -> np.ndarray:
    """View a Q-vector as an ``(S, A)`` table."""
    return np.asarray(q).reshape(mdp.num_actions, mdp.num_states).T
