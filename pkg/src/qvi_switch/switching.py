"""Q-value iteration as a switched affine system.

With ``Delta_k = Q_k - Q*`` the iteration reads

    Delta_{k+1} = A_{Q_k} Delta_k + b_{Q_k},
    A_Q = gamma P Pi_Q,   b_Q = gamma P (Pi_Q - Pi_{Q*}) Q*,

where the mode is the greedy policy of the current iterate.  Every mode
matrix is nonnegative with row sums equal to gamma, and ``b_Q <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundViolation
from .mdp import Mdp, as_qvector
from .policy import action_transition_matrix, bellman_operator, greedy_policy

VIOLATION_TOL = 1e-9
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SwitchedAffineSystem:
    a_matrix: np.ndarray
    b_vector: np.ndarray
    mode_policy: np.ndarray

    def step(self, delta: np.ndarray) -> np.ndarray:
        return self.a_matrix @ delta + self.b_vector


def system_matrix(q, mdp: Mdp) -> np.ndarray:
    pi = greedy_policy(q, mdp)
    return mdp.gamma * (mdp.transitions @ action_transition_matrix(pi, mdp))


def affine_term(q, qstar, mdp: Mdp) -> np.ndarray:
    qstar = as_qvector(qstar, mdp)
    pi_q = action_transition_matrix(greedy_policy(q, mdp), mdp)
    pi_star = action_transition_matrix(greedy_policy(qstar, mdp), mdp)
    return mdp.gamma * (mdp.transitions @ ((pi_q - pi_star) @ qstar))


def switched_system(q, qstar, mdp: Mdp) -> SwitchedAffineSystem:
    return SwitchedAffineSystem(
        a_matrix=system_matrix(q, mdp),
        b_vector=affine_term(q, qstar, mdp),
        mode_policy=greedy_policy(q, mdp),
    )


@dataclass(frozen=True)
class SandwichReport:
    """Componentwise slack of ``A_{Q*} D_k <= D_{k+1} <= A_{Q_k} D_k``.

    Nonnegative slack means the inequality holds.  ``qstar_residual`` is
    ``||F Q* - Q*||_inf`` of the supplied optimum, so violations caused by an
    inexact ``Q*`` can be told apart from implementation bugs.
    """

    lower_slack: np.ndarray
    upper_slack: np.ndarray
    qstar_residual: float

    @property
    def min_lower(self) -> float:
        return float(self.lower_slack.min())

    @property
    def min_upper(self) -> float:
        return float(self.upper_slack.min())

    @property
    def passed(self) -> bool:
        return min(self.min_lower, self.min_upper) >= -VIOLATION_TOL


def sandwich_bounds(q_k, q_next, qstar, mdp: Mdp, *, strict: bool = True) -> SandwichReport:
    """Slack report for one step; raises :class:`BoundViolation` when ``strict``."""
    q_k = as_qvector(q_k, mdp)
    q_next = as_qvector(q_next, mdp)
    qstar = as_qvector(qstar, mdp)
    delta = q_k - qstar
    delta_next = q_next - qstar
    report = SandwichReport(
        lower_slack=delta_next - system_matrix(qstar, mdp) @ delta,
        upper_slack=system_matrix(q_k, mdp) @ delta - delta_next,
        qstar_residual=float(np.abs(bellman_operator(qstar, mdp) - qstar).max()),
    )
    if strict and not report.passed:
        raise BoundViolation(
            f"sandwich bound violated: lower slack {report.min_lower:.3e}, "
            f"upper slack {report.min_upper:.3e} (Q* residual {report.qstar_residual:.3e})"
        )
    return report


def verify_infnorm_identity(q, mdp: Mdp) -> float:
    """Return ``||A_Q||_inf``; every row of ``A_Q`` must sum to exactly gamma."""
    a = system_matrix(q, mdp)
    row_sums = np.abs(a).sum(axis=1)
    if np.abs(row_sums - mdp.gamma).max() > ROW_SUM_TOL:
        raise BoundViolation(f"A_Q row sums deviate from gamma={mdp.gamma}: {row_sums}")
    return float(row_sums.max())
