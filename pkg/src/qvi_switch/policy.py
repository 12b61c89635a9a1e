"""Greedy policies, the action transition matrix and the Bellman operator."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import SingularEvaluation
from .mdp import Mdp, as_policy, as_qvector, q_table


def greedy_policy(q, mdp: Mdp) -> np.ndarray:
    """Per-state argmax over actions; ties go to the smallest action index."""
    q = as_qvector(q, mdp)
    # np.argmax returns the first maximiser, which is the documented tie-break
    return np.argmax(q_table(q, mdp), axis=1).astype(np.intp)


def selected_indices(pi: np.ndarray, mdp: Mdp) -> np.ndarray:
    """Flat indices ``pi(s) * S + s``: the nonzero columns of the action transition matrix."""
    return np.asarray(pi, dtype=np.intp) * mdp.num_states + np.arange(mdp.num_states)


def action_transition_matrix(pi, mdp: Mdp) -> sp.csr_array:
    """Sparse ``|S| x |S||A|`` selector with row ``s`` equal to ``(e_pi(s) kron e_s)^T``.

    ``P @ action_transition_matrix(pi, mdp)`` is the state-action transition
    matrix under ``pi``.  Call ``.toarray()`` for a dense copy.
    """
    pi = as_policy(pi, mdp)
    S = mdp.num_states
    return sp.csr_array(
        (np.ones(S), (np.arange(S), selected_indices(pi, mdp))),
        shape=(S, mdp.size),
    )


def bellman_operator(q, mdp: Mdp) -> np.ndarray:
    """``F Q = R + gamma * P * Pi_Q * Q``."""
    q = as_qvector(q, mdp)
    pi = greedy_policy(q, mdp)
    return mdp.rewards + mdp.gamma * (mdp.transitions @ q[selected_indices(pi, mdp)])


def policy_q_values(pi, mdp: Mdp) -> np.ndarray:
    """Exact ``Q^pi = (I - gamma P Pi^pi)^{-1} R`` by a dense linear solve."""
    pi = as_policy(pi, mdp)
    chain = np.zeros((mdp.size, mdp.size))
    chain[:, selected_indices(pi, mdp)] = mdp.transitions
    try:
        return np.linalg.solve(np.eye(mdp.size) - mdp.gamma * chain, mdp.rewards)
    except np.linalg.LinAlgError as exc:
        raise SingularEvaluation(f"policy evaluation system is singular: {exc}") from exc
