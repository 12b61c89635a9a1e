"""Q-value iteration as a switched affine system, with Lyapunov certificates."""

from .engine import (
    InvariantReport,
    QviTrace,
    check_invariants,
    orthant_start,
    run_qvi,
    solve_qstar_bruteforce,
    solve_qstar_policy_iteration,
)
from .lyapunov import (
    LyapunovCertificate,
    build_certificate,
    lyapunov_matrix,
    lyapunov_vector,
    verify_m_bounds,
    verify_v_bounds,
    weighted_norm,
)
from .mdp import Mdp, flat_index, qstar_norm_bound, validate
from .policy import action_transition_matrix, bellman_operator, greedy_policy
from .switching import affine_term, sandwich_bounds, switched_system, system_matrix, verify_infnorm_identity

__version__ = "0.1.0"
