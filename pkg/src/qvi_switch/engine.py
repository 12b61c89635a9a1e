"""Ground-truth Q*, instrumented Q-value iteration and the invariant checker."""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ClaimViolation, TooManyPolicies
from .lyapunov import LyapunovCertificate, weighted_norm
from .mdp import Mdp, as_qvector, qstar_norm_bound
from .policy import bellman_operator, greedy_policy, policy_q_values, selected_indices
from .switching import system_matrix

CLAIM_TOL = 1e-9
DEFAULT_ITERS = 200
MAX_ENUMERATED_POLICIES = 1_000_000

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not_applicable"

CLAIMS = (
    "infnorm_contraction",
    "geometric_rate",
    "sandwich_bounds",
    "orthant_invariance",
    "m_norm_contraction",
    "linear_functional",
    "cumulative_linear",
)
ORTHANT_CLAIMS = CLAIMS[3:]
CERTIFICATE_CLAIMS = CLAIMS[4:]


def bellman_residual(q, mdp: Mdp) -> float:
    return float(np.abs(bellman_operator(q, mdp) - q).max())


def solve_qstar_policy_iteration(mdp: Mdp) -> np.ndarray:
    """Exact ``Q*`` by policy iteration with linear-solve policy evaluation.

    Stops as soon as the greedy policy repeats one already evaluated, which
    also ends tie-induced cycles between equally good policies.
    """
    pi = greedy_policy(mdp.rewards, mdp)
    seen = set()
    while True:
        seen.add(pi.tobytes())
        q = policy_q_values(pi, mdp)
        pi = greedy_policy(q, mdp)
        if pi.tobytes() in seen:
            return q


def solve_qstar_bruteforce(mdp: Mdp) -> np.ndarray:
    """Componentwise max of ``Q^pi`` over every deterministic policy (test oracle)."""
    count = mdp.num_actions**mdp.num_states
    if count > MAX_ENUMERATED_POLICIES:
        raise TooManyPolicies(f"{count} deterministic policies exceed the cap of {MAX_ENUMERATED_POLICIES}")
    best = np.full(mdp.size, -np.inf)
    for pi in itertools.product(range(mdp.num_actions), repeat=mdp.num_states):
        np.maximum(best, policy_q_values(np.array(pi, dtype=np.intp), mdp), out=best)
    return best


def orthant_start(mdp: Mdp) -> np.ndarray:
    return np.full(mdp.size, -qstar_norm_bound(mdp))


def policy_hash(pi) -> str:
    text = ",".join(str(int(a)) for a in pi)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass
class StepRecord:
    k: int
    inf_norm: float
    policy: tuple[int, ...]
    orthant_slack: float  # min_i (Q* - Q_k)_i
    lower_slack: float | None = None  # min of D_{k+1} - A_{Q*} D_k; None on the last iterate
    upper_slack: float | None = None  # min of A_{Q_k} D_k - D_{k+1}
    m_norm: float | None = None
    v_functional: float | None = None


@dataclass
class QviTrace:
    mdp: Mdp
    iterates: np.ndarray  # (K+1, S*A)
    qstar: np.ndarray
    qstar_residual: float
    steps: list[StepRecord]
    certificate: LyapunovCertificate | None = None

    @property
    def num_iters(self) -> int:
        return len(self.iterates) - 1

    @property
    def deltas(self) -> np.ndarray:
        return self.iterates - self.qstar

    @property
    def starts_in_orthant(self) -> bool:
        return bool(np.all(self.iterates[0] <= self.qstar))

    def to_dict(self, full_vectors: bool = False) -> dict:
        out = {
            "num_iters": self.num_iters,
            "qstar_residual": self.qstar_residual,
            "steps": [vars(s) | {"policy": list(s.policy)} for s in self.steps],
        }
        if full_vectors:
            out["qstar"] = self.qstar.tolist()
            out["iterates"] = self.iterates.tolist()
        return out


def _fill_certificate_metrics(trace: QviTrace, cert: LyapunovCertificate) -> None:
    for step, d in zip(trace.steps, trace.deltas):
        step.m_norm = weighted_norm(cert.m_matrix, d)
        step.v_functional = float(cert.v_vector @ d)


def run_qvi(
    mdp: Mdp,
    q0,
    num_iters: int = DEFAULT_ITERS,
    *,
    qstar=None,
    certificate: LyapunovCertificate | None = None,
) -> QviTrace:
    """Run ``Q_{k+1} = F Q_k`` for ``num_iters`` steps and record per-step metrics.

    ``qstar`` defaults to the policy-iteration solution; the trace never uses
    value iteration to judge itself.
    """
    if num_iters < 0:
        raise ValueError("num_iters must be nonnegative")
    q = as_qvector(q0, mdp).copy()
    qstar = solve_qstar_policy_iteration(mdp) if qstar is None else as_qvector(qstar, mdp)
    a_star = system_matrix(qstar, mdp)

    iterates = np.empty((num_iters + 1, mdp.size))
    iterates[0] = q
    steps = []
    for k in range(num_iters + 1):
        delta = q - qstar
        pi = greedy_policy(q, mdp)
        step = StepRecord(
            k=k,
            inf_norm=float(np.abs(delta).max()),
            policy=tuple(int(a) for a in pi),
            orthant_slack=float((-delta).min()),
        )
        steps.append(step)
        if k == num_iters:
            break
        q = mdp.rewards + mdp.gamma * (mdp.transitions @ q[selected_indices(pi, mdp)])
        iterates[k + 1] = q
        delta_next = q - qstar
        upper = mdp.gamma * (mdp.transitions @ delta[selected_indices(pi, mdp)])
        step.lower_slack = float((delta_next - a_star @ delta).min())
        step.upper_slack = float((upper - delta_next).min())

    trace = QviTrace(mdp, iterates, qstar, bellman_residual(qstar, mdp), steps, certificate)
    if certificate is not None:
        _fill_certificate_metrics(trace, certificate)
    return trace


@dataclass
class ClaimResult:
    status: str
    worst_slack: float | None = None
    worst_k: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {"status": self.status, "worst_slack": self.worst_slack, "worst_k": self.worst_k, "note": self.note}


@dataclass
class InvariantReport:
    claims: dict[str, ClaimResult]
    qstar_residual: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failed_claims

    @property
    def failed_claims(self) -> list[str]:
        return [name for name, c in self.claims.items() if c.status == FAIL]

    def raise_if_failed(self) -> None:
        for name in self.failed_claims:
            c = self.claims[name]
            raise ClaimViolation(name, c.worst_k, c.worst_slack)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "qstar_residual": self.qstar_residual,
            "claims": {name: c.to_dict() for name, c in self.claims.items()},
            "diagnostics": self.diagnostics,
        }


def _judge(slacks: np.ndarray, ks: np.ndarray | None = None) -> ClaimResult:
    """Slack is ``rhs - lhs``; a claim passes when every slack is >= -CLAIM_TOL."""
    if slacks.size == 0:
        return ClaimResult(PASS, note="no steps")
    i = int(np.argmin(slacks))
    k = int(ks[i]) if ks is not None else i
    worst = float(slacks[i])
    return ClaimResult(PASS if worst >= -CLAIM_TOL else FAIL, worst, k)


def check_invariants(trace: QviTrace, cert: LyapunovCertificate | None = None) -> InvariantReport:
    """Evaluate every per-step inequality along ``trace``.

    Orthant, M-norm and linear-functional claims are marked not applicable
    unless ``Q_0 <= Q*``; the latter three also need a certificate.
    """
    cert = cert if cert is not None else trace.certificate
    mdp = trace.mdp
    gamma = mdp.gamma
    d = trace.deltas
    K = trace.num_iters
    inf = np.abs(d).max(axis=1)
    claims: dict[str, ClaimResult] = {}
    diagnostics: dict = {}

    claims["infnorm_contraction"] = _judge(gamma * inf[:-1] - inf[1:])
    claims["geometric_rate"] = _judge(gamma ** np.arange(K + 1) * inf[0] - inf)
    sandwich = np.array([min(s.lower_slack, s.upper_slack) for s in trace.steps[:-1]])
    claims["sandwich_bounds"] = _judge(sandwich)

    if not trace.starts_in_orthant:
        for name in ORTHANT_CLAIMS:
            claims[name] = ClaimResult(NOT_APPLICABLE, note="Q_0 is not below Q*")
        return InvariantReport(claims, trace.qstar_residual, diagnostics)

    claims["orthant_invariance"] = _judge((-d).min(axis=1))

    if cert is None:
        for name in CERTIFICATE_CLAIMS:
            claims[name] = ClaimResult(NOT_APPLICABLE, note="no certificate supplied")
        return InvariantReport(claims, trace.qstar_residual, diagnostics)

    rho = cert.rate
    m_norms = np.sqrt(np.maximum(np.einsum("ki,ij,kj->k", d, cert.m_matrix, d), 0.0))
    claims["m_norm_contraction"] = _judge(rho * m_norms[:-1] - m_norms[1:])

    vf = d @ cert.v_vector
    wf = d @ cert.w_vector
    ks = np.arange(K)
    lower = vf[1:] - rho * vf[:-1]
    upper = -vf[1:]
    claims["linear_functional"] = _judge(np.concatenate([lower, upper]), np.concatenate([ks, ks + 1]))
    ks_all = np.arange(K + 1)
    cum_lower = vf - rho**ks_all * vf[0]
    claims["cumulative_linear"] = _judge(np.concatenate([cum_lower, -vf]), np.concatenate([ks_all, ks_all]))

    sharp = vf[1:] - rho * (vf[:-1] - wf[:-1])
    sharp_result = _judge(sharp)  # two-term lower bound before the w-term is dropped
    diagnostics["linear_functional_sharp"] = sharp_result.to_dict()
    return InvariantReport(claims, trace.qstar_residual, diagnostics)
