"""Quadratic and linear Lyapunov certificates for the optimal-mode system.

For ``A = A_{Q*}`` (nonnegative, row sums gamma) and ``rho = gamma + eps``:

* ``M = sum_k rho^{-2k} (A^k)^T A^k`` solves ``A^T M A = rho^2 (M - I)``,
  is entrywise nonnegative and satisfies ``M >= I``.
* ``v = (sum_i rho^{-i} A^i)^T w`` solves ``(I - A^T / rho) v = w`` and
  satisfies ``v^T A = rho (v^T - w^T)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BadEpsilon, CertificateInvalid, InputError, NonConvergentSeries, NonPositiveW
from .mdp import Mdp

SERIES_TERM_TOL = 1e-14
SERIES_MAX_TERMS = 1_000_000
LYAPUNOV_RESIDUAL_TOL = 1e-8
VECTOR_RESIDUAL_TOL = 1e-9
LAMBDA_MIN_TOL = 1e-9
LAMBDA_MAX_TOL = 1e-6
NONNEGATIVE_TOL = 1e-12
# relative slack used when comparing ||v||_inf against its closed-form bounds
NORM_BOUND_RTOL = 1e-12


def default_epsilon(gamma: float) -> float:
    return (1.0 - gamma) / 2.0


def check_epsilon(gamma: float, epsilon: float) -> None:
    if not (epsilon > 0 and 0 < gamma + epsilon < 1):
        raise BadEpsilon(f"need eps > 0 and gamma + eps in (0, 1); got gamma={gamma}, eps={epsilon}")


def _check_a(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"system matrix must be square, got shape {a.shape}")
    return a


def lyapunov_residual(a: np.ndarray, m: np.ndarray, rho: float) -> float:
    """``||A^T M A - rho^2 (M - I)||_inf``."""
    r = a.T @ m @ a - rho**2 * (m - np.eye(len(m)))
    return float(np.abs(r).sum(axis=1).max())


@dataclass(frozen=True)
class SeriesInfo:
    residual: float
    terms: int


def lyapunov_matrix(a_star, gamma: float, epsilon: float) -> tuple[np.ndarray, SeriesInfo]:
    """Sum the series for ``M`` until a term's inf-norm drops below 1e-14."""
    check_epsilon(gamma, epsilon)
    a = _check_a(a_star)
    rho = gamma + epsilon
    n = len(a)
    scaled = a / rho
    power = np.eye(n)  # (A / rho)^k
    m = np.zeros((n, n))
    for k in range(SERIES_MAX_TERMS):
        term = power.T @ power
        m += term
        if np.abs(term).sum(axis=1).max() < SERIES_TERM_TOL:
            break
        power = power @ scaled
    else:
        raise NonConvergentSeries(f"Lyapunov series did not converge in {SERIES_MAX_TERMS} terms")
    m = 0.5 * (m + m.T)
    return m, SeriesInfo(residual=lyapunov_residual(a, m, rho), terms=k + 1)


def lyapunov_vector(a_star, gamma: float, epsilon: float, w) -> np.ndarray:
    """Closed form of the Neumann series: solve ``(I - A^T / rho) v = w``."""
    check_epsilon(gamma, epsilon)
    a = _check_a(a_star)
    w = np.asarray(w, dtype=float)
    if w.shape != (len(a),):
        raise InputError(f"w has shape {w.shape}, expected ({len(a)},)")
    if not np.all(w > 0):
        raise NonPositiveW("w must be strictly positive")
    rho = gamma + epsilon
    return np.linalg.solve(np.eye(len(a)) - a.T / rho, w)


def vector_residual(a: np.ndarray, v: np.ndarray, w: np.ndarray, rho: float) -> float:
    """``||v^T A - rho (v^T - w^T)||_inf``."""
    return float(np.abs(v @ a - rho * (v - w)).max())


def weighted_norm(m_matrix, x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(max(float(x @ m_matrix @ x), 0.0)))


def lambda_max_bound(n: int, gamma: float, epsilon: float) -> float:
    return n / (1.0 - (gamma / (gamma + epsilon)) ** 2)


@dataclass(frozen=True)
class LyapunovCertificate:
    gamma: float
    epsilon: float
    m_matrix: np.ndarray
    w_vector: np.ndarray
    v_vector: np.ndarray
    lyapunov_residual: float
    vector_residual: float
    lambda_min: float
    lambda_max: float
    series_terms: int

    @property
    def rate(self) -> float:
        return self.gamma + self.epsilon

    def diagnostics(self) -> dict:
        return {
            "lyapunov_residual": self.lyapunov_residual,
            "vector_residual": self.vector_residual,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "series_terms": self.series_terms,
        }

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "w": self.w_vector.tolist(),
            "v": self.v_vector.tolist(),
            "M": self.m_matrix.tolist(),
            "diagnostics": self.diagnostics(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LyapunovCertificate":
        diag = d.get("diagnostics", {})
        return cls(
            gamma=float(d["gamma"]),
            epsilon=float(d["epsilon"]),
            m_matrix=np.asarray(d["M"], dtype=float),
            w_vector=np.asarray(d["w"], dtype=float),
            v_vector=np.asarray(d["v"], dtype=float),
            lyapunov_residual=float(diag.get("lyapunov_residual", np.nan)),
            vector_residual=float(diag.get("vector_residual", np.nan)),
            lambda_min=float(diag.get("lambda_min", np.nan)),
            lambda_max=float(diag.get("lambda_max", np.nan)),
            series_terms=int(diag.get("series_terms", 0)),
        )


def build_certificate(a_star, gamma: float, epsilon: float | None = None, w=None) -> LyapunovCertificate:
    """Construct ``M`` and ``v`` for ``A_{Q*}``.  Defaults: ``eps = (1 - gamma) / 2``, ``w = 1``."""
    a = _check_a(a_star)
    if epsilon is None:
        epsilon = default_epsilon(gamma)
    w = np.ones(len(a)) if w is None else np.asarray(w, dtype=float)
    m, info = lyapunov_matrix(a, gamma, epsilon)
    v = lyapunov_vector(a, gamma, epsilon, w)
    eig = np.linalg.eigvalsh(m)
    return LyapunovCertificate(
        gamma=float(gamma),
        epsilon=float(epsilon),
        m_matrix=m,
        w_vector=w,
        v_vector=v,
        lyapunov_residual=info.residual,
        vector_residual=vector_residual(a, v, w, gamma + epsilon),
        lambda_min=float(eig[0]),
        lambda_max=float(eig[-1]),
        series_terms=info.terms,
    )


def reweight(cert: LyapunovCertificate, a_star, w) -> LyapunovCertificate:
    """Same ``M`` and epsilon, new linear certificate for weight vector ``w``."""
    a = _check_a(a_star)
    w = np.asarray(w, dtype=float)
    v = lyapunov_vector(a, cert.gamma, cert.epsilon, w)
    return replace(cert, w_vector=w, v_vector=v, vector_residual=vector_residual(a, v, w, cert.rate))


@dataclass(frozen=True)
class MBoundsReport:
    lambda_min: float
    lambda_max: float
    lambda_max_bound: float
    min_entry: float
    residual: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def verify_m_bounds(cert: LyapunovCertificate, mdp: Mdp | None = None, *, a_star=None, strict: bool = True) -> MBoundsReport:
    """Check eigenvalue bounds, nonnegativity and (given ``a_star``) the Lyapunov identity."""
    m = cert.m_matrix
    n = mdp.size if mdp is not None else len(m)
    if m.shape != (n, n):
        raise InputError(f"M has shape {m.shape}, expected ({n}, {n})")
    eig = np.linalg.eigvalsh(m)
    bound = lambda_max_bound(n, cert.gamma, cert.epsilon)
    residual = cert.lyapunov_residual
    if a_star is not None:
        residual = lyapunov_residual(_check_a(a_star), m, cert.rate)
    failures = []
    if eig[0] < 1.0 - LAMBDA_MIN_TOL:
        failures.append(f"lambda_min: {eig[0]!r} < 1")
    if eig[-1] > bound + LAMBDA_MAX_TOL:
        failures.append(f"lambda_max: {eig[-1]!r} > {bound!r}")
    if m.min() < -NONNEGATIVE_TOL:
        failures.append(f"nonnegative: min entry {m.min()!r}")
    if not residual <= LYAPUNOV_RESIDUAL_TOL:
        failures.append(f"lyapunov_residual: {residual!r}")
    report = MBoundsReport(float(eig[0]), float(eig[-1]), bound, float(m.min()), float(residual), failures)
    if strict and failures:
        raise CertificateInvalid(failures[0].split(":")[0], "; ".join(failures))
    return report


@dataclass(frozen=True)
class VBoundsReport:
    v_inf: float
    w_inf: float
    lower_bound_holds: bool
    stated_bound: float  # ||w||_1 / (1 - gamma), informational only
    stated_bound_holds: bool
    corrected_bound: float  # ||w||_1 (gamma + eps) / eps
    corrected_bound_holds: bool
    positive: bool

    @property
    def passed(self) -> bool:
        return self.lower_bound_holds and self.corrected_bound_holds and self.positive


def _le(x: float, bound: float) -> bool:
    return x <= bound * (1 + NORM_BOUND_RTOL) + NORM_BOUND_RTOL


def verify_v_bounds(v, w, gamma: float, epsilon: float, *, strict: bool = True) -> VBoundsReport:
    """Compare ``||v||_inf`` with ``||w||_inf`` and two upper bounds.

    ``||w||_1 / (1 - gamma)`` ignores the ``rho^{-i}`` weights of the series and
    can fail (scalar case: v = 19 > 10); it is reported, never enforced.
    ``||w||_1 (gamma + eps) / eps`` keeps the weights and must always hold.
    """
    check_epsilon(gamma, epsilon)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    v_inf = float(np.abs(v).max())
    w_inf = float(np.abs(w).max())
    w_one = float(np.abs(w).sum())
    stated = w_one / (1.0 - gamma)
    corrected = w_one * (gamma + epsilon) / epsilon
    report = VBoundsReport(
        v_inf=v_inf,
        w_inf=w_inf,
        lower_bound_holds=_le(w_inf, v_inf),
        stated_bound=stated,
        stated_bound_holds=_le(v_inf, stated),
        corrected_bound=corrected,
        corrected_bound_holds=_le(v_inf, corrected),
        positive=bool(np.all(v > 0) and np.all(v >= w * (1 - NORM_BOUND_RTOL))),
    )
    if strict:
        if not report.positive:
            raise CertificateInvalid("v_positive", "v must be positive and dominate w")
        if not report.lower_bound_holds:
            raise CertificateInvalid("v_lower", f"||v||_inf={v_inf!r} < ||w||_inf={w_inf!r}")
        if not report.corrected_bound_holds:
            raise CertificateInvalid("v_upper", f"||v||_inf={v_inf!r} > {corrected!r}")
    return report
