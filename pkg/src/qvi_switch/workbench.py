"""Seeded instance generation, file formats and the end-to-end experiment."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .engine import (
    FAIL,
    PASS,
    QviTrace,
    bellman_residual,
    check_invariants,
    orthant_start,
    policy_hash,
    run_qvi,
    solve_qstar_policy_iteration,
)
from .errors import CertificateInvalid, InputError
from .lyapunov import (
    VECTOR_RESIDUAL_TOL,
    LyapunovCertificate,
    build_certificate,
    default_epsilon,
    verify_m_bounds,
    verify_v_bounds,
)
from .mdp import Mdp, validate
from .policy import greedy_policy
from .switching import system_matrix

PRNG_ALGORITHM = "numpy.random.PCG64 seeded by SeedSequence(seed).spawn(3) -> [mdp, q0, w]"

TRACE_COLUMNS = (
    "k",
    "inf_norm",
    "inf_ratio",
    "m_norm",
    "m_ratio",
    "v_functional",
    "v_bound",
    "min_orthant_slack",
    "policy_hash",
)

Q0_MODES = ("orthant", "random", "zero", "custom-file")
W_MODES = ("ones", "random-positive")


@dataclass
class ExperimentConfig:
    seed: int = 0
    num_states: int = 5
    num_actions: int = 3
    gamma: float = 0.9
    epsilon: float | str = "auto"
    w_mode: str = "ones"
    num_iters: int = 200
    q0_mode: str = "orthant"
    q0_file: str | None = None
    mdp_file: str | None = None
    out_dir: str | None = None
    halfplane_certs: int = 0
    trace_json: bool = False

    def __post_init__(self):
        if self.seed < 0:
            raise InputError("seed must be nonnegative")
        if self.num_states < 1 or self.num_actions < 1:
            raise InputError("num_states and num_actions must be positive")
        if self.num_iters < 0:
            raise InputError("num_iters must be nonnegative")
        if self.q0_mode not in Q0_MODES:
            raise InputError(f"q0_mode must be one of {Q0_MODES}")
        if self.q0_mode == "custom-file" and not self.q0_file:
            raise InputError("q0_mode custom-file needs q0_file")
        if self.w_mode not in W_MODES:
            raise InputError(f"w_mode must be one of {W_MODES}")
        if self.epsilon != "auto":
            try:
                self.epsilon = float(self.epsilon)
            except ValueError:
                raise InputError(f"epsilon must be a number or 'auto', got {self.epsilon!r}") from None

    def resolved_epsilon(self, gamma: float) -> float:
        return default_epsilon(gamma) if self.epsilon == "auto" else float(self.epsilon)

    def public_dict(self) -> dict:
        """Config fields that influence results (output locations excluded)."""
        d = asdict(self)
        for key in ("out_dir", "trace_json"):
            d.pop(key)
        return d


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(3)
    return {name: np.random.Generator(np.random.PCG64(c)) for name, c in zip(("mdp", "q0", "w"), children)}


def random_mdp(rng: np.random.Generator, num_states: int, num_actions: int, gamma: float) -> Mdp:
    """Strictly positive normalised transition rows, rewards uniform on [-1, 1]."""
    raw = 1.0 - rng.random((num_actions, num_states, num_states))  # (0, 1]
    transitions = raw / raw.sum(axis=2, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, num_states * num_actions)
    return validate(num_states, num_actions, gamma, transitions, rewards)


def generate_mdp(config: ExperimentConfig) -> Mdp:
    return random_mdp(seed_streams(config.seed)["mdp"], config.num_states, config.num_actions, config.gamma)


def random_positive_w(rng: np.random.Generator, n: int) -> np.ndarray:
    return 1.0 - rng.random(n)


# -- JSON / CSV ------------------------------------------------------------


def dump_json(obj, path: Path | str | None = None) -> str:
    text = json.dumps(obj, indent=2, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_json(path: Path | str):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def mdp_to_dict(mdp: Mdp) -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "transitions": mdp.transition_blocks().tolist(),
        "rewards": mdp.rewards.tolist(),
    }


def mdp_from_dict(d: dict) -> Mdp:
    try:
        return validate(d["num_states"], d["num_actions"], d["gamma"], d["transitions"], d["rewards"])
    except KeyError as exc:
        raise InputError(f"MDP file is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed MDP file: {exc}") from None


def save_mdp(mdp: Mdp, path) -> None:
    dump_json(mdp_to_dict(mdp), path)


def load_mdp(path) -> Mdp:
    return mdp_from_dict(read_json(path))


def qstar_to_dict(mdp: Mdp, qstar: np.ndarray, method: str = "policy_iteration") -> dict:
    return {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "gamma": mdp.gamma,
        "method": method,
        "qstar": qstar.tolist(),
        "policy": greedy_policy(qstar, mdp).tolist(),
        "bellman_residual": bellman_residual(qstar, mdp),
    }


def load_qvector(path, mdp: Mdp) -> np.ndarray:
    """Read a Q-vector from a bare JSON list or an object with a ``qstar``/``q`` field."""
    data = read_json(path)
    if isinstance(data, dict):
        data = data.get("qstar", data.get("q"))
    q = np.asarray(data, dtype=float)
    if q.shape != (mdp.size,):
        raise InputError(f"{path}: expected {mdp.size} values, got shape {q.shape}")
    return q


def load_certificate(path) -> LyapunovCertificate:
    try:
        return LyapunovCertificate.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed certificate ({exc})") from None


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _ratio(cur: float | None, prev: float | None) -> float | None:
    if cur is None or prev is None or prev == 0.0:
        return None
    return cur / prev


def trace_rows(trace: QviTrace, cert: LyapunovCertificate | None = None) -> list[dict]:
    """One dict per iterate with the fixed trace.csv columns (None = missing)."""
    cert = cert if cert is not None else trace.certificate
    d = trace.deltas
    rows = []
    v0 = None
    prev = None
    for step, delta in zip(trace.steps, d):
        m_norm = v_fun = v_bound = None
        if cert is not None:
            m_norm = float(np.sqrt(max(float(delta @ cert.m_matrix @ delta), 0.0)))
            v_fun = float(cert.v_vector @ delta)
            if v0 is None:
                v0 = v_fun
            v_bound = cert.rate**step.k * v0
        row = {
            "k": step.k,
            "inf_norm": step.inf_norm,
            "inf_ratio": _ratio(step.inf_norm, prev["inf_norm"] if prev else None),
            "m_norm": m_norm,
            "m_ratio": _ratio(m_norm, prev["m_norm"] if prev else None),
            "v_functional": v_fun,
            "v_bound": v_bound,
            "min_orthant_slack": step.orthant_slack,
            "policy_hash": policy_hash(step.policy),
        }
        rows.append(row)
        prev = row
    return rows


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[h]) for h in header])
    return buf.getvalue()


def trace_csv(trace: QviTrace, cert: LyapunovCertificate | None = None) -> str:
    return _csv_text(TRACE_COLUMNS, trace_rows(trace, cert))


def emit_halfplane_data(trace: QviTrace, certs: list[LyapunovCertificate]) -> str:
    """CSV of ``v_j^T (Q_k - Q*)`` and ``rho_j^k v_j^T (Q_0 - Q*)`` for each certificate ``j``."""
    d = trace.deltas
    header = ["k"]
    for j in range(len(certs)):
        header += [f"v_functional_{j}", f"v_bound_{j}"]
    rows = []
    funcs = [d @ c.v_vector for c in certs]
    for k in range(len(d)):
        row = {"k": k}
        for j, (c, f) in enumerate(zip(certs, funcs)):
            row[f"v_functional_{j}"] = float(f[k])
            row[f"v_bound_{j}"] = float(c.rate**k * f[0])
        rows.append(row)
    return _csv_text(header, rows)


def parse_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


# -- experiment ------------------------------------------------------------


@dataclass
class ExperimentResult:
    exit_code: int
    report: dict
    failures: list[str] = field(default_factory=list)
    trace: QviTrace | None = None
    certificate: LyapunovCertificate | None = None


def initial_iterate(config: ExperimentConfig, mdp: Mdp, rng: np.random.Generator) -> np.ndarray:
    if config.q0_mode == "orthant":
        return orthant_start(mdp)
    if config.q0_mode == "zero":
        return np.zeros(mdp.size)
    if config.q0_mode == "random":
        scale = 2.0 / (1.0 - mdp.gamma)
        return rng.uniform(-scale, scale, mdp.size)
    return load_qvector(config.q0_file, mdp)


def certify(mdp: Mdp, qstar: np.ndarray, epsilon: float, w: np.ndarray) -> tuple[LyapunovCertificate, dict, list[str]]:
    """Build a certificate for ``A_{Q*}`` and run every bound check on it (non-raising)."""
    a_star = system_matrix(qstar, mdp)
    cert = build_certificate(a_star, mdp.gamma, epsilon, w)
    m_report = verify_m_bounds(cert, mdp, a_star=a_star, strict=False)
    v_report = verify_v_bounds(cert.v_vector, cert.w_vector, mdp.gamma, epsilon, strict=False)
    failures = [f"certificate_m_bounds ({f})" for f in m_report.failures]
    if not cert.vector_residual <= VECTOR_RESIDUAL_TOL:
        failures.append(f"certificate_vector_residual ({cert.vector_residual!r})")
    if not v_report.passed:
        failures.append("certificate_v_bounds")
    summary = {
        "m_bounds": {
            "status": PASS if m_report.passed else FAIL,
            "lambda_min": m_report.lambda_min,
            "lambda_max": m_report.lambda_max,
            "lambda_max_bound": m_report.lambda_max_bound,
            "min_entry": m_report.min_entry,
            "lyapunov_residual": m_report.residual,
            "series_terms": cert.series_terms,
        },
        "v_bounds": {
            "status": PASS if v_report.passed else FAIL,
            "vector_residual": cert.vector_residual,
            "v_inf": v_report.v_inf,
            "w_inf": v_report.w_inf,
            "lower_bound_holds": v_report.lower_bound_holds,
            "stated_bound": v_report.stated_bound,
            "stated_bound_holds": v_report.stated_bound_holds,
            "corrected_bound": v_report.corrected_bound,
            "corrected_bound_holds": v_report.corrected_bound_holds,
        },
    }
    return cert, summary, failures


def evaluate(config: ExperimentConfig, mdp: Mdp, qstar: np.ndarray | None = None) -> ExperimentResult:
    """Solve, certify, trace and check in memory; nothing is written."""
    streams = seed_streams(config.seed)
    if qstar is None:
        qstar = solve_qstar_policy_iteration(mdp)
    epsilon = config.resolved_epsilon(mdp.gamma)
    w = np.ones(mdp.size) if config.w_mode == "ones" else random_positive_w(streams["w"], mdp.size)
    cert, cert_summary, failures = certify(mdp, qstar, epsilon, w)
    q0 = initial_iterate(config, mdp, streams["q0"])
    trace = run_qvi(mdp, q0, config.num_iters, qstar=qstar, certificate=cert)
    inv = check_invariants(trace, cert)
    failures += inv.failed_claims

    report = {
        "config": config.public_dict(),
        "prng": PRNG_ALGORITHM,
        "epsilon": epsilon,
        "q0": q0.tolist(),
        "q0_in_orthant": trace.starts_in_orthant,
        "certificate": cert_summary,
        **inv.to_dict(),
        "failed": failures,
    }
    report["passed"] = not failures
    return ExperimentResult(0 if not failures else 1, report, failures, trace, cert)


def extra_certificates(config: ExperimentConfig, mdp: Mdp, qstar: np.ndarray, count: int) -> list[LyapunovCertificate]:
    """``w = 1`` followed by ``count - 1`` random positive draws from the w stream."""
    rng = seed_streams(config.seed)["w"]
    a_star = system_matrix(qstar, mdp)
    epsilon = config.resolved_epsilon(mdp.gamma)
    certs = []
    for j in range(count):
        w = np.ones(mdp.size) if j == 0 else random_positive_w(rng, mdp.size)
        certs.append(build_certificate(a_star, mdp.gamma, epsilon, w))
    return certs


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Write mdp.json, qstar.json, certificate.json, trace.csv and report.json.

    Exit code 0 iff every applicable claim and certificate check passed.
    """
    if config.out_dir is None:
        raise InputError("run_experiment needs an output directory")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if config.mdp_file:
        mdp = load_mdp(config.mdp_file)
    else:
        mdp = generate_mdp(config)
    qstar = solve_qstar_policy_iteration(mdp)
    result = evaluate(config, mdp, qstar)

    save_mdp(mdp, out / "mdp.json")
    dump_json(qstar_to_dict(mdp, qstar), out / "qstar.json")
    dump_json(result.certificate.to_dict(), out / "certificate.json")
    (out / "trace.csv").write_text(trace_csv(result.trace), encoding="utf-8")
    dump_json(result.report, out / "report.json")
    if config.trace_json:
        dump_json(result.trace.to_dict(full_vectors=True), out / "trace.json")
    if config.halfplane_certs > 0:
        certs = extra_certificates(config, mdp, qstar, config.halfplane_certs)
        (out / "halfplane.csv").write_text(emit_halfplane_data(result.trace, certs), encoding="utf-8")
    return result


def verify_directory(path) -> ExperimentResult:
    """Re-derive an experiment from its directory and compare with what is on disk.

    Q* is recomputed independently and compared with qstar.json; the stored
    certificate is rechecked against the recomputed ``A_{Q*}``; trace.csv and
    report.json must be reproduced byte for byte.
    """
    path = Path(path)
    mdp = load_mdp(path / "mdp.json")
    stored_report = read_json(path / "report.json")
    try:
        config = ExperimentConfig(**{**stored_report["config"], "out_dir": None})
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path / 'report.json'}: unusable config ({exc})") from None
    stored_q = load_qvector(path / "qstar.json", mdp)
    stored_cert = load_certificate(path / "certificate.json")

    failures = []
    qstar = solve_qstar_policy_iteration(mdp)
    if np.abs(qstar - stored_q).max() > 1e-9:
        failures.append("qstar_mismatch")
    if bellman_residual(stored_q, mdp) > 1e-10:
        failures.append("qstar_residual")

    a_star = system_matrix(qstar, mdp)
    try:
        verify_m_bounds(stored_cert, mdp, a_star=a_star)
        verify_v_bounds(stored_cert.v_vector, stored_cert.w_vector, stored_cert.gamma, stored_cert.epsilon)
    except CertificateInvalid as exc:
        failures.append(f"certificate ({exc})")

    result = evaluate(config, mdp, stored_q)
    failures += result.failures
    if (path / "trace.csv").read_text(encoding="utf-8") != trace_csv(result.trace):
        failures.append("trace_csv_mismatch")
    if (path / "report.json").read_text(encoding="utf-8") != dump_json(result.report):
        failures.append("report_json_mismatch")
    result.failures = failures
    result.exit_code = 0 if not failures else 1
    return result
