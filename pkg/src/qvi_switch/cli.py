"""Command-line workbench: ``gen``, ``solve``, ``certify``, ``run``, ``verify``.

Exit codes: 0 pass, 1 claim violation, 2 input/config error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .engine import solve_qstar_bruteforce, solve_qstar_policy_iteration
from .errors import InputError, VerificationError
from .workbench import (
    Q0_MODES,
    W_MODES,
    ExperimentConfig,
    certify,
    dump_json,
    generate_mdp,
    load_mdp,
    load_qvector,
    mdp_to_dict,
    qstar_to_dict,
    random_positive_w,
    run_experiment,
    seed_streams,
    verify_directory,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-states", type=int, default=5)
    p.add_argument("--num-actions", type=int, default=3)
    p.add_argument("--gamma", type=float, default=0.9)


def _add_cert_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", default="auto", help="positive number or 'auto' for (1 - gamma) / 2")
    p.add_argument("--w-mode", choices=W_MODES, default="ones")


def cmd_gen(args) -> int:
    config = ExperimentConfig(
        seed=args.seed, num_states=args.num_states, num_actions=args.num_actions, gamma=args.gamma
    )
    _emit(dump_json(mdp_to_dict(generate_mdp(config))), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp)
    if args.method == "bruteforce":
        qstar = solve_qstar_bruteforce(mdp)
    else:
        qstar = solve_qstar_policy_iteration(mdp)
    _emit(dump_json(qstar_to_dict(mdp, qstar, args.method.replace("-", "_"))), args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    mdp = load_mdp(args.mdp)
    qstar = load_qvector(args.qstar, mdp) if args.qstar else solve_qstar_policy_iteration(mdp)
    config = ExperimentConfig(seed=args.seed, epsilon=args.epsilon, w_mode=args.w_mode)
    epsilon = config.resolved_epsilon(mdp.gamma)
    if args.w_mode == "ones":
        w = np.ones(mdp.size)
    else:
        w = random_positive_w(seed_streams(args.seed)["w"], mdp.size)
    cert, summary, failures = certify(mdp, qstar, epsilon, w)
    _emit(dump_json(cert.to_dict() | {"checks": summary}), args.out)
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    return EXIT_VIOLATION if failures else EXIT_OK


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        seed=args.seed,
        num_states=args.num_states,
        num_actions=args.num_actions,
        gamma=args.gamma,
        epsilon=args.epsilon,
        w_mode=args.w_mode,
        num_iters=args.num_iters,
        q0_mode=args.q0,
        q0_file=args.q0_file,
        mdp_file=args.mdp,
        out_dir=args.out_dir,
        halfplane_certs=args.halfplane_certs,
        trace_json=args.trace_json,
    )


def _run_one(config: ExperimentConfig) -> tuple[int, int, list[str]]:
    result = run_experiment(config)
    return config.seed, result.exit_code, result.failures


def cmd_run(args) -> int:
    base = _config_from_args(args)
    if args.num_seeds <= 1:
        configs = [base]
    else:
        configs = [
            replace(base, seed=s, out_dir=str(Path(args.out_dir) / f"seed_{s:04d}"))
            for s in range(args.seed, args.seed + args.num_seeds)
        ]
    if args.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]

    worst = EXIT_OK
    for seed, code, failures in results:
        if code:
            worst = EXIT_VIOLATION
            print(f"seed {seed}: FAIL {', '.join(failures)}", file=sys.stderr)
    print(f"{sum(1 for _, c, _ in results if c == 0)}/{len(results)} experiments passed")
    return worst


def cmd_verify(args) -> int:
    worst = EXIT_OK
    for d in args.dirs:
        result = verify_directory(d)
        if result.exit_code:
            worst = EXIT_VIOLATION
            print(f"{d}: FAIL {', '.join(result.failures)}", file=sys.stderr)
        else:
            print(f"{d}: ok")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvi-switch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded random MDP as JSON")
    _add_instance_args(p)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="compute Q* for an MDP file")
    p.add_argument("mdp")
    p.add_argument("--method", choices=("policy-iteration", "bruteforce"), default="policy-iteration")
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="build and check the Lyapunov matrix and vector")
    p.add_argument("mdp")
    p.add_argument("--qstar", help="Q* file (default: solve by policy iteration)")
    p.add_argument("--seed", type=int, default=0, help="seed for random-positive w")
    _add_cert_args(p)
    p.add_argument("--out", "-o")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("run", help="full experiment: generate, solve, certify, trace, check")
    _add_instance_args(p)
    _add_cert_args(p)
    p.add_argument("--num-iters", type=int, default=200)
    p.add_argument("--q0", choices=Q0_MODES, default="orthant")
    p.add_argument("--q0-file")
    p.add_argument("--mdp", help="use this MDP file instead of generating one")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--halfplane-certs", type=int, default=0, help="write halfplane.csv with this many w draws")
    p.add_argument("--trace-json", action="store_true", help="also write trace.json with full vectors")
    p.add_argument("--num-seeds", type=int, default=1, help="campaign over consecutive seeds")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="re-check experiment directories written by 'run'")
    p.add_argument("dirs", nargs="+")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VerificationError as exc:
        print(f"FAIL {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
