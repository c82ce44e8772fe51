"""Command-line interface: ``dynmech <verb> ...``.

Exit codes: 0 success, 2 invalid input or a failed check, 3 solver failure,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .agents import TIE_RULES, best_response
from .env import InvalidEnvironment, load_environment, save_environment, validate_environment, DynamicEnvironment
from .experiment import AXES, COMBOS, ExperimentSpec, read_csv, run_experiment, write_csv
from .instances import GeneratorParams, gen_maxsat, gen_memoryless_gap, gen_random, parse_dimacs
from .lp import LPSolverError
from .mechanism import Mechanism, check_ic, check_ir, evaluate
from .myopic import solve_myopic
from .optimal import InfeasibleProgram, SolveConfig, UnboundedProgram, solve_optimal
from .plot import emit_plot

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("dynmech")


def num(v: float) -> str:
    return format(float(v), ".9g")


def _tie_rule(args) -> str:
    if getattr(args, "adversarial_ties", False):
        return "adversarial"
    return {"truthful": "truthful-first", "lowest": "lowest-index"}.get(args.ties, args.ties)


def _load_mech(path, env: DynamicEnvironment) -> Mechanism:
    with open(path) as fh:
        return Mechanism.from_json(json.load(fh), env)


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=1) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _config(args) -> SolveConfig:
    return SolveConfig.from_flags(args.ir, args.payments, args.payment_valuation, args.discount, args.lp_backend)


# ---------------------------------------------------------------------------
# verbs


def cmd_validate(args) -> int:
    with open(args.env) as fh:
        data = json.load(fh)
    env = DynamicEnvironment.from_dict(data, validate=False)
    problems = validate_environment(env)
    if not problems and args.mech:
        try:
            _load_mech(args.mech, env).check_dims(env)
        except (ValueError, KeyError) as exc:
            problems.append(f"mechanism: {exc}")
    if problems:
        for p in problems:
            print(p)
        return EXIT_INVALID
    print("OK")
    return EXIT_OK


def cmd_solve(args) -> int:
    env = load_environment(args.env)
    res = solve_optimal(env, _config(args))
    print(f"value {num(res.value)}")
    if args.out:
        _write_json(res.mechanism.to_json(env), args.out)
    return EXIT_OK


def cmd_solve_myopic(args) -> int:
    env = load_environment(args.env)
    res = solve_myopic(env, _config(args))
    print(f"value {num(res.value)}")
    print(f"static_calls {res.static_calls}")
    if args.out:
        _write_json(res.mechanism.to_json(env), args.out)
    return EXIT_OK


def cmd_best_response(args) -> int:
    env = load_environment(args.env)
    mech = _load_mech(args.mech, env)
    br = best_response(env, mech, args.agent, args.discount, _tie_rule(args), args.payment_valuation)
    print(f"agent_value {num(br.agent_value)}")
    print(f"principal_value {num(br.principal_value)}")
    print(f"truthful {str(br.strategy.is_truthful()).lower()}")
    if args.strategy_out:
        _write_json(br.strategy.to_json(env), args.strategy_out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    env = load_environment(args.env)
    mech = _load_mech(args.mech, env)
    res = evaluate(env, mech, agent_discount=args.discount, payment_valuation=args.payment_valuation)
    print(f"principal_total {num(res.principal_total)}")
    print(f"agent_total {num(res.agent_total)}")
    return EXIT_OK


def cmd_check_ic(args) -> int:
    env = load_environment(args.env)
    mech = _load_mech(args.mech, env)
    ic = check_ic(env, mech, args.agent, args.discount, args.tol)
    print(f"ic {'ok' if ic else 'violated'} gap {num(ic.gap)}")
    if not ic and ic.deviation is not None:
        print(f"deviation {ic.deviation} gain {num(ic.deviation_gain)}")
    ok = bool(ic)
    if args.ir != "none":
        ir = check_ir(env, mech, args.ir, args.tol, args.discount)
        print(f"ir {'ok' if ir else 'violated'} worst {num(ir.worst_value)}")
        ok = ok and bool(ir)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_gen(args) -> int:
    if args.kind == "random":
        env = gen_random(GeneratorParams(args.T, args.states, args.actions, args.eta, args.seed))
    elif args.kind == "maxsat":
        if not args.cnf:
            raise ValueError("gen maxsat needs --cnf <file>")
        env = gen_maxsat(parse_dimacs(Path(args.cnf).read_text()), args.myopic_variant)
    else:
        env, ref = gen_memoryless_gap(args.n, args.agent)
        if args.mech_out:
            _write_json(ref.to_json(env), args.mech_out)
    if args.out in (None, "-"):
        _write_json(env.to_dict(), None)
    else:
        save_environment(env, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cast = float if args.axis == "eta" else int
    values = tuple(cast(v) for v in args.values.split(","))
    combos = tuple(args.combos.split(",")) if args.combos else COMBOS
    spec = ExperimentSpec(
        axis=args.axis, values=values, T=args.T, size=args.size, eta=args.eta,
        num_seeds=args.seeds, base_seed=args.seed, combos=combos,
        tie_rule=_tie_rule(args), lp_backend=args.lp_backend,
    )
    rows = run_experiment(spec, workers=args.workers)
    write_csv(rows, args.out)
    failed = sum(r.failed for r in rows)
    print(f"rows {len(rows)} failed {failed}")
    if args.plot:
        emit_plot(rows, args.axis, args.plot, normalize_after_mean=args.normalize_after_mean)
    return EXIT_SOLVER if failed else EXIT_OK


def cmd_plot(args) -> int:
    rows = read_csv(args.csv)
    combos = tuple(args.combos.split(",")) if args.combos else None
    emit_plot(rows, args.axis, args.out, combos, args.normalize_after_mean, args.title)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_config_flags(p) -> None:
    p.add_argument("--ir", choices=("none", "overall", "dynamic"), default="none")
    p.add_argument("--payments", default="none", help="none | nonneg | interval:<a>:<b>")
    p.add_argument("--payment-valuation", type=float, default=1.0)
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--lp-backend", choices=("simplex", "highs"), default="simplex")


def _add_tie_flags(p) -> None:
    p.add_argument("--ties", choices=("truthful", "lowest") + TIE_RULES, default="truthful")
    p.add_argument("--adversarial-ties", action="store_true", help="among agent-optimal reports pick the principal-worst")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynmech", description="Optimal dynamic mechanisms for a single agent.")
    parser.add_argument("--seed", type=int, default=0, help="seed for generators and sweeps")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check an environment (and optionally a mechanism) file")
    p.add_argument("--env", required=True)
    p.add_argument("--mech")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="optimal mechanism against a patient agent")
    p.add_argument("--env", required=True)
    p.add_argument("--out", help="write the mechanism JSON here ('-' for stdout)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("solve-myopic", help="optimal succinct mechanism against a myopic agent")
    p.add_argument("--env", required=True)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_solve_myopic)

    p = sub.add_parser("best-response", help="agent's optimal reporting against a mechanism")
    p.add_argument("--env", required=True)
    p.add_argument("--mech", required=True)
    p.add_argument("--agent", choices=("patient", "myopic"), default="patient")
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--payment-valuation", type=float, default=1.0)
    p.add_argument("--strategy-out")
    _add_tie_flags(p)
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("evaluate", help="truthful values of a mechanism")
    p.add_argument("--env", required=True)
    p.add_argument("--mech", required=True)
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--payment-valuation", type=float, default=1.0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("check-ic", help="IC (and optionally IR) verdict; exit 2 when violated")
    p.add_argument("--env", required=True)
    p.add_argument("--mech", required=True)
    p.add_argument("--agent", choices=("patient", "myopic"), default="patient")
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--ir", choices=("none", "overall", "dynamic"), default="none")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_check_ic)

    p = sub.add_parser("gen", help="generate an environment")
    p.add_argument("kind", choices=("random", "maxsat", "memoryless-gap"))
    p.add_argument("--out")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--cnf", help="DIMACS CNF file for maxsat")
    p.add_argument("--myopic-variant", type=float, default=None, metavar="C")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--agent", choices=("patient", "myopic"), default="patient")
    p.add_argument("--mech-out", help="memoryless-gap: write the reference mechanism here")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("experiment", help="run a sweep and write CSV")
    p.add_argument("--axis", choices=AXES, default="eta")
    p.add_argument("--values", default="-1,-0.5,0,0.5,1")
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--size", type=int, default=2, help="|S| = |A| when not swept")
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--combos", help="comma-separated subset of " + ",".join(COMBOS))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--plot", help="also write an SVG chart here")
    p.add_argument("--normalize-after-mean", action="store_true")
    p.add_argument("--lp-backend", choices=("simplex", "highs"), default="simplex")
    _add_tie_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="SVG chart from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--axis", choices=AXES, default="eta")
    p.add_argument("--out", required=True)
    p.add_argument("--combos")
    p.add_argument("--title")
    p.add_argument("--normalize-after-mean", action="store_true")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidEnvironment as exc:
        for v in exc.violations:
            print(v, file=sys.stderr)
        return EXIT_INVALID
    except (InfeasibleProgram, UnboundedProgram, LPSolverError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
