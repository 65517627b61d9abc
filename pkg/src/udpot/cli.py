"""Command line entry point.

Exit status is 0 on success (stable and growing verdicts included), 2 when an input is
rejected or a result's hypotheses are not met, and 1 on a violated verdict or an
internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

from udpot.base import (
    HypothesisError,
    UdpotError,
    dumps,
    jsonable,
    write_csv,
    write_json,
)
from udpot.config import (
    RunConfig,
    build_level,
    exponent_from_spec,
    function_from_spec,
    read_json,
)
from udpot.glue import (
    admissible,
    build_glued_from_spec,
    glued_measure,
    verify_ball_estimates,
)
from udpot.lebesgue import luxemburg_norm, modular
from udpot.logger import configure_logging
from udpot.measure import (
    ahlfors_fit,
    check_upper_doubling,
    estimate_doubling_constant,
)
from udpot.operators import omega, potential
from udpot.parallel import set_threads
from udpot.space import build_space, space_summary
from udpot.verify import (
    NOT_MET,
    VIOLATED,
    ExperimentReport,
    verify_comparison,
    verify_hedberg,
    verify_maximal_bounds,
    verify_necessity,
    verify_sufficiency,
)

logger = logging.getLogger("udpot.cli")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_REJECTED = 2


def _emit(payload: Any, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(dumps(payload))
    else:
        write_json(out, payload)


def _plan(args: argparse.Namespace, config: RunConfig | None = None) -> dict:
    plan: dict[str, Any] = {"command": args.command, "action": args.action}
    if config is not None:
        plan["config"] = config.to_dict()
        plan["level_specs"] = config.level_specs()
    for name in ("spec", "out"):
        value = getattr(args, name, None)
        if value is not None:
            plan[name] = str(Path(value).resolve())
    return plan


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "report", None) is not None:
        config.report = Path(args.report).resolve()
    if getattr(args, "csv", None) is not None:
        config.csv = Path(args.csv).resolve()
    return config


def cmd_space(args: argparse.Namespace) -> int:
    spec = read_json(args.spec)
    if args.dry_run:
        _emit(_plan(args), None)
        return EXIT_OK
    if spec.get("kind") == "glued":
        space = build_glued_from_spec(spec).base
    else:
        space = build_space(spec)
    summary = space_summary(space, doubling=args.action == "info")
    _emit(summary, Path(args.out).resolve() if args.out else None)
    return EXIT_OK


def cmd_glue(args: argparse.Namespace) -> int:
    spec = read_json(args.spec)
    if args.dry_run:
        _emit(_plan(args), None)
        return EXIT_OK
    tc = build_glued_from_spec(spec)
    out = Path(args.out).resolve() if args.out else None
    if args.action == "build":
        payload = {
            "space": space_summary(tc.base, doubling=False),
            "n1": tc.n1,
            "n2": tc.n2,
            "gamma1": tc.gamma1,
            "gamma2": tc.gamma2,
            "admissible": admissible(tc),
            "xi": tc.xi,
            "contact_c": tc.contact_c,
            "S": tc.s_const,
            "fits": [fit.to_dict() for fit in tc.fits],
        }
        _emit(payload, out)
        return EXIT_OK
    if not admissible(tc):
        raise HypothesisError(
            "ball estimates need gamma1 + n1 == gamma2 + n2",
            {"xi1": tc.gamma1 + tc.n1, "xi2": tc.gamma2 + tc.n2},
        )
    gm = glued_measure(tc)
    report = verify_ball_estimates(tc, gm)
    _emit(dict(report.to_dict(), k4=gm.k4), out)
    return EXIT_OK


def cmd_measure(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.dry_run:
        _emit(_plan(args, config), None)
        return EXIT_OK
    results = []
    for lvl in config.build_levels():
        entry: dict[str, Any] = {
            "N": lvl.space.n,
            "total": lvl.mu.total,
            "doubling": estimate_doubling_constant(lvl.space, lvl.mu).to_dict(),
            "ahlfors": ahlfors_fit(lvl.space, lvl.mu).to_dict(),
        }
        if lvl.lam is not None:
            entry["upper_doubling"] = check_upper_doubling(
                lvl.space, lvl.mu, lvl.lam
            ).to_dict()
            entry["omega_max"] = float(omega(lvl.space, lvl.mu, lvl.lam).max())
            entry["lambda"] = lvl.lam.describe()
        results.append(entry)
    _emit({"seed": config.seed, "levels": results}, config.report)
    return EXIT_OK


def cmd_op(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.dry_run:
        _emit(_plan(args, config), None)
        return EXIT_OK
    lvl = build_level(config.level_specs()[-1], config.measure, config.lam)
    ks = config.kernel_spec(lvl)
    f = function_from_spec(config.function, lvl, config.seed)
    values = potential(lvl.space, lvl.mu, ks, f, self_cell=args.self_cell)
    payload = {
        "seed": config.seed,
        "kernel": ks.describe(),
        "N": lvl.space.n,
        "nodes": list(lvl.space.nodes),
        "values": values,
    }
    _emit(payload, config.report)
    if config.csv is not None:
        rows = [
            {"node": node, "f": fv, "value": v}
            for node, fv, v in zip(lvl.space.nodes, f, values)
        ]
        write_csv(config.csv, rows)
    return EXIT_OK


def cmd_norm(args: argparse.Namespace) -> int:
    config = _load_config(args)
    config.require("exponent")
    if args.dry_run:
        _emit(_plan(args, config), None)
        return EXIT_OK
    lvl = build_level(config.level_specs()[-1], config.measure, config.lam)
    pexp = exponent_from_spec(config.exponent, lvl)
    f = function_from_spec(config.function, lvl, config.seed)
    payload = {
        "seed": config.seed,
        "N": lvl.space.n,
        "p_minus": pexp.p_minus,
        "p_plus": pexp.p_plus,
        "modular": modular(lvl.mu, pexp, f),
        "norm": luxemburg_norm(lvl.mu, pexp, f),
    }
    _emit(payload, config.report)
    return EXIT_OK


def _run_experiment(config: RunConfig, action: str) -> ExperimentReport:
    levels = config.build_levels()
    common = {"seed": config.seed, "size": config.family_size, "tau": config.tau}
    if action == "maximal":
        config.require("p")
        return verify_maximal_bounds(levels, config.p, **common)
    if action == "comparison":
        config.require("alpha")
        return verify_comparison(levels, config.alpha, **common)
    config.require("alpha", "p")
    if action == "hls":
        return verify_sufficiency(
            levels,
            config.alpha,
            config.p,
            config.q,
            self_cell=config.self_cell,
            **common,
        )
    if action == "hedberg":
        return verify_hedberg(levels, config.alpha, config.p, config.q, **common)
    return verify_necessity(
        levels,
        config.alpha,
        config.p,
        config.q,
        cluster_weights=config.cluster_weights,
        cluster_node=config.cluster_node,
        **common,
    )


def _failed_reason(report: ExperimentReport) -> dict[str, Any]:
    failed = next(h for h in report.hypotheses if not h["holds"])
    reason = failed.get("reason") or (
        f"{failed['name']} failed at level {failed['level']}"
    )
    return {"error": "HypothesisError", "reason": reason, "witness": failed}


def cmd_verify(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.dry_run:
        _emit(_plan(args, config), None)
        return EXIT_OK
    report = _run_experiment(config, args.action)
    payload = dict(report.to_dict(), config=config.to_dict())
    _emit(payload, config.report)
    if config.csv is not None:
        write_csv(config.csv, report.csv_rows())
    if report.verdict == NOT_MET:
        sys.stderr.write(json.dumps(jsonable(_failed_reason(report)), sort_keys=True))
        sys.stderr.write("\n")
        return EXIT_REJECTED
    if report.verdict == VIOLATED:
        logger.warning("%s verdict: violated", report.experiment)
        return EXIT_FAILED
    return EXIT_OK


COMMANDS: dict[str, tuple[Callable[[argparse.Namespace], int], tuple[str, ...]]] = {
    "space": (cmd_space, ("build", "info")),
    "measure": (cmd_measure, ("check",)),
    "glue": (cmd_glue, ("build", "verify-balls")),
    "op": (cmd_op, ("apply",)),
    "norm": (cmd_norm, ()),
    "verify": (cmd_verify, ("hls", "hedberg", "necessity", "maximal", "comparison")),
}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        msg = f"expected a positive integer, got {text}"
        raise argparse.ArgumentTypeError(msg)
    return value


def parse_command_line(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="udpot",
        description="Potential operators for upper doubling measures on discrete "
        "quasi-metric spaces.",
    )
    parser.add_argument("--threads", type=_positive_int, help="worker thread cap")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument(
        "--dry-run", action="store_true", help="print the resolved plan and exit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("space", "glue"):
        cmd = sub.add_parser(name)
        cmd.add_argument("action", choices=COMMANDS[name][1])
        cmd.add_argument("--spec", required=True, help="JSON spec file")
        cmd.add_argument("--out", help="output JSON file, stdout by default")

    for name in ("measure", "op", "verify"):
        cmd = sub.add_parser(name)
        cmd.add_argument("action", choices=COMMANDS[name][1])
        cmd.add_argument("--config", required=True, help="JSON run configuration")
        cmd.add_argument("--report", help="output JSON report")
        cmd.add_argument("--csv", help="output CSV table")
        if name == "op":
            cmd.add_argument(
                "--self-cell", action="store_true", help="add the own-cell term"
            )

    norm = sub.add_parser("norm")
    norm.set_defaults(action=None)
    norm.add_argument("--config", required=True, help="JSON run configuration")
    norm.add_argument("--report", help="output JSON report")
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = parse_command_line(argv)
    try:
        set_threads(args.threads)
        handler = COMMANDS[args.command][0]
        return handler(args)
    except UdpotError as e:
        payload = {"error": type(e).__name__, "reason": str(e)}
        if isinstance(e, HypothesisError):
            payload["witness"] = e.witness
        sys.stderr.write(json.dumps(jsonable(payload), sort_keys=True) + "\n")
        return EXIT_REJECTED
    except Exception:
        logger.exception("internal error")
        return EXIT_FAILED
    finally:
        set_threads(None)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
