"""Command-line entry points.

Exit codes: 0 success, 1 verification failure, 2 usage or model error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .harness import (
    PLACEMENTS,
    ConfigError,
    ExperimentConfig,
    Instance,
    VerificationFailure,
    dumps_report,
    place_candidates,
    run_experiment,
    run_full_elicitation,
    run_trial,
    write_bundle,
)
from .model import ModelError, load_model, sample_voters
from .oracle import QueryContext, make_oracles, query_stats, write_dialogues
from .verify import (
    ElectionError,
    check_core_bruteforce,
    check_pjr_plus_bruteforce,
    check_pjr_plus_ci,
    load_committee,
    load_election,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CHECKERS = {
    "pjr-plus": check_pjr_plus_ci,
    "pjr-plus-bf": check_pjr_plus_bruteforce,
    "core-bf": check_core_bruteforce,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_candidates(args, model, rng_seed: np.random.SeedSequence) -> list[float]:
    if args.candidates:
        data = json.loads(Path(args.candidates).read_text())
        if isinstance(data, dict):
            data = data["candidates"]
        return [float(x) for x in data]
    if args.m is None:
        raise UsageError("give --candidates FILE or --m N")
    return place_candidates(model, args.m, args.placement, np.random.default_rng(rng_seed))


def _instance(args):
    model = load_model(args.model)
    cand_ss, voter_ss = np.random.SeedSequence(args.seed).spawn(2)
    positions = _load_candidates(args, model, cand_ss)
    voters = sample_voters(model, args.n, np.random.default_rng(voter_ss))
    return Instance.build(model, positions, voters)


def cmd_model_validate(args) -> int:
    model = load_model(args.file)
    _emit({"valid": True, "kind": model.kind, "sigma": model.sigma})
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(args.model)
    voters = sample_voters(model, args.n, np.random.default_rng(args.seed))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for v in voters:
            out.write(json.dumps({"segment": int(v.segment), "a": float(v.a), "b": float(v.b)}) + "\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_elicit_full(args) -> int:
    inst = _instance(args)
    oracles = make_oracles(inst.voters, QueryContext(inst.model, inst.candidates))
    committee, election = run_full_elicitation(inst, args.k or 1, oracles)
    totals = [query_stats(o)["total"] for o in oracles]
    if args.dialogues:
        with open(args.dialogues, "w") as fh:
            write_dialogues(oracles, fh)
    if args.election:
        data = election.to_dict()
        data["candidates"] = inst.original_candidates
        Path(args.election).write_text(json.dumps(data))
    _emit({
        "n": len(oracles),
        "m": len(inst.candidates),
        "queries_mean": float(np.mean(totals)) if totals else 0.0,
        "queries_max": int(max(totals)) if totals else 0,
        "mes_committee": inst.to_original(committee),
    })
    return EXIT_OK


def cmd_run_pjr(args) -> int:
    inst = _instance(args)
    res = run_trial(inst, args.k, "pjr")
    report = {**res.row, **res.detail, "seed": args.seed, "k": args.k, "n": args.n}
    if args.dialogues:
        with open(args.dialogues, "w") as fh:
            write_dialogues(res.oracles, fh, [o.trace_record(i) for i, o in enumerate(res.pipeline.outcomes)])
    if args.election:
        Path(args.election).write_text(json.dumps(inst.election(args.k).to_dict()))
    if args.out:
        Path(args.out).write_text(dumps_report(report))
    _emit(report)
    if res.row["verdict"] != "pass":
        if args.bundle:
            write_bundle(Path(args.bundle), res, {"seed": args.seed, "k": args.k, "n": args.n})
        return EXIT_FAIL
    return EXIT_OK


def cmd_check(args) -> int:
    election = load_election(args.election)
    committee = load_committee(args.committee)
    witness = CHECKERS[args.axiom](election, committee)
    if witness is None:
        _emit({"axiom": args.axiom, "verdict": "pass"})
        return EXIT_OK
    _emit({"axiom": args.axiom, "verdict": "fail", "witness": witness.to_dict()})
    return EXIT_FAIL


def cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    try:
        report = run_experiment(config)
    except VerificationFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    agg = report["aggregate"]
    _emit({"trials": len(report["rows"]), "violations": agg["violations"], "csv": config.csv,
           "json": config.json})
    return EXIT_OK


def _add_instance_args(p, need_k: bool) -> None:
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--candidates", help="JSON list of candidate positions")
    p.add_argument("--m", type=int, help="number of generated candidates (without --candidates)")
    p.add_argument("--placement", choices=PLACEMENTS, default="iid")
    p.add_argument("--k", type=int, required=need_k)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dialogues", help="write the query log as JSON lines")
    p.add_argument("--election", help="write the ground-truth election JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rivpjr", description="Query-efficient PJR+ committees for interval voters.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("model", help="model utilities")
    msub = p.add_subparsers(dest="model_command", required=True, parser_class=_Parser)
    v = msub.add_parser("validate", help="check a model file")
    v.add_argument("file")
    v.set_defaults(func=cmd_model_validate)

    p = sub.add_parser("sample", help="sample voters as JSON lines")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("elicit-full", help="elicit complete ballots and run MES")
    _add_instance_args(p, need_k=False)
    p.set_defaults(func=cmd_elicit_full)

    p = sub.add_parser("run-pjr", help="run the query-efficient PJR+ pipeline")
    _add_instance_args(p, need_k=True)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--bundle", help="directory for a replay bundle on failure")
    p.set_defaults(func=cmd_run_pjr)

    p = sub.add_parser("check", help="verify a committee")
    p.add_argument("axiom", choices=sorted(CHECKERS))
    p.add_argument("--election", required=True)
    p.add_argument("--committee", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("experiment", help="run a batch experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"model error [{exc.invariant}]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ElectionError, ValueError, FileNotFoundError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
