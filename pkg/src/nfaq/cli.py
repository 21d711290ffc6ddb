"""``nfaq`` command line: one subcommand per module.

Machine output goes to stdout (JSON, JSONL, CSV or plain statement lists);
diagnostics go to stderr. Exit codes: 0 ok, 2 input or schema error,
3 underspecified, 4 ambiguous, 5 execution exhausted, 6 internal fault.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .analytics import analyze, load_cbgs, load_plans, write_frontier_csv
from .campaign import load_config, run_campaign
from .compiler import DEFAULT_HARNESS_CONSTANT, compile_spec, materialize_imperative
from .errors import InvalidSpec, NfaqError
from .fleet import DEFAULT_POOL, generate_fleet
from .inference import ExplorationBudget, fidelity_rows, infer_spec
from .intent import load_spec, serialize_spec, validate_spec
from .metrics import build_report, cdf_points
from .runtime import DEFAULT_STEP_BUDGET, QueryStatus, execute_query
from .sim import (
    AddressClass, MutationOp, bat_from_dict, catalog_from_list, class_of, dump_json, load_bat,
    load_catalog, mutate,
)

log = logging.getLogger("nfaq")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_UNDERSPECIFIED = 3
EXIT_AMBIGUOUS = 4
EXIT_EXHAUSTED = 5
EXIT_FAULT = 6

STATUS_EXIT = {
    QueryStatus.TERMINAL: EXIT_OK,
    QueryStatus.UNDERSPECIFIED: EXIT_UNDERSPECIFIED,
    QueryStatus.AMBIGUOUS: EXIT_AMBIGUOUS,
    QueryStatus.NO_ADMISSIBLE_ACTION: EXIT_EXHAUSTED,
    QueryStatus.STEP_BUDGET_EXHAUSTED: EXIT_EXHAUSTED,
    QueryStatus.ENV_FAULT: EXIT_FAULT,
}

OUT_DIR_ENV = "NFAQ_OUT_DIR"
DEFAULT_OUT_DIR = "nfaq-out"


class UsageError(Exception):
    pass


def _out_dir(arg: Optional[str]) -> Path:
    return Path(arg or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_json_arg(value: str):
    """Inline JSON, or a path to a JSON file."""
    text = value.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    with open(value, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    issues = validate_spec(load_spec(args.spec))
    sys.stdout.write(_json([{"state_id": i.state_id, "rule": i.rule, "message": i.message} for i in issues]))
    return EXIT_OK if not issues else EXIT_INPUT


def cmd_compile(args) -> int:
    nfa = compile_spec(load_spec(args.spec))
    _emit(_json(nfa.to_dict()), args.out)
    return EXIT_OK


def cmd_materialize(args) -> int:
    program = materialize_imperative(load_spec(args.spec), args.harness)
    _emit(program.to_text(), args.out)
    return EXIT_OK


def _address_class(args, bat_doc) -> AddressClass:
    if args.address_class:
        return AddressClass(args.address_class)
    if args.catalog:
        return class_of(load_catalog(args.catalog), args.address)
    if isinstance(bat_doc, dict) and "catalog" in bat_doc:
        return class_of(catalog_from_list(bat_doc["catalog"]), args.address)
    return AddressClass.UNKNOWN


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    with open(args.env, encoding="utf-8") as fh:
        doc = json.load(fh)
    bat = bat_from_dict(doc)
    cls = _address_class(args, doc)
    result = execute_query(compile_spec(spec), args.address, bat.session(args.address, cls), args.step_budget)
    sys.stdout.write(_json(result.to_dict()))
    return STATUS_EXIT[result.status]


def cmd_mutate(args) -> int:
    bat = load_bat(args.bat)
    new = mutate(bat, MutationOp.from_dict(_read_json_arg(args.op)))
    _emit(_json(new.to_dict()), args.out)
    return EXIT_OK


def cmd_fleet(args) -> int:
    pool = DEFAULT_POOL
    if args.pool:
        pool = tuple(Path(args.pool).read_text(encoding="utf-8").split())
    fleet = generate_fleet(args.seed, args.n, pool, args.share_ratio)
    out = _out_dir(args.out_dir)
    for sub in ("bats", "specs", "catalogs"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    index = []
    for e in fleet:
        isp = e.bat.isp_id
        dump_json(e.bat.to_dict(), out / "bats" / f"{isp}.json")
        (out / "specs" / f"{isp}.json").write_text(serialize_spec(e.spec), encoding="utf-8")
        dump_json([r.to_dict() for r in e.catalog], out / "catalogs" / f"{isp}.json")
        index.append({"isp_id": isp, "pages": len(e.bat.pages), "bat": f"bats/{isp}.json",
                      "spec": f"specs/{isp}.json", "catalog": f"catalogs/{isp}.json"})
    # a ready-to-run campaign over the generated tools; paths resolve against this directory
    dump_json({"isps": [{k: row[k] for k in ("spec", "bat", "catalog")} for row in index], "rounds": 4},
              out / "campaign.json")
    sys.stdout.write(_json({"seed": args.seed, "n": args.n, "share_ratio": args.share_ratio,
                            "out_dir": str(out), "isps": index}))
    return EXIT_OK


def cmd_campaign(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args.out_dir)
    last = run_campaign(config, out, args.stop_after)
    sys.stdout.write(_json({"out_dir": str(out), "completed_rounds": last, "rounds": config.rounds}))
    return EXIT_OK


def cmd_metrics(args) -> int:
    paths = sorted(Path(args.specs).glob("*.json"))
    if not paths:
        raise UsageError(f"no spec files in {args.specs}")
    specs = [load_spec(p) for p in paths]
    interventions = None
    if args.interventions:
        with open(args.interventions, encoding="utf-8") as fh:
            interventions = [json.loads(line) for line in fh if line.strip()]
    report = build_report(specs, interventions, args.harness)
    _emit(_json(report.to_dict()), args.out)
    if args.csv_dir:
        d = Path(args.csv_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, series in (("compression_cdf", report.compression_ratios), ("jaccard_cdf", report.jaccard)):
            with open(d / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["value", "cdf"])
                w.writerows(cdf_points(series))
        with open(d / "token_growth.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["specs_onboarded", "unique_tokens"])
            w.writerows((i + 1, v) for i, v in enumerate(report.token_curve))
    return EXIT_OK


def cmd_infer(args) -> int:
    bat = load_bat(args.bat)
    budget = ExplorationBudget.from_catalog(load_catalog(args.catalog), args.max_pages)
    spec = infer_spec(bat, budget)
    _emit(serialize_spec(spec), args.out)
    return EXIT_OK


def cmd_fidelity(args) -> int:
    rows = fidelity_rows(load_spec(args.spec_a), load_spec(args.spec_b), load_bat(args.bat),
                         load_catalog(args.catalog), args.step_budget)
    agreement = sum(r.agree for r in rows) / len(rows) if rows else 1.0
    for r in rows:
        if not r.agree:
            log.info("disagree %s: %s vs %s", r.address, r.key_a, r.key_b)
    sys.stdout.write(f"{agreement}\n")
    return EXIT_OK


def cmd_analyze(args) -> int:
    points, summary = analyze(load_cbgs(args.cbgs), load_plans(args.plans))
    out = _out_dir(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "frontier.csv", "w", newline="", encoding="utf-8") as fh:
        write_frontier_csv(points, fh)
    (out / "summary.json").write_text(_json(summary), encoding="utf-8")
    sys.stdout.write(_json(summary))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _globals(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(1), help="generator seed (u64)")
    parser.add_argument("--step-budget", type=int, default=default(DEFAULT_STEP_BUDGET),
                        help="observe-match-act iterations per query")
    parser.add_argument("--harness", type=int, default=default(DEFAULT_HARNESS_CONSTANT),
                        help="fixed statement count of the materialized harness")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfaq", description="Declarative automaton querying of availability tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    _globals(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, fn, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.set_defaults(func=fn)
        return sp

    sp = add("validate", cmd_validate, "check a spec against its invariants")
    sp.add_argument("--spec", required=True)

    sp = add("compile", cmd_compile, "compile a spec to a concrete automaton (JSON)")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out")

    sp = add("materialize", cmd_materialize, "emit the imperative statement list and its LLOC")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out")

    sp = add("run", cmd_run, "execute one query against a simulated tool")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--address", required=True)
    sp.add_argument("--env", required=True, help="tool (BAT) JSON file")
    sp.add_argument("--catalog", help="address catalog used to look up the address class")
    sp.add_argument("--class", dest="address_class", choices=[c.value for c in AddressClass])

    sp = add("mutate", cmd_mutate, "apply one churn operator to a tool")
    sp.add_argument("--bat", required=True)
    sp.add_argument("--op", required=True, help="mutation as inline JSON or a JSON file")
    sp.add_argument("--out")

    sp = add("fleet", cmd_fleet, "generate simulated tools, specs and catalogs")
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--share-ratio", type=float, default=0.8)
    sp.add_argument("--pool", help="whitespace-separated shared token pool file")
    sp.add_argument("--out-dir")

    sp = add("campaign", cmd_campaign, "run or resume a measurement campaign")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir")
    sp.add_argument("--stop-after", type=int, help="stop after this round (resume later)")

    sp = add("metrics", cmd_metrics, "size, compression and reuse metrics over a spec directory")
    sp.add_argument("--specs", required=True)
    sp.add_argument("--interventions")
    sp.add_argument("--out")
    sp.add_argument("--csv-dir", help="also write CDF and growth series as CSV")

    sp = add("infer", cmd_infer, "synthesize a spec by exploring a simulated tool")
    sp.add_argument("--bat", required=True)
    sp.add_argument("--catalog", required=True)
    sp.add_argument("--out")
    sp.add_argument("--max-pages", type=int, default=64)

    sp = add("fidelity", cmd_fidelity, "terminal-outcome agreement of two specs")
    sp.add_argument("--spec-a", required=True)
    sp.add_argument("--spec-b", required=True)
    sp.add_argument("--bat", required=True)
    sp.add_argument("--catalog", required=True)

    sp = add("analyze", cmd_analyze, "affordability frontier and baseline statistics")
    sp.add_argument("--plans", required=True)
    sp.add_argument("--cbgs", required=True)
    sp.add_argument("--out-dir")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # unknown subcommands exit 2 with usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except InvalidSpec as exc:
        sys.stdout.write(_json([{"state_id": i.state_id, "rule": i.rule, "message": i.message} for i in exc.issues]))
        log.error("%s", exc)
        return EXIT_INPUT
    except (NfaqError, UsageError, OSError, ValueError, KeyError) as exc:
        log.error("%s: %s", getattr(exc, "code", type(exc).__name__), exc)
        return EXIT_INPUT
    except Exception:  # pragma: no cover - last-resort guard
        log.exception("internal fault")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
