"""Criterion-validity analysis of rubric scores against conversion outcomes.

Exit status: 0 success, 1 analysis or assertion failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import OUTCOME_CHOICES, correlate, logistic_section, partial_rows, prepare
from .composite import BUILTIN_SCHEMES, SchemeError, get_scheme, parse_policy, scheme_validate
from .dataset import DIMS, Dataset, DatasetError, Dim, builtin_phase1, load_records, load_transcripts
from .funnel import (
    RuleBook,
    RuleError,
    GateError,
    annotate_all,
    behavior_signals,
    desync_matrix,
    gate_audit,
    load_trajectories,
)
from .gate import L1Metrics, P0FormatError, cycle_report, decide, l2_evaluate, l3_evaluate, load_p0
from .report import csv_text, fmt3, dumps_json, markdown_table, provenance, sha256_file, write_bundle
from .reproduce import reproduce_phase1
from .stats import DegenerateInputError, RankDeficientError
from .weights import CVConfig, SearchConfig, compare_schemes, search_weights, temporal_cv

BUILTIN_INPUT = "builtin:phase1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _color(text: str, code: str) -> str:
    if os.environ.get("CRITVAL_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def green(text: str) -> str:
    return _color(text, "32")


def red(text: str) -> str:
    return _color(text, "31")


# ---------------------------------------------------------------------------
# shared config handling

def _formats(text: str) -> list[str]:
    fmts = [f.strip().lower() for f in text.split(",") if f.strip()]
    bad = [f for f in fmts if f not in ("json", "md", "csv")]
    if bad:
        raise UsageError(f"unknown report format(s): {', '.join(bad)}")
    return fmts


def _load_input(args) -> tuple[Dataset, dict]:
    if args.input is None or args.input == BUILTIN_INPUT:
        d = builtin_phase1()
        return d, {BUILTIN_INPUT: "builtin"}
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"input file not found: {path}")
    return load_records(path, args.format), {str(path): sha256_file(path)}


def _config_echo(args) -> dict:
    keep = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func",):
            continue
        keep[k] = v
    return keep


def _emit(args, stem: str, payload: dict, markdown: str | None, csv_body: str | None) -> None:
    sys.stdout.write(markdown if markdown is not None else dumps_json(payload))
    if args.out:
        for p in write_bundle(args.out, stem, payload, markdown, csv_body, _formats(args.report)):
            print(f"wrote {p}", file=sys.stderr)


def _scheme(args):
    s = get_scheme(args.scheme)
    rep = scheme_validate(s)
    if not rep.ok:
        raise SchemeError("; ".join(f.message for f in rep.errors))
    for w in rep.warnings:
        print(f"warning: scheme {s.name}: {w.message}", file=sys.stderr)
    return s


def _policy(args):
    try:
        return parse_policy(args.policy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _prepared(args):
    d, inputs = _load_input(args)
    prep = prepare(d, args.outcome)
    if prep.excluded_ids:
        print(f"note: excluded {len(prep.excluded_ids)} trust-collapse record(s): "
              f"{', '.join(prep.excluded_ids)}", file=sys.stderr)
    return prep, inputs


# ---------------------------------------------------------------------------
# commands

def cmd_correlate(args) -> int:
    prep, inputs = _prepared(args)
    scheme, policy = _scheme(args), _policy(args)
    rep = correlate(prep, scheme, policy, args.bonferroni_m)
    payload = {"report": rep.to_dict(), "provenance": provenance(inputs, _config_echo(args))}
    md = rep.to_markdown()
    if args.partial_on:
        rows = partial_rows(prep, args.partial_on, args.bonferroni_m)
        payload["partial"] = {"covariate": args.partial_on, "rows": [r.to_dict() for r in rows]}
        md += f"\nPartial Spearman controlling for {args.partial_on}\n\n" + markdown_table(
            ["Dimension", "n", "partial rho", "p", "Bonf. p", "Note"],
            [[r.label, r.n, r.result.rho if r.result else None,
              r.result.p_uncorrected if r.result else None,
              r.result.p_bonferroni if r.result else None, r.error or ""] for r in rows])
    if args.logistic:
        dims = [Dim.parse(x) for x in args.logistic.split(",") if x.strip()]
        try:
            section = logistic_section(prep, dims)
        except (DegenerateInputError, RankDeficientError, ValueError) as exc:
            section = {"error": str(exc)}
        payload["logistic"] = section
        if "fit" in section:
            terms = section["fit"]["terms"]
            md += "\nLogistic regression (deal flag)\n\n" + markdown_table(
                ["Term", "coef", "SE", "p", "OR", "95% CI"],
                [[k, t["coef"], t["se"], t["p"], t.get("odds_ratio"),
                  f"[{t['ci_low']:.3f}, {t['ci_high']:.3f}]" if "ci_low" in t else ""]
                 for k, t in terms.items()])
            md += f"\nAIC {section['fit']['aic']:.3f}\n"
        else:
            md += f"\nLogistic regression: {section['error']}\n"
    _emit(args, "correlate", payload, md, rep.to_csv())
    return EXIT_OK if rep.composite.result or any(r.result for r in rep.rows) else EXIT_FAIL


def _scheme_rows(evals) -> list[list]:
    return [[e.name] + [int(w) if w.denominator == 1 else float(w) for w in e.scheme.vector()]
            + [e.rho, e.p, e.n] for e in evals]


SCHEME_HEAD = ["Scheme"] + [d.value for d in DIMS] + ["rho", "p", "n"]


def cmd_weights_eval(args) -> int:
    prep, inputs = _prepared(args)
    policy = _policy(args)
    schemes = list(BUILTIN_SCHEMES.values())
    if args.scheme and get_scheme(args.scheme).name not in BUILTIN_SCHEMES:
        schemes.append(_scheme(args))
    evals = compare_schemes(prep.data, schemes, policy)
    rows = _scheme_rows(evals)
    payload = {"schemes": [e.to_dict() for e in evals], "policy": policy.label,
               "provenance": provenance(inputs, _config_echo(args))}
    _emit(args, "weights_eval", payload, markdown_table(SCHEME_HEAD, rows),
          csv_text(SCHEME_HEAD, rows))
    return EXIT_OK


def _bounds(items: Sequence[str] | None):
    if not items:
        return None
    out = {}
    for item in items:
        try:
            dim, rng = item.split("=")
            lo, hi = rng.split(":")
            out[Dim.parse(dim)] = (int(lo), int(hi))
        except ValueError:
            raise UsageError(f"bad --bound {item!r}; expected e.g. D3=20:60") from None
    return out


def cmd_weights_search(args) -> int:
    prep, inputs = _prepared(args)
    policy = _policy(args)
    try:
        cfg = SearchConfig(step=args.step, bounds=_bounds(args.bound))
        cfg.levels()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = search_weights(prep.data, cfg, policy)
    rows = _scheme_rows([res.evaluation])
    payload = {"search": res.to_dict(), "step": args.step,
               "provenance": provenance(inputs, _config_echo(args))}
    md = markdown_table(SCHEME_HEAD, rows)
    md += f"\n{res.n_candidates} candidates, {res.n_tied_best} tied at the best rho\n"
    _emit(args, "weights_search", payload, md, csv_text(SCHEME_HEAD, rows))
    return EXIT_OK


def cmd_weights_cv(args) -> int:
    prep, inputs = _prepared(args)
    policy = _policy(args)
    try:
        res = temporal_cv(prep.data, CVConfig(folds=args.folds), SearchConfig(step=args.step), policy)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    head = ["Fold", "n test", "trained rho", "equal rho", "delta", "Note"]
    rows = [[f.index, len(f.test_ids), f.trained_rho, f.equal_rho, f.delta, f.error or ""]
            for f in res.folds]
    md = markdown_table(head, rows)
    md += (f"\nmean trained {fmt3(res.mean_trained)}, mean equal {fmt3(res.mean_equal)}, "
           f"wins {res.wins}/{res.n_valid}\n")
    payload = {"cv": res.to_dict(), "provenance": provenance(inputs, _config_echo(args))}
    _emit(args, "weights_cv", payload, md, csv_text(head, rows))
    return EXIT_OK


def cmd_funnel(args) -> int:
    tpath = Path(args.transcripts)
    if not tpath.is_file():
        raise UsageError(f"transcripts file not found: {tpath}")
    if args.rules and not Path(args.rules).is_file():
        raise UsageError(f"rules file not found: {args.rules}")
    rules = RuleBook.load(args.rules) if args.rules else RuleBook.default()
    transcripts = load_transcripts(tpath)
    inputs = {str(tpath): sha256_file(tpath)}
    if args.rules:
        inputs[args.rules] = sha256_file(args.rules)
    anns = annotate_all(transcripts.values(), rules)
    trajectories = None
    if args.trust:
        if not Path(args.trust).is_file():
            raise UsageError(f"trust file not found: {args.trust}")
        trajectories = load_trajectories(args.trust)
        inputs[args.trust] = sha256_file(args.trust)
        missing = sorted(set(anns) ^ set(trajectories))
        if missing:
            raise DatasetError(f"transcript / trajectory ids do not align: {missing}")
    finals = {k: t.final for k, t in trajectories.items()} if trajectories else None
    summary = desync_matrix(anns, finals)
    per_conv = []
    for key, a in anns.items():
        item = a.to_dict()
        item["signals"] = behavior_signals(transcripts[key], rules).to_dict()
        if trajectories:
            item["gate_violations"] = [v.to_dict() for v in gate_audit(a, trajectories[key])]
        per_conv.append(item)
    head = ["Metric"] + list(summary.groups)
    rows = [["Conversations"] + [g.n for g in summary.groups.values()],
            ["Mean stage transitions"] + [g.mean_transitions for g in summary.groups.values()],
            ["F6 reach rate"] + [g.f6_reach_rate for g in summary.groups.values()],
            ["Mean messages at F6"] + [g.mean_f6_messages for g in summary.groups.values()]]
    md = markdown_table(head, rows) if summary.groups else "no transcripts\n"
    payload = {"summary": summary.to_dict(), "conversations": per_conv,
               "provenance": provenance(inputs, _config_echo(args))}
    matrix_csv = None
    if summary.matrix is not None:
        matrix_csv = csv_text(["max_stage", "T0", "T1", "T2", "T3", "T4", "T5", "T6"],
                              [[f"F{i + 1}"] + list(r) for i, r in enumerate(summary.matrix)])
    _emit(args, "funnel", payload, md, matrix_csv)
    if args.out:
        p = Path(args.out) / "annotations.jsonl"
        p.write_text("".join(json.dumps(c, sort_keys=True, ensure_ascii=False) + "\n"
                             for c in per_conv), encoding="utf-8")
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def _gate_signals(args, d: Dataset):
    if not args.transcripts:
        return None
    rules = RuleBook.load(args.rules) if args.rules else RuleBook.default()
    ts = load_transcripts(args.transcripts)
    return {k: behavior_signals(t, rules) for k, t in ts.items() if k in set(d.ids)}


def cmd_gate(args) -> int:
    scheme, policy = _scheme(args), _policy(args)
    if args.run:
        if args.p0:
            raise UsageError("use either --p0 or --run, not both")
        runs = {}
        inputs = {}
        for name, p0_path, data_path in args.run:
            _, cases = load_p0(p0_path)
            d = (builtin_phase1() if data_path == BUILTIN_INPUT
                 else load_records(data_path, args.format))
            runs[name] = (cases, d)
            inputs[p0_path] = sha256_file(p0_path)
            if data_path != BUILTIN_INPUT:
                inputs[data_path] = sha256_file(data_path)
        baseline = args.baseline or sorted(runs)[0]
        if baseline not in runs:
            raise UsageError(f"unknown baseline {baseline!r}")
        rep = cycle_report(runs, baseline, scheme, policy)
        payload = {"cycle": rep.to_dict(), "provenance": provenance(inputs, _config_echo(args))}
        _emit(args, "gate", payload, rep.to_markdown(), None)
        for col in rep.columns:
            verdict = col.decision.verdict.value
            print(f"{col.config}: " + (green(verdict) if verdict == "GO" else red(verdict)),
                  file=sys.stderr)
        return EXIT_OK
    if not args.p0:
        raise UsageError("gate needs --p0 FILE (or one or more --run NAME P0 DATA)")
    config, cases = load_p0(args.p0)
    d, inputs = _load_input(args)
    inputs[args.p0] = sha256_file(args.p0)
    l1 = None
    if args.l1:
        try:
            l1 = L1Metrics(json.loads(Path(args.l1).read_text(encoding="utf-8")))
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise UsageError(f"bad L1 metrics file: {exc}") from None
    l2 = l2_evaluate(d, scheme, policy, _gate_signals(args, d))
    g = decide(l3_evaluate(cases), l2, l1)
    payload = {"config": config, "decision": g.to_dict(),
               "provenance": provenance(inputs, _config_echo(args))}
    md = markdown_table(["Metric", config or "config"], [
        ["P0 pass rate", f"{100 * g.l3.pass_rate:.1f}%"],
        ["Failed P0 cases", ", ".join(g.l3.failed_ids) or "none"],
        ["D3 mean", l2.d3_mean],
        ["Weighted total", l2.weighted_total],
        ["Verdict", g.verdict.value],
    ]) + f"\n{g.rationale}\n"
    _emit(args, "gate", payload, md, None)
    verdict = g.verdict.value
    print(green(verdict) if verdict == "GO" else red(verdict), file=sys.stderr)
    return EXIT_OK if verdict == "GO" else EXIT_FAIL


def cmd_reproduce(args) -> int:
    if args.input and args.input != BUILTIN_INPUT:
        d, inputs = _load_input(args)
        res = reproduce_phase1(d, source=str(args.input))
    else:
        res = reproduce_phase1()
    out = Path(args.out or "phase1-reproduction")
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(dumps_json(res.bundle), encoding="utf-8")
    for c in res.checks:
        if c.ok:
            continue
        tag = red("DRIFT") if c.gating else "KNOWN"
        print(f"{tag} {c.name}: expected {c.expected}, actual {c.actual}"
              + (f" (tol {c.tolerance})" if c.tolerance is not None else ""))
    n = len(res.checks)
    status = green("OK") if res.ok else red("FAILED")
    print(f"{status}: {n - len(res.failures) - len(res.discrepancies)}/{n} checks match, "
          f"{len(res.failures)} drifted, {len(res.discrepancies)} known discrepancies; "
          f"bundle at {out / 'bundle.json'}")
    return EXIT_OK if res.ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    if data:
        p.add_argument("--input", help=f"records file (csv/jsonl) or {BUILTIN_INPUT}")
        p.add_argument("--format", choices=("csv", "jsonl"), help="override format detection")
        p.add_argument("--outcome", choices=OUTCOME_CHOICES, default="auto")
    p.add_argument("--policy", default="proportional",
                   help="proportional | complete-case | impute:<v>")
    p.add_argument("--scheme", default="v2.0_current", help="builtin scheme name or JSON file")
    p.add_argument("--bonferroni-m", type=int, default=7)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", help="output directory")
    p.add_argument("--report", default="json,md,csv", help="comma list of json, md, csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critval", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"critval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("correlate", help="per-dimension correlation and effect-size table")
    _common(p)
    p.add_argument("--partial-on", help="covariate for partial Spearman (dimension or message_count)")
    p.add_argument("--logistic", help="comma list of dimensions for a logistic fit on the deal flag")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("weights-eval", help="compare weight schemes")
    _common(p)
    p.set_defaults(func=cmd_weights_eval)

    p = sub.add_parser("weights-search", help="grid search for the best weight vector")
    _common(p)
    p.add_argument("--step", type=int, default=5)
    p.add_argument("--bound", action="append", metavar="DIM=LO:HI")
    p.set_defaults(func=cmd_weights_search)

    p = sub.add_parser("weights-cv", help="temporal cross-validation of searched weights")
    _common(p)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--step", type=int, default=10)
    p.set_defaults(func=cmd_weights_cv)

    p = sub.add_parser("funnel", help="funnel-stage detection and desynchronization summary")
    _common(p, data=False)
    p.add_argument("--transcripts", required=True, help="transcripts JSONL")
    p.add_argument("--rules", help="rule-set JSON (default: bundled lexicon)")
    p.add_argument("--trust", help="trust trajectory JSONL")
    p.set_defaults(func=cmd_funnel)

    p = sub.add_parser("gate", help="three-layer GO/NO-GO decision")
    _common(p)
    p.add_argument("--p0", help="P0 results JSON")
    p.add_argument("--l1", help="JSON object of L1 business metrics")
    p.add_argument("--transcripts", help="transcripts JSONL; enables pacing caps in L2")
    p.add_argument("--rules", help="rule-set JSON for cap signals")
    p.add_argument("--run", nargs=3, action="append", metavar=("NAME", "P0", "DATA"),
                   help="one configuration of a cycle report (repeatable)")
    p.add_argument("--baseline", help="baseline configuration for cycle deltas")
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("reproduce-phase1", help="recompute the built-in fixture analysis and check it")
    _common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.bonferroni_m < 1:
        parser.error("--bonferroni-m must be >= 1")
    random.seed(args.seed)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except (UsageError, DatasetError, SchemeError, RuleError, P0FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateInputError, RankDeficientError, GateError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
