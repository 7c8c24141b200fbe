"""Command-line front end.

    eqmorph run    --target builtin --iterations 3 --out results/
    eqmorph replay results/report-<id>.json --target builtin
    eqmorph gen    --seed s1 --queries 20

Exit codes: 0 no divergences, 10 divergences found (or reproduced on
replay), 1 operational error.  A flat key=value config file supplies
defaults that individual flags override.
"""

from __future__ import annotations

import argparse
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .adapter import EngineTimeout, ProtocolError, make_endpoint
from .harness import (
    COMPARE_MODES, BugReport, GeneratorConfig, IterationResult,
    generate_schema, generate_seed, persist_iteration, replay_report,
    run_iteration,
)
from .refdb import UnknownFault
from .sqlast import render
from .transform import RULE_CATALOG

EXIT_CLEAN = 0
EXIT_OPERATIONAL = 1
EXIT_BUGS = 10


@dataclass
class CampaignConfig:
    target: str = "builtin"
    iterations: int = 1
    queries: int = 2000
    seed: str = "campaign"
    rules: str = ""  # comma-separated subset of RULE_CATALOG; empty = all
    filter_budget: int = 32
    compare: str = "both"
    out: str = "eqmorph-out"
    error_list: str = ",".join(
        ("UNKNOWN_TABLE", "UNKNOWN_COLUMN", "NON_GROUPED_COLUMN",
         "TYPE_MISMATCH", "DIV_BY_ZERO"))
    workers: int = 1

    def enabled_rules(self):
        if not self.rules:
            return None
        names = tuple(r.strip() for r in self.rules.split(",") if r.strip())
        for r in names:
            if r not in RULE_CATALOG:
                raise ValueError(f"unknown rule {r!r}; "
                                 f"known: {', '.join(RULE_CATALOG)}")
        return frozenset(names)

    def error_codes(self):
        return tuple(c.strip() for c in self.error_list.split(",")
                     if c.strip())


def load_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(args) -> CampaignConfig:
    cfg = CampaignConfig()
    file_values = load_config_file(args.config) if args.config else {}
    valid = {f.name: f.type for f in fields(CampaignConfig)}
    for key, value in file_values.items():
        if key not in valid:
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        setattr(cfg, key, type(current)(value))
    for key in valid:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    if cfg.compare not in COMPARE_MODES:
        raise ValueError(f"unknown compare mode {cfg.compare!r}")
    return cfg


def _add_campaign_flags(ap):
    ap.add_argument("--config", default=None,
                    help="key=value config file; flags override it")
    ap.add_argument("--target", default=None,
                    help="builtin | builtin:<fault> | extern:<command>")
    ap.add_argument("--iterations", type=int, default=None)
    ap.add_argument("--queries", type=int, default=None,
                    help="seed queries per iteration")
    ap.add_argument("--seed", default=None, help="campaign seed string")
    ap.add_argument("--rules", default=None,
                    help="comma-separated rule subset")
    ap.add_argument("--filter-budget", dest="filter_budget", type=int,
                    default=None,
                    help="databases probed by the equivalence filter")
    ap.add_argument("--compare", default=None,
                    choices=COMPARE_MODES)
    ap.add_argument("--out", default=None, help="report output directory")
    ap.add_argument("--error-list", dest="error_list", default=None,
                    help="comma-separated engine error codes to discard")
    ap.add_argument("--workers", type=int, default=None)


def _run_one(cfg: CampaignConfig, gen_cfg: GeneratorConfig,
             iteration: int) -> IterationResult:
    endpoint = make_endpoint(cfg.target)
    endpoint.start()
    try:
        return run_iteration(
            endpoint, gen_cfg, cfg.seed, iteration,
            compare_mode=cfg.compare, error_list=cfg.error_codes(),
            enabled_rules=cfg.enabled_rules())
    finally:
        endpoint.stop()


def cmd_run(args) -> int:
    cfg = build_config(args)
    gen_cfg = GeneratorConfig(queries_per_iteration=cfg.queries,
                              filter_budget=cfg.filter_budget)
    total_reports = 0
    iterations = list(range(cfg.iterations))
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(
                lambda it: _run_one(cfg, gen_cfg, it), iterations))
    else:
        results = [_run_one(cfg, gen_cfg, it) for it in iterations]
    for res in results:
        persist_iteration(cfg.out, res)
        total_reports += len(res.reports)
        s = res.stats
        print(f"iteration {s.iteration}: generated={s.generated} "
              f"valid={s.validAfterExecution} pairs={s.pairsEmitted} "
              f"filtered={s.pairsFiltered} mismatches={s.mismatches} "
              f"elapsed={s.elapsed:.1f}s")
    print(f"total bug reports: {total_reports} (in {cfg.out})")
    return EXIT_BUGS if total_reports else EXIT_CLEAN


def cmd_replay(args) -> int:
    cfg = build_config(args)
    report = BugReport.from_json(Path(args.report).read_text())
    endpoint = make_endpoint(cfg.target)
    endpoint.start()
    try:
        res = replay_report(report, endpoint, error_list=cfg.error_codes())
    finally:
        endpoint.stop()
    print(f"report {report.id}: "
          + ("reproduced: " + res.detail if res.reproduced
             else "not reproduced: " + res.detail))
    return EXIT_BUGS if res.reproduced else EXIT_CLEAN


def cmd_gen(args) -> int:
    cfg = build_config(args)
    gen_cfg = GeneratorConfig(queries_per_iteration=cfg.queries)
    rng = random.Random(f"{cfg.seed}:0")
    schema = generate_schema(rng, gen_cfg)
    for _ in range(cfg.queries):
        print(render(generate_seed(rng, schema, gen_cfg)))
    return EXIT_CLEAN


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="eqmorph",
        description="metamorphic testing of SQL engines via equivalent "
                    "query pairs")
    sub = ap.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a testing campaign")
    _add_campaign_flags(run_p)
    run_p.set_defaults(fn=cmd_run)

    rep_p = sub.add_parser("replay", help="replay a persisted bug report")
    rep_p.add_argument("report", help="path to a report-<id>.json file")
    _add_campaign_flags(rep_p)
    rep_p.set_defaults(fn=cmd_replay)

    gen_p = sub.add_parser("gen", help="print generated seed queries")
    _add_campaign_flags(gen_p)
    gen_p.set_defaults(fn=cmd_gen)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, UnknownFault, ProtocolError,
            EngineTimeout) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
