"""Campaign harness: seed generation, pair comparison, and the
generate/transform/filter/execute/compare loop.

Each iteration builds a fresh random schema and database, loads it into
the target engine, then streams generated seed queries through the rule
catalog.  Pairs that survive the bounded equivalence filter run on the
target; result multisets that differ become persisted bug reports with a
self-contained SQL reproducer.

Everything is driven by a string seed so a campaign replays byte-for-byte
(timestamps aside).
"""

from __future__ import annotations

import json
import random
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Optional

from . import dbgen
from .equivfilter import DEFAULT_BUDGET, NoCounterexample, NotEquivalent, \
    check_bounded
from .parser import parse
from .refdb import STABLE_ERROR_CODES, dump_script, load_script, schema_of
from .sqlast import (
    AggCall, And, Cmp, ColumnRef, Const, Not, Or, Schema, SqlQuery, SqlSyntaxError,
    TruthLit, render, validate,
)
from .transform import NoRuleApplies, TransformContext, transform_query
from .values import TruthValue, parse_rendered, row_sort_key

COMPARE_MODES = ("canonical", "raw-text", "both")


# ---------------------------------------------------------------------------
# generation


@dataclass
class GeneratorConfig:
    queries_per_iteration: int = 2000
    max_tables: int = 2
    min_columns: int = 2
    max_columns: int = 4
    min_rows: int = 1
    max_rows: int = 6
    # production weights: plain select, filtered select, aggregate,
    # grouped select without aggregates
    w_plain: float = 0.2
    w_filtered: float = 0.3
    w_agg: float = 0.3
    w_grouped: float = 0.2
    p_distinct: float = 0.25
    p_having: float = 0.5
    p_where_on_grouped: float = 0.4
    p_set_op: float = 0.15
    p_two_tables: float = 0.2
    pred_depth: int = 2
    filter_budget: int = DEFAULT_BUDGET


_COLUMN_TYPES = ("int", "dec", "str")


def generate_schema(rng: random.Random, cfg: GeneratorConfig) -> Schema:
    """Random schema with globally unique column names (no ambiguity)."""
    n_tables = rng.randint(1, cfg.max_tables)
    tables = []
    counter = 0
    for t in range(n_tables):
        n_cols = rng.randint(cfg.min_columns, cfg.max_columns)
        # always at least one int and one dec column so grouping keys and
        # SUM/AVG arguments exist
        types = ["int", "dec"]
        while len(types) < n_cols:
            types.append(rng.choice(_COLUMN_TYPES))
        rng.shuffle(types)
        cols = []
        for ty in types:
            cols.append((f"c{counter}", ty))
            counter += 1
        tables.append((f"t{t}", tuple(cols)))
    return Schema(tuple(tables))


def generate_database(rng: random.Random, schema: Schema,
                      cfg: GeneratorConfig):
    return dbgen.random_database(schema, rng, cfg.min_rows, cfg.max_rows)


def value_hints_of(db) -> dict:
    hints = {}
    for name, t in db.items():
        for i, (col, _) in enumerate(t.columns):
            vals = sorted({row[i] for row in t.rows
                           if row[i] is not None}, key=str)
            hints[(name, col)] = vals
    return hints


def _pick_subset(rng, items, min_size=1):
    k = rng.randint(min_size, len(items))
    return rng.sample(list(items), k)


def _gen_term_const(rng, ty):
    if rng.random() < 0.1:
        return Const(None)
    return Const(rng.choice(dbgen.RANDOM_POOLS[ty]))


def _gen_leaf_pred(rng, cols, schema):
    if rng.random() < 0.05:
        return TruthLit(rng.choice((TruthValue.TRUE, TruthValue.FALSE,
                                    TruthValue.UNKNOWN)))
    col = rng.choice(cols)
    ty = schema.col_type(col.table, col.name)
    op = rng.choice(("=", "!=", "<", "<=", ">", ">="))
    kind = "num" if ty in ("int", "dec") else "str"
    peers = [c for c in cols
             if ("num" if schema.col_type(c.table, c.name) in ("int", "dec")
                 else "str") == kind]
    if len(peers) > 1 and rng.random() < 0.25:
        other = rng.choice([c for c in peers if c != col] or peers)
        return Cmp(col, op, other)
    return Cmp(col, op, _gen_term_const(rng, ty))


def gen_pred(rng, cols, schema, depth):
    if depth <= 0 or rng.random() < 0.5:
        return _gen_leaf_pred(rng, cols, schema)
    roll = rng.random()
    if roll < 0.45:
        return And(gen_pred(rng, cols, schema, depth - 1),
                   gen_pred(rng, cols, schema, depth - 1))
    if roll < 0.85:
        return Or(gen_pred(rng, cols, schema, depth - 1),
                  gen_pred(rng, cols, schema, depth - 1))
    return Not(gen_pred(rng, cols, schema, depth - 1))


def _table_cols(schema, table):
    return [ColumnRef(c, table) for c, _ in schema.columns(table)]


def _gen_plain_core(rng, schema, cfg, with_where):
    tables = [rng.choice(schema.table_names())]
    if len(schema.table_names()) > 1 and rng.random() < cfg.p_two_tables:
        other = rng.choice([t for t in schema.table_names()
                            if t != tables[0]])
        tables.append(other)
    cols = [c for t in tables for c in _table_cols(schema, t)]
    select = tuple(_pick_subset(rng, cols))
    where = gen_pred(rng, cols, schema, cfg.pred_depth) if with_where else None
    return SqlQuery(select, tuple(tables), where=where)


def _gen_agg_core(rng, schema, cfg):
    table = rng.choice(schema.table_names())
    cols = _table_cols(schema, table)
    numeric = [c for c in cols
               if schema.col_type(table, c.name) in ("int", "dec")]
    keys = _pick_subset(rng, cols, min_size=0) if rng.random() < 0.8 else []
    select = [k for k in keys if rng.random() < 0.7]
    for _ in range(rng.randint(1, 2)):
        fn = rng.choice(("COUNT", "SUM", "MIN", "MAX", "AVG", "SUM"))
        if fn == "COUNT" and rng.random() < 0.4:
            select.append(AggCall("COUNT", None))
        elif fn in ("SUM", "AVG"):
            select.append(AggCall(fn, rng.choice(numeric)))
        else:
            select.append(AggCall(fn, rng.choice(cols)))
    rng.shuffle(select)
    where = (gen_pred(rng, cols, schema, cfg.pred_depth)
             if rng.random() < cfg.p_where_on_grouped else None)
    having = (gen_pred(rng, list(keys), schema, cfg.pred_depth - 1)
              if keys and rng.random() < cfg.p_having else None)
    return SqlQuery(tuple(select), (table,), where=where,
                    group_by=tuple(keys) if keys else None, having=having)


def _gen_grouped_core(rng, schema, cfg):
    table = rng.choice(schema.table_names())
    cols = _table_cols(schema, table)
    keys = _pick_subset(rng, cols)
    select = tuple(_pick_subset(rng, keys))
    where = (gen_pred(rng, cols, schema, cfg.pred_depth)
             if rng.random() < cfg.p_where_on_grouped else None)
    having = (gen_pred(rng, keys, schema, cfg.pred_depth - 1)
              if rng.random() < cfg.p_having else None)
    return SqlQuery(select, (table,), where=where, group_by=tuple(keys),
                    having=having)


def _matching_core(rng, schema, cfg, left: SqlQuery):
    """A second plain core whose column types match left's, per position."""
    want = []
    for it in left.select:
        ty = schema.col_type(it.table, it.name)
        want.append("num" if ty in ("int", "dec") else "str")
    for table in sorted(schema.table_names(), key=lambda t: rng.random()):
        cols = _table_cols(schema, table)
        by_kind = {"num": [], "str": []}
        for c in cols:
            ty = schema.col_type(table, c.name)
            by_kind["num" if ty in ("int", "dec") else "str"].append(c)
        if all(by_kind[k] for k in want):
            select = tuple(rng.choice(by_kind[k]) for k in want)
            where = (gen_pred(rng, cols, schema, cfg.pred_depth)
                     if rng.random() < 0.5 else None)
            return SqlQuery(select, (table,), where=where)
    return None


def generate_seed(rng: random.Random, schema: Schema,
                  cfg: GeneratorConfig) -> SqlQuery:
    """A schema-valid seed query; every reference resolves by construction."""
    total = cfg.w_plain + cfg.w_filtered + cfg.w_agg + cfg.w_grouped
    roll = rng.random() * total
    if roll < cfg.w_plain:
        q = _gen_plain_core(rng, schema, cfg, with_where=False)
    elif roll < cfg.w_plain + cfg.w_filtered:
        q = _gen_plain_core(rng, schema, cfg, with_where=True)
    elif roll < cfg.w_plain + cfg.w_filtered + cfg.w_agg:
        q = _gen_agg_core(rng, schema, cfg)
    else:
        q = _gen_grouped_core(rng, schema, cfg)

    if not q.is_grouped():
        if q.set_op is None and rng.random() < cfg.p_set_op:
            # set operations only combine plain cores, keeping the
            # sensitivity fold exact for every generated shape
            if not q.distinct:
                rhs = _matching_core(rng, schema, cfg, q)
                if rhs is not None:
                    op = rng.choice(("UNION", "UNION ALL"))
                    q = replace(q, set_op=(op, rhs))
        if q.set_op is None and rng.random() < cfg.p_distinct:
            q = replace(q, distinct=True)
    elif rng.random() < cfg.p_distinct * 0.4:
        q = replace(q, distinct=True)
    return q


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class Comparison:
    equal: bool
    mode: str
    detail: str = ""


def _canonical_counter(rows):
    return Counter(tuple(parse_rendered(c) for c in row) for row in rows)


def compare_results(left_rows, right_rows, mode: str) -> Comparison:
    """Compare two rendered row multisets.

    canonical: cells are parsed back to values (decimals quantized) so
    formatting differences are ignored.  raw-text: exact string rows.
    """
    if mode not in ("canonical", "raw-text"):
        raise ValueError(f"unknown compare mode {mode!r}")
    arities = {len(r) for r in left_rows} | {len(r) for r in right_rows}
    if len(arities) > 1:
        return Comparison(False, mode, "arity mismatch")
    if mode == "canonical":
        if _canonical_counter(left_rows) != _canonical_counter(right_rows):
            return Comparison(False, mode, "result multisets differ")
        return Comparison(True, mode)
    if Counter(map(tuple, left_rows)) != Counter(map(tuple, right_rows)):
        return Comparison(False, mode, "rendered rows differ")
    return Comparison(True, mode)


DISCARD = "discard"
KEEP_FOR_TRIAGE = "keep-for-triage"

DEFAULT_ERROR_LIST = STABLE_ERROR_CODES


def filter_error(code: str, error_list=DEFAULT_ERROR_LIST) -> str:
    """Known engine error codes are expected behavior and discarded;
    anything else is kept for triage."""
    return DISCARD if code in error_list else KEEP_FOR_TRIAGE


# ---------------------------------------------------------------------------
# reports and stats


@dataclass
class BugReport:
    id: str
    schemaDdl: str
    inserts: str
    leftSql: str
    rightSql: str
    leftResult: dict
    rightResult: dict
    ruleName: str
    pairing: str
    kind: str  # "result-divergence" | "error-divergence"
    compareMode: str
    rngSeed: str
    filterBudgetUsed: int
    targetId: str
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "BugReport":
        return BugReport(**json.loads(text))

    def reproducer_sql(self) -> str:
        lines = [self.schemaDdl.rstrip()]
        if self.inserts.strip():
            lines.append(self.inserts.rstrip())
        lines.append(f"-- rule: {self.ruleName} ({self.pairing})")
        lines.append(f"-- left\n{self.leftSql};")
        lines.append(f"-- right\n{self.rightSql};")
        return "\n".join(lines) + "\n"


@dataclass
class IterationStats:
    iteration: int
    generated: int = 0
    parsedOk: int = 0
    validAfterExecution: int = 0
    pairsEmitted: int = 0
    pairsFiltered: int = 0
    mismatches: int = 0
    elapsed: float = 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def _split_script(script: str):
    """(DDL part, INSERT part) of a dump_script output."""
    ddl, ins = [], []
    for line in script.splitlines():
        (ddl if line.startswith("CREATE") else ins).append(line)
    return "\n".join(ddl) + "\n", ("\n".join(ins) + "\n") if ins else ""


def _rows_payload(rows) -> dict:
    counted = Counter(map(tuple, rows))
    return {"rows": [[list(r), m] for r, m in
                     sorted(counted.items(),
                            key=lambda kv: row_sort_key(kv[0]))]}


def _error_payload(err) -> dict:
    return {"error": {"code": err.code, "message": err.message}}


# ---------------------------------------------------------------------------
# the loop


@dataclass
class IterationResult:
    stats: IterationStats
    reports: list


def run_iteration(endpoint, cfg: GeneratorConfig, campaign_seed: str,
                  iteration: int, compare_mode: str = "both",
                  error_list=DEFAULT_ERROR_LIST,
                  enabled_rules=None) -> IterationResult:
    """One campaign iteration against an engine endpoint.

    The endpoint contract: reset(script) loads a fresh database;
    exec_sql(sql) returns rendered rows or raises EngineError with a code.
    """
    from .adapter import EngineError

    t0 = time.monotonic()
    rng = random.Random(f"{campaign_seed}:{iteration}")
    schema = generate_schema(rng, cfg)
    db = generate_database(rng, schema, cfg)
    script = dump_script(db)
    endpoint.reset(script)
    ddl, inserts = _split_script(script)

    ctx = TransformContext(rng=rng, value_hints=value_hints_of(db),
                           enabled_rules=(frozenset(enabled_rules)
                                          if enabled_rules else None))
    stats = IterationStats(iteration=iteration)
    reports = []

    for i in range(cfg.queries_per_iteration):
        seed_q = generate_seed(rng, schema, cfg)
        stats.generated += 1
        sql = render(seed_q)
        try:
            parse(sql)
            stats.parsedOk += 1
        except SqlSyntaxError:
            continue
        try:
            endpoint.exec_sql(sql)
            stats.validAfterExecution += 1
        except EngineError:
            continue

        try:
            pair = transform_query(seed_q, schema, ctx)
        except NoRuleApplies:
            continue

        verdict = check_bounded(pair.left, pair.right, schema,
                                budget=cfg.filter_budget,
                                seed=f"{campaign_seed}:{iteration}:{i}")
        if isinstance(verdict, NotEquivalent):
            stats.pairsFiltered += 1
            continue
        stats.pairsEmitted += 1

        left_sql, right_sql = render(pair.left), render(pair.right)
        left = _target_outcome(endpoint, left_sql, EngineError)
        right = _target_outcome(endpoint, right_sql, EngineError)

        mismatch = _judge(left, right, compare_mode, error_list)
        if mismatch is None:
            continue
        kind, mode_used, l_payload, r_payload = mismatch
        stats.mismatches += 1
        rid = f"{campaign_seed}-{iteration}-{i}"
        reports.append(BugReport(
            id=rid, schemaDdl=ddl, inserts=inserts,
            leftSql=left_sql, rightSql=right_sql,
            leftResult=l_payload, rightResult=r_payload,
            ruleName=pair.rule, pairing=pair.pairing,
            kind=kind, compareMode=mode_used,
            rngSeed=f"{campaign_seed}:{iteration}",
            filterBudgetUsed=verdict.budget_used,
            targetId=getattr(endpoint, "target_id", "unknown"),
            timestamp=datetime.now(timezone.utc).isoformat(),
        ))

    stats.elapsed = time.monotonic() - t0
    return IterationResult(stats, reports)


def _target_outcome(endpoint, sql, engine_error_cls):
    try:
        return ("rows", endpoint.exec_sql(sql))
    except engine_error_cls as e:
        return ("error", e)


def _judge(left, right, compare_mode, error_list):
    """None when the pair agrees; otherwise (kind, mode, payloads)."""
    lk, lv = left
    rk, rv = right
    if lk == "error" and rk == "error":
        if lv.code == rv.code:
            return None
        return ("error-divergence", "n/a",
                _error_payload(lv), _error_payload(rv))
    if lk == "error" or rk == "error":
        err = lv if lk == "error" else rv
        if filter_error(err.code, error_list) == DISCARD:
            return None
        lp = _error_payload(lv) if lk == "error" else _rows_payload(lv)
        rp = _error_payload(rv) if rk == "error" else _rows_payload(rv)
        return ("error-divergence", "n/a", lp, rp)
    modes = ("canonical", "raw-text") if compare_mode == "both" \
        else (compare_mode,)
    for mode in modes:
        cmp_res = compare_results(lv, rv, mode)
        if not cmp_res.equal:
            return ("result-divergence", mode,
                    _rows_payload(lv), _rows_payload(rv))
    return None


# ---------------------------------------------------------------------------
# persistence and replay


def persist_iteration(out_dir, result: IterationResult):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rep in result.reports:
        (out / f"report-{rep.id}.json").write_text(rep.to_json() + "\n")
        (out / f"report-{rep.id}.sql").write_text(rep.reproducer_sql())
    with (out / "stats.jsonl").open("a") as fh:
        fh.write(result.stats.to_json() + "\n")


@dataclass(frozen=True)
class ReplayResult:
    reproduced: bool
    detail: str


def replay_report(report: BugReport, endpoint,
                  error_list=DEFAULT_ERROR_LIST) -> ReplayResult:
    """Re-run a persisted report's pair on its database; reproduced means
    the divergence is still observable."""
    from .adapter import EngineError

    endpoint.reset(report.schemaDdl + report.inserts)
    left = _target_outcome(endpoint, report.leftSql, EngineError)
    right = _target_outcome(endpoint, report.rightSql, EngineError)
    mode = report.compareMode if report.compareMode != "n/a" else "both"
    mismatch = _judge(left, right,
                      mode if mode in COMPARE_MODES else "both", error_list)
    if mismatch is None:
        return ReplayResult(False, "pair agreed on replay")
    return ReplayResult(True, f"{mismatch[0]} ({mismatch[1]})")
