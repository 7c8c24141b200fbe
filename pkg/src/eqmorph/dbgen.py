"""Small-database generation shared by the equivalence filter, the
duplicate-sensitivity oracle, and the campaign harness.

Two flavors: a deterministic enumeration of tiny databases over a minimal
value domain (good at exposing logic differences), and seeded random
databases that force duplicated rows and NULLs into every table (good at
exposing multiplicity and three-valued-logic differences).
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from decimal import Decimal

from .refdb import Database, TableData
from .sqlast import Schema

TINY_POOLS = {
    "int": (None, 0, 1),
    "dec": (None, Decimal("0"), Decimal("0.5")),
    "str": (None, "a", "b"),
}

RANDOM_POOLS = {
    "int": (0, 1, 2, 3, -1, 5),
    "dec": (Decimal("0.0005"), Decimal("0.001"), Decimal("1.5"),
            Decimal("-2.25"), Decimal("0"), Decimal("2")),
    "str": ("a", "b", "c", "aa"),
}

NULL_PROBABILITY = 0.2


def _tiny_rows(columns, per_column=2):
    """A deterministic, diverse prefix of the row space."""
    pools = [TINY_POOLS[ty][:per_column + 1] for _, ty in columns]
    return list(itertools.islice(itertools.product(*pools), 0, 9))


def enumerate_small_databases(schema: Schema, limit: int = 8):
    """Deterministic tiny databases: up to two distinct rows per table."""
    per_table = []
    for name, columns in schema.tables:
        rows = _tiny_rows(columns)
        options = [()]
        options += [(r,) for r in rows[:4]]
        options += [(a, b) for a, b in itertools.combinations(rows[:4], 2)]
        per_table.append((name, columns, options))

    out = []
    for combo in itertools.product(*(opts for _, _, opts in per_table)):
        db: Database = {}
        for (name, columns, _), chosen in zip(per_table, combo):
            db[name] = TableData(tuple(columns), Counter(chosen))
        out.append(db)
        if len(out) >= limit:
            break
    return out


def random_database(schema: Schema, rng: random.Random,
                    min_rows: int = 1, max_rows: int = 6,
                    force_duplicate: bool = True,
                    force_null: bool = True) -> Database:
    db: Database = {}
    for name, columns in schema.tables:
        table = TableData(tuple(columns))
        n = rng.randint(min_rows, max_rows)
        made = []
        for _ in range(n):
            row = tuple(
                None if rng.random() < NULL_PROBABILITY
                else rng.choice(RANDOM_POOLS[ty])
                for _, ty in columns)
            made.append(row)
            table.rows[row] += 1
        if force_duplicate and made and n > 0:
            table.rows[rng.choice(made)] += 1
        if force_null and made and columns and \
                not any(v is None for r in table.rows for v in r):
            row = list(rng.choice(made))
            row[rng.randrange(len(columns))] = None
            table.rows[tuple(row)] += 1
        db[name] = table
    return db


def double_multiplicities(db: Database) -> Database:
    return {
        name: TableData(t.columns,
                        Counter({row: m * 2 for row, m in t.rows.items()}))
        for name, t in db.items()
    }


def databases_for_search(schema: Schema, budget: int, seed) -> list:
    """Deterministic sequence used by the bounded counterexample search:
    an exhaustive tiny prefix, then seeded random databases."""
    tiny_share = min(8, max(1, budget // 4))
    dbs = enumerate_small_databases(schema, limit=tiny_share)
    rng = random.Random(f"dbgen:{seed}")
    while len(dbs) < budget:
        dbs.append(random_database(schema, rng))
    return dbs[:budget]
