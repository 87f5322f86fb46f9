#!/usr/bin/env python3
"""Reference engine adapter: loads a document-table CSV into an in-memory
SQLite database and executes a SQL file against it.

Usage: sqlite_engine.py DOC.csv QUERY.sql

Prints one result row per line, columns separated by '|'. Empty CSV fields
become NULL. Use it as the engine command template:

    --engine 'python3 tools/sqlite_engine.py {csv} {sql}'
"""

import csv
import sqlite3
import sys


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 1
    csv_path, sql_path = sys.argv[1], sys.argv[2]
    conn = sqlite3.connect(":memory:")
    conn.execute(
        "CREATE TABLE doc (pre INTEGER, size INTEGER, level INTEGER,"
        " kind TEXT, name TEXT, value TEXT, data REAL, frag INTEGER)"
    )
    with open(csv_path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        assert header[:4] == ["pre", "size", "level", "kind"], header
        rows = [[None if cell == "" else cell for cell in row] for row in reader]
    conn.executemany("INSERT INTO doc VALUES (?,?,?,?,?,?,?,?)", rows)
    conn.execute("CREATE INDEX doc_pre ON doc (pre)")
    conn.execute("CREATE INDEX doc_nk ON doc (name, kind, pre)")
    with open(sql_path) as f:
        sql = f.read()
    for row in conn.execute(sql):
        print("|".join("" if v is None else str(v) for v in row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
